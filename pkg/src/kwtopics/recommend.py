"""Keyword recommendation from a trained model.

Each currently used keyword is extended with candidates whose induced
vocabulary distribution is close in KL divergence, gated by a document
frequency floor and by the high-frequency distance (new high-probability
words are rewarded, lost ones penalized).
"""

from dataclasses import dataclass, field

import numpy as np

from .mathcore import kl_divergence
from .neural import forward


@dataclass
class InferenceConfig:
    doc_freq_threshold: float = 0.005   # f2
    retention_rate: float = 0.5         # r
    penalty_weight: float = 1.0         # weight on the retention-failure set
    target_highfreq_size: int = 100
    top_n: int = 2
    o_h_fixed: float = None             # overrides per-distribution threshold
    exclude_self: bool = True

    def validate(self):
        if not (0.0 < self.doc_freq_threshold < 1.0):
            raise ValueError("doc_freq_threshold must be in (0, 1)")
        if not (0.0 < self.retention_rate <= 1.0):
            raise ValueError("retention_rate must be in (0, 1]")
        if self.penalty_weight < 0.0:
            raise ValueError("penalty_weight must be >= 0")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")


@dataclass
class Candidate:
    token: str
    keyword_index: int
    kl: float
    distance: float
    freq: float


@dataclass
class RecommendationReport:
    per_keyword: dict                 # query token -> ranked list of Candidate
    next_keywords: list               # final deduplicated token list
    fallback: bool = False
    meta: dict = field(default_factory=dict)


def average_word_dist(net, keyword_indices):
    """Vocabulary distribution induced by a keyword subset: the mean of the
    topic rows produced for its indicator vector."""
    idx = list(keyword_indices)
    if not idx:
        raise ValueError("empty keyword subset")
    z = np.zeros(net.n_keywords)
    z[idx] = 1.0
    return forward(net, z).mean(axis=0)


def doc_frequency(docs, word_ids):
    """Share of documents containing every word in the set."""
    if not docs:
        raise ValueError("empty document window")
    wanted = set(word_ids)
    if not wanted:
        return 1.0
    hits = sum(1 for d in docs if wanted.issubset(set(d.word_ids.tolist())))
    return hits / len(docs)


def select_threshold(dist, target_size):
    """Value o such that |{w : dist_w > o}| is as close as possible to
    target_size (the (target_size+1)-th largest entry, floored at 0)."""
    dist = np.asarray(dist, dtype=float)
    if target_size > len(dist):
        raise ValueError("target_size exceeds the vocabulary")
    if target_size == len(dist):
        return 0.0
    ordered = np.sort(dist)[::-1]
    return max(float(ordered[target_size]), 0.0)


def high_freq_distance(a_last, a_next, o_h, retention_rate, penalty_weight,
                       o_h_next=None):
    """|extension set| - penalty * |retention failure set|.

    The extension set holds words that became prominent under the candidate
    while being much weaker before; the failure set the reverse.  Strict
    inequalities throughout; o_h_next defaults to o_h."""
    a_last = np.asarray(a_last, dtype=float)
    a_next = np.asarray(a_next, dtype=float)
    if a_last.shape != a_next.shape:
        raise ValueError("distributions must have the same dimension")
    if o_h_next is None:
        o_h_next = o_h
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_ln = np.where(a_next > 0.0, a_last / np.where(a_next > 0.0, a_next, 1.0),
                            np.inf)
        ratio_nl = np.where(a_last > 0.0, a_next / np.where(a_last > 0.0, a_last, 1.0),
                            np.inf)
    extension = np.sum((a_next > o_h_next) & (ratio_ln < retention_rate))
    failure = np.sum((a_last > o_h) & (ratio_nl < retention_rate))
    return float(extension) - penalty_weight * float(failure)


def recommend_keywords(state, corpus, query_indices, window_docs, cfg):
    """Extend each query keyword with its top-n admissible candidates.

    query_indices are positions into corpus.candidate_keywords.  Candidates
    must pass the high-frequency-distance gate (>= 0) and the document
    frequency floor; survivors rank by ascending KL divergence between the
    induced distributions, ties broken by vocabulary id.  An empty union
    falls back to the query set itself."""
    cfg.validate()
    if state is None or state.iteration == 0:
        raise ValueError("model state has no training iterations")
    if not window_docs:
        raise ValueError("empty document window")
    query_indices = list(query_indices)
    kw_ids = corpus.candidate_keywords
    tokens = corpus.vocabulary.tokens
    n_kw = len(kw_ids)

    dists = np.stack([average_word_dist(state.net, [j]) for j in range(n_kw)])
    if cfg.o_h_fixed is not None:
        thresholds = np.full(n_kw, float(cfg.o_h_fixed))
    else:
        target = min(cfg.target_highfreq_size, corpus.vocabulary.size)
        thresholds = np.array([select_threshold(dists[j], target)
                               for j in range(n_kw)])
    freqs = np.array([doc_frequency(window_docs, {kw_ids[j]}) for j in range(n_kw)])

    per_keyword = {}
    union = []
    for q in query_indices:
        ranked = []
        for j in range(n_kw):
            if cfg.exclude_self and j == q:
                continue
            r = high_freq_distance(dists[q], dists[j], thresholds[q],
                                   cfg.retention_rate, cfg.penalty_weight,
                                   o_h_next=thresholds[j])
            if r < 0.0:
                continue
            if freqs[j] <= cfg.doc_freq_threshold:
                continue
            ranked.append(Candidate(token=tokens[kw_ids[j]], keyword_index=j,
                                    kl=kl_divergence(dists[q], dists[j]),
                                    distance=r, freq=float(freqs[j])))
        ranked.sort(key=lambda c: (c.kl, kw_ids[c.keyword_index]))
        top = ranked[: cfg.top_n]
        per_keyword[tokens[kw_ids[q]]] = top
        union.extend(top)

    seen = set()
    next_keywords = []
    for c in sorted(union, key=lambda c: kw_ids[c.keyword_index]):
        if c.keyword_index not in seen:
            seen.add(c.keyword_index)
            next_keywords.append(c.token)
    fallback = not next_keywords
    if fallback:
        next_keywords = [tokens[kw_ids[q]] for q in query_indices]
    return RecommendationReport(per_keyword=per_keyword,
                                next_keywords=next_keywords,
                                fallback=fallback,
                                meta={"window_size": len(window_docs)})


def score_recommendations(pred, truth):
    """(accuracy, coverage); coverage is None when the truth set is empty."""
    pred = set(pred)
    truth = set(truth)
    overlap = len(pred & truth)
    accuracy = overlap / len(pred) if pred else 0.0
    coverage = overlap / len(truth) if truth else None
    return accuracy, coverage

"""Held-out scoring, a plain variational-EM LDA baseline, and the random
keyword baseline."""

from dataclasses import dataclass, field

import numpy as np

from .corpus import keyword_mask
from .neural import f_forward, forward
from .trainer import ModelState, doc_bound, e_step, excluded_positions


@dataclass
class EvalReport:
    loglik: dict = field(default_factory=dict)   # label -> nats per word
    accuracy: float = None
    coverage: float = None
    meta: dict = field(default_factory=dict)


def _score_doc(word_ids, beta, gamma):
    gbar = gamma / gamma.sum()
    mix = gbar @ beta[:, word_ids]
    return float(np.log(mix).sum())


def avg_word_loglik(model, docs, e_rounds=50, keyword_threshold=0.5, corpus=None):
    """Average per-word log likelihood over held-out documents.

    `model` is either a trained ModelState (keyword treatment is the
    deterministic observation mask, so evaluation is noise free) or a bare
    (K, V) row-stochastic matrix scored as a plain topic model with a
    uniform prior.  Higher is better; proper models are negative.
    """
    if not docs:
        raise ValueError("empty evaluation slice")
    total = 0.0
    words = 0
    if isinstance(model, ModelState):
        if corpus is None:
            raise ValueError("scoring a ModelState requires the corpus")
        if model.net.vocab_size != corpus.vocabulary.size:
            raise ValueError(
                f"vocabulary size mismatch: model {model.net.vocab_size}, "
                f"corpus {corpus.vocabulary.size}")
        kw_token_ids = np.asarray(corpus.candidate_keywords, dtype=np.int64)
        f_vec = f_forward(model.prior)
        for d in docs:
            y = keyword_mask(d, corpus)
            beta = forward(model.net, y)
            excl = excluded_positions(d.word_ids, y, kw_token_ids,
                                      keyword_threshold)
            _, gamma = e_step(d.word_ids, excl, beta, f_vec, e_rounds, tol=1e-10)
            total += _score_doc(d.word_ids, beta, gamma)
            words += d.n_words
    else:
        beta = np.asarray(model, dtype=float)
        if beta.ndim != 2:
            raise ValueError("expected a (K, V) matrix")
        for d in docs:
            if d.word_ids.size and d.word_ids.max() >= beta.shape[1]:
                raise ValueError("vocabulary size mismatch between model and slice")
            f_vec = np.ones(beta.shape[0])
            excl = np.zeros(d.n_words, dtype=bool)
            _, gamma = e_step(d.word_ids, excl, beta, f_vec, e_rounds, tol=1e-10)
            total += _score_doc(d.word_ids, beta, gamma)
            words += d.n_words
    return total / words


def lda_baseline(docs, n_topics, iters, rng, inner_rounds=20, return_trace=False):
    """Plain batch variational EM for a single global topic-word matrix.

    Uniform Dirichlet document prior; the M step renormalizes expected
    per-topic word counts.  With one topic this reduces to the empirical
    unigram distribution."""
    if not docs:
        raise ValueError("empty training slice")
    V = int(max(d.word_ids.max() for d in docs)) + 1
    beta = rng.gen.gamma(100.0, 1.0 / 100.0, size=(n_topics, V))
    beta /= beta.sum(axis=1, keepdims=True)
    f_vec = np.ones(n_topics)
    trace = []
    for _ in range(iters):
        counts = np.zeros((n_topics, V))
        bound = 0.0
        for d in docs:
            excl = np.zeros(d.n_words, dtype=bool)
            phi, gamma = e_step(d.word_ids, excl, beta, f_vec, inner_rounds,
                                tol=1e-8)
            np.add.at(counts.T, d.word_ids, phi)
            bound += doc_bound(d.word_ids, excl, beta, f_vec, phi, gamma)
        empty = counts.sum(axis=1) == 0.0
        counts[empty] = 1.0  # unused topic: reset to uniform
        beta = counts / counts.sum(axis=1, keepdims=True)
        trace.append(bound)
    if return_trace:
        return beta, trace
    return beta


def random_baseline(candidates, n, exclusions, rng):
    """Uniform size-n subset of candidates minus exclusions."""
    eligible = sorted(set(candidates) - set(exclusions))
    if len(eligible) < n:
        raise ValueError(
            f"need {n} candidates but only {len(eligible)} remain after exclusions")
    idx = rng.gen.choice(len(eligible), size=n, replace=False)
    return {eligible[i] for i in idx}

"""Forward simulation of the generative process with known parameters.

Produces corpora with planted keyword-to-vocabulary structure so that
training and inference can be validated against ground truth.
"""

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Document, Vocabulary, PLACEHOLDER
from .keyword_dist import (KeywordEnergy, exact_log_partition,
                           exact_state_probabilities, unnormalized_log_prob)
from .mathcore import logsumexp
from .neural import forward

_ENUM_LIMIT = 20


@dataclass
class GroundTruth:
    theta: np.ndarray            # (Q,)
    penalty: float               # c
    f_true: np.ndarray           # (K,) Dirichlet prior over topics
    words_per_doc: int           # N, fixed document length
    n_docs: int                  # D
    vocab_size: int              # V
    kw_ids: np.ndarray           # (Q,) vocabulary ids of the candidate keywords
    pattern_table: dict = None   # keyword pattern tuple -> (K, V) row-stochastic
    net: object = None           # alternatively a TopicWordNet
    n_weeks: int = 10

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.f_true = np.asarray(self.f_true, dtype=float)
        self.kw_ids = np.asarray(self.kw_ids, dtype=np.int64)
        if self.pattern_table is None and self.net is None:
            raise ValueError("need a pattern_table or a net")
        if self.words_per_doc < len(self.theta):
            raise ValueError("words_per_doc must be >= Q so every keyword set fits")

    @property
    def n_keywords(self):
        return len(self.theta)

    @property
    def n_topics(self):
        return len(self.f_true)

    def energy(self):
        return KeywordEnergy(theta=self.theta, penalty=self.penalty)

    def beta_for(self, z):
        z = np.asarray(z, dtype=float)
        if self.pattern_table is not None:
            key = tuple(int(round(v)) for v in z)
            if key not in self.pattern_table:
                raise ValueError(f"no planted matrix for pattern {key}")
            return self.pattern_table[key]
        return forward(self.net, z)


@dataclass
class SyntheticDraw:
    doc_id: str
    z_kw: np.ndarray          # binary keyword vector
    eta: np.ndarray           # topic weights
    topic_labels: np.ndarray  # per sampled (non-keyword) word
    word_ids: np.ndarray      # the assembled document


def sample_keywords_exact(theta, penalty, rng):
    """Exact draw from the keyword distribution by enumeration (Q <= 20)."""
    theta = np.asarray(theta, dtype=float)
    if len(theta) > _ENUM_LIMIT:
        raise ValueError("enumeration infeasible")
    states, probs = exact_state_probabilities(
        KeywordEnergy(theta=theta, penalty=penalty))
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.gen.random(), side="right"))
    return states[min(idx, len(states) - 1)].copy()


def _masked_rows(beta, banned_ids):
    """Zero out banned columns and renormalize rows (keywords of the current
    document are never re-drawn as regular words)."""
    out = np.array(beta, dtype=float, copy=True)
    out[:, banned_ids] = 0.0
    sums = out.sum(axis=1, keepdims=True)
    if np.any(sums <= 0.0):
        raise ValueError("topic row has no mass outside the document keywords")
    return out / sums


def make_vocabulary(vocab_size):
    """Synthetic token names w0..w{V-2} plus the placeholder."""
    tokens = [f"w{i}" for i in range(vocab_size - 1)] + [PLACEHOLDER]
    return Vocabulary(tokens=tokens, index={t: i for i, t in enumerate(tokens)},
                      placeholder_id=vocab_size - 1)


def generate_corpus(gt, rng):
    """Run the generative process for D documents.

    Returns (corpus, draws); draws carry the latent variables for oracles.
    Weeks 1..n_weeks are assigned evenly in generation order.
    """
    vocab = make_vocabulary(gt.vocab_size)
    docs = []
    draws = []
    per_week = max(1, gt.n_docs // gt.n_weeks)
    for d in range(gt.n_docs):
        z = sample_keywords_exact(gt.theta, gt.penalty, rng)
        eta = rng.gen.dirichlet(gt.f_true)
        beta = gt.beta_for(z)
        flagged = gt.kw_ids[z > 0.5]
        n_regular = gt.words_per_doc - len(flagged)
        if n_regular > 0:
            beta_cond = _masked_rows(beta, flagged)
            labels = rng.gen.choice(gt.n_topics, size=n_regular, p=eta)
            words = np.empty(n_regular, dtype=np.int64)
            for k in range(gt.n_topics):
                sel = labels == k
                if sel.any():
                    words[sel] = rng.gen.choice(gt.vocab_size, size=int(sel.sum()),
                                                p=beta_cond[k])
        else:
            labels = np.empty(0, dtype=np.int64)
            words = np.empty(0, dtype=np.int64)
        word_ids = np.concatenate([flagged, words])
        week = min(1 + d // per_week, gt.n_weeks)
        doc_id = f"synth-{d}"
        docs.append(Document(word_ids=word_ids, week=week, doc_id=doc_id))
        draws.append(SyntheticDraw(doc_id=doc_id, z_kw=z, eta=eta,
                                   topic_labels=labels, word_ids=word_ids))
    corpus = Corpus(documents=docs, vocabulary=vocab,
                    candidate_keywords=[int(i) for i in gt.kw_ids])
    return corpus, draws


def exact_document_loglik(doc, gt, rng, n_samples=1_000_000, chunk=100_000):
    """Monte-Carlo estimate of log p(doc) under the ground truth.

    The compatible keyword vector is unique (keywords never recur as regular
    words), so log p factors into the keyword-set term plus the expectation
    over topic weights of the conditional word mixture.  Small instances
    only: Q <= 10, K <= 3.
    """
    if gt.n_keywords > 10 or gt.n_topics > 3:
        raise ValueError("instance too large")
    present = set(doc.word_ids.tolist())
    z = (np.isin(gt.kw_ids, list(present))).astype(float)
    if z.sum() == 0:
        raise ValueError("document has no candidate keyword")
    energy = gt.energy()
    log_kw = unnormalized_log_prob(z, energy) - exact_log_partition(energy)

    flagged = gt.kw_ids[z > 0.5]
    regular = [w for w in doc.word_ids.tolist() if w not in set(flagged.tolist())]
    if not regular:
        return float(log_kw)
    beta_cond = _masked_rows(gt.beta_for(z), flagged)
    cols = beta_cond[:, regular]  # (K, n_regular)
    parts = []
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        etas = rng.gen.dirichlet(gt.f_true, size=m)  # (m, K)
        mix = etas @ cols                            # (m, n_regular)
        parts.append(np.log(mix).sum(axis=1))
        done += m
    logs = np.concatenate(parts)
    return float(log_kw + logsumexp(logs) - np.log(n_samples))

"""Energy-based distribution over binary keyword vectors.

Unnormalized log probability is z.theta - c*(sum(z) - 1): the linear term
pulls toward frequent keywords, the penalty discourages large keyword sets.
The normalizer runs over all nonzero binary vectors; gradients use persistent
Gibbs chains and the value itself an importance-sampling estimator.
"""

from dataclasses import dataclass

import numpy as np

from .mathcore import log_gamma, logsumexp

GEOMETRIC_P = 0.25  # proposal size distribution, mean 1/0.25

_ENUM_LIMIT = 20


@dataclass
class KeywordEnergy:
    theta: np.ndarray
    penalty: float  # c > 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta must be finite")
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")

    @property
    def n_keywords(self):
        return len(self.theta)


@dataclass
class GibbsChains:
    states: np.ndarray  # (n_chains, Q) in {0, 1}; the zero state is admitted

    @property
    def n_chains(self):
        return len(self.states)


def unnormalized_log_prob(z, params):
    """log p~(z); accepts binary or relaxed vectors, batched on axis 0."""
    z = np.asarray(z, dtype=float)
    total = z @ params.theta - params.penalty * (z.sum(axis=-1) - 1.0)
    return float(total) if total.ndim == 0 else total


def enumerate_nonzero_states(n):
    """All 2^n - 1 nonzero binary vectors as an array (oracle helper, n <= 20)."""
    if n > _ENUM_LIMIT:
        raise ValueError("enumeration infeasible")
    codes = np.arange(1, 2 ** n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(float)


def exact_log_partition(params):
    """log Z by full enumeration over nonzero states; Q <= 20 only."""
    states = enumerate_nonzero_states(params.n_keywords)
    return logsumexp(unnormalized_log_prob(states, params))


def exact_state_probabilities(params):
    """(states, probabilities) over the nonzero support, by enumeration."""
    states = enumerate_nonzero_states(params.n_keywords)
    logp = unnormalized_log_prob(states, params)
    logp -= logsumexp(logp)
    return states, np.exp(logp)


def exact_mean_state(params):
    """E[z] under the exact distribution (enumeration oracle)."""
    states, probs = exact_state_probabilities(params)
    return probs @ states


def proposal_log_prob(sizes, n_keywords):
    """log h(X) of the importance proposal; depends only on popcount(X).

    The size is geometric (support 1, 2, ...) truncated at Q by min(), then a
    uniform subset of that size is drawn, so h(X) = P(N = |X|) / C(Q, |X|).
    """
    sizes = np.asarray(sizes)
    q = n_keywords
    p = GEOMETRIC_P
    log_pn = np.where(
        sizes < q,
        np.log(p) + (sizes - 1) * np.log1p(-p),
        (q - 1) * np.log1p(-p),  # tail mass: P(N >= Q)
    )
    log_binom = log_gamma(q + 1.0) - log_gamma(sizes + 1.0) - log_gamma(q - sizes + 1.0)
    return log_pn - log_binom


def sample_proposal(n_samples, n_keywords, rng):
    """Draw subsets from the proposal: (sizes, membership matrix)."""
    sizes = np.minimum(rng.gen.geometric(GEOMETRIC_P, n_samples), n_keywords)
    ranks = np.argsort(rng.gen.random((n_samples, n_keywords)), axis=1)
    member = np.zeros((n_samples, n_keywords), dtype=bool)
    take = np.arange(n_keywords)[None, :] < sizes[:, None]
    np.put_along_axis(member, ranks, take, axis=1)
    return sizes, member


def estimate_log_partition(params, n_samples, rng):
    """log of the importance-sampling partition estimator.

    Accumulation happens in log space, so very peaked energies stay stable.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sizes, member = sample_proposal(n_samples, params.n_keywords, rng)
    log_pt = member @ params.theta - params.penalty * (sizes - 1.0)
    log_w = log_pt - proposal_log_prob(sizes, params.n_keywords)
    return logsumexp(log_w) - np.log(n_samples)


def init_chains(n_chains, n_keywords, rng):
    """Chains start at uniformly random nonzero states."""
    if n_chains < 1:
        raise ValueError("need at least one chain")
    states = (rng.gen.random((n_chains, n_keywords)) < 0.5).astype(float)
    while True:
        empty = states.sum(axis=1) == 0
        if not empty.any():
            break
        states[empty] = (rng.gen.random((int(empty.sum()), n_keywords)) < 0.5)
    return GibbsChains(states=states)


def gibbs_sweep(chains, params, steps, rng):
    """In-place systematic-scan Gibbs sweeps over {0,1}^Q (zero state allowed).

    The energy is separable, so the conditional of every coordinate is
    sigmoid(theta_j - c) independent of the rest of the state; a full
    in-order scan therefore equals one joint redraw of all coordinates.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    cond = 1.0 / (1.0 + np.exp(-(params.theta - params.penalty)))
    for _ in range(steps):
        u = rng.gen.random(chains.states.shape)
        chains.states = (u < cond).astype(float)
    return chains


def negative_phase_gradient(chains, params):
    """Mean over chains of d log p~ / d theta, i.e. the mean chain state."""
    if chains.n_chains < 1:
        raise ValueError("no chains")
    return chains.states.mean(axis=0)

"""Special functions, divergences, Gumbel sampling and seeded random streams.

Everything here is pure numpy and deterministic given an RngStream, so the
rest of the library can rely on reproducible numerics.
"""

import numpy as np

EULER_GAMMA = 0.5772156649015328606

# Probability clamp applied to epsilon before taking logs, and the clamp for
# uniform draws inside the Gumbel transform.  Both keep every log finite at
# temperatures as low as 0.25.
EPS_CLAMP = 1e-6
UNIFORM_CLAMP = 1e-12

_ASYM_CUTOFF = 10.0


class RngStream:
    """Seeded random stream.

    Identical (seed, stream_id) pairs reproduce the exact draw sequence;
    distinct stream_ids give independent-quality streams.  The underlying
    generator state can be exported/restored for resumable training.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def state(self):
        return self.gen.bit_generator.state

    def set_state(self, state):
        self.gen.bit_generator.state = state

    def uniform(self, size=None):
        return self.gen.random(size)


def _as_positive_array(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.size and np.any(arr <= 0.0):
        raise ValueError(f"{name}: argument must be positive")
    return arr


def digamma(x):
    """Digamma function psi(x) for x > 0, accurate to ~1e-13 relative.

    Small arguments are shifted up with psi(x) = psi(x+1) - 1/x until the
    de Moivre expansion applies.
    """
    arr = _as_positive_array(x, "digamma")
    scalar = arr.ndim == 0
    y = np.atleast_1d(arr).astype(float).copy()
    acc = np.zeros_like(y)
    for _ in range(12):
        low = y < _ASYM_CUTOFF
        if not low.any():
            break
        acc[low] -= 1.0 / y[low]
        y[low] += 1.0
    z = 1.0 / (y * y)
    # Bernoulli-number tail through z^7
    tail = z * (1.0 / 12.0 - z * (1.0 / 120.0 - z * (1.0 / 252.0 - z * (
        1.0 / 240.0 - z * (1.0 / 132.0 - z * (691.0 / 32760.0 - z / 12.0))))))
    out = acc + np.log(y) - 0.5 / y - tail
    return float(out[0]) if scalar else out.reshape(arr.shape)


def log_gamma(x):
    """log Gamma(x) for x > 0 via shifted Stirling series."""
    arr = _as_positive_array(x, "log_gamma")
    scalar = arr.ndim == 0
    y = np.atleast_1d(arr).astype(float).copy()
    acc = np.zeros_like(y)
    for _ in range(12):
        low = y < _ASYM_CUTOFF
        if not low.any():
            break
        acc -= np.where(low, np.log(y), 0.0)
        y[low] += 1.0
    z = 1.0 / (y * y)
    tail = (1.0 / 12.0 - z * (1.0 / 360.0 - z * (1.0 / 1260.0 - z * (
        1.0 / 1680.0 - z / 1188.0)))) / y
    out = acc + (y - 0.5) * np.log(y) - y + 0.5 * np.log(2.0 * np.pi) + tail
    return float(out[0]) if scalar else out.reshape(arr.shape)


def dirichlet_expected_logpdf(u, v):
    """E[log Dir(eta; v)] when eta ~ Dir(u).

    Reduces to the negative Dirichlet entropy when u == v.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("dirichlet_expected_logpdf: dimension mismatch")
    if np.any(u <= 0.0) or np.any(v <= 0.0):
        raise ValueError("dirichlet_expected_logpdf: arguments must be positive")
    elog = digamma(u) - digamma(u.sum())
    return float(np.dot(v - 1.0, elog) + log_gamma(v.sum()) - log_gamma(v).sum())


def kl_divergence(p, q):
    """KL(p || q) for vectors on the simplex, with 0*log 0 := 0.

    Returns +inf when q has a zero where p does not.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("kl_divergence: dimension mismatch")
    support = p > 0.0
    if np.any(q[support] == 0.0):
        return float("inf")
    val = float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))
    return max(val, 0.0)


def check_simplex(vec, tol=1e-9):
    vec = np.asarray(vec, dtype=float)
    return bool(np.all(vec >= 0.0) and abs(vec.sum() - 1.0) <= tol)


def gumbel_from_uniform(u):
    """-log(-log u) with u clamped away from {0, 1}."""
    u = np.clip(u, UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
    return -np.log(-np.log(u))


def gumbel_sample(rng, size=None):
    """Standard Gumbel draw(s) from an RngStream."""
    return gumbel_from_uniform(rng.uniform(size))


def binary_relax_from_noise(eps, tau, g1, g0):
    """Two-sided Gumbel-softmax relaxation of Bernoulli(eps), explicit noise.

    Computed in log space with max subtraction so very low temperatures stay
    finite.  eps is clamped to [EPS_CLAMP, 1 - EPS_CLAMP] first.
    """
    eps_c = np.clip(eps, EPS_CLAMP, 1.0 - EPS_CLAMP)
    a = (np.log(eps_c) + g1) / tau
    b = (np.log1p(-eps_c) + g0) / tau
    m = np.maximum(a, b)
    ea = np.exp(a - m)
    eb = np.exp(b - m)
    return ea / (ea + eb)


def binary_relax_grad(y, eps, tau):
    """d y / d eps for binary_relax_from_noise at fixed noise.

    Zero where eps sits outside the clamp interval (the clamp kills the
    dependence there).
    """
    eps = np.asarray(eps, dtype=float)
    eps_c = np.clip(eps, EPS_CLAMP, 1.0 - EPS_CLAMP)
    grad = y * (1.0 - y) / (tau * eps_c * (1.0 - eps_c))
    inside = (eps > EPS_CLAMP) & (eps < 1.0 - EPS_CLAMP)
    return np.where(inside, grad, 0.0)


def binary_gumbel_relax(eps, tau, rng):
    """Relaxed Bernoulli(eps) sample in [0, 1] at temperature tau > 0."""
    if tau <= 0:
        raise ValueError("binary_gumbel_relax: tau must be positive")
    shape = np.shape(eps)
    g1 = gumbel_sample(rng, shape if shape else None)
    g0 = gumbel_sample(rng, shape if shape else None)
    return binary_relax_from_noise(eps, tau, g1, g0)


def threshold_step(x, r):
    """Step function: 0 below r, 1 at or above r (boundary inclusive)."""
    out = np.where(np.asarray(x) < r, 0, 1)
    return int(out) if out.ndim == 0 else out


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def logsumexp(x, axis=None):
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return out.item() if axis is None else np.squeeze(out, axis=axis)

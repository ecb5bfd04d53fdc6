"""Topic-word network and first-order optimizers, plain numpy.

The network maps a (possibly relaxed) keyword indicator of length Q through
one hidden LeakyReLU layer to K*V logits, reshaped to a K x V matrix whose
rows are softmax-normalized word distributions.
"""

from dataclasses import dataclass

import numpy as np

from .mathcore import softmax


@dataclass
class TopicWordNet:
    w1: np.ndarray  # (Q, H)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H, K*V)
    b2: np.ndarray  # (K*V,)
    n_topics: int
    vocab_size: int
    leaky_slope: float = 0.01

    @property
    def n_keywords(self):
        return self.w1.shape[0]

    @property
    def hidden_width(self):
        return self.w1.shape[1]

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self):
        return TopicWordNet(self.w1.copy(), self.b1.copy(), self.w2.copy(),
                            self.b2.copy(), self.n_topics, self.vocab_size,
                            self.leaky_slope)


@dataclass
class TopicPrior:
    """Fixed uniform Dirichlet prior over topics (constant positive vector)."""
    n_topics: int
    constant: float = 1.0


def f_forward(prior):
    if prior.constant <= 0:
        raise ValueError("prior constant must be positive")
    return np.full(prior.n_topics, float(prior.constant))


def _glorot_uniform(rng, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.gen.uniform(-a, a, size=(fan_in, fan_out))


def init_topic_word_net(n_keywords, n_topics, vocab_size, rng, hidden_width=32,
                        leaky_slope=0.01):
    out_dim = n_topics * vocab_size
    return TopicWordNet(
        w1=_glorot_uniform(rng, n_keywords, hidden_width),
        b1=np.zeros(hidden_width),
        w2=_glorot_uniform(rng, hidden_width, out_dim),
        b2=np.zeros(out_dim),
        n_topics=n_topics,
        vocab_size=vocab_size,
        leaky_slope=leaky_slope,
    )


def _leaky(x, slope):
    return np.where(x >= 0.0, x, slope * x)


def forward_batch(net, zs):
    """Topic-word matrices for a batch of indicators, shape (B, K, V)."""
    zs = np.asarray(zs, dtype=float)
    if zs.ndim != 2 or zs.shape[1] != net.n_keywords:
        raise ValueError(
            f"expected input of shape (B, {net.n_keywords}), got {zs.shape}")
    pre = zs @ net.w1 + net.b1
    hid = _leaky(pre, net.leaky_slope)
    logits = (hid @ net.w2 + net.b2).reshape(len(zs), net.n_topics, net.vocab_size)
    return softmax(logits, axis=2)


def forward(net, z):
    """Topic-word matrix (K, V) for one keyword indicator of length Q."""
    z = np.asarray(z, dtype=float)
    if z.shape != (net.n_keywords,):
        raise ValueError(f"expected input of length {net.n_keywords}, got {z.shape}")
    return forward_batch(net, z[None, :])[0]


def backward_batch(net, zs, grad_betas):
    """Reverse-mode gradients for a batch.

    grad_betas is dJ/dbeta with shape (B, K, V).  Returns (param_grads, dzs)
    where dzs is dJ/dz of shape (B, Q); the latter feeds the Gumbel path.
    """
    zs = np.asarray(zs, dtype=float)
    B = len(zs)
    pre = zs @ net.w1 + net.b1
    hid = _leaky(pre, net.leaky_slope)
    logits = (hid @ net.w2 + net.b2).reshape(B, net.n_topics, net.vocab_size)
    beta = softmax(logits, axis=2)
    # softmax rows: dlogit = beta * (g - sum_v g*beta)
    inner = np.sum(grad_betas * beta, axis=2, keepdims=True)
    dlogits = (beta * (grad_betas - inner)).reshape(B, -1)
    dw2 = hid.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhid = dlogits @ net.w2.T
    dpre = dhid * np.where(pre >= 0.0, 1.0, net.leaky_slope)
    dw1 = zs.T @ dpre
    db1 = dpre.sum(axis=0)
    dzs = dpre @ net.w1.T
    grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}
    return grads, dzs


def backward(net, z, grad_beta):
    grads, dzs = backward_batch(net, np.asarray(z, dtype=float)[None, :],
                                np.asarray(grad_beta, dtype=float)[None, :, :])
    return grads, dzs[0]


def _check_finite(grads):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient: {name}")


class Adam:
    """Bias-corrected Adam performing gradient ascent in place."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        _check_finite(grads)
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / b1c
            v_hat = self.v[k] / b2c
            params[k] += self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self):
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, st):
        self.t = int(st["t"])
        self.m = {k: np.asarray(v) for k, v in st["m"].items()}
        self.v = {k: np.asarray(v) for k, v in st["v"].items()}


class RmsProp:
    """RMSprop ascent with sparse semantics: untouched coordinates stay
    bit-identical, accumulators included (the gradient over the keyword
    probabilities only covers the sampled batch rows)."""

    def __init__(self, shape, lr=0.005, decay=0.9, eps=1e-8):
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.t = 0
        self.acc = np.zeros(shape)

    def step(self, param, grad):
        if not np.all(np.isfinite(grad)):
            raise ValueError("non-finite gradient: rmsprop")
        self.t += 1
        touched = grad != 0.0
        acc_t = self.decay * self.acc[touched] + (1.0 - self.decay) * grad[touched] ** 2
        self.acc[touched] = acc_t
        param[touched] += self.lr * grad[touched] / (np.sqrt(acc_t) + self.eps)

    def state(self):
        return {"t": self.t, "acc": self.acc}

    def load_state(self, st):
        self.t = int(st["t"])
        self.acc = np.asarray(st["acc"])

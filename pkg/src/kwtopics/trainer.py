"""Variational-EM training loop.

Each iteration: advance the persistent Gibbs chains, sample a document
batch, draw relaxed keyword indicators through the binary Gumbel trick,
optionally record the weighted ELBO estimate, run the E-step fixed-point
rounds for the batch, then take one ascent step on the network weights,
the keyword probabilities and the keyword energy vector.

The keyword-probability matrix (one row per document) is updated with
RMSprop because its gradient only touches the sampled batch rows; the
network and energy parameters use Adam.  The topic prior stays fixed at a
uniform vector.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import keyword_mask_matrix
from .keyword_dist import (GibbsChains, KeywordEnergy, estimate_log_partition,
                           gibbs_sweep, init_chains, negative_phase_gradient,
                           unnormalized_log_prob)
from .mathcore import (EPS_CLAMP, RngStream, binary_relax_from_noise,
                       binary_relax_grad, digamma, dirichlet_expected_logpdf,
                       gumbel_sample, softmax)
from .neural import (Adam, RmsProp, TopicPrior, TopicWordNet, backward_batch,
                     f_forward, forward_batch, init_topic_word_net)

CHECKPOINT_VERSION = 1

# Fixed stream ids so every run draws the same randomness in the same order.
STREAM_IDS = {"init": 0, "batch": 1, "gumbel": 2, "gibbs": 3, "partition": 4}


class NumericError(RuntimeError):
    """Raised when a training step produces non-finite values."""


@dataclass
class TrainConfig:
    n_topics: int = 5
    batch_size: int = 64
    penalty: float = 2.0            # keyword-count penalty c
    keyword_threshold: float = 0.5  # h, gates the generated-keyword indicator
    lr_main: float = 0.001
    lr_eps: float = 0.005
    l2_weights: float = 0.1
    l2_theta: float = 1.0
    c_neg: float = 0.1
    n_chains: int = 100
    e_step_rounds: int = 10
    n_partition_samples: int = 100_000
    pretrain_iters: int = 2500
    total_iters: int = 10_000
    temp_floor: float = 0.25
    temp_rate: float = 1e-4
    gibbs_long_every: int = 100
    gibbs_long_steps: int = 1000
    hidden_width: int = 32
    leaky_slope: float = 0.01
    prior_constant: float = 1.0
    eps_init: float = 0.5
    elbo_every: int = 10
    word_weight_mode: str = "vocab"  # "vocab": V/N_B, "total_words": N_total/N_B
    l2_include_eps: bool = False
    seed: int = 0

    def validate(self):
        if not (0.0 < self.keyword_threshold < 1.0):
            raise ValueError("keyword_threshold must be in (0, 1)")
        if self.word_weight_mode not in ("vocab", "total_words"):
            raise ValueError(f"unknown word_weight_mode {self.word_weight_mode!r}")
        for name in ("n_topics", "batch_size", "penalty", "lr_main", "lr_eps",
                     "n_chains", "e_step_rounds", "n_partition_samples",
                     "temp_floor", "temp_rate", "gibbs_long_every",
                     "gibbs_long_steps", "hidden_width", "prior_constant"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("c_neg", "l2_weights", "l2_theta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def temperature(t, cfg):
    """Annealing schedule: exponential decay with a floor."""
    if t < 1:
        raise ValueError("iteration index starts at 1")
    return max(cfg.temp_floor, float(np.exp(-cfg.temp_rate * t)))


def mcmc_steps(t, cfg):
    """Gibbs step schedule: long refresh periodically, a single step otherwise."""
    return cfg.gibbs_long_steps if t % cfg.gibbs_long_every == 0 else 1


@dataclass
class TrainData:
    """Padded per-document arrays derived from a corpus (read-only)."""
    word_ids: np.ndarray     # (D, n_max) padded with 0
    word_counts: np.ndarray  # (D,)
    masks: np.ndarray        # (D, Q) keyword presence
    kw_token_ids: np.ndarray  # (Q,) vocabulary ids of candidate keywords
    vocab_size: int
    total_words: int

    @property
    def n_docs(self):
        return len(self.word_counts)


def build_train_data(corpus):
    counts = np.array([d.n_words for d in corpus.documents], dtype=np.int64)
    n_max = int(counts.max())
    ids = np.zeros((corpus.n_docs, n_max), dtype=np.int64)
    for i, d in enumerate(corpus.documents):
        ids[i, : d.n_words] = d.word_ids
    return TrainData(
        word_ids=ids,
        word_counts=counts,
        masks=keyword_mask_matrix(corpus),
        kw_token_ids=np.asarray(corpus.candidate_keywords, dtype=np.int64),
        vocab_size=corpus.vocabulary.size,
        total_words=int(counts.sum()),
    )


@dataclass
class ModelState:
    energy: KeywordEnergy
    net: TopicWordNet
    prior: TopicPrior
    eps: np.ndarray           # (D, Q) variational keyword probabilities
    gamma: np.ndarray         # (D, K)
    phi: list                 # per document (n_d, K)
    chains: GibbsChains
    opt_net: Adam
    opt_theta: Adam
    opt_eps: RmsProp
    kw_target: np.ndarray     # empirical keyword distribution (theta regularizer)
    rngs: dict
    iteration: int = 0


def empirical_keyword_distribution(masks):
    """Fraction of documents containing each keyword, renormalized."""
    freq = masks.mean(axis=0)
    total = freq.sum()
    if total <= 0:
        raise ValueError("no document contains any candidate keyword")
    return freq / total


def init_state(corpus, cfg):
    cfg.validate()
    data = build_train_data(corpus)
    D, Q = data.masks.shape
    K = cfg.n_topics
    rngs = {name: RngStream(cfg.seed, sid) for name, sid in STREAM_IDS.items()}
    net = init_topic_word_net(Q, K, data.vocab_size, rngs["init"],
                              hidden_width=cfg.hidden_width,
                              leaky_slope=cfg.leaky_slope)
    prior = TopicPrior(n_topics=K, constant=cfg.prior_constant)
    f_vec = f_forward(prior)
    eps = np.full((D, Q), np.clip(cfg.eps_init, EPS_CLAMP, 1.0 - EPS_CLAMP))
    gamma = f_vec[None, :] + data.word_counts[:, None] / K
    phi = [np.full((int(n), K), 1.0 / K) for n in data.word_counts]
    energy = KeywordEnergy(theta=np.zeros(Q), penalty=cfg.penalty)
    chains = init_chains(cfg.n_chains, Q, rngs["gibbs"])
    return ModelState(
        energy=energy,
        net=net,
        prior=prior,
        eps=eps,
        gamma=gamma,
        phi=phi,
        chains=chains,
        opt_net=Adam(net.params(), lr=cfg.lr_main),
        opt_theta=Adam({"theta": energy.theta}, lr=cfg.lr_main),
        opt_eps=RmsProp(eps.shape, lr=cfg.lr_eps),
        kw_target=empirical_keyword_distribution(data.masks),
        rngs=rngs,
        iteration=0,
    )


def sample_keyword_relax(eps_row, mask, tau, rng):
    """Relaxed keyword indicator for one document: Gumbel relaxation of each
    coordinate, then the observation mask (masked slots are exactly zero and
    carry no gradient)."""
    q = len(eps_row)
    g1 = gumbel_sample(rng, q)
    g0 = gumbel_sample(rng, q)
    return binary_relax_from_noise(eps_row, tau, g1, g0) * mask


def sample_keyword_relax_batch(eps_rows, masks, tau, rng):
    g1 = gumbel_sample(rng, eps_rows.shape)
    g0 = gumbel_sample(rng, eps_rows.shape)
    return binary_relax_from_noise(eps_rows, tau, g1, g0) * masks


def generated_keyword_tokens(y, kw_token_ids, threshold):
    """Vocabulary ids the indicator flags as generated keywords."""
    return kw_token_ids[np.asarray(y) > threshold]


def excluded_positions(word_ids, y, kw_token_ids, threshold):
    """Word positions whose token is a flagged keyword; those are generated by
    the keyword step and must not be generated again as regular words."""
    flagged = generated_keyword_tokens(y, kw_token_ids, threshold)
    return np.isin(word_ids, flagged)


def excluded_matrix(word_ids, ys, kw_token_ids, threshold):
    """Batched excluded_positions, shape (B, n_max)."""
    flagged = ys > threshold  # (B, Q)
    hits = word_ids[:, :, None] == kw_token_ids[None, None, :]
    return np.any(hits & flagged[:, None, :], axis=2)


def e_step(word_ids, excluded, beta, f_vec, rounds, tol=0.0,
           init_phi=None, init_gamma=None):
    """Fixed-point rounds for one document's variational parameters.

    Excluded positions keep their current responsibilities (they are handled
    by the keyword part of the model) but still enter the gamma update, as
    does every word.  Returns (phi, gamma).
    """
    n = len(word_ids)
    K = len(f_vec)
    phi = np.full((n, K), 1.0 / K) if init_phi is None else np.array(init_phi, copy=True)
    gamma = (f_vec + n / K) if init_gamma is None else np.array(init_gamma, copy=True)
    upd = ~np.asarray(excluded, dtype=bool)
    beta_w = beta[:, word_ids].T  # (n, K)
    # excluded rows never update, so their (possibly zero) entries stay out
    # of the log
    log_beta_w = np.log(np.where(upd[:, None], beta_w, 1.0))
    for _ in range(rounds):
        elog = digamma(gamma) - digamma(gamma.sum())
        new_phi = softmax(log_beta_w + elog, axis=1)
        phi_next = np.where(upd[:, None], new_phi, phi)
        gamma_next = f_vec + phi_next.sum(axis=0)
        delta = max(np.abs(phi_next - phi).max() if n else 0.0,
                    np.abs(gamma_next - gamma).max())
        phi, gamma = phi_next, gamma_next
        if tol > 0.0 and delta < tol:
            break
    return phi, gamma


def e_step_batch(word_ids, word_counts, excluded, betas, f_vec, rounds):
    """Vectorized E-step over a padded batch.

    Padding positions hold zero responsibilities throughout so the gamma
    update sees only real words.  Matches the per-document e_step up to
    floating-point summation order.
    """
    B, n_max = word_ids.shape
    K = len(f_vec)
    real = np.arange(n_max)[None, :] < word_counts[:, None]
    upd = real & ~excluded
    beta_w = np.take_along_axis(betas, word_ids[:, None, :], axis=2
                                ).transpose(0, 2, 1)  # (B, n_max, K)
    log_beta_w = np.log(np.where(upd[:, :, None], beta_w, 1.0))
    phi = np.where(real[:, :, None], 1.0 / K, 0.0)
    gamma = f_vec[None, :] + word_counts[:, None] / K
    for _ in range(rounds):
        elog = digamma(gamma) - digamma(gamma.sum(axis=1))[:, None]
        new_phi = softmax(log_beta_w + elog[:, None, :], axis=2)
        phi = np.where(upd[:, :, None], new_phi, phi)
        gamma = f_vec[None, :] + phi.sum(axis=1)
    return phi, gamma


def doc_bound(word_ids, excluded, beta, f_vec, phi, gamma):
    """Unweighted per-document variational terms the E-step ascends."""
    elog = digamma(gamma) - digamma(gamma.sum())
    inc = ~np.asarray(excluded, dtype=bool)
    phi_inc = phi[inc]
    topic_label = float((phi_inc @ elog).sum())
    log_beta_w = np.log(beta[:, word_ids[inc]].T)
    word_emission = float((phi_inc * log_beta_w).sum())
    label_entropy = float(np.sum(np.where(phi_inc > 0.0,
                                          phi_inc * np.log(np.where(phi_inc > 0.0, phi_inc, 1.0)),
                                          0.0)))
    return (dirichlet_expected_logpdf(gamma, f_vec) + topic_label + word_emission
            - dirichlet_expected_logpdf(gamma, gamma) - label_entropy)


def _doc_elbo_terms(word_ids, excluded, beta, f_vec, phi, gamma, y, eps_row,
                    mask, energy):
    eps_c = np.clip(eps_row, EPS_CLAMP, 1.0 - EPS_CLAMP)
    on = mask > 0.0
    keyword_q = float(np.sum(y[on] * np.log(eps_c[on])
                             + (1.0 - y[on]) * np.log1p(-eps_c[on])))
    elog = digamma(gamma) - digamma(gamma.sum())
    inc = ~np.asarray(excluded, dtype=bool)
    phi_inc = phi[inc]
    log_beta_w = np.log(beta[:, word_ids[inc]].T)
    label_entropy = float(np.sum(np.where(phi_inc > 0.0,
                                          phi_inc * np.log(np.where(phi_inc > 0.0, phi_inc, 1.0)),
                                          0.0)))
    return {
        "keyword_energy": unnormalized_log_prob(y, energy),
        "topic_prior": dirichlet_expected_logpdf(gamma, f_vec),
        "topic_label": float((phi_inc @ elog).sum()),
        "word_emission": float((phi_inc * log_beta_w).sum()),
        "keyword_q": keyword_q,
        "topic_entropy_q": dirichlet_expected_logpdf(gamma, gamma),
        "label_entropy_q": label_entropy,
    }


def _word_weight(data, batch_words, cfg):
    if cfg.word_weight_mode == "vocab":
        return data.vocab_size / batch_words
    return data.total_words / batch_words


def elbo_estimate(data, state, batch_idx, ys, tau, log_z_hat, cfg):
    """Weighted batch estimator of the evidence lower bound.

    Document-level terms scale by D/B, word-level terms by the configured
    word weight; log_z_hat enters once per batch document.  `tau` is part of
    the sampling step and does not alter the Bernoulli form used for the
    keyword part of the variational density.
    """
    del tau
    D = data.n_docs
    B = len(batch_idx)
    f_vec = f_forward(state.prior)
    betas = forward_batch(state.net, ys)
    wd = D / B
    ww = _word_weight(data, int(data.word_counts[batch_idx].sum()), cfg)
    totals = {}
    for pos, i in enumerate(batch_idx):
        n = int(data.word_counts[i])
        ids = data.word_ids[i, :n]
        excl = excluded_positions(ids, ys[pos], data.kw_token_ids,
                                  cfg.keyword_threshold)
        terms = _doc_elbo_terms(ids, excl, betas[pos], f_vec, state.phi[i],
                                state.gamma[i], ys[pos], state.eps[i],
                                data.masks[i], state.energy)
        for k, v in terms.items():
            totals[k] = totals.get(k, 0.0) + v
    for name, v in totals.items():
        if not np.isfinite(v):
            raise NumericError(f"non-finite ELBO term: {name}")
    if not np.isfinite(log_z_hat):
        raise NumericError("non-finite ELBO term: keyword_partition")
    return (wd * (totals["keyword_energy"] - B * log_z_hat)
            + wd * totals["topic_prior"]
            + ww * totals["topic_label"]
            + ww * totals["word_emission"]
            - wd * totals["keyword_q"]
            - wd * totals["topic_entropy_q"]
            - ww * totals["label_entropy_q"])


def theta_data_gradient(ys, neg_phase, c_neg, doc_weight):
    """Ascent gradient of the keyword-energy term in theta.

    Positive phase is the batch's relaxed indicators; negative phase is the
    chain average scaled by c_neg."""
    ys = np.asarray(ys, dtype=float)
    return doc_weight * (ys.sum(axis=0) - len(ys) * c_neg * neg_phase)


def theta_regularizer_gradient(theta, target):
    """Gradient of ||softmax(theta) - target||^2 in theta."""
    s = softmax(theta)
    diff = s - target
    return 2.0 * s * (diff - float(s @ diff))


def _emission_upstream(word_ids, word_counts, excluded, betas, phis, weight):
    """d(word emission term)/d beta for a batch, shape (B, K, V)."""
    B, n_max = word_ids.shape
    K, V = betas.shape[1], betas.shape[2]
    real = np.arange(n_max)[None, :] < word_counts[:, None]
    include = real & ~excluded
    beta_w = np.take_along_axis(betas, word_ids[:, None, :], axis=2
                                ).transpose(0, 2, 1)  # (B, n_max, K)
    vals = np.where(include[:, :, None], phis / beta_w, 0.0)
    out = np.zeros((B, K, V))
    for b in range(B):
        tgt = np.zeros((V, K))
        np.add.at(tgt, word_ids[b], vals[b])
        out[b] = tgt.T
    return weight * out


def m_step(data, state, batch_idx, ys, tau, betas, cfg,
           update_net=True, update_eps=True, update_theta=True):
    """One ascent step on network weights, keyword probabilities and theta.

    On a non-finite gradient every parameter group is restored to its value
    before the call and NumericError is raised."""
    D = data.n_docs
    B = len(batch_idx)
    wd = D / B
    ww = _word_weight(data, int(data.word_counts[batch_idx].sum()), cfg)
    ids = data.word_ids[batch_idx]
    counts = data.word_counts[batch_idx]
    excl = excluded_matrix(ids, ys, data.kw_token_ids, cfg.keyword_threshold)
    phis = np.zeros((B, ids.shape[1], cfg.n_topics))
    for pos, i in enumerate(batch_idx):
        phis[pos, : int(counts[pos])] = state.phi[i]

    snapshot = {
        "net": state.net.copy(),
        "theta": state.energy.theta.copy(),
        "eps_rows": state.eps[batch_idx].copy(),
        "opt_net": {"t": state.opt_net.t,
                    "m": {k: v.copy() for k, v in state.opt_net.m.items()},
                    "v": {k: v.copy() for k, v in state.opt_net.v.items()}},
        "opt_theta": {"t": state.opt_theta.t,
                      "m": {k: v.copy() for k, v in state.opt_theta.m.items()},
                      "v": {k: v.copy() for k, v in state.opt_theta.v.items()}},
        "opt_eps": {"t": state.opt_eps.t, "acc": state.opt_eps.acc.copy()},
    }
    try:
        g_beta = _emission_upstream(ids, counts, excl, betas, phis, ww)
        param_grads, dzs = backward_batch(state.net, ys, g_beta)
        if update_net:
            param_grads["w1"] -= 2.0 * cfg.l2_weights * state.net.w1
            param_grads["w2"] -= 2.0 * cfg.l2_weights * state.net.w2
            state.opt_net.step(state.net.params(), param_grads)

        if update_eps:
            eps_rows = state.eps[batch_idx]
            eps_c = np.clip(eps_rows, EPS_CLAMP, 1.0 - EPS_CLAMP)
            logit = np.log(eps_c) - np.log1p(-eps_c)
            upstream_y = (wd * (state.energy.theta[None, :] - cfg.penalty)
                          - wd * logit + dzs)
            dy_deps = binary_relax_grad(ys, eps_rows, tau)
            direct = -wd * (ys / eps_c - (1.0 - ys) / (1.0 - eps_c))
            grad_rows = data.masks[batch_idx] * (upstream_y * dy_deps + direct)
            if cfg.l2_include_eps:
                grad_rows -= data.masks[batch_idx] * 2.0 * cfg.l2_weights * eps_rows
            full = np.zeros_like(state.eps)
            full[batch_idx] = grad_rows
            state.opt_eps.step(state.eps, full)
            state.eps[batch_idx] = np.clip(state.eps[batch_idx],
                                           EPS_CLAMP, 1.0 - EPS_CLAMP)

        if update_theta:
            neg = negative_phase_gradient(state.chains, state.energy)
            g_theta = theta_data_gradient(ys, neg, cfg.c_neg, wd)
            g_theta -= cfg.l2_theta * theta_regularizer_gradient(
                state.energy.theta, state.kw_target)
            state.opt_theta.step({"theta": state.energy.theta}, {"theta": g_theta})
    except ValueError as exc:
        state.net.w1[:] = snapshot["net"].w1
        state.net.b1[:] = snapshot["net"].b1
        state.net.w2[:] = snapshot["net"].w2
        state.net.b2[:] = snapshot["net"].b2
        state.energy.theta[:] = snapshot["theta"]
        state.eps[batch_idx] = snapshot["eps_rows"]
        state.opt_net.load_state(snapshot["opt_net"])
        state.opt_theta.load_state(snapshot["opt_theta"])
        state.opt_eps.load_state(snapshot["opt_eps"])
        raise NumericError(str(exc)) from exc
    return state


def _run_e_step(data, state, batch_idx, ys, cfg):
    betas = forward_batch(state.net, ys)
    ids = data.word_ids[batch_idx]
    counts = data.word_counts[batch_idx]
    excl = excluded_matrix(ids, ys, data.kw_token_ids, cfg.keyword_threshold)
    f_vec = f_forward(state.prior)
    phis, gammas = e_step_batch(ids, counts, excl, betas, f_vec,
                                cfg.e_step_rounds)
    for pos, i in enumerate(batch_idx):
        state.phi[i] = phis[pos, : int(counts[pos])].copy()
        state.gamma[i] = gammas[pos]
    return betas


def _sample_batch(rng, n_docs, batch_size):
    size = min(batch_size, n_docs)
    return np.sort(rng.gen.choice(n_docs, size=size, replace=False))


def pretrain(corpus, cfg, progress=None):
    """Supervised warm-up for the topic-word network.

    The keyword indicator is the observed mask itself (no sampling), and
    neither theta nor the keyword probabilities are updated; only the
    network learns.  Returns the resulting state; use its net to warm-start
    the full run."""
    state = init_state(corpus, cfg)
    data = build_train_data(corpus)
    for t in range(1, cfg.pretrain_iters + 1):
        batch_idx = _sample_batch(state.rngs["batch"], data.n_docs, cfg.batch_size)
        ys = data.masks[batch_idx]
        betas = _run_e_step(data, state, batch_idx, ys, cfg)
        m_step(data, state, batch_idx, ys, 1.0, betas, cfg,
               update_eps=False, update_theta=False)
        state.iteration = t
        if progress is not None:
            progress(t, None)
    return state


def warm_start_from(state, pretrained):
    """Copy network weights from a pretrained state into a fresh state."""
    state.net.w1[:] = pretrained.net.w1
    state.net.b1[:] = pretrained.net.b1
    state.net.w2[:] = pretrained.net.w2
    state.net.b2[:] = pretrained.net.b2
    return state


def train(corpus, cfg, init=None, checkpoint_path=None, checkpoint_every=0,
          rescue_path=None, progress=None):
    """Full training loop; resumes from `init` when given.

    Returns (state, trace) where trace is a list of dicts
    {iter, elbo, tau, log_z_hat} recorded every cfg.elbo_every iterations.
    On a numeric failure the last consistent state (the failing step rolls
    itself back) is written to rescue_path before the error propagates."""
    cfg.validate()
    state = init_state(corpus, cfg) if init is None else init
    data = build_train_data(corpus)
    if state.eps.shape != data.masks.shape:
        raise ValueError(
            f"state shape {state.eps.shape} does not match corpus {data.masks.shape}")
    trace = []
    try:
        for t in range(state.iteration + 1, cfg.total_iters + 1):
            gibbs_sweep(state.chains, state.energy, mcmc_steps(t, cfg),
                        state.rngs["gibbs"])
            batch_idx = _sample_batch(state.rngs["batch"], data.n_docs,
                                      cfg.batch_size)
            tau = temperature(t, cfg)
            ys = sample_keyword_relax_batch(state.eps[batch_idx],
                                            data.masks[batch_idx], tau,
                                            state.rngs["gumbel"])
            record = (t == 1 or t % cfg.elbo_every == 0)
            if record:
                log_z_hat = estimate_log_partition(state.energy,
                                                   cfg.n_partition_samples,
                                                   state.rngs["partition"])
                elbo = elbo_estimate(data, state, batch_idx, ys, tau,
                                     log_z_hat, cfg)
                trace.append({"iter": t, "elbo": elbo, "tau": tau,
                              "log_z_hat": float(log_z_hat)})
            betas = _run_e_step(data, state, batch_idx, ys, cfg)
            m_step(data, state, batch_idx, ys, tau, betas, cfg)
            state.iteration = t
            if checkpoint_path and checkpoint_every and t % checkpoint_every == 0:
                save_checkpoint(state, cfg, checkpoint_path)
            if progress is not None:
                progress(t, trace[-1] if trace else None)
    except NumericError:
        if rescue_path:
            save_checkpoint(state, cfg, rescue_path)
        raise
    return state, trace


def save_checkpoint(state, cfg, path):
    """Versioned container with every trainable array, optimizer and RNG
    cursor, so a resumed run reproduces a straight-through run exactly."""
    phi_flat = (np.concatenate([p.reshape(-1, p.shape[1]) for p in state.phi])
                if state.phi else np.zeros((0, cfg.n_topics)))
    offsets = np.cumsum([0] + [len(p) for p in state.phi])
    rng_states = {name: rng.state() for name, rng in state.rngs.items()}
    np.savez(
        path,
        version=np.int64(CHECKPOINT_VERSION),
        config_json=np.array(json.dumps(asdict(cfg))),
        theta=state.energy.theta,
        penalty=np.float64(state.energy.penalty),
        w1=state.net.w1, b1=state.net.b1, w2=state.net.w2, b2=state.net.b2,
        n_topics=np.int64(state.net.n_topics),
        vocab_size=np.int64(state.net.vocab_size),
        leaky_slope=np.float64(state.net.leaky_slope),
        prior_constant=np.float64(state.prior.constant),
        eps=state.eps,
        gamma=state.gamma,
        phi_flat=phi_flat,
        phi_offsets=offsets,
        chain_states=state.chains.states,
        opt_net_t=np.int64(state.opt_net.t),
        opt_net_m_w1=state.opt_net.m["w1"], opt_net_v_w1=state.opt_net.v["w1"],
        opt_net_m_b1=state.opt_net.m["b1"], opt_net_v_b1=state.opt_net.v["b1"],
        opt_net_m_w2=state.opt_net.m["w2"], opt_net_v_w2=state.opt_net.v["w2"],
        opt_net_m_b2=state.opt_net.m["b2"], opt_net_v_b2=state.opt_net.v["b2"],
        opt_theta_t=np.int64(state.opt_theta.t),
        opt_theta_m=state.opt_theta.m["theta"],
        opt_theta_v=state.opt_theta.v["theta"],
        opt_eps_t=np.int64(state.opt_eps.t),
        opt_eps_acc=state.opt_eps.acc,
        kw_target=state.kw_target,
        iteration=np.int64(state.iteration),
        rng_json=np.array(json.dumps(rng_states)),
    )


class CheckpointError(ValueError):
    pass


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (state, cfg)."""
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version}, "
                f"expected {CHECKPOINT_VERSION}")
        cfg = TrainConfig(**json.loads(str(z["config_json"])))
        net = TopicWordNet(
            w1=z["w1"], b1=z["b1"], w2=z["w2"], b2=z["b2"],
            n_topics=int(z["n_topics"]), vocab_size=int(z["vocab_size"]),
            leaky_slope=float(z["leaky_slope"]),
        )
        if net.w2.shape[1] != net.n_topics * net.vocab_size:
            raise CheckpointError("checkpoint arrays disagree with stored shape")
        energy = KeywordEnergy(theta=z["theta"], penalty=float(z["penalty"]))
        prior = TopicPrior(n_topics=net.n_topics, constant=float(z["prior_constant"]))
        offsets = z["phi_offsets"]
        phi_flat = z["phi_flat"]
        phi = [phi_flat[offsets[i]: offsets[i + 1]].copy()
               for i in range(len(offsets) - 1)]
        opt_net = Adam(net.params(), lr=cfg.lr_main)
        opt_net.load_state({"t": int(z["opt_net_t"]),
                            "m": {"w1": z["opt_net_m_w1"], "b1": z["opt_net_m_b1"],
                                  "w2": z["opt_net_m_w2"], "b2": z["opt_net_m_b2"]},
                            "v": {"w1": z["opt_net_v_w1"], "b1": z["opt_net_v_b1"],
                                  "w2": z["opt_net_v_w2"], "b2": z["opt_net_v_b2"]}})
        opt_theta = Adam({"theta": energy.theta}, lr=cfg.lr_main)
        opt_theta.load_state({"t": int(z["opt_theta_t"]),
                              "m": {"theta": z["opt_theta_m"]},
                              "v": {"theta": z["opt_theta_v"]}})
        eps = z["eps"]
        opt_eps = RmsProp(eps.shape, lr=cfg.lr_eps)
        opt_eps.load_state({"t": int(z["opt_eps_t"]), "acc": z["opt_eps_acc"]})
        rng_states = json.loads(str(z["rng_json"]))
        rngs = {}
        for name, sid in STREAM_IDS.items():
            rng = RngStream(cfg.seed, sid)
            rng.set_state(rng_states[name])
            rngs[name] = rng
        return ModelState(
            energy=energy, net=net, prior=prior, eps=eps, gamma=z["gamma"],
            phi=phi, chains=GibbsChains(states=z["chain_states"]),
            opt_net=opt_net, opt_theta=opt_theta, opt_eps=opt_eps,
            kw_target=z["kw_target"], rngs=rngs, iteration=int(z["iteration"]),
        ), cfg


def validate_state_for_corpus(state, corpus, require_docs=False):
    """Shape compatibility between a loaded state and a corpus."""
    if state.net.vocab_size != corpus.vocabulary.size:
        raise ValueError(
            f"vocabulary size mismatch: model {state.net.vocab_size}, "
            f"corpus {corpus.vocabulary.size}")
    if state.net.n_keywords != corpus.n_keywords:
        raise ValueError(
            f"keyword count mismatch: model {state.net.n_keywords}, "
            f"corpus {corpus.n_keywords}")
    if require_docs and len(state.eps) != corpus.n_docs:
        raise ValueError(
            f"document count mismatch: model {len(state.eps)}, "
            f"corpus {corpus.n_docs}")

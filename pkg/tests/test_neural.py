import numpy as np
import pytest

from kwtopics import neural
from kwtopics.mathcore import RngStream


def toy_net(seed=0, q=4, h=3, k=2, v=5):
    return neural.init_topic_word_net(q, k, v, RngStream(seed, 1), hidden_width=h)


def test_forward_zero_weights_gives_uniform_rows():
    net = toy_net()
    net.w1[:] = 0.0
    net.w2[:] = 0.0
    net.b1[:] = 0.0
    net.b2[:] = 0.0
    beta = neural.forward(net, np.array([1.0, 0.0, 1.0, 0.0]))
    assert np.allclose(beta, 1.0 / net.vocab_size)


def test_forward_dead_input_column():
    net = toy_net(seed=1)
    net.w1[2, :] = 0.0  # third input feeds nothing
    z = np.array([0.3, 0.7, 0.1, 0.9])
    z2 = z.copy()
    z2[2] = 0.8
    assert np.array_equal(neural.forward(net, z), neural.forward(net, z2))


def test_forward_matches_straight_line_reimplementation():
    net = toy_net(seed=2)
    z = np.zeros(4)
    z[0] = 1.0
    pre = net.w1.T @ z + net.b1
    hid = np.where(pre >= 0, pre, net.leaky_slope * pre)
    logits = (net.w2.T @ hid + net.b2).reshape(net.n_topics, net.vocab_size)
    expect = np.exp(logits - logits.max(axis=1, keepdims=True))
    expect /= expect.sum(axis=1, keepdims=True)
    assert np.allclose(neural.forward(net, z), expect, atol=1e-12)


def test_forward_rows_are_distributions():
    rng = RngStream(3, 0)
    for seed in range(20):
        net = toy_net(seed=seed)
        z = rng.gen.random(4)
        beta = neural.forward(net, z)
        assert np.all(beta > 0.0)
        assert np.allclose(beta.sum(axis=1), 1.0, atol=1e-9)


def test_forward_shape_errors():
    net = toy_net()
    with pytest.raises(ValueError):
        neural.forward(net, np.ones(5))


def _fd_check(net, z, upstream, h=1e-5, tol=1e-4):
    def objective():
        return float((upstream * neural.forward(net, z)).sum())

    grads, dz = neural.backward(net, z, upstream)
    params = net.params()
    for name, g in grads.items():
        p = params[name]
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            old = flat_p[i]
            flat_p[i] = old + h
            up = objective()
            flat_p[i] = old - h
            dn = objective()
            flat_p[i] = old
            fd = (up - dn) / (2 * h)
            assert abs(flat_g[i] - fd) / max(abs(flat_g[i]), abs(fd), 1e-8) < tol
    for j in range(len(z)):
        old = z[j]
        z[j] = old + h
        up = objective()
        z[j] = old - h
        dn = objective()
        z[j] = old
        fd = (up - dn) / (2 * h)
        assert abs(dz[j] - fd) / max(abs(dz[j]), abs(fd), 1e-8) < tol


def test_backward_zero_upstream():
    net = toy_net()
    grads, dz = neural.backward(net, np.ones(4) * 0.5, np.zeros((2, 5)))
    assert all(np.all(g == 0.0) for g in grads.values())
    assert np.all(dz == 0.0)


def test_backward_finite_differences_toy():
    rng = RngStream(4, 0)
    for seed in range(3):
        net = toy_net(seed=seed + 10)
        z = rng.gen.random(4)
        upstream = rng.gen.normal(size=(2, 5))
        _fd_check(net, z, upstream)


def test_leaky_negative_quadrant_slope():
    # one input, one hidden unit forced negative: the activation derivative
    # must contribute a factor of exactly 0.01 to dz
    net = neural.TopicWordNet(
        w1=np.array([[1.0]]), b1=np.array([-5.0]),
        w2=np.array([[0.7, -0.3]]), b2=np.zeros(2),
        n_topics=1, vocab_size=2, leaky_slope=0.01)
    z = np.array([2.0])  # pre-activation 2 - 5 = -3 < 0
    upstream = np.array([[1.0, 0.0]])
    _, dz = neural.backward(net, z, upstream)
    beta = neural.forward(net, z)
    dlogits = beta[0] * (upstream[0] - float(upstream[0] @ beta[0]))
    dhid = float(dlogits @ net.w2[0])
    assert dhid != 0.0
    assert abs(dz[0] - 0.01 * dhid * net.w1[0, 0]) < 1e-15


def test_batch_forward_backward_match_single():
    net = toy_net(seed=5)
    rng = RngStream(6, 0)
    zs = rng.gen.random((3, 4))
    ups = rng.gen.normal(size=(3, 2, 5))
    betas = neural.forward_batch(net, zs)
    acc = {k: np.zeros_like(v) for k, v in net.params().items()}
    dzs = []
    for i in range(3):
        assert np.allclose(betas[i], neural.forward(net, zs[i]), atol=1e-12)
        g, dz = neural.backward(net, zs[i], ups[i])
        for k in acc:
            acc[k] += g[k]
        dzs.append(dz)
    gb, dzb = neural.backward_batch(net, zs, ups)
    for k in acc:
        assert np.allclose(gb[k], acc[k], atol=1e-10)
    assert np.allclose(dzb, np.stack(dzs), atol=1e-10)


def test_adam_first_step_is_signed_lr():
    params = {"x": np.array([0.0, 0.0])}
    opt = neural.Adam(params, lr=0.1)
    opt.step(params, {"x": np.array([3.0, -0.2])})
    assert np.allclose(params["x"], [0.1, -0.1], atol=1e-6)


def test_adam_zero_gradient_fixed_point():
    params = {"x": np.array([1.5])}
    opt = neural.Adam(params, lr=0.1)
    for _ in range(50):
        opt.step(params, {"x": np.zeros(1)})
    assert params["x"][0] == 1.5


def test_adam_maximizes_concave_scalar():
    # ascent on f(x) = -(x-3)^2 from x=0
    params = {"x": np.array([0.0])}
    opt = neural.Adam(params, lr=0.1)
    for _ in range(200):
        opt.step(params, {"x": -2.0 * (params["x"] - 3.0)})
    assert abs(params["x"][0] - 3.0) < 0.05


def test_adam_rejects_non_finite():
    params = {"x": np.zeros(2)}
    opt = neural.Adam(params, lr=0.1)
    with pytest.raises(ValueError, match="non-finite gradient"):
        opt.step(params, {"x": np.array([np.nan, 0.0])})


def test_rmsprop_zero_gradient_untouched():
    param = np.array([1.0, 2.0, 3.0])
    opt = neural.RmsProp(param.shape, lr=0.1)
    before = param.copy()
    opt.step(param, np.zeros(3))
    assert np.array_equal(param, before)
    assert np.all(opt.acc == 0.0)


def test_rmsprop_constant_gradient_reaches_signed_lr():
    param = np.array([0.0])
    opt = neural.RmsProp(param.shape, lr=0.01)
    last = 0.0
    for _ in range(400):
        before = param[0]
        opt.step(param, np.array([2.5]))
        last = param[0] - before
    assert abs(last - 0.01) < 1e-3  # lr * g / sqrt(g^2)


def test_rmsprop_sparse_rows_bit_identical():
    param = np.arange(12, dtype=float).reshape(4, 3)
    opt = neural.RmsProp(param.shape, lr=0.1)
    grad = np.zeros((4, 3))
    grad[1] = 1.0
    before = param.copy()
    acc_before = opt.acc.copy()
    opt.step(param, grad)
    for r in (0, 2, 3):
        assert np.array_equal(param[r], before[r])
        assert np.array_equal(opt.acc[r], acc_before[r])
    assert not np.array_equal(param[1], before[1])


def test_prior_forward():
    assert np.array_equal(neural.f_forward(neural.TopicPrior(5)), np.ones(5))
    assert np.array_equal(neural.f_forward(neural.TopicPrior(3, 0.5)),
                          np.full(3, 0.5))
    with pytest.raises(ValueError):
        neural.f_forward(neural.TopicPrior(3, 0.0))

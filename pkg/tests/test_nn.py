import numpy as np
import pytest

from messrl import kernels
from messrl.nn import Adam, Mlp, polyak_update


def loss_and_grads(net, x, coeffs):
    """Scalar loss sum(coeffs * output) and its parameter gradients."""
    y, cache = net.forward_cached(x)
    loss = float(np.sum(coeffs * y))
    grads, _ = net.backward(cache, np.broadcast_to(coeffs, y.shape))
    return loss, grads


def numeric_grads(net, x, coeffs, h=1e-5):
    """Central-difference oracle over every parameter element."""
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = float(np.sum(coeffs * net.forward(x)))
            flat_p[i] = orig - h
            dn = float(np.sum(coeffs * net.forward(x)))
            flat_p[i] = orig
            flat_g[i] = (up - dn) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def safe_inputs(net, rng, n=4):
    """Inputs whose hidden pre-activations sit away from ReLU kinks, so
    finite differences are trustworthy."""
    for _ in range(200):
        x = rng.normal(size=(n, net.sizes[0]))
        _, cache = net.forward_cached(x)
        ok = all(np.min(np.abs(act)[act != 0.0], initial=1.0) > 1e-3
                 for act in cache[1:-1])
        if ok:
            return x
    raise AssertionError("could not find kink-free inputs")


# ----------------------------------------------------------------------
# forward


def test_zero_network_outputs_zero():
    net = Mlp((4, 3, 2), output="identity", rng=np.random.default_rng(0))
    for w in net.weights:
        w[...] = 0.0
    for b in net.biases:
        b[...] = 0.0
    assert np.array_equal(net.forward(np.ones(4)), np.zeros(2))


def test_relu_identity_layers():
    net = Mlp((2, 2, 2), output="identity", rng=np.random.default_rng(0))
    for w in net.weights:
        w[...] = np.eye(2)
    for b in net.biases:
        b[...] = 0.0
    assert np.array_equal(net.forward(np.array([-1.0, 2.0])),
                          np.array([0.0, 2.0]))


def test_forward_golden_replay():
    net = Mlp((3, 5, 2), output="tanh", rng=np.random.default_rng(2024))
    y = net.forward(np.array([0.3, -0.7, 1.1]))
    golden = np.array([-0.21917596230547948, -0.010420173106399516])
    assert np.allclose(y, golden, atol=1e-15)


def test_forward_is_pure(sioux_cfg):
    net = Mlp((6, 8, 3), output="tanh", rng=np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=(5, 6))
    a = net.forward(x)
    b = net.forward(x)
    assert np.array_equal(a, b)


def test_forward_rejects_bad_width():
    net = Mlp((4, 3, 2), rng=np.random.default_rng(0))
    with pytest.raises(ValueError, match="width"):
        net.forward(np.zeros(5))


# ----------------------------------------------------------------------
# backward


def test_constant_loss_zero_gradients():
    net = Mlp((3, 4, 2), rng=np.random.default_rng(3))
    _, cache = net.forward_cached(np.ones((2, 3)))
    grads, _ = net.backward(cache, np.zeros((2, 2)))
    assert all(np.all(g == 0.0) for g in grads)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    for arch, out in (((3, 8, 2), "identity"), ((5, 6, 6, 3), "tanh")):
        net = Mlp(arch, output=out, rng=rng)
        x = safe_inputs(net, rng)
        coeffs = rng.normal(size=arch[-1])
        _, analytic = loss_and_grads(net, x, coeffs)
        numeric = numeric_grads(net, x, coeffs)
        assert max_rel_error(analytic, numeric) < 1e-4


def test_tanh_saturation_kills_gradient():
    net = Mlp((1, 1), output="tanh", rng=np.random.default_rng(0))
    net.weights[0][...] = 1.0
    net.biases[0][...] = 25.0  # deeply saturated
    _, cache = net.forward_cached(np.array([[1.0]]))
    grads, _ = net.backward(cache, np.ones((1, 1)))
    assert all(np.max(np.abs(g)) < 1e-6 for g in grads)


def test_backward_requires_cache():
    net = Mlp((2, 2), rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.backward(None, np.zeros((1, 2)))


def test_backward_input_gradient_chains():
    # d(sum(output))/dx for identity weights is the relu mask
    net = Mlp((2, 2, 2), output="identity", rng=np.random.default_rng(0))
    for w in net.weights:
        w[...] = np.eye(2)
    for b in net.biases:
        b[...] = 0.0
    _, cache = net.forward_cached(np.array([[-1.0, 2.0]]))
    _, dx = net.backward(cache, np.ones((1, 2)))
    assert np.array_equal(dx, np.array([[0.0, 1.0]]))


# ----------------------------------------------------------------------
# optimizer


def test_adam_zero_gradient_is_noop():
    p = np.array([1.5, -2.5])
    opt = Adam([p], lr=0.1)
    opt.step([np.zeros(2)])
    assert np.array_equal(p, [1.5, -2.5])


def test_adam_first_step_magnitude():
    # with g=1 the bias-corrected ratio is 1, so the first step is -lr
    p = np.array([5.0])
    opt = Adam([p], lr=0.1)
    opt.step([np.ones(1)])
    assert p[0] == pytest.approx(5.0 - 0.1, abs=1e-6)


def test_adam_converges_on_quadratic():
    p = np.array([5.0])
    opt = Adam([p], lr=0.1)
    for _ in range(1000):
        opt.step([2.0 * p])
    assert abs(p[0]) < 0.1


def test_adam_rejects_nan():
    p = np.array([1.0])
    opt = Adam([p], lr=0.1)
    with pytest.raises(ValueError, match="non-finite"):
        opt.step([np.array([np.nan])])
    assert p[0] == 1.0


def test_adam_state_roundtrip():
    rng = np.random.default_rng(0)
    p1, p2 = rng.normal(size=3), rng.normal(size=3)
    o1, o2 = Adam([p1], lr=0.01), Adam([p2], lr=0.01)
    g = rng.normal(size=3)
    o1.step([g])
    o2.load_state_dict(o1.state_dict())
    p2[...] = p1
    o1.step([g])
    o2.step([g])
    assert np.array_equal(p1, p2)


# ----------------------------------------------------------------------
# polyak


def test_polyak_boundary_cases():
    t = np.zeros(4)
    o = np.ones(4)
    polyak_update([t], [o], tau=1.0)
    assert np.array_equal(t, o)
    t2 = np.full(4, 0.25)
    polyak_update([t2], [o], tau=0.0)
    assert np.array_equal(t2, np.full(4, 0.25))


def test_polyak_small_tau_example():
    t = np.zeros(6)
    polyak_update([t], [np.ones(6)], tau=0.005)
    assert np.allclose(t, 0.005, atol=1e-18)


def test_polyak_contraction_identity():
    # dyadic values keep the per-element identity exact in floating
    # point; the euclidean norm only adds sqrt rounding
    target = np.array([0.0, 8.0, -4.0])
    online = np.array([16.0, 0.0, 4.0])
    tau = 0.25
    gap_before = target - online
    norm_before = np.linalg.norm(gap_before)
    polyak_update([target], [online], tau)
    assert np.array_equal(target - online, (1 - tau) * gap_before)
    assert np.linalg.norm(target - online) == pytest.approx(
        (1 - tau) * norm_before, rel=1e-14)


def test_polyak_shape_mismatch():
    with pytest.raises(ValueError):
        polyak_update([np.zeros(2)], [np.zeros(3)], 0.5)


# ----------------------------------------------------------------------
# kernel backends agree


@pytest.mark.skipif("numba" not in kernels.available_backends(),
                    reason="numba not installed")
def test_backends_equivalent():
    rng = np.random.default_rng(12)
    z = rng.normal(size=(16, 9))
    b = rng.normal(size=9)
    delta = rng.normal(size=(16, 9))
    act = rng.normal(size=(16, 9))
    p = rng.normal(size=40)
    g = rng.normal(size=40)

    prev = kernels.backend()
    results = {}
    try:
        for name in ("numpy", "numba"):
            kernels.set_backend(name)
            out = {}
            out["relu"] = kernels.add_bias_relu(z.copy(), b)
            out["tanh"] = kernels.add_bias_tanh(z.copy(), b)
            out["bias"] = kernels.add_bias(z.copy(), b)
            out["relu_g"] = kernels.relu_grad(delta.copy(), act)
            out["tanh_g"] = kernels.tanh_grad(delta.copy(), act)
            pp, mm, vv = p.copy(), np.zeros(40), np.zeros(40)
            kernels.adam_update(pp, g, mm, vv, 1e-3, 0.9, 0.999, 1e-8,
                                0.1, 0.001)
            out["adam_p"], out["adam_m"], out["adam_v"] = pp, mm, vv
            tt = p.copy()
            kernels.polyak(tt, g, 0.005)
            out["polyak"] = tt
            results[name] = out
    finally:
        kernels.set_backend(prev)
    for key in results["numpy"]:
        assert np.allclose(results["numpy"][key], results["numba"][key],
                           rtol=1e-12, atol=1e-12), key


@pytest.mark.skipif("numba" not in kernels.available_backends(),
                    reason="numba not installed")
def test_gradient_check_on_both_backends():
    prev = kernels.backend()
    try:
        for name in ("numpy", "numba"):
            kernels.set_backend(name)
            rng = np.random.default_rng(31)
            net = Mlp((4, 6, 2), output="tanh", rng=rng)
            x = safe_inputs(net, rng)
            coeffs = rng.normal(size=2)
            _, analytic = loss_and_grads(net, x, coeffs)
            numeric = numeric_grads(net, x, coeffs)
            assert max_rel_error(analytic, numeric) < 1e-4, name
    finally:
        kernels.set_backend(prev)

"""Numerical core checks: analytic gradients vs central finite differences."""

import numpy as np
import pytest

from maaip import nets

# Every network shape the system instantiates: policy, value, motion and
# interaction discriminators (desk-scale hidden widths).
SYSTEM_SHAPES = [
    [83, 256, 256, 128, 7],    # policy with heading + one-hot
    [162, 256, 256, 128, 1],   # centralized value
    [112, 256, 256, 128, 1],   # motion discriminator
    [135, 256, 256, 128, 1],   # interaction discriminator
]


def fd_directional(loss_fn, params, direction, h=1e-6):
    """Central finite difference of loss_fn along a NetGrads-shaped direction."""

    def shifted(sign):
        p = params.copy()
        for i in range(len(p.weights)):
            p.weights[i] += sign * h * direction.weights[i]
            p.biases[i] += sign * h * direction.biases[i]
        return loss_fn(p)

    return (shifted(+1.0) - shifted(-1.0)) / (2.0 * h)


def dot_grads(a, b):
    total = 0.0
    for i in range(len(a.weights)):
        total += np.sum(a.weights[i] * b.weights[i]) + np.sum(a.biases[i] * b.biases[i])
    return float(total)


def random_direction(params, rng):
    d = nets.zero_grads(params)
    for i in range(len(d.weights)):
        d.weights[i] = rng.standard_normal(d.weights[i].shape)
        d.biases[i] = rng.standard_normal(d.biases[i].shape)
    return d


def test_init_deterministic_and_orthogonal():
    a = nets.net_init([32, 32, 1], seed=3)
    b = nets.net_init([32, 32, 1], seed=3)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    w = a.weights[0]  # square hidden layer, gain sqrt(2)
    assert np.allclose(w.T @ w, 2.0 * np.eye(32), atol=1e-6)
    for bias in a.biases:
        assert np.all(bias == 0.0)


def test_init_uniform_scaled_scheme():
    p = nets.net_init([64, 32, 1], seed=2, scheme="uniform_scaled", gain=1.0)
    bound = 1.0 / np.sqrt(64)
    assert np.max(np.abs(p.weights[0])) <= bound
    assert np.min(p.weights[0]) < -0.5 * bound  # actually spread out
    with pytest.raises(ValueError):
        nets.net_init([4, 4], seed=0, scheme="mystery")


def test_init_rejects_zero_layer():
    with pytest.raises(ValueError):
        nets.net_init([16, 0, 1], seed=0)


def test_forward_identity_and_relu():
    p = nets.NetParams([np.eye(3)], [np.zeros(3)], ["linear"])
    x = np.array([[1.0, -2.0, 0.5]])
    y, _ = nets.forward(p, x)
    assert np.array_equal(y, x)
    p_relu = nets.NetParams([np.eye(3)], [np.zeros(3)], ["relu"])
    y, _ = nets.forward(p_relu, np.array([[-1.0, 2.0, 0.0]]))
    assert np.array_equal(y, np.array([[0.0, 2.0, 0.0]]))


def test_forward_preserves_batch_order():
    p = nets.net_init([4, 8, 2], seed=1)
    x = np.random.default_rng(0).standard_normal((5, 4))
    y, _ = nets.forward(p, x)
    y2, _ = nets.forward(p, x[[3]])
    assert np.allclose(y[3], y2[0])


def test_forward_rejects_bad_width():
    p = nets.net_init([4, 8, 2], seed=1)
    with pytest.raises(ValueError):
        nets.forward(p, np.zeros((3, 5)))


def test_backward_linear_layer_input_grad():
    rng = np.random.default_rng(2)
    w = rng.standard_normal((3, 4))
    p = nets.NetParams([w], [np.zeros(3)], ["linear"])
    x = rng.standard_normal((6, 4))
    _, tape = nets.forward(p, x)
    og = rng.standard_normal((6, 3))
    _, input_grad = nets.backward(p, tape, og)
    assert np.allclose(input_grad, og @ w)


def test_backward_zero_out_grad():
    p = nets.net_init([4, 8, 2], seed=1)
    _, tape = nets.forward(p, np.ones((3, 4)))
    grads, ig = nets.backward(p, tape, np.zeros((3, 2)))
    assert all(np.all(g == 0) for g in grads.weights)
    assert np.all(ig == 0)


@pytest.mark.parametrize("sizes", SYSTEM_SHAPES, ids=lambda s: "x".join(map(str, s)))
def test_param_gradients_match_finite_differences(sizes):
    rng = np.random.default_rng(7)
    params = nets.net_init(sizes, seed=11)
    x = rng.standard_normal((4, sizes[0]))
    og = rng.standard_normal((4, sizes[-1]))

    def loss(p):
        y, _ = nets.forward(p, x)
        return float(np.sum(og * y))

    _, tape = nets.forward(params, x)
    grads, _ = nets.backward(params, tape, og)
    for probe in range(10):
        d = random_direction(params, rng)
        analytic = dot_grads(grads, d)
        numeric = fd_directional(loss, params, d)
        assert abs(analytic - numeric) <= 1e-4 * max(1.0, abs(numeric)), f"probe {probe}"


@pytest.mark.parametrize("sizes", SYSTEM_SHAPES[1:], ids=lambda s: "x".join(map(str, s)))
def test_input_gradients_match_finite_differences(sizes):
    rng = np.random.default_rng(13)
    params = nets.net_init(sizes, seed=5)
    x = rng.standard_normal((3, sizes[0]))
    _, tape = nets.forward(params, x)
    g = nets.input_gradients(params, tape)
    h = 1e-6
    for probe in range(10):
        d = rng.standard_normal(x.shape)
        yp, _ = nets.forward(params, x + h * d)
        ym, _ = nets.forward(params, x - h * d)
        numeric = float(np.sum(yp - ym)) / (2 * h)
        analytic = float(np.sum(g * d))
        assert abs(analytic - numeric) <= 1e-4 * max(1.0, abs(numeric)), f"probe {probe}"


def test_grad_penalty_value_matches_input_gradients():
    rng = np.random.default_rng(3)
    params = nets.net_init([10, 16, 8, 1], seed=9)
    x = rng.standard_normal((5, 10))
    _, tape = nets.forward(params, x)
    gp, _ = nets.grad_penalty(params, tape)
    g = nets.input_gradients(params, tape)
    assert np.isclose(gp, np.mean(np.sum(g * g, axis=1)), rtol=1e-10)


def test_grad_penalty_param_gradients_match_finite_differences():
    rng = np.random.default_rng(23)
    params = nets.net_init([6, 12, 8, 1], seed=17)
    x = rng.standard_normal((4, 6))

    def gp_value(p):
        _, tape = nets.forward(p, x)
        g = nets.input_gradients(p, tape)
        return float(np.mean(np.sum(g * g, axis=1)))

    _, tape = nets.forward(params, x)
    _, grads = nets.grad_penalty(params, tape)
    for probe in range(10):
        d = random_direction(params, rng)
        analytic = dot_grads(grads, d)
        numeric = fd_directional(gp_value, params, d)
        assert abs(analytic - numeric) <= 1e-4 * max(1.0, abs(numeric)), f"probe {probe}"


def test_relu_subgradient_at_zero_is_zero():
    p = nets.NetParams([np.array([[1.0]]), np.array([[1.0]])],
                       [np.zeros(1), np.zeros(1)], ["relu", "linear"])
    _, tape = nets.forward(p, np.array([[0.0]]))
    grads, ig = nets.backward(p, tape, np.ones((1, 1)))
    assert ig[0, 0] == 0.0
    assert grads.weights[0][0, 0] == 0.0


def test_adam_first_step_is_signed_lr():
    params = nets.NetParams([np.array([[1.0, 2.0]])], [np.zeros(1)], ["linear"])
    opt = nets.opt_init(params, lr=0.01)
    grads = nets.NetGrads([np.array([[0.3, -0.2]])], [np.array([0.0])])
    new, opt = nets.adam_step(params, grads, opt, clip=None)
    step = new.weights[0] - params.weights[0]
    assert np.allclose(step, -0.01 * np.sign(grads.weights[0]), atol=1e-6)
    assert opt.step == 1


def test_adam_zero_grad_noop():
    params = nets.net_init([3, 4, 1], seed=0)
    opt = nets.opt_init(params)
    new, opt = nets.adam_step(params, nets.zero_grads(params), opt)
    for a, b in zip(new.weights, params.weights):
        assert np.array_equal(a, b)
    assert opt.step == 1


def test_adam_global_norm_clip():
    params = nets.NetParams([np.zeros((1, 1))], [np.zeros(1)], ["linear"])
    opt = nets.opt_init(params, lr=1.0)
    grads = nets.NetGrads([np.array([[10.0]])], [np.array([0.0])])
    assert np.isclose(grads.global_norm(), 10.0)
    # After clipping to 1.0 the effective gradient is 1.0; Adam's first step
    # is lr * sign regardless, so verify via the moment accumulator instead.
    nets.adam_step(params, grads, opt, clip=1.0)
    assert np.isclose(opt.m_w[0][0, 0], 0.1 * 1.0)  # (1 - beta1) * clipped grad


def test_determinism_of_forward_backward_adam():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 6))
    og = rng.standard_normal((8, 2))

    def run():
        p = nets.net_init([6, 16, 2], seed=4)
        opt = nets.opt_init(p)
        for _ in range(3):
            y, tape = nets.forward(p, x)
            grads, _ = nets.backward(p, tape, og)
            p, opt = nets.adam_step(p, grads, opt)
        return p

    a, b = run(), run()
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_params_blob_roundtrip():
    p = nets.net_init([7, 9, 3], seed=21)
    blob = nets.params_to_blob(p)
    q = nets.params_from_blob(blob)
    assert p.activations == q.activations
    for wa, wb in zip(p.weights, q.weights):
        assert np.array_equal(wa, wb)
    for ba, bb in zip(p.biases, q.biases):
        assert np.array_equal(ba, bb)
    with pytest.raises(ValueError):
        nets.params_from_blob(b"JUNK" + blob[4:])
    with pytest.raises(ValueError):
        nets.params_from_blob(blob[:-8])


def test_opt_blob_roundtrip():
    p = nets.net_init([5, 8, 2], seed=1)
    opt = nets.opt_init(p, lr=1e-3)
    grads = nets.zero_grads(p)
    grads.weights[0] += 0.5
    nets.adam_step(p, grads, opt)
    opt2 = nets.opt_from_blob(nets.opt_to_blob(opt))
    assert opt2.step == opt.step and opt2.lr == opt.lr
    for a, b in zip(opt.m_w, opt2.m_w):
        assert np.array_equal(a, b)

"""Discriminator objectives: rewards, gradient penalty, convergence oracles."""

import numpy as np
import pytest

from maaip import nets
from maaip.priors import (
    Discriminator,
    TransitionBatch,
    disc_score,
    disc_update,
    disc_update_gail,
    disc_update_lsgan,
    make_discriminator,
    reward_gail,
    reward_lsgan,
)


def zero_head(d: Discriminator) -> Discriminator:
    d.net.weights[-1][:] = 0.0
    d.net.biases[-1][:] = 0.0
    return d


def separable_batches(dim=4, n=32):
    expert = TransitionBatch(np.full((n, dim), 1.0), "expert")
    policy = TransitionBatch(np.full((n, dim), -1.0), "policy")
    return expert, policy


# --- scoring and rewards -----------------------------------------------------

def test_zero_head_gail_score_is_half():
    d = zero_head(make_discriminator(6, (16, 8), seed=0, loss_kind="gail"))
    scores = disc_score(d, np.random.default_rng(0).standard_normal((5, 6)))
    assert np.allclose(scores, 0.5)


def test_score_monotone_in_logit():
    logits = np.array([-3.0, -1.0, 0.0, 1.0, 3.0])
    d = make_discriminator(1, (4,), seed=0, loss_kind="gail")
    # monotonicity of the squash itself: feed through identity-ish check
    from maaip.priors import _sigmoid
    s = _sigmoid(logits)
    assert np.all(np.diff(s) > 0)


def test_score_batch_order_preserved():
    d = make_discriminator(3, (8,), seed=1, loss_kind="gail")
    x = np.random.default_rng(1).standard_normal((7, 3))
    s = disc_score(d, x)
    assert s.shape == (7,)
    assert np.allclose(s[2], disc_score(d, x[[2]])[0])


def test_score_width_mismatch_errors():
    d = make_discriminator(3, (8,), seed=1)
    with pytest.raises(ValueError):
        disc_score(d, np.zeros((2, 4)))


def test_reward_gail_values():
    assert np.isclose(reward_gail(0.5), -np.log(0.5))
    assert np.isclose(reward_gail(0.5), 0.693147, atol=1e-6)
    assert reward_gail(1e-9) < 1e-6  # D -> 0 gives r -> 0+
    assert reward_gail(1e-9) > 0.0
    assert np.isclose(reward_gail(1.0), -np.log(1e-4))
    assert np.isclose(reward_gail(1.0), 9.2103, atol=1e-4)


def test_reward_gail_strictly_increasing():
    d = np.linspace(0.01, 0.999, 50)
    r = reward_gail(d)
    assert np.all(np.diff(r) > 0)


def test_reward_lsgan_values():
    assert reward_lsgan(1.0) == 1.0
    assert reward_lsgan(-1.0) == 0.0
    assert np.isclose(reward_lsgan(0.0), 0.75)
    logits = np.linspace(-5, 5, 101)
    r = reward_lsgan(logits)
    assert np.all(r >= 0.0) and np.all(r <= 1.0)
    assert np.argmax(r) == np.argmin(np.abs(logits - 1.0))


# --- update accounting --------------------------------------------------------

def test_symmetric_data_equal_losses_at_init():
    expert, policy = separable_batches()
    for kind in ("gail", "lsgan"):
        d = zero_head(make_discriminator(4, (16, 8), seed=2, loss_kind=kind, w_gp=0.0))
        rep = disc_update(d, expert, policy)
        assert np.isclose(rep.loss_expert, rep.loss_policy)


def test_gp_zero_when_disabled():
    expert, policy = separable_batches()
    d = make_discriminator(4, (16, 8), seed=3, loss_kind="gail", w_gp=0.0)
    rep = disc_update(d, expert, policy)
    assert rep.gp == 0.0
    d10 = make_discriminator(4, (16, 8), seed=3, loss_kind="gail", w_gp=10.0)
    rep10 = disc_update(d10, expert, policy)
    assert rep10.gp > 0.0


def test_gp_term_matches_finite_differences():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((6, 5))
    d = make_discriminator(5, (12, 8), seed=5, loss_kind="gail", w_gp=1.0)
    params_before = d.net.copy()
    rep = disc_update(d, TransitionBatch(x, "expert"),
                      TransitionBatch(rng.standard_normal((6, 5)), "policy"))
    # Finite-difference estimate of mean ||d logit / d input||^2 on the
    # pre-update parameters.
    h = 1e-5
    total = 0.0
    for i in range(x.shape[0]):
        g = np.zeros(5)
        for j in range(5):
            xp, xm = x[i].copy(), x[i].copy()
            xp[j] += h
            xm[j] -= h
            yp, _ = nets.forward(params_before, xp[None])
            ym, _ = nets.forward(params_before, xm[None])
            g[j] = (yp[0, 0] - ym[0, 0]) / (2 * h)
        total += np.sum(g * g)
    fd_gp = total / x.shape[0]
    assert np.isclose(rep.gp, fd_gp, rtol=1e-3)


def test_gp_independent_of_policy_batch():
    rng = np.random.default_rng(6)
    expert = TransitionBatch(rng.standard_normal((8, 4)), "expert")
    pol_a = TransitionBatch(rng.standard_normal((8, 4)), "policy")
    pol_b = TransitionBatch(rng.standard_normal((8, 4)), "policy")
    da = make_discriminator(4, (16, 8), seed=7, loss_kind="gail")
    db = make_discriminator(4, (16, 8), seed=7, loss_kind="gail")
    rep_a = disc_update(da, expert, pol_a)
    rep_b = disc_update(db, expert, pol_b)
    assert rep_a.gp == rep_b.gp


def test_update_rejects_empty_or_swapped():
    expert, policy = separable_batches()
    d = make_discriminator(4, (8,), seed=0)
    with pytest.raises(ValueError):
        disc_update(d, policy, expert)
    with pytest.raises(ValueError):
        disc_update(d, TransitionBatch(np.zeros((0, 4)), "expert"), policy)


def test_kind_specific_wrappers():
    expert, policy = separable_batches()
    g = make_discriminator(4, (8,), seed=0, loss_kind="gail")
    l = make_discriminator(4, (8,), seed=0, loss_kind="lsgan")
    disc_update_gail(g, expert, policy)
    disc_update_lsgan(l, expert, policy)
    with pytest.raises(ValueError):
        disc_update_gail(l, expert, policy)
    with pytest.raises(ValueError):
        disc_update_lsgan(g, expert, policy)


# --- convergence oracles --------------------------------------------------------

def test_gail_converges_on_separable_data():
    expert, policy = separable_batches()
    d = make_discriminator(4, (32, 16), seed=8, loss_kind="gail", w_gp=10.0, lr=1e-3)
    for _ in range(500):
        disc_update(d, expert, policy)
    assert float(np.mean(disc_score(d, expert.data))) >= 0.95
    assert float(np.mean(disc_score(d, policy.data))) <= 0.05


def test_lsgan_converges_on_separable_data():
    expert, policy = separable_batches()
    d = make_discriminator(4, (32, 16), seed=9, loss_kind="lsgan", w_gp=10.0, lr=1e-3)
    for _ in range(500):
        disc_update(d, expert, policy)
    assert float(np.mean(disc_score(d, expert.data))) >= 0.8
    assert float(np.mean(disc_score(d, policy.data))) <= -0.8


def test_lsgan_linear_model_reaches_least_squares_solution():
    # Single linear layer on two 1-D point masses: the least-squares optimum
    # puts the logit exactly at the +1 / -1 targets.
    net = nets.NetParams([np.array([[0.1]])], [np.zeros(1)], ["linear"])
    d = Discriminator(net=net, opt=nets.opt_init(net, lr=1e-2), loss_kind="lsgan", w_gp=0.0)
    expert = TransitionBatch(np.array([[0.5]]), "expert")
    policy = TransitionBatch(np.array([[-0.5]]), "policy")
    for _ in range(3000):
        disc_update(d, expert, policy, grad_clip=None)
    assert np.isclose(disc_score(d, expert.data)[0], 1.0, atol=1e-3)
    assert np.isclose(disc_score(d, policy.data)[0], -1.0, atol=1e-3)
    assert np.isclose(d.net.weights[0][0, 0], 2.0, atol=1e-2)
    assert np.isclose(d.net.biases[0][0], 0.0, atol=1e-2)

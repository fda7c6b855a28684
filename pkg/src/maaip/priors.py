"""Learned rewards: motion and interaction discriminators.

A shared motion discriminator scores single-body observation transitions
(112 dims) and one interaction discriminator per agent scores reaction
transitions (135 dims).  Both can train with the sigmoid cross-entropy
(gail) objective or the least-squares (lsgan) one, each regularized by a
gradient penalty taken on expert samples only, differentiating the logit
with respect to the input.

Score-to-reward maps:
  gail   r = -log(1 - min(D, 1 - 1e-4)),  D = sigmoid(logit) in (0, 1)
  lsgan  r = max[0, u - v (D - 1)^2],     D = raw logit
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets

GAIL_SCORE_CLAMP = 1.0 - 1e-4


@dataclass
class TransitionBatch:
    data: np.ndarray   # (n, width)
    source: str        # "expert" | "policy"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("transition batch must be 2-D")
        if not np.isfinite(self.data).all():
            raise ValueError("non-finite transition rows")
        if self.source not in ("expert", "policy"):
            raise ValueError(f"unknown source tag {self.source!r}")


@dataclass
class Discriminator:
    net: nets.NetParams
    opt: nets.OptState
    loss_kind: str          # "gail" | "lsgan"
    w_gp: float = 10.0

    @property
    def input_dim(self) -> int:
        return self.net.weights[0].shape[1]


@dataclass
class LossReport:
    loss_expert: float
    loss_policy: float
    gp: float               # w_gp * E_expert ||d logit / d input||^2
    score_expert: float     # mean score on the expert batch
    score_policy: float


def make_discriminator(input_dim: int, hidden, seed: int, loss_kind: str = "gail",
                       w_gp: float = 10.0, lr: float = 1e-4) -> Discriminator:
    if loss_kind not in ("gail", "lsgan"):
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    net = nets.net_init([input_dim, *hidden, 1], seed=seed)
    return Discriminator(net=net, opt=nets.opt_init(net, lr=lr), loss_kind=loss_kind, w_gp=w_gp)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softplus(x):
    return np.where(x > 30, x, np.log1p(np.exp(np.minimum(x, 30))))


def disc_logits(d: Discriminator, batch: np.ndarray):
    out, tape = nets.forward(d.net, batch)
    return out[:, 0], tape


def disc_score(d: Discriminator, batch: np.ndarray) -> np.ndarray:
    """gail: sigmoid(logit) in (0,1); lsgan: the raw logit."""
    logits, _ = disc_logits(d, np.atleast_2d(batch))
    return _sigmoid(logits) if d.loss_kind == "gail" else logits


def reward_gail(score) -> np.ndarray:
    """-log(1 - D), clamped so a saturated discriminator caps the reward."""
    s = np.minimum(np.asarray(score, dtype=np.float64), GAIL_SCORE_CLAMP)
    return -np.log(1.0 - s)


def reward_lsgan(logit, u: float = 1.0, v: float = 0.25) -> np.ndarray:
    logit = np.asarray(logit, dtype=np.float64)
    return np.maximum(0.0, u - v * (logit - 1.0) ** 2)


def score_to_reward(d: Discriminator, score, u: float = 1.0, v: float = 0.25) -> np.ndarray:
    return reward_gail(score) if d.loss_kind == "gail" else reward_lsgan(score, u, v)


def disc_update(d: Discriminator, expert: TransitionBatch, policy: TransitionBatch,
                grad_clip: float | None = 1.0) -> LossReport:
    """One Adam step on the discriminator objective; returns the decomposition."""
    if expert.source != "expert" or policy.source != "policy":
        raise ValueError("batches passed in the wrong order")
    if expert.data.shape[0] == 0 or policy.data.shape[0] == 0:
        raise ValueError("discriminator update needs nonempty batches")
    le, tape_e = disc_logits(d, expert.data)
    lp, tape_p = disc_logits(d, policy.data)
    ne, np_ = len(le), len(lp)

    if d.loss_kind == "gail":
        loss_e = float(np.mean(_softplus(-le)))          # -E log D
        loss_p = float(np.mean(_softplus(lp)))           # -E log(1 - D)
        grad_e = (-(1.0 - _sigmoid(le)) / ne)[:, None]
        grad_p = (_sigmoid(lp) / np_)[:, None]
        score_e = float(np.mean(_sigmoid(le)))
        score_p = float(np.mean(_sigmoid(lp)))
    else:
        loss_e = float(np.mean((le - 1.0) ** 2))
        loss_p = float(np.mean((lp + 1.0) ** 2))
        grad_e = (2.0 * (le - 1.0) / ne)[:, None]
        grad_p = (2.0 * (lp + 1.0) / np_)[:, None]
        score_e = float(np.mean(le))
        score_p = float(np.mean(lp))

    grads, _ = nets.backward(d.net, tape_e, grad_e)
    grads_p, _ = nets.backward(d.net, tape_p, grad_p)
    grads.add_scaled(grads_p)
    gp_term = 0.0
    if d.w_gp > 0.0:
        gp_value, gp_grads = nets.grad_penalty(d.net, tape_e)
        grads.add_scaled(gp_grads, d.w_gp)
        gp_term = d.w_gp * gp_value
    d.net, d.opt = nets.adam_step(d.net, grads, d.opt, clip=grad_clip)
    return LossReport(loss_e, loss_p, gp_term, score_e, score_p)


def disc_update_gail(d: Discriminator, expert: TransitionBatch,
                     policy: TransitionBatch) -> LossReport:
    if d.loss_kind != "gail":
        raise ValueError("discriminator was built for lsgan")
    return disc_update(d, expert, policy)


def disc_update_lsgan(d: Discriminator, expert: TransitionBatch,
                      policy: TransitionBatch) -> LossReport:
    if d.loss_kind != "lsgan":
        raise ValueError("discriminator was built for gail")
    return disc_update(d, expert, policy)

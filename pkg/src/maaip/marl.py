"""Shared Gaussian policy, centralized value, GAE and clipped PPO.

Both agents act through one parameter set; identity enters only as a one-hot
appended to the (normalized) local features.  The value function sees the
joint observation (agent 0 features then agent 1 features, fixed order) and
is a state value queried once per environment step but regressed on both
agents' return targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nets

ACTION_DIM = 7
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PolicyNet:
    net: nets.NetParams
    opt: nets.OptState
    log_std: np.ndarray          # (7,), fixed during training

    @property
    def input_dim(self) -> int:
        return self.net.weights[0].shape[1]


@dataclass
class ValueNet:
    net: nets.NetParams
    opt: nets.OptState

    @property
    def input_dim(self) -> int:
        return self.net.weights[0].shape[1]


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    approx_kl: float
    clip_fraction: float
    minibatches: int


@dataclass
class TrajectoryBatch:
    """Per-agent rollout storage, shaped (T, n_envs, 2, ...)."""

    pol_in: np.ndarray       # (T, N, 2, policy input dim), normalized + one-hot
    val_in: np.ndarray       # (T, N, joint dim)
    actions: np.ndarray      # (T, N, 2, 7)
    log_probs: np.ndarray    # (T, N, 2)
    values: np.ndarray       # (T + 1, N)
    r_motion: np.ndarray     # (T, N, 2)
    r_interaction: np.ndarray
    r_control: np.ndarray
    rewards: np.ndarray      # (T, N, 2) combined
    dones: np.ndarray        # (T, N)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    raw_features: np.ndarray | None = None  # (T, N, 2, feat) pre-normalizer

    @classmethod
    def empty(cls, horizon, n_envs, pol_dim, joint_dim, feat_dim):
        z = np.zeros
        return cls(
            pol_in=z((horizon, n_envs, 2, pol_dim)), val_in=z((horizon, n_envs, joint_dim)),
            actions=z((horizon, n_envs, 2, ACTION_DIM)), log_probs=z((horizon, n_envs, 2)),
            values=z((horizon + 1, n_envs)), r_motion=z((horizon, n_envs, 2)),
            r_interaction=z((horizon, n_envs, 2)), r_control=z((horizon, n_envs, 2)),
            rewards=z((horizon, n_envs, 2)), dones=z((horizon, n_envs)),
            raw_features=z((horizon, n_envs, 2, feat_dim)),
        )


def make_policy(feature_dim: int, hidden, seed: int, log_std: float = -1.6) -> PolicyNet:
    # Two extra inputs for the agent one-hot; near-zero output head.
    net = nets.net_init([feature_dim + 2, *hidden, ACTION_DIM], seed=seed, out_gain=0.01)
    return PolicyNet(net=net, opt=nets.opt_init(net),
                     log_std=np.full(ACTION_DIM, log_std, dtype=np.float64))


def make_value(joint_dim: int, hidden, seed: int) -> ValueNet:
    net = nets.net_init([joint_dim, *hidden, 1], seed=seed)
    return ValueNet(net=net, opt=nets.opt_init(net))


def policy_input(features: np.ndarray, agent_ids: np.ndarray) -> np.ndarray:
    """Append the agent-identity one-hot to normalized feature rows."""
    features = np.atleast_2d(features)
    onehot = np.zeros((features.shape[0], 2))
    onehot[np.arange(features.shape[0]), np.asarray(agent_ids, dtype=int)] = 1.0
    return np.concatenate([features, onehot], axis=1)


def gaussian_log_prob(actions: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (actions - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * ACTION_DIM * LOG_2PI


def policy_act(policy: PolicyNet, features: np.ndarray, agent_ids, rng: np.random.Generator,
               mode: str = "stochastic"):
    """Sample (or take the mean of) the action distribution.

    ``features`` are normalized per-agent observations without the one-hot.
    Returns (actions, log_probs, inputs) where inputs is the exact network
    input used, for storage.
    """
    features = np.atleast_2d(features)
    if not np.isfinite(features).all():
        raise ValueError("non-finite observation features")
    inputs = policy_input(features, agent_ids)
    mean, _ = nets.forward(policy.net, inputs)
    if mode == "mean":
        actions = mean
    elif mode == "stochastic":
        eps = rng.standard_normal(mean.shape)
        actions = mean + np.exp(policy.log_std) * eps
    else:
        raise ValueError(f"unknown act mode {mode!r}")
    return actions, gaussian_log_prob(actions, mean, policy.log_std), inputs


def value_of(value: ValueNet, joint_obs: np.ndarray) -> np.ndarray:
    out, _ = nets.forward(value.net, np.atleast_2d(joint_obs))
    return out[:, 0]


def _check_lengths(rewards, values, dones):
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if values.shape[0] != rewards.shape[0] + 1 or dones.shape[0] != rewards.shape[0]:
        raise ValueError("need values[T+1], rewards[T], dones[T]")
    return rewards, values, dones


def gae_advantages(rewards, values, gamma: float, lam: float, dones) -> np.ndarray:
    """A_t = delta_t + gamma lam (1 - done_t) A_{t+1}, trailing axes vectorized."""
    rewards, values, dones = _check_lengths(rewards, values, dones)
    t_len = rewards.shape[0]
    adv = np.zeros_like(rewards)
    carry = np.zeros_like(rewards[0] if t_len else rewards)
    for t in range(t_len - 1, -1, -1):
        mask = 1.0 - dones[t]
        delta = rewards[t] + gamma * mask * values[t + 1] - values[t]
        carry = delta + gamma * lam * mask * carry
        adv[t] = carry
    return adv


def td_lambda_targets(rewards, values, gamma: float, lam: float, dones) -> np.ndarray:
    """Lambda-return targets: GAE advantages plus the value baseline."""
    rewards, values, dones = _check_lengths(rewards, values, dones)
    return gae_advantages(rewards, values, gamma, lam, dones) + values[:-1]


def finalize_batch(batch: TrajectoryBatch, gamma: float, lam: float) -> None:
    """Fill per-agent advantages and returns from the shared state value."""
    values = batch.values[:, :, None]           # broadcast over the agent axis
    dones = batch.dones[:, :, None]
    batch.advantages = gae_advantages(batch.rewards, values, gamma, lam, dones)
    batch.returns = batch.advantages + values[:-1]


def ppo_update(policy: PolicyNet, value: ValueNet, batch: TrajectoryBatch,
               cfg, rng: np.random.Generator) -> UpdateStats:
    """Clipped-surrogate policy update plus value regression.

    Both agents' samples are pooled into the shared policy; advantages are
    normalized over the whole update batch.
    """
    if batch.advantages is None:
        raise ValueError("finalize_batch must run before ppo_update")
    t_len, n_envs = batch.dones.shape
    n = t_len * n_envs * 2
    pol_in = batch.pol_in.reshape(n, -1)
    actions = batch.actions.reshape(n, ACTION_DIM)
    logp_old = batch.log_probs.reshape(n)
    adv = batch.advantages.reshape(n)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    # Each env step contributes one joint observation per agent sample.
    val_in = np.repeat(batch.val_in.reshape(t_len * n_envs, -1), 2, axis=0)
    targets = batch.returns.reshape(n)

    sigma2 = np.exp(2.0 * policy.log_std)
    kl_sum = 0.0
    clip_sum = 0.0
    ploss_sum = 0.0
    vloss_sum = 0.0
    n_mb = 0
    for _ in range(cfg.ppo_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            m = len(idx)
            mean, tape = nets.forward(policy.net, pol_in[idx])
            logp = gaussian_log_prob(actions[idx], mean, policy.log_std)
            ratio = np.exp(logp - logp_old[idx])
            a = adv[idx]
            clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
            surrogate = np.minimum(ratio * a, clipped * a)
            # Gradient flows only where the unclipped branch is active.
            active = (ratio * a <= clipped * a)
            dmean = (active * ratio * a)[:, None] * (actions[idx] - mean) / sigma2
            grads, _ = nets.backward(policy.net, tape, -dmean / m)
            policy.net, policy.opt = nets.adam_step(policy.net, grads, policy.opt,
                                                    clip=cfg.grad_clip)

            v, vtape = nets.forward(value.net, val_in[idx])
            err = v[:, 0] - targets[idx]
            vgrads, _ = nets.backward(value.net, vtape, (2.0 * err / m)[:, None])
            value.net, value.opt = nets.adam_step(value.net, vgrads, value.opt,
                                                  clip=cfg.grad_clip)

            kl_sum += float(np.mean(logp_old[idx] - logp))
            clip_sum += float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps))
            ploss_sum += float(-np.mean(surrogate))
            vloss_sum += float(np.mean(err * err))
            n_mb += 1
    return UpdateStats(
        policy_loss=ploss_sum / n_mb, value_loss=vloss_sum / n_mb,
        approx_kl=kl_sum / n_mb, clip_fraction=clip_sum / n_mb, minibatches=n_mb,
    )

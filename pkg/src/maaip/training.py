"""Training orchestration: rollouts, learned rewards, updates, checkpoints.

One iteration = collect a horizon of parallel-env experience with reward
components scored by the current discriminators, then n discriminator update
passes (expert demos vs replayed policy transitions), then GAE / TD(lambda)
and a clipped PPO update, then a normalizer update.  Reward weights follow a
piecewise-constant schedule: motion imitation first, interaction second,
the task reward (if any) last.

Motion transitions live in a fresh buffer each iteration; each agent's
interaction buffer persists across iterations (FIFO).  Each agent's
interaction discriminator only ever sees that agent's demo transitions.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import demos, features, marl, nets, priors
from .arena import VecArena, action_mapping, damage_tally
from .config import LAYOUT_VERSION, ArenaConfig, FullConfig, TrainConfig, config_hash, loads_config, render_config
from .features import RunningNormalizer
from .marl import TrajectoryBatch
from .priors import TransitionBatch

_CKPT_MAGIC = b"MAAIP1"


class ReplayBuffer:
    """Fixed-capacity FIFO of transition rows with uniform sampling."""

    def __init__(self, capacity: int, width: int):
        self.capacity = capacity
        self.data = np.zeros((capacity, width))
        self.size = 0
        self.head = 0

    def __len__(self) -> int:
        return self.size

    def add(self, rows: np.ndarray) -> None:
        rows = np.asarray(rows, dtype=np.float64).reshape(-1, self.data.shape[1])
        for start in range(0, len(rows), self.capacity):
            chunk = rows[start:start + self.capacity]
            n = len(chunk)
            end = self.head + n
            if end <= self.capacity:
                self.data[self.head:end] = chunk
            else:
                split = self.capacity - self.head
                self.data[self.head:] = chunk[:split]
                self.data[:end - self.capacity] = chunk[split:]
            self.head = end % self.capacity
            self.size = min(self.size + n, self.capacity)

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("sampling from an empty buffer")
        k = min(k, self.size)
        idx = rng.choice(self.size, size=k, replace=False)
        return self.data[idx]


def combine_rewards(r_motion, r_interaction, r_control, weights):
    """r = w_m r^M + w_i r^I + w_c r^C with the active schedule weights."""
    w_m, w_i, w_c = weights
    return w_m * np.asarray(r_motion) + w_i * np.asarray(r_interaction) \
        + w_c * np.asarray(r_control)


def build_schedule(tc: TrainConfig) -> list:
    """Phase thresholds in env control steps: motion, +interaction, +task."""
    w_m, w_i = tc.imitation_weights
    imitation = (w_m, w_i, 0.0)
    first = (1.0, 0.0, 0.0)
    s1 = int(tc.s1_frac * tc.total_steps)
    s2 = int(tc.s2_frac * tc.total_steps)
    phases = [(0, first), (s1, imitation)]
    if tc.control != "none":
        phases.append((s2, tuple(tc.task_weights)))
    if not tc.single_motion_prior:
        # No motion reward exists: its weight folds into the interaction term,
        # keeping task weights identical across the ablation pair.
        phases = [(threshold, (0.0, i + m, c)) for threshold, (m, i, c) in phases]
    return phases


def schedule_weights(step: int, schedule) -> tuple:
    weights = schedule[0][1]
    for threshold, w in schedule:
        if step >= threshold:
            weights = w
        else:
            break
    return weights


def control_reward(kind: str, *, damage_received=None, damage_dealt=None,
                   scale: float = 0.01, heading_dir=None, root_vel=None,
                   heading_w: float = 2.0, target_speed: float = 1.0,
                   literal: bool = False):
    """Bounded task rewards in [0, 1]."""
    if kind == "none":
        return 0.0
    if kind == "damage_min":
        return np.exp(-scale * np.asarray(damage_received))
    if kind == "damage_max":
        return 1.0 - np.exp(-scale * np.asarray(damage_dealt))
    if kind == "heading":
        along = np.sum(np.asarray(heading_dir) * np.asarray(root_vel), axis=-1)
        if literal:
            return np.minimum(1.0, np.exp(-heading_w * along))
        return np.exp(-heading_w * (target_speed - along) ** 2)
    raise ValueError(f"unknown control reward {kind!r}")


@dataclass
class IterationMetrics:
    iteration: int
    global_step: int
    weights: tuple
    reward_mean: float
    r_motion: float
    r_interaction: float
    r_control: float
    disc_scores: dict
    ppo: marl.UpdateStats
    episode_return: float
    seconds: float


class Trainer:
    """Owns all learning state; `train_iteration` advances one outer step."""

    def __init__(self, cfg: FullConfig, run_dir: str | None = None):
        cfg.validate()
        self.cfg = cfg
        tc, ac = cfg.train, cfg.arena
        self.run_dir = run_dir or tc.run_dir
        os.makedirs(self.run_dir, exist_ok=True)

        seq = np.random.SeedSequence(tc.seed)
        (env_seed,), streams = seq.spawn(1), seq.spawn(5)
        self.rng_act = np.random.default_rng(streams[0])
        self.rng_disc = np.random.default_rng(streams[1])
        self.rng_ppo = np.random.default_rng(streams[2])
        self.rng_head = np.random.default_rng(streams[3])

        self.single_demo = demos.load_datasets(tc.single_dataset, ac) \
            if tc.single_dataset else None
        self.inter_demo = demos.load_datasets(tc.interaction_dataset, ac) \
            if tc.interaction_dataset else None
        if self.inter_demo is None:
            raise ValueError("training requires an interaction dataset")
        if tc.single_motion_prior and self.single_demo is None:
            raise ValueError("single_motion_prior=true requires a single-actor dataset")

        self.expert_motion = (
            demos.demo_to_transitions(self.single_demo, "single", ac)
            if tc.single_motion_prior else None)
        self.expert_inter = [
            demos.demo_to_transitions(self.inter_demo, ("interaction", i), ac)
            for i in range(2)]

        spawn_source = self.single_demo or self.inter_demo
        self.vec = VecArena(ac, tc.num_envs, seed=int(env_seed.generate_state(1)[0]),
                            demo_source=spawn_source, demo_spawn_frac=tc.demo_spawn_frac)

        self.feat_dim = features.policy_feature_dim(tc.heading_task)
        self.normalizer = RunningNormalizer(self.feat_dim, clip=tc.normalizer_clip)
        self.policy = marl.make_policy(self.feat_dim, tc.hidden, seed=tc.seed + 1,
                                       log_std=tc.log_std)
        self.policy.opt = nets.opt_init(self.policy.net, lr=tc.policy_lr)
        self.value = marl.make_value(2 * self.feat_dim, tc.hidden, seed=tc.seed + 2)
        self.value.opt = nets.opt_init(self.value.net, lr=tc.value_lr)

        self.discs = {}
        if tc.single_motion_prior:
            self.discs["motion"] = priors.make_discriminator(
                features.MOTION_TRANSITION_DIM, tc.hidden, seed=tc.seed + 3,
                loss_kind=tc.loss_kind, w_gp=tc.w_gp, lr=tc.disc_lr)
        for i in range(2):
            self.discs[f"inter{i}"] = priors.make_discriminator(
                features.INTERACTION_TRANSITION_DIM, tc.hidden, seed=tc.seed + 4 + i,
                loss_kind=tc.loss_kind, w_gp=tc.w_gp, lr=tc.disc_lr)

        self.inter_buffers = [ReplayBuffer(tc.buffer_capacity,
                                           features.INTERACTION_TRANSITION_DIM)
                              for _ in range(2)]
        self.action_center, self.action_half = action_mapping(ac)
        self.schedule = build_schedule(tc)
        self.global_step = 0
        self.iteration = 0
        self._reward_since_ckpt: list = []

        n = tc.num_envs
        self.heading_dir = np.zeros((n, 2))
        self.heading_timer = np.zeros(n, dtype=np.int64)
        if tc.heading_task:
            for i in range(n):
                self._resample_heading(i)
        self._pending = self._observe_all()

        self._metrics_path = os.path.join(self.run_dir, "metrics.csv")
        self._disc_metrics_path = os.path.join(self.run_dir, "disc_metrics.csv")
        self._ckpt_index_path = os.path.join(self.run_dir, "ckpt_index.csv")
        for path, header in (
            (self._metrics_path,
             ["iteration", "global_step", "w_motion", "w_interaction", "w_control",
              "reward_mean", "r_motion", "r_interaction", "r_control",
              "motion_score_expert", "motion_score_policy",
              "inter0_score_expert", "inter0_score_policy",
              "inter1_score_expert", "inter1_score_policy",
              "policy_loss", "value_loss", "approx_kl", "clip_fraction",
              "episode_return", "seconds"]),
            (self._disc_metrics_path,
             ["iteration", "disc", "loss_expert", "loss_policy", "gp",
              "score_expert", "score_policy"]),
            (self._ckpt_index_path, ["iteration", "global_step", "path", "window_reward"]),
        ):
            if not os.path.exists(path):
                with open(path, "w", newline="") as fh:
                    csv.writer(fh).writerow(header)

    # -- observations --------------------------------------------------------

    def _resample_heading(self, env: int) -> None:
        ang = self.rng_head.uniform(-np.pi, np.pi)
        self.heading_dir[env] = (np.cos(ang), np.sin(ang))
        self.heading_timer[env] = self.rng_head.integers(*self.cfg.train.heading_resample)

    def _observe_all(self):
        """Raw per-agent features (N, 2, feat_dim) of the current vec state."""
        pos, ang, vel, angv, _ = self.vec.fk()
        target = None
        if self.cfg.train.heading_task:
            target = np.repeat(self.heading_dir[:, None, :], 2, axis=1)
        self_obs, opp_obs, head_local = features.observations_from_parts(
            self.vec.body.root_pos, self.vec.body.heading, self.vec.body.linvel,
            self.vec.body.angvel, pos, ang, vel, angv, target)
        parts = [self_obs, opp_obs]
        if head_local is not None:
            parts.append(head_local)
        return np.concatenate(parts, axis=-1), self_obs, opp_obs

    # -- rollouts --------------------------------------------------------------

    def collect_rollouts(self, weights) -> TrajectoryBatch:
        tc = self.cfg.train
        n, t_len = tc.num_envs, tc.horizon
        pol_dim = self.feat_dim + 2
        batch = TrajectoryBatch.empty(t_len, n, pol_dim, 2 * self.feat_dim, self.feat_dim)
        self.motion_buffer = ReplayBuffer(tc.buffer_capacity, features.MOTION_TRANSITION_DIM)
        ids = np.tile([0, 1], n)
        use_motion = tc.single_motion_prior

        for t in range(t_len):
            feats_raw, self_obs, opp_obs = self._pending
            norm = self.normalizer.apply(feats_raw)
            actions, logp, pol_in = marl.policy_act(
                self.policy, norm.reshape(2 * n, self.feat_dim), ids, self.rng_act)
            joint = norm.reshape(n, 2 * self.feat_dim)
            values = marl.value_of(self.value, joint)

            physical = self.action_center + self.action_half * actions.reshape(n, 2, 7)
            self.vec.apply_actions(physical)
            events = self.vec.step()
            diverged = self._diverged_envs()
            if diverged:
                # Rare escape hatch: freeze the offending envs on their last
                # finite observation so no NaN reaches buffers or rewards;
                # they are truncated and respawned below.
                for e in diverged:
                    self.vec.reset_env(e)
            post_raw, post_self, post_opp = self._observe_all()
            if diverged:
                for e in diverged:
                    post_raw[e], post_self[e], post_opp[e] = \
                        feats_raw[e], self_obs[e], opp_obs[e]

            motion_tr = np.concatenate([self_obs, post_self], axis=-1)
            inter_tr = np.concatenate([self_obs, opp_obs, post_self], axis=-1)
            if use_motion:
                scores_m = priors.disc_score(
                    self.discs["motion"], motion_tr.reshape(2 * n, -1)).reshape(n, 2)
                r_m = priors.score_to_reward(self.discs["motion"], scores_m,
                                             tc.lsgan_offset, tc.lsgan_scale)
                self.motion_buffer.add(motion_tr.reshape(2 * n, -1))
            else:
                r_m = np.zeros((n, 2))
            r_i = np.zeros((n, 2))
            for i in range(2):
                s = priors.disc_score(self.discs[f"inter{i}"], inter_tr[:, i])
                r_i[:, i] = priors.score_to_reward(self.discs[f"inter{i}"], s,
                                                   tc.lsgan_offset, tc.lsgan_scale)
                self.inter_buffers[i].add(inter_tr[:, i])

            r_c = np.zeros((n, 2))
            if tc.control in ("damage_min", "damage_max"):
                received = np.zeros((n, 2))
                for e in range(n):
                    if events[e]:
                        received[e, 0] = damage_tally(events[e], 0)
                        received[e, 1] = damage_tally(events[e], 1)
                if tc.control == "damage_min":
                    r_c = control_reward("damage_min", damage_received=received,
                                         scale=tc.damage_scale)
                else:
                    r_c = control_reward("damage_max", damage_dealt=received[:, ::-1],
                                         scale=tc.damage_scale)
            elif tc.control == "heading":
                r_c = control_reward(
                    "heading", heading_dir=self.heading_dir[:, None, :],
                    root_vel=self.vec.body.linvel, heading_w=tc.heading_w,
                    target_speed=tc.heading_speed,
                    literal=tc.heading_reward == "literal")

            reward = combine_rewards(r_m, r_i, r_c, weights)

            batch.raw_features[t] = feats_raw
            batch.pol_in[t] = pol_in.reshape(n, 2, pol_dim)
            batch.val_in[t] = joint
            batch.actions[t] = actions.reshape(n, 2, 7)
            batch.log_probs[t] = logp.reshape(n, 2)
            batch.values[t] = values
            batch.r_motion[t] = r_m
            batch.r_interaction[t] = r_i
            batch.r_control[t] = r_c
            batch.rewards[t] = reward

            done = self.vec.step_count >= self.cfg.arena.episode_len
            for e in diverged:
                done[e] = True
            batch.dones[t] = done.astype(np.float64)
            if tc.heading_task:
                self.heading_timer -= 1
            stale = done.any() or (tc.heading_task and (self.heading_timer <= 0).any())
            if stale:
                # Transitions above were taken pre-reset; the next step sees
                # respawned states and refreshed heading conditioning.
                for e in np.nonzero(done)[0]:
                    if int(e) not in diverged:
                        self.vec.reset_env(int(e))
                if tc.heading_task:
                    for e in np.nonzero(done | (self.heading_timer <= 0))[0]:
                        self._resample_heading(int(e))
                self._pending = self._observe_all()
            else:
                self._pending = (post_raw, post_self, post_opp)
            self.global_step += n

        feats_raw, _, _ = self._pending
        norm = self.normalizer.apply(feats_raw)
        batch.values[t_len] = marl.value_of(self.value, norm.reshape(n, 2 * self.feat_dim))
        return batch

    def _diverged_envs(self) -> list:
        body = self.vec.body
        bad = ~(np.isfinite(body.root_pos).all(axis=(1, 2))
                & np.isfinite(body.linvel).all(axis=(1, 2))
                & np.isfinite(body.q).all(axis=(1, 2)))
        return [int(i) for i in np.nonzero(bad)[0]]

    # -- updates -----------------------------------------------------------------

    def expert_batch_for(self, disc_id: str) -> TransitionBatch:
        """Demo transitions a discriminator is allowed to train on."""
        if disc_id == "motion":
            return self.expert_motion
        return self.expert_inter[int(disc_id[-1])]

    def _disc_pass(self) -> list:
        """One update of every discriminator: K demo vs K buffered transitions."""
        tc = self.cfg.train
        reports = []
        for disc_id, disc in self.discs.items():
            expert = self.expert_batch_for(disc_id)
            buffer = self.motion_buffer if disc_id == "motion" \
                else self.inter_buffers[int(disc_id[-1])]
            k = tc.disc_minibatch
            e_idx = self.rng_disc.choice(len(expert.data), size=min(k, len(expert.data)),
                                         replace=False)
            e_batch = TransitionBatch(expert.data[e_idx], "expert")
            p_batch = TransitionBatch(buffer.sample(k, self.rng_disc), "policy")
            report = priors.disc_update(disc, e_batch, p_batch, grad_clip=tc.grad_clip)
            reports.append((disc_id, report))
        return reports

    def _update_discriminators(self) -> list:
        reports = []
        for _ in range(self.cfg.train.disc_passes):
            reports.extend(self._disc_pass())
        return reports

    def train_iteration(self) -> IterationMetrics:
        t0 = time.perf_counter()
        tc = self.cfg.train
        weights = schedule_weights(self.global_step, self.schedule)
        batch = self.collect_rollouts(weights)
        disc_reports = self._update_discriminators()
        marl.finalize_batch(batch, tc.gamma, tc.lam)
        stats = marl.ppo_update(self.policy, self.value, batch, tc, self.rng_ppo)
        self.normalizer.update(batch.raw_features.reshape(-1, self.feat_dim))
        self.iteration += 1

        scores = {k: (0.0, 0.0) for k in ("motion", "inter0", "inter1")}
        tally: dict = {}
        for disc_id, rep in disc_reports:
            tally.setdefault(disc_id, []).append((rep.score_expert, rep.score_policy))
        for disc_id, vals in tally.items():
            arr = np.array(vals)
            scores[disc_id] = (float(arr[:, 0].mean()), float(arr[:, 1].mean()))

        ep_return = float(batch.rewards.sum(axis=0).mean()) * \
            (self.cfg.arena.episode_len / tc.horizon)
        metrics = IterationMetrics(
            iteration=self.iteration, global_step=self.global_step, weights=weights,
            reward_mean=float(batch.rewards.mean()),
            r_motion=float(batch.r_motion.mean()),
            r_interaction=float(batch.r_interaction.mean()),
            r_control=float(batch.r_control.mean()),
            disc_scores=scores, ppo=stats, episode_return=ep_return,
            seconds=time.perf_counter() - t0,
        )
        self._reward_since_ckpt.append(metrics.reward_mean)
        self._write_metrics(metrics, disc_reports)
        if self.iteration % tc.ckpt_interval == 0:
            self.save_checkpoint()
        return metrics

    def warmup_discriminators(self) -> None:
        """Calibrate discriminators on pre-update policy data.

        A freshly initialized discriminator scores everything near 0.5, which
        inflates early rewards and makes the first iterations look like
        regress when it catches up.  Two priming rollouts fill the buffers,
        then disc-only update passes make the reward measure discriminative
        before the first policy update, so logged reward reflects policy
        progress from iteration 1.
        """
        weights = schedule_weights(self.global_step, self.schedule)
        for _ in range(2):
            batch = self.collect_rollouts(weights)
            self.normalizer.update(batch.raw_features.reshape(-1, self.feat_dim))
        for _ in range(self.cfg.train.disc_warmup_passes):
            self._disc_pass()

    def run(self, max_iterations: int | None = None, log=None) -> None:
        tc = self.cfg.train
        per_iter = tc.num_envs * tc.horizon
        total_iters = int(np.ceil(tc.total_steps / per_iter))
        if max_iterations is not None:
            total_iters = min(total_iters, max_iterations)
        if self.iteration == 0 and tc.disc_warmup_passes > 0:
            self.warmup_discriminators()
        while self.iteration < total_iters:
            m = self.train_iteration()
            if log:
                log(m)
        if self.iteration % tc.ckpt_interval != 0:
            self.save_checkpoint()

    # -- metrics / checkpoints ------------------------------------------------------

    def _write_metrics(self, m: IterationMetrics, disc_reports) -> None:
        with open(self._metrics_path, "a", newline="") as fh:
            w = csv.writer(fh)
            s = m.disc_scores
            w.writerow([
                m.iteration, m.global_step, *[f"{x:.6g}" for x in m.weights],
                f"{m.reward_mean:.6g}", f"{m.r_motion:.6g}", f"{m.r_interaction:.6g}",
                f"{m.r_control:.6g}",
                f"{s['motion'][0]:.6g}", f"{s['motion'][1]:.6g}",
                f"{s['inter0'][0]:.6g}", f"{s['inter0'][1]:.6g}",
                f"{s['inter1'][0]:.6g}", f"{s['inter1'][1]:.6g}",
                f"{m.ppo.policy_loss:.6g}", f"{m.ppo.value_loss:.6g}",
                f"{m.ppo.approx_kl:.6g}", f"{m.ppo.clip_fraction:.6g}",
                f"{m.episode_return:.6g}", f"{m.seconds:.3f}",
            ])
        with open(self._disc_metrics_path, "a", newline="") as fh:
            w = csv.writer(fh)
            for disc_id, rep in disc_reports:
                w.writerow([m.iteration, disc_id, f"{rep.loss_expert:.6g}",
                            f"{rep.loss_policy:.6g}", f"{rep.gp:.6g}",
                            f"{rep.score_expert:.6g}", f"{rep.score_policy:.6g}"])

    def save_checkpoint(self, path: str | None = None) -> str:
        path = path or os.path.join(self.run_dir, f"ckpt_{self.iteration:06d}.ckpt")
        window = float(np.mean(self._reward_since_ckpt)) if self._reward_since_ckpt else 0.0
        save_checkpoint(path, self)
        with open(self._ckpt_index_path, "a", newline="") as fh:
            csv.writer(fh).writerow([self.iteration, self.global_step, path,
                                     f"{window:.6g}"])
        self._reward_since_ckpt = []
        return path

    def restore(self, ck: "Checkpoint") -> None:
        """Adopt parameters and counters from a loaded checkpoint."""
        self.policy = ck.policy
        self.value = ck.value
        self.discs = ck.discs
        self.normalizer = ck.normalizer
        self.global_step = ck.global_step
        self.iteration = ck.iteration


# --- checkpoint serialization ------------------------------------------------------

@dataclass
class Checkpoint:
    config: FullConfig
    meta: dict
    policy: marl.PolicyNet
    value: marl.ValueNet
    discs: dict
    normalizer: RunningNormalizer
    global_step: int
    iteration: int

    @property
    def heading(self) -> bool:
        return bool(self.meta.get("heading", False))


def _sections_blob(sections: dict) -> bytes:
    chunks = [struct.pack("<I", len(sections))]
    for name, payload in sections.items():
        raw = name.encode()
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<Q", len(payload)))
        chunks.append(payload)
    return b"".join(chunks)


def _sections_parse(blob: bytes, off: int) -> dict:
    try:
        (n,) = struct.unpack_from("<I", blob, off)
        off += 4
        out = {}
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + ln].decode()
            off += ln
            (pl,) = struct.unpack_from("<Q", blob, off)
            off += 8
            payload = blob[off:off + pl]
            if len(payload) != pl:
                raise ValueError("truncated checkpoint section")
            out[name] = payload
            off += pl
        if off != len(blob):
            raise ValueError("checkpoint has trailing bytes")
        return out
    except struct.error as err:
        raise ValueError(f"truncated checkpoint: {err}") from err


def save_checkpoint(path: str, trainer: Trainer) -> None:
    cfg_text = render_config(trainer.cfg).encode()
    tc = trainer.cfg.train
    meta = {
        "heading": tc.heading_task, "loss_kind": tc.loss_kind,
        "single_motion_prior": tc.single_motion_prior, "control": tc.control,
        "feat_dim": trainer.feat_dim, "styles": list(trainer.inter_demo.styles),
    }
    sections = {
        "config": cfg_text,
        "meta": json.dumps(meta).encode(),
        "policy": nets.params_to_blob(trainer.policy.net),
        "policy_opt": nets.opt_to_blob(trainer.policy.opt),
        "policy_logstd": trainer.policy.log_std.tobytes(),
        "value": nets.params_to_blob(trainer.value.net),
        "value_opt": nets.opt_to_blob(trainer.value.opt),
        "normalizer": trainer.normalizer.to_bytes(),
    }
    for disc_id, disc in trainer.discs.items():
        sections[f"disc_{disc_id}"] = nets.params_to_blob(disc.net)
        sections[f"disc_{disc_id}_opt"] = nets.opt_to_blob(disc.opt)
    head = _CKPT_MAGIC + struct.pack("<I", LAYOUT_VERSION) \
        + hashlib.sha256(cfg_text).digest() \
        + struct.pack("<QQ", trainer.global_step, trainer.iteration)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(head + _sections_blob(sections))
    os.replace(tmp, path)


def load_checkpoint(path: str, expect_config: FullConfig | None = None,
                    override: bool = False) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:6] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    try:
        (version,) = struct.unpack_from("<I", blob, 6)
        stored_hash = blob[10:42]
        global_step, iteration = struct.unpack_from("<QQ", blob, 42)
    except struct.error as err:
        raise ValueError(f"{path}: truncated checkpoint header") from err
    if version != LAYOUT_VERSION:
        raise ValueError(
            f"{path}: observation layout version {version}, this build supports {LAYOUT_VERSION}")
    sections = _sections_parse(blob, 58)
    cfg_text = sections["config"]
    if hashlib.sha256(cfg_text).digest() != stored_hash:
        raise ValueError(f"{path}: config hash mismatch (corrupt checkpoint)")
    cfg = loads_config(cfg_text.decode())
    if expect_config is not None and not override:
        if config_hash(expect_config) != stored_hash:
            raise ValueError(
                f"{path}: checkpoint config differs from the requested config; "
                "pass override to load anyway")
    meta = json.loads(sections["meta"].decode())

    policy = marl.PolicyNet(
        net=nets.params_from_blob(sections["policy"]),
        opt=nets.opt_from_blob(sections["policy_opt"]),
        log_std=np.frombuffer(sections["policy_logstd"], dtype=np.float64).copy(),
    )
    value = marl.ValueNet(
        net=nets.params_from_blob(sections["value"]),
        opt=nets.opt_from_blob(sections["value_opt"]),
    )
    discs = {}
    for name in sections:
        if name.startswith("disc_") and not name.endswith("_opt"):
            disc_id = name[len("disc_"):]
            discs[disc_id] = priors.Discriminator(
                net=nets.params_from_blob(sections[name]),
                opt=nets.opt_from_blob(sections[name + "_opt"]),
                loss_kind=meta["loss_kind"], w_gp=cfg.train.w_gp)
    return Checkpoint(
        config=cfg, meta=meta, policy=policy, value=value, discs=discs,
        normalizer=RunningNormalizer.from_bytes(sections["normalizer"]),
        global_step=global_step, iteration=iteration,
    )

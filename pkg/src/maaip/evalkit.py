"""Evaluation protocols: damage tables, heading return, style statistics.

All evaluations roll out mean (deterministic) actions in parallel episodes,
so a (checkpoints, seed) pair fixes the report exactly.  Damage accounting
reuses the same per-step contact tally the trainer uses; behavior statistics
are 16-bin histograms over fixed, documented features so divergence numbers
are comparable across runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import features, marl
from .arena import VecArena, action_mapping, damage_tally, fk_arrays
from .config import FIST_L, FIST_R, HEAD, TORSO, ArenaConfig, FullConfig
from .demos import DemoDataset, _clip_bodies
from .training import Checkpoint, control_reward, load_checkpoint

BEHAVIOR_BINS = 16
REPORT_SCHEMA_VERSION = 1

# Geometric "attack contact": a fist within this slack of an opponent's
# head or torso circle counts, computable from poses alone so demos and
# rollouts are measured identically.
ATTACK_SLACK = 0.03


@dataclass
class PolicyRunner:
    """Inference-only wrapper around a checkpoint."""

    ck: Checkpoint

    @property
    def heading(self) -> bool:
        return self.ck.heading

    @property
    def feat_dim(self) -> int:
        return int(self.ck.meta["feat_dim"])

    def act(self, feats_raw: np.ndarray, agent_id: int, mode: str = "mean",
            rng: np.random.Generator | None = None) -> np.ndarray:
        norm = self.ck.normalizer.apply(feats_raw)
        ids = np.full(len(norm), agent_id)
        actions, _, _ = marl.policy_act(self.ck.policy, norm, ids,
                                        rng or np.random.default_rng(0), mode=mode)
        return actions

    def reward_components(self, motion_tr, inter_tr, agent_id: int):
        """Current discriminator rewards for a transition (serving overlay)."""
        from . import priors
        out = {}
        tc = self.ck.config.train
        if "motion" in self.ck.discs:
            s = priors.disc_score(self.ck.discs["motion"], motion_tr)
            out["motion"] = float(priors.score_to_reward(
                self.ck.discs["motion"], s, tc.lsgan_offset, tc.lsgan_scale)[0])
        key = f"inter{agent_id}"
        if key in self.ck.discs:
            s = priors.disc_score(self.ck.discs[key], inter_tr)
            out["interaction"] = float(priors.score_to_reward(
                self.ck.discs[key], s, tc.lsgan_offset, tc.lsgan_scale)[0])
        return out


@dataclass
class EvalReport:
    scenario: str
    episodes: int
    episode_len: int
    seed: int
    mean_damage: list            # per agent, Newtons accumulated per episode
    mean_task_return: float
    attack_contact_rate: list    # per agent
    mean_engagement: float
    histograms: dict
    episode_damage: list         # per episode [agent0, agent1]
    out_of_distribution: bool = False
    pairing: list = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "scenario": self.scenario, "episodes": self.episodes,
            "episode_len": self.episode_len, "seed": self.seed,
            "mean_damage": self.mean_damage, "mean_task_return": self.mean_task_return,
            "attack_contact_rate": self.attack_contact_rate,
            "mean_engagement": self.mean_engagement,
            "histograms": {k: list(v) for k, v in self.histograms.items()},
            "episode_damage": self.episode_damage,
            "out_of_distribution": self.out_of_distribution,
            "pairing": self.pairing,
        }
        return json.dumps(payload, indent=2)


class StatsAccumulator:
    """Collects pose-derived behavior samples and bins them at the end."""

    def __init__(self, config: ArenaConfig):
        self.config = config
        self.shoulders: list = []
        self.elbows: list = []
        self.speeds: list = []
        self.engagement: list = []
        self.attacks: list = []

    def add_states(self, root_pos, q, linvel, part_pos) -> None:
        """root_pos (..., 2, 2), q (..., 2, 4), part_pos (..., 2, 8, 2)."""
        self.shoulders.append(np.asarray(q)[..., :2].ravel())
        self.elbows.append(np.asarray(q)[..., 2:].ravel())
        self.speeds.append(np.linalg.norm(linvel, axis=-1).ravel())
        rp = np.asarray(root_pos)
        self.engagement.append(np.linalg.norm(rp[..., 0, :] - rp[..., 1, :], axis=-1).ravel())
        radii = self.config.part_radii
        pp = np.asarray(part_pos)
        for me in range(2):
            flags = np.zeros(pp[..., 0, 0, 0].shape, dtype=bool)
            for fist in (FIST_L, FIST_R):
                for target, r_t in ((TORSO, radii[TORSO]), (HEAD, radii[HEAD])):
                    gap = np.linalg.norm(pp[..., me, fist, :] - pp[..., 1 - me, target, :],
                                         axis=-1)
                    flags |= gap <= radii[fist] + r_t + ATTACK_SLACK
            self.attacks.append(flags.ravel().astype(float))

    def add_single_states(self, q, linvel) -> None:
        self.shoulders.append(np.asarray(q)[..., :2].ravel())
        self.elbows.append(np.asarray(q)[..., 2:].ravel())
        self.speeds.append(np.linalg.norm(linvel, axis=-1).ravel())

    def histograms(self, include_pair: bool) -> dict:
        cfg = self.config
        out = {}

        def hist(samples, lo, hi):
            h, _ = np.histogram(np.concatenate(samples), bins=BEHAVIOR_BINS, range=(lo, hi))
            total = h.sum()
            return h / total if total else np.full(BEHAVIOR_BINS, 1.0 / BEHAVIOR_BINS)

        out["shoulder"] = hist(self.shoulders, cfg.joint_lo[0], cfg.joint_hi[0])
        out["elbow"] = hist(self.elbows, cfg.joint_lo[2], cfg.joint_hi[2])
        out["speed"] = hist(self.speeds, 0.0, cfg.max_lin_speed)
        if include_pair and self.engagement:
            out["engagement"] = hist(self.engagement, 0.0, cfg.halfextent)
            rate = float(np.mean(np.concatenate(self.attacks))) if self.attacks else 0.0
            out["attack"] = np.array([1.0 - rate, rate])
        return out

    def attack_rate_per_agent(self) -> list:
        if not self.attacks:
            return [0.0, 0.0]
        per = [np.concatenate(self.attacks[0::2]), np.concatenate(self.attacks[1::2])]
        return [float(p.mean()) for p in per]

    def mean_engagement(self) -> float:
        return float(np.mean(np.concatenate(self.engagement))) if self.engagement else 0.0


def histogram_divergence(a: dict, b: dict) -> float:
    """Mean L1 distance between matching normalized histograms, in [0, 2]."""
    keys = sorted(set(a) & set(b))
    if not keys:
        raise ValueError("no comparable histogram groups")
    return float(np.mean([np.abs(a[k] - b[k]).sum() for k in keys]))


def _check_compatible(a: Checkpoint, b: Checkpoint) -> None:
    if a.config.arena.geometry_signature() != b.config.arena.geometry_signature():
        raise ValueError("checkpoints use different fighter geometry")
    if a.meta["feat_dim"] != b.meta["feat_dim"] or a.heading != b.heading:
        raise ValueError("checkpoints use different observation layouts")


def _rollout(runners, episodes: int, episode_len: int, seed: int,
             stats: StatsAccumulator | None = None):
    """Mean-action parallel episodes; returns damage records and task returns."""
    cfg = runners[0].ck.config.arena
    heading_needed = any(r.heading for r in runners)
    tc = runners[0].ck.config.train
    center, half = action_mapping(cfg)
    vec = VecArena(cfg, episodes, seed=seed)
    rng = np.random.default_rng(seed + 1)
    heading_dir = np.zeros((episodes, 2))
    heading_timer = np.zeros(episodes, dtype=np.int64)

    def resample(idx):
        ang = rng.uniform(-np.pi, np.pi)
        heading_dir[idx] = (np.cos(ang), np.sin(ang))
        heading_timer[idx] = rng.integers(*tc.heading_resample)

    if heading_needed:
        for e in range(episodes):
            resample(e)

    damage = np.zeros((episodes, 2))
    task_return = np.zeros((episodes, 2))
    for _ in range(episode_len):
        pos, ang, vel, angv, _ = vec.fk()
        target = np.repeat(heading_dir[:, None, :], 2, axis=1) if heading_needed else None
        self_obs, opp_obs, head_local = features.observations_from_parts(
            vec.body.root_pos, vec.body.heading, vec.body.linvel, vec.body.angvel,
            pos, ang, vel, angv, target)
        if stats is not None:
            stats.add_states(vec.body.root_pos, vec.body.q, vec.body.linvel, pos)
        actions = np.zeros((episodes, 2, 7))
        for i, runner in enumerate(runners):
            parts = [self_obs[:, i], opp_obs[:, i]]
            if runner.heading:
                parts.append(head_local[:, i])
            actions[:, i] = runner.act(np.concatenate(parts, axis=-1), agent_id=i)
        vec.apply_actions(center + half * actions)
        events = vec.step()
        for e in range(episodes):
            if events[e]:
                damage[e, 0] += damage_tally(events[e], 0)
                damage[e, 1] += damage_tally(events[e], 1)
        if heading_needed:
            r = control_reward("heading", heading_dir=heading_dir[:, None, :],
                               root_vel=vec.body.linvel, heading_w=tc.heading_w,
                               target_speed=tc.heading_speed,
                               literal=tc.heading_reward == "literal")
            task_return += r
            heading_timer -= 1
            for e in np.nonzero(heading_timer <= 0)[0]:
                resample(int(e))
    return damage, task_return / episode_len


def eval_damage(ckpt_a: str | Checkpoint, ckpt_b: str | Checkpoint, episodes: int = 32,
                episode_len: int = 1200, seed: int = 0, scenario: str = "damage") -> EvalReport:
    a = ckpt_a if isinstance(ckpt_a, Checkpoint) else load_checkpoint(ckpt_a)
    b = ckpt_b if isinstance(ckpt_b, Checkpoint) else load_checkpoint(ckpt_b)
    _check_compatible(a, b)
    runners = [PolicyRunner(a), PolicyRunner(b)]
    stats = StatsAccumulator(a.config.arena)
    damage, task = _rollout(runners, episodes, episode_len, seed, stats)
    pairing = [a.meta.get("styles", []), b.meta.get("styles", [])]
    return EvalReport(
        scenario=scenario, episodes=episodes, episode_len=episode_len, seed=seed,
        mean_damage=[float(damage[:, 0].mean()), float(damage[:, 1].mean())],
        mean_task_return=float(task.mean()),
        attack_contact_rate=stats.attack_rate_per_agent(),
        mean_engagement=stats.mean_engagement(),
        histograms=stats.histograms(include_pair=True),
        episode_damage=damage.tolist(),
        pairing=pairing,
    )


def eval_heading(ckpt: str | Checkpoint, episodes: int = 32, episode_len: int = 500,
                 seed: int = 0) -> EvalReport:
    ck = ckpt if isinstance(ckpt, Checkpoint) else load_checkpoint(ckpt)
    if not ck.heading:
        raise ValueError("checkpoint is not heading-conditioned")
    runners = [PolicyRunner(ck), PolicyRunner(ck)]
    stats = StatsAccumulator(ck.config.arena)
    damage, task = _rollout(runners, episodes, episode_len, seed, stats)
    return EvalReport(
        scenario="heading", episodes=episodes, episode_len=episode_len, seed=seed,
        mean_damage=[float(damage[:, 0].mean()), float(damage[:, 1].mean())],
        mean_task_return=float(task.mean()),
        attack_contact_rate=stats.attack_rate_per_agent(),
        mean_engagement=stats.mean_engagement(),
        histograms=stats.histograms(include_pair=True),
        episode_damage=damage.tolist(),
    )


def dataset_histograms(dataset: DemoDataset, config: ArenaConfig) -> dict:
    stats = StatsAccumulator(config)
    for clip in dataset.clips:
        body = _clip_bodies(clip)
        if clip.n_chars == 2:
            pos, _, _, _, _ = fk_arrays(body, config)
            stats.add_states(body.root_pos, body.q, body.linvel, pos)
        else:
            stats.add_single_states(body.q[:, 0], body.linvel[:, 0])
    return stats.histograms(include_pair=dataset.n_chars == 2)


def style_divergence(ckpt: str | Checkpoint, dataset: DemoDataset, episodes: int = 8,
                     episode_len: int = 600, seed: int = 0,
                     config: ArenaConfig | None = None) -> float:
    """L1 distance between policy-rollout and demo behavior histograms."""
    ck = ckpt if isinstance(ckpt, Checkpoint) else load_checkpoint(ckpt)
    config = config or ck.config.arena
    dataset.validate(config)
    stats = StatsAccumulator(config)
    _rollout([PolicyRunner(ck), PolicyRunner(ck)], episodes, episode_len, seed, stats)
    policy_h = stats.histograms(include_pair=dataset.n_chars == 2)
    demo_h = dataset_histograms(dataset, config)
    return histogram_divergence(policy_h, demo_h)


def dataset_divergence(a: DemoDataset, b: DemoDataset, config: ArenaConfig) -> float:
    """Baseline: how far two demo datasets sit from each other."""
    return histogram_divergence(dataset_histograms(a, config),
                                dataset_histograms(b, config))


def eval_cross_style(ckpt_a: str | Checkpoint, ckpt_b: str | Checkpoint,
                     episodes: int = 32, episode_len: int = 1200,
                     seed: int = 0) -> EvalReport:
    """Mismatched-training pairing; flagged when the styles differ."""
    a = ckpt_a if isinstance(ckpt_a, Checkpoint) else load_checkpoint(ckpt_a)
    b = ckpt_b if isinstance(ckpt_b, Checkpoint) else load_checkpoint(ckpt_b)
    report = eval_damage(a, b, episodes, episode_len, seed, scenario="cross_style")
    report.out_of_distribution = report.pairing[0] != report.pairing[1]
    return report

"""Demonstration datasets from scripted expert fighters.

Stands in for motion capture: finite-state experts with tunable style
parameters fight (or shadow-fight a drifting virtual target) inside the
real simulation, and their pose trajectories are recorded at the control
rate.  Single-actor datasets hold one character per frame, interaction
datasets exactly two (character 0 keeps the first style in every clip).

File format (docs/dataset-format.md): JSON Lines, one header object then
one object per frame.  Per character and frame we store
[x, y, heading, vx, vy, angvel, q0..q3, qd0..qd3] -- everything the
feature pipeline needs, so discriminator transitions rebuilt from a file
are bit-identical to the ones computed live.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import features
from .arena import BodyArrays, apply_actions, fk_arrays, spawn_arena, step_physics
from .config import LAYOUT_VERSION, ArenaConfig
from .features import ObservationPair, observations_from_parts
from .priors import TransitionBatch

FRAME_WIDTH = 14  # root pose (3) + root velocities (3) + q (4) + qd (4)


@dataclass
class StyleSpec:
    style_id: str
    engagement_distance: float   # preferred root-to-root range, m
    jab_weight: float            # straight-punch preference
    hook_weight: float           # swinging-punch preference
    guard_hold_prob: float
    dodge_trigger: float         # incoming-fist distance that triggers a dodge, m
    footwork_amplitude: float    # lateral oscillation scale
    torso_swing: float = 1.0     # yaw-command amplification during hooks

    def __post_init__(self):
        for p in (self.jab_weight, self.hook_weight, self.guard_hold_prob):
            if not 0.0 <= p <= 1.0 + 1e-9:
                raise ValueError("style probabilities must lie in [0, 1]")
        if self.engagement_distance <= 0 or self.dodge_trigger <= 0:
            raise ValueError("style distances must be positive")


STYLES = {
    # Long range, straight punches, mobile.
    "outfighter": StyleSpec("outfighter", engagement_distance=1.45, jab_weight=0.8,
                            hook_weight=0.2, guard_hold_prob=0.35, dodge_trigger=0.55,
                            footwork_amplitude=0.6),
    # Close range, hooks, walks the opponent down.
    "swarmer": StyleSpec("swarmer", engagement_distance=0.75, jab_weight=0.25,
                         hook_weight=0.75, guard_hold_prob=0.15, dodge_trigger=0.3,
                         footwork_amplitude=0.25),
    # Mid range, whole-torso committed swings.
    "fullcommit": StyleSpec("fullcommit", engagement_distance=1.0, jab_weight=0.5,
                            hook_weight=0.5, guard_hold_prob=0.1, dodge_trigger=0.3,
                            footwork_amplitude=0.9, torso_swing=2.2),
}

GUARD = {"shoulder": 0.9, "elbow": 2.2}

# Opponent-feature offsets inside the 23-wide opponent block.
_OPP_ROOT_POS = slice(0, 2)
_OPP_FIST_L_POS = slice(15, 17)
_OPP_FIST_L_VEL = slice(17, 19)
_OPP_FIST_R_POS = slice(19, 21)
_OPP_FIST_R_VEL = slice(21, 23)


@dataclass
class ExpertState:
    mode: str = "approach"
    timer: int = 0
    tick: int = 0
    arm: int = 0            # 0 = left, 1 = right
    lateral: float = 1.0    # circling / dodging direction
    phase_offset: float = 0.0


def _guard_targets():
    return np.array([GUARD["shoulder"], GUARD["shoulder"], GUARD["elbow"], GUARD["elbow"]])


def _pick_mode(style: StyleSpec, dist: float, rng: np.random.Generator) -> str:
    if dist > style.engagement_distance + 0.35:
        return "approach"
    weights = {
        "guard": style.guard_hold_prob,
        "jab": style.jab_weight,
        "hook": style.hook_weight,
        "circle": 0.35,
        # Long-range stylists reset distance often; in-fighters stay put.
        "retreat": 0.18 if style.engagement_distance > 1.2 else 0.05,
    }
    keys = list(weights)
    probs = np.array([weights[k] for k in keys])
    probs = probs / probs.sum()
    return keys[int(rng.choice(len(keys), p=probs))]


def expert_step(style: StyleSpec, fsm: ExpertState, obs: ObservationPair,
                rng: np.random.Generator):
    """One control-step decision of the scripted fighter.

    Consumes the same local-frame observation the learned policies see and
    emits an action in the same 7-D space, so recorded demonstrations stay
    inside the set of behaviors a policy can reproduce.
    """
    opp = obs.o_opp
    rel = opp[_OPP_ROOT_POS]
    dist = float(np.linalg.norm(rel))
    bearing = float(np.arctan2(rel[1], rel[0]))
    fsm.tick += 1
    fsm.timer -= 1

    # Reflex: dodge when an opponent fist is near the head and incoming.
    if fsm.mode not in ("dodge",):
        for pos_s, vel_s in ((_OPP_FIST_L_POS, _OPP_FIST_L_VEL),
                             (_OPP_FIST_R_POS, _OPP_FIST_R_VEL)):
            fist = opp[pos_s]
            to_head = np.array([0.12, 0.0]) - fist
            gap = float(np.linalg.norm(to_head))
            closing = float(np.dot(opp[vel_s], to_head / max(gap, 1e-6)))
            if gap < style.dodge_trigger and closing > 0.6:
                fsm.mode = "dodge"
                fsm.timer = 4
                fsm.lateral = 1.0 if fist[1] < 0 else -1.0
                break

    if fsm.timer <= 0:
        if dist > style.engagement_distance + 0.35:
            fsm.mode = "approach"
            fsm.timer = 6
        else:
            fsm.mode = _pick_mode(style, dist, rng)
            fsm.timer = {"guard": int(rng.integers(6, 16)), "jab": 6, "hook": 10,
                         "circle": int(rng.integers(10, 21)), "retreat": int(rng.integers(8, 15)),
                         "approach": 6}[fsm.mode]
            if fsm.mode in ("jab", "hook"):
                fsm.arm = int(rng.integers(0, 2))
            if fsm.mode == "circle":
                fsm.lateral = float(rng.choice((-1.0, 1.0)))

    turn = float(np.clip(2.5 * bearing, -3.0, 3.0))
    sway = style.footwork_amplitude * 0.5 * np.sin(0.23 * fsm.tick + fsm.phase_offset)
    targets = _guard_targets()
    mode = fsm.mode

    if mode == "approach":
        speed = 1.3 if dist > style.engagement_distance + 0.6 else 0.6
        v = np.array([speed, sway])
    elif mode == "circle":
        radial = 1.5 * (dist - style.engagement_distance)
        v = np.array([np.clip(radial, -0.8, 0.8), fsm.lateral * (0.45 + 0.3 * style.footwork_amplitude)])
    elif mode == "guard":
        hold = np.clip(0.5 * (dist - style.engagement_distance), -0.4, 0.4)
        v = np.array([hold, sway * 0.5])
    elif mode == "retreat":
        v = np.array([-0.85, sway])
    elif mode == "dodge":
        v = np.array([-0.2, fsm.lateral * 1.5])
    elif mode == "jab":
        sh, el = (0, 2) if fsm.arm == 0 else (1, 3)
        extend = fsm.timer > 3
        if extend:
            targets[sh] = -0.35
            targets[el] = 0.05
            v = np.array([0.9, 0.0])
        else:
            v = np.array([-0.2, 0.0])
    elif mode == "hook":
        sh, el = (0, 2) if fsm.arm == 0 else (1, 3)
        side = 1.0 if fsm.arm == 0 else -1.0
        if fsm.timer > 7:       # windup
            targets[sh] = 1.4
            targets[el] = 2.1
            v = np.array([0.4, 0.0])
        elif fsm.timer > 3:     # swing
            targets[sh] = -0.8
            targets[el] = 1.5
            v = np.array([0.6, 0.0])
            turn += -side * 1.1 * style.torso_swing
        else:                   # recover
            v = np.array([0.0, 0.0])
    else:
        raise ValueError(f"unknown expert mode {mode!r}")

    action = np.concatenate([v, [turn], targets])
    return action, fsm


# --- datasets ----------------------------------------------------------------

@dataclass
class DemoClip:
    clip_id: int
    styles: list
    frames: np.ndarray        # (F, n_chars, FRAME_WIDTH)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_chars(self) -> int:
        return self.frames.shape[1]


@dataclass
class DemoDataset:
    fps: float
    n_chars: int
    styles: list
    arena_sig: str
    layout_version: int = LAYOUT_VERSION
    clips: list = field(default_factory=list)

    def total_frames(self) -> int:
        return sum(c.n_frames for c in self.clips)

    def sample_pose(self, rng: np.random.Generator):
        """Random (joint angles, joint velocities) from a random frame."""
        if not self.clips:
            raise ValueError("empty demo dataset")
        weights = np.array([c.n_frames for c in self.clips], dtype=float)
        clip = self.clips[int(rng.choice(len(self.clips), p=weights / weights.sum()))]
        frame = clip.frames[int(rng.integers(clip.n_frames))]
        char = frame[int(rng.integers(clip.n_chars))]
        return char[6:10].copy(), char[10:14].copy()

    def validate(self, config: ArenaConfig) -> None:
        if self.layout_version != LAYOUT_VERSION:
            raise ValueError(
                f"dataset layout version {self.layout_version} != supported {LAYOUT_VERSION}")
        if self.arena_sig != config.geometry_signature():
            raise ValueError("dataset was generated with different fighter geometry")


def _fighter_frame(f) -> np.ndarray:
    return np.concatenate([
        f.root_pos, [f.root_heading], f.root_linvel, [f.root_angvel],
        f.joint_angles, f.joint_vels,
    ])


def _phantom_state(pos, vel, heading):
    from .arena import FighterState
    return FighterState(
        root_pos=np.asarray(pos, dtype=float), root_heading=float(heading),
        root_linvel=np.asarray(vel, dtype=float), root_angvel=0.0,
        joint_angles=np.zeros(4), joint_vels=np.zeros(4),
        pd_targets=np.zeros(4), root_cmd=np.zeros(3),
    )


def generate_single_dataset(style: StyleSpec, seconds: float, seed: int,
                            config: ArenaConfig | None = None) -> DemoDataset:
    """Shadow-fight a drifting virtual target; record the expert only.

    The target exists only for the expert's observations (no contact), so the
    clips contain clean single-body motion: footwork, punches, guard, dodges.
    """
    config = config or ArenaConfig()
    total_needed = int(round(seconds * config.control_hz))
    ds = DemoDataset(fps=config.control_hz, n_chars=1, styles=[style.style_id],
                     arena_sig=config.geometry_signature())
    master = np.random.SeedSequence(seed)
    clip_id = 0
    while ds.total_frames() < total_needed:
        child = np.random.default_rng(master.spawn(1)[0])
        clip_len = min(int(child.integers(10, 31)) * int(config.control_hz),
                       total_needed - ds.total_frames())
        if clip_len < 2:
            break
        state = spawn_arena(config, seed=int(child.integers(2**31)))
        # Park the physical second fighter far from the play area.
        state.fighters[1].root_pos = np.array([config.halfextent - 0.3,
                                               config.halfextent - 0.3])
        state.fighters[0].root_pos = np.clip(state.fighters[0].root_pos, -2.0, 1.2)
        fsm = ExpertState(phase_offset=float(child.uniform(0, 2 * np.pi)))
        target = child.uniform(-2.0, 1.2, size=2)
        waypoint = child.uniform(-2.0, 1.2, size=2)
        wp_timer = int(child.integers(60, 150))
        frames = np.zeros((clip_len, 1, FRAME_WIDTH))
        for t in range(clip_len):
            wp_timer -= 1
            if wp_timer <= 0 or np.linalg.norm(waypoint - target) < 0.2:
                waypoint = child.uniform(-2.0, 1.2, size=2)
                wp_timer = int(child.integers(60, 150))
            step_dir = waypoint - target
            norm = np.linalg.norm(step_dir)
            tvel = 0.6 * step_dir / max(norm, 1e-6) if norm > 1e-6 else np.zeros(2)
            target = target + tvel * config.control_dt
            frames[t, 0] = _fighter_frame(state.fighters[0])
            phantom = _phantom_state(target, tvel, heading=0.0)
            obs = features.build_observation(state.fighters[0], phantom, config)
            action, fsm = expert_step(style, fsm, obs, child)
            acts = np.zeros((2, 7))
            acts[0] = action
            apply_actions(state, acts)
            state, _ = step_physics(state)
        ds.clips.append(DemoClip(clip_id, [style.style_id], frames))
        clip_id += 1
    return ds


def generate_interaction_dataset(style_a: StyleSpec, style_b: StyleSpec, rounds: int,
                                 seed: int, config: ArenaConfig | None = None,
                                 round_seconds: float = 30.0) -> DemoDataset:
    """Two experts fight from distant spawns; both characters recorded.

    Character 0 is always ``style_a``.
    """
    if rounds < 1:
        raise ValueError("need at least one round")
    import dataclasses
    config = config or ArenaConfig()
    spawn_cfg = dataclasses.replace(config, min_separation=2.5)
    ds = DemoDataset(fps=config.control_hz, n_chars=2,
                     styles=[style_a.style_id, style_b.style_id],
                     arena_sig=config.geometry_signature())
    master = np.random.SeedSequence(seed)
    n_frames = int(round(round_seconds * config.control_hz))
    for clip_id in range(rounds):
        child = np.random.default_rng(master.spawn(1)[0])
        state = spawn_arena(spawn_cfg, seed=int(child.integers(2**31)))
        fsms = [ExpertState(phase_offset=float(child.uniform(0, 2 * np.pi))) for _ in range(2)]
        styles = (style_a, style_b)
        frames = np.zeros((n_frames, 2, FRAME_WIDTH))
        for t in range(n_frames):
            for i in range(2):
                frames[t, i] = _fighter_frame(state.fighters[i])
            acts = np.zeros((2, 7))
            for i in range(2):
                obs = features.build_observation(state.fighters[i], state.fighters[1 - i], config)
                acts[i], fsms[i] = expert_step(styles[i], fsms[i], obs, child)
            apply_actions(state, acts)
            state, _ = step_physics(state)
        ds.clips.append(DemoClip(clip_id, list(ds.styles), frames))
    return ds


def _clip_bodies(clip: DemoClip) -> BodyArrays:
    """View a clip as frame-batched body arrays (single clips duplicated)."""
    f = clip.frames
    if clip.n_chars == 1:
        f = np.repeat(f, 2, axis=1)
    body = BodyArrays.zeros(f.shape[0])
    body.root_pos = f[:, :, 0:2].copy()
    body.heading = f[:, :, 2].copy()
    body.linvel = f[:, :, 3:5].copy()
    body.angvel = f[:, :, 5].copy()
    body.q = f[:, :, 6:10].copy()
    body.qd = f[:, :, 10:14].copy()
    return body


def clip_observations(clip: DemoClip, config: ArenaConfig):
    """Self and opponent observations for every frame of a clip."""
    body = _clip_bodies(clip)
    pos, ang, vel, angv, _ = fk_arrays(body, config)
    return observations_from_parts(body.root_pos, body.heading, body.linvel,
                                   body.angvel, pos, ang, vel, angv)[:2]


def demo_to_transitions(dataset: DemoDataset, role, config: ArenaConfig) -> TransitionBatch:
    """Rebuild discriminator transitions from recorded poses.

    ``role`` is "single" for motion transitions or ("interaction", agent_index)
    for reaction transitions.  Transitions never span clip boundaries; the
    observation code is the same one used on live rollouts.
    """
    dataset.validate(config)
    rows = []
    for clip in dataset.clips:
        if clip.n_frames < 2:
            continue
        self_obs, opp_obs = clip_observations(clip, config)
        if role == "single":
            o = self_obs[:, 0]
            rows.append(np.concatenate([o[:-1], o[1:]], axis=1))
        else:
            kind, agent = role
            if kind != "interaction":
                raise ValueError(f"unknown role {role!r}")
            if clip.n_chars != 2:
                raise ValueError("interaction transitions need two-character clips")
            o_self = self_obs[:, agent]
            o_opp = opp_obs[:, agent]
            rows.append(np.concatenate([o_self[:-1], o_opp[:-1], o_self[1:]], axis=1))
    if not rows:
        raise ValueError("empty demo dataset")
    return TransitionBatch(np.concatenate(rows, axis=0), "expert")


# --- file I/O ------------------------------------------------------------------

def write_dataset(dataset: DemoDataset, path: str) -> None:
    with open(path, "w") as fh:
        header = {
            "format": "maaip-demos", "layout_version": dataset.layout_version,
            "fps": dataset.fps, "n_chars": dataset.n_chars, "styles": list(dataset.styles),
            "arena_sig": dataset.arena_sig,
            "clips": [{"id": c.clip_id, "styles": list(c.styles), "frames": c.n_frames}
                      for c in dataset.clips],
        }
        fh.write(json.dumps(header) + "\n")
        for clip in dataset.clips:
            for t in range(clip.n_frames):
                fh.write(json.dumps({
                    "clip": clip.clip_id,
                    "chars": [clip.frames[t, i].tolist() for i in range(clip.n_chars)],
                }) + "\n")


def read_dataset(path: str) -> DemoDataset:
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")

    def parse(i: int):
        try:
            return json.loads(lines[i])
        except json.JSONDecodeError as err:
            raise ValueError(f"{path}:{i + 1}: malformed line ({err})") from err

    header = parse(0)
    if header.get("format") != "maaip-demos":
        raise ValueError(f"{path}: not a demo dataset file")
    if header["fps"] != 30.0:
        raise ValueError(f"{path}: fps {header['fps']} unsupported, datasets are 30 Hz")
    ds = DemoDataset(fps=header["fps"], n_chars=header["n_chars"], styles=header["styles"],
                     arena_sig=header["arena_sig"], layout_version=header["layout_version"])
    by_clip = {c["id"]: c for c in header["clips"]}
    buffers: dict = {}
    for i in range(1, len(lines)):
        if not lines[i].strip():
            continue
        obj = parse(i)
        buffers.setdefault(obj["clip"], []).append(obj["chars"])
    for cid, meta in by_clip.items():
        if cid not in buffers:
            raise ValueError(f"{path}: header lists clip {cid} but no frames found")
        frames = np.asarray(buffers[cid], dtype=np.float64)
        if frames.shape[0] != meta["frames"] or frames.shape[1] != ds.n_chars:
            raise ValueError(f"{path}: clip {cid} frame count mismatch")
        ds.clips.append(DemoClip(cid, meta["styles"], frames))
    return ds


def load_datasets(paths: str, config: ArenaConfig) -> DemoDataset:
    """Load one or more comma-separated dataset files into a merged dataset."""
    parts = [p.strip() for p in paths.split(",") if p.strip()]
    if not parts:
        raise ValueError("no dataset paths given")
    merged = None
    next_id = 0
    for p in parts:
        ds = read_dataset(p)
        ds.validate(config)
        if merged is None:
            merged = ds
            next_id = max((c.clip_id for c in ds.clips), default=-1) + 1
        else:
            if ds.n_chars != merged.n_chars:
                raise ValueError("cannot merge datasets with different character counts")
            for c in ds.clips:
                merged.clips.append(DemoClip(next_id, c.styles, c.frames))
                next_id += 1
            for s in ds.styles:
                if s not in merged.styles:
                    merged.styles.append(s)
    return merged

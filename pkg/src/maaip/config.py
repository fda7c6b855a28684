"""Configuration dataclasses and the `key = value` config-file format.

A run is described by two dataclasses: :class:`ArenaConfig` (physics) and
:class:`TrainConfig` (learning).  Config files are INI-style with sections
``[arena]``, ``[train]``, ``[reward]``, ``[schedule]`` and ``[task]``; any
omitted key keeps its dataclass default.  The canonical rendering of a full
config (every field, sorted) is what gets hashed into checkpoints.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace

# Body part indices, fixed order.  Head and torso are the damage-receiving set.
TORSO, HEAD, UARM_L, FARM_L, FIST_L, UARM_R, FARM_R, FIST_R = range(8)
PART_NAMES = ("torso", "head", "uarm_l", "farm_l", "fist_l", "uarm_r", "farm_r", "fist_r")
N_PARTS = 8

# Joint indices: left/right shoulder, left/right elbow.
SHOULDER_L, SHOULDER_R, ELBOW_L, ELBOW_R = range(4)
JOINT_NAMES = ("shoulder_l", "shoulder_r", "elbow_l", "elbow_r")
N_JOINTS = 4

DAMAGE_PARTS = (TORSO, HEAD)

# Bumped whenever the observation feature layout changes; embedded in
# checkpoints and datasets so stale artifacts are rejected loudly.
LAYOUT_VERSION = 1


@dataclass
class ArenaConfig:
    """Physical parameters of the duel arena and both fighters."""

    halfextent: float = 4.0          # m, arena is [-h, h]^2
    dt_sim: float = 1.0 / 60.0       # s, physics substep
    substeps: int = 2                # physics substeps per control step
    control_hz: float = 30.0         # policy query rate

    # Part geometry (m).  Circles; arm links hang off torso shoulder anchors.
    part_radii: tuple = (0.25, 0.12, 0.08, 0.07, 0.10, 0.08, 0.07, 0.10)
    upper_arm_len: float = 0.30
    forearm_len: float = 0.28
    shoulder_offset: float = 0.22    # lateral distance of shoulder anchor from root
    head_offset: float = 0.18        # forward distance of head centre from root

    # Mass model (kg).
    masses: tuple = (40.0, 5.0, 2.5, 1.5, 0.5, 2.5, 1.5, 0.5)
    root_inertia: float = 2.5        # kg m^2, yaw inertia of the whole body

    # PD control: (kp, kd) per joint in JOINT order.
    pd_gains: tuple = ((50.0, 5.0), (50.0, 5.0), (20.0, 2.0), (20.0, 2.0))
    torque_limit: float = 60.0       # N m, joint and root-yaw torques
    root_gains: tuple = (400.0, 30.0)   # (k_lin N s/m, k_ang N m s/rad)
    root_force_limit: float = 800.0  # N, cap on the root velocity servo

    # Penalty contacts.
    contact_stiffness: float = 1000.0   # k_c, N/m
    contact_damping: float = 10.0       # c_c, N s/m

    # Joint limits (rad): shoulders swing both ways, elbows bend inward only.
    joint_lo: tuple = (-2.5, -2.5, 0.0, 0.0)
    joint_hi: tuple = (2.5, 2.5, 2.6, 2.6)

    # Command and safety envelopes.
    max_lin_speed: float = 2.0       # m/s, commanded root velocity cap
    max_yaw_rate: float = 4.0        # rad/s, commanded yaw rate cap
    max_root_speed: float = 5.0      # m/s, hard kinematic bound
    max_root_angvel: float = 12.0    # rad/s
    max_joint_vel: float = 40.0      # rad/s

    episode_len: int = 300           # control steps per training episode
    min_separation: float = 0.6      # m, spawn rejection threshold

    @property
    def control_dt(self) -> float:
        return 1.0 / self.control_hz

    def validate(self) -> None:
        ratio = self.control_dt / self.dt_sim
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) != self.substeps:
            raise ValueError(
                f"control period / dt_sim must equal substeps ({ratio} vs {self.substeps})"
            )
        if min(self.part_radii) <= 0 or min(self.masses) <= 0:
            raise ValueError("part radii and masses must be positive")
        if self.contact_stiffness <= 0:
            raise ValueError("contact stiffness must be positive")

    def geometry_signature(self) -> str:
        """Hash of the fields that determine kinematics and feature values."""
        keys = (
            self.part_radii, self.upper_arm_len, self.forearm_len,
            self.shoulder_offset, self.head_offset,
        )
        return hashlib.sha256(repr(keys).encode()).hexdigest()[:16]


@dataclass
class TrainConfig:
    """Learning-side knobs: rollouts, rewards, schedule and task."""

    # [train]
    num_envs: int = 64
    horizon: int = 128               # control steps collected per iteration
    total_steps: int = 2_000_000     # env control steps over the whole run
    seed: int = 7
    gamma: float = 0.99
    lam: float = 0.95                # GAE and TD(lambda)
    clip_eps: float = 0.2
    ppo_epochs: int = 5
    minibatch: int = 4096
    policy_lr: float = 3e-4
    value_lr: float = 3e-4
    grad_clip: float = 1.0
    hidden: tuple = (256, 256, 128)
    log_std: float = -1.6            # fixed Gaussian policy log stddev, per dim
    normalizer_clip: float = 5.0
    demo_spawn_frac: float = 0.5     # fraction of respawns seeded from demo poses
    ckpt_interval: int = 10          # iterations between checkpoints
    single_dataset: str = ""         # jsonl path(s), comma separated
    interaction_dataset: str = ""
    run_dir: str = "runs/default"

    # [reward]
    loss_kind: str = "gail"          # gail | lsgan
    w_gp: float = 1.0
    disc_lr: float = 1e-4
    disc_minibatch: int = 256        # K, per side and per update pass
    disc_passes: int = 2             # n, update passes per iteration
    disc_warmup_passes: int = 300    # disc-only update passes before policy updates start
    buffer_capacity: int = 100_000
    single_motion_prior: bool = True
    imitation_weights: tuple = (0.2, 0.8)      # (motion, interaction), no task
    task_weights: tuple = (0.1, 0.4, 0.5)      # (motion, interaction, control)
    lsgan_offset: float = 1.0        # u in max[0, u - v (D - 1)^2]
    lsgan_scale: float = 0.25        # v

    # [schedule]
    s1_frac: float = 0.10            # motion-only until s1_frac * total_steps
    s2_frac: float = 0.30            # + interaction until s2_frac, then task

    # [task]
    control: str = "none"            # none | damage_min | damage_max | heading
    damage_scale: float = 0.01       # w in exp(-w * force)
    heading_w: float = 2.0
    heading_speed: float = 1.0       # target speed along the commanded direction
    heading_reward: str = "corrected"  # corrected | literal
    heading_resample: tuple = (60, 120)  # control-step range between direction changes

    @property
    def heading_task(self) -> bool:
        return self.control == "heading"

    def validate(self) -> None:
        if self.loss_kind not in ("gail", "lsgan"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.control not in ("none", "damage_min", "damage_max", "heading"):
            raise ValueError(f"unknown control task {self.control!r}")
        if self.heading_reward not in ("corrected", "literal"):
            raise ValueError(f"unknown heading_reward {self.heading_reward!r}")
        if not 0.0 <= self.s1_frac <= self.s2_frac:
            raise ValueError("schedule fractions must satisfy 0 <= s1 <= s2")
        for ws in (self.imitation_weights, self.task_weights):
            if abs(sum(ws) - 1.0) > 1e-9:
                raise ValueError(f"reward weights must sum to 1, got {ws}")


@dataclass
class FullConfig:
    arena: ArenaConfig = field(default_factory=ArenaConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "FullConfig":
        self.arena.validate()
        self.train.validate()
        return self


# Which TrainConfig fields render under which file section.
_REWARD_KEYS = {
    "loss_kind", "w_gp", "disc_lr", "disc_minibatch", "disc_passes",
    "disc_warmup_passes", "buffer_capacity", "single_motion_prior",
    "imitation_weights", "task_weights", "lsgan_offset", "lsgan_scale",
}
_SCHEDULE_KEYS = {"s1_frac", "s2_frac"}
_TASK_KEYS = {
    "control", "damage_scale", "heading_w", "heading_speed",
    "heading_reward", "heading_resample",
}


def _render_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_render_value(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _parse_value(text: str, template):
    text = text.strip()
    if isinstance(template, bool):
        if text.lower() in ("true", "1", "yes", "on"):
            return True
        if text.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected boolean, got {text!r}")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    if isinstance(template, tuple):
        items = [s for s in (p.strip() for p in text.replace("(", " ").replace(")", " ").split(",")) if s]
        inner = template[0] if template else 0.0
        if isinstance(inner, tuple):
            # tuple of pairs, e.g. pd gains "50:5, 50:5, 20:2, 20:2"
            return tuple(tuple(float(x) for x in item.split(":")) for item in items)
        return tuple(_parse_value(item, inner) for item in items)
    return text


def _section_of(name: str) -> str:
    if name in _REWARD_KEYS:
        return "reward"
    if name in _SCHEDULE_KEYS:
        return "schedule"
    if name in _TASK_KEYS:
        return "task"
    return "train"


def render_config(cfg: FullConfig) -> str:
    """Canonical text form: every field, grouped by section, sorted keys."""
    sections: dict[str, list[str]] = {"arena": [], "train": [], "reward": [], "schedule": [], "task": []}
    for f in fields(ArenaConfig):
        v = getattr(cfg.arena, f.name)
        if f.name == "pd_gains":
            v_text = ", ".join(f"{kp!r}:{kd!r}" for kp, kd in v)
        else:
            v_text = _render_value(v)
        sections["arena"].append(f"{f.name} = {v_text}")
    for f in fields(TrainConfig):
        sections[_section_of(f.name)].append(f"{f.name} = {_render_value(getattr(cfg.train, f.name))}")
    out = io.StringIO()
    for name in ("arena", "train", "reward", "schedule", "task"):
        out.write(f"[{name}]\n")
        for line in sorted(sections[name]):
            out.write(line + "\n")
        out.write("\n")
    return out.getvalue()


def config_hash(cfg: FullConfig) -> bytes:
    return hashlib.sha256(render_config(cfg).encode()).digest()


def load_config(path: str) -> FullConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        parser.read_file(fh, source=path)
    return config_from_parser(parser)


def loads_config(text: str) -> FullConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string(text)
    return config_from_parser(parser)


def config_from_parser(parser: configparser.ConfigParser) -> FullConfig:
    arena_fields = {f.name: f for f in fields(ArenaConfig)}
    train_fields = {f.name: f for f in fields(TrainConfig)}
    arena = ArenaConfig()
    train = TrainConfig()
    for section in parser.sections():
        for key, raw in parser.items(section):
            if section == "arena":
                if key not in arena_fields:
                    raise ValueError(f"unknown [arena] key {key!r}")
                arena = replace(arena, **{key: _parse_value(raw, getattr(arena, key))})
            elif section in ("train", "reward", "schedule", "task"):
                if key not in train_fields or _section_of(key) != section:
                    raise ValueError(f"unknown [{section}] key {key!r}")
                train = replace(train, **{key: _parse_value(raw, getattr(train, key))})
            else:
                raise ValueError(f"unknown config section [{section}]")
    return FullConfig(arena=arena, train=train).validate()

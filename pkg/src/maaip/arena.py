"""Deterministic 2D duel simulation.

Two articulated fighters seen from above: a torso disc carrying a head and
two 2-link arms (upper arm, forearm, fist), all modeled as circles.  Joints
are PD-servoed to target angles; the root follows a commanded-velocity servo
(the planar stand-in for legged locomotion).  Contacts between the fighters
use a penalty model and are reported as paired action/reaction events.

Integration is semi-implicit Euler at 60 Hz with 2 substeps per control
step (30 Hz).  Arm dynamics are decoupled per joint (constant effective
inertia, contact wrenches mapped through the Jacobian transpose); reaction
of arm motion on the torso is neglected, which the root servo absorbs.

The internal math runs on stacked arrays of shape (B, 2, ...) so that many
arenas step in one call; :class:`ArenaState` is the single-arena view used
by tests, demo generation and serving, :class:`VecArena` the batched one
used by training and evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import (
    DAMAGE_PARTS,
    ELBOW_L,
    ELBOW_R,
    FARM_L,
    FARM_R,
    FIST_L,
    FIST_R,
    HEAD,
    N_JOINTS,
    N_PARTS,
    SHOULDER_L,
    SHOULDER_R,
    TORSO,
    UARM_L,
    UARM_R,
    ArenaConfig,
)


class SimulationDiverged(RuntimeError):
    """Raised when integration produces a non-finite quantity."""

    def __init__(self, quantity: str):
        super().__init__(f"simulation diverged: non-finite {quantity}")
        self.quantity = quantity


@dataclass
class FighterState:
    root_pos: np.ndarray          # (2,) m
    root_heading: float           # rad
    root_linvel: np.ndarray       # (2,) m/s
    root_angvel: float            # rad/s
    joint_angles: np.ndarray      # (4,) rad, L/R shoulder then L/R elbow
    joint_vels: np.ndarray        # (4,) rad/s
    pd_targets: np.ndarray        # (4,) rad
    root_cmd: np.ndarray          # (3,): desired local linvel (2), yaw rate

    def copy(self) -> "FighterState":
        return FighterState(
            self.root_pos.copy(), float(self.root_heading), self.root_linvel.copy(),
            float(self.root_angvel), self.joint_angles.copy(), self.joint_vels.copy(),
            self.pd_targets.copy(), self.root_cmd.copy(),
        )


@dataclass
class PartPose:
    """World pose and velocity of all 8 parts of one fighter."""

    pos: np.ndarray      # (8, 2)
    angle: np.ndarray    # (8,)
    vel: np.ndarray      # (8, 2)
    angvel: np.ndarray   # (8,)


@dataclass
class ContactEvent:
    src: tuple           # (agent, part)
    dst: tuple           # (agent, part)
    normal: np.ndarray   # (2,) unit, push direction applied to dst
    force_mag: float     # N
    point: np.ndarray    # (2,) m


@dataclass
class ArenaState:
    config: ArenaConfig
    fighters: list                # [FighterState, FighterState]
    step_count: int = 0

    def copy(self) -> "ArenaState":
        return ArenaState(self.config, [f.copy() for f in self.fighters], self.step_count)


@dataclass
class BodyArrays:
    """Stacked state of B arenas x 2 fighters."""

    root_pos: np.ndarray   # (B, 2, 2)
    heading: np.ndarray    # (B, 2)
    linvel: np.ndarray     # (B, 2, 2)
    angvel: np.ndarray     # (B, 2)
    q: np.ndarray          # (B, 2, 4)
    qd: np.ndarray         # (B, 2, 4)
    targets: np.ndarray    # (B, 2, 4)
    cmd: np.ndarray        # (B, 2, 3)

    @classmethod
    def zeros(cls, n: int) -> "BodyArrays":
        return cls(
            root_pos=np.zeros((n, 2, 2)), heading=np.zeros((n, 2)),
            linvel=np.zeros((n, 2, 2)), angvel=np.zeros((n, 2)),
            q=np.zeros((n, 2, 4)), qd=np.zeros((n, 2, 4)),
            targets=np.zeros((n, 2, 4)), cmd=np.zeros((n, 2, 3)),
        )


def _perp(v):
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


# Arm bookkeeping: (side sign, shoulder joint, elbow joint, part indices).
_ARMS = (
    (+1.0, SHOULDER_L, ELBOW_L, UARM_L, FARM_L, FIST_L),
    (-1.0, SHOULDER_R, ELBOW_R, UARM_R, FARM_R, FIST_R),
)


def joint_inertias(config: ArenaConfig) -> np.ndarray:
    """Effective inertia per joint, from the chain mass it swings."""
    lu, lf = config.upper_arm_len, config.forearm_len
    out = np.zeros(N_JOINTS)
    for _, sj, ej, ua, fa, fi in _ARMS:
        m_ua, m_fa, m_fi = (config.masses[p] for p in (ua, fa, fi))
        out[sj] = m_ua * (lu / 2) ** 2 + m_fa * (lu + lf / 2) ** 2 + m_fi * (lu + lf) ** 2
        out[ej] = m_fa * (lf / 2) ** 2 + m_fi * lf ** 2
    return out


def fk_arrays(body: BodyArrays, config: ArenaConfig):
    """Vectorized forward kinematics.

    Returns (part_pos (B,2,8,2), part_ang (B,2,8), part_vel (B,2,8,2),
    part_angvel (B,2,8), anchors) where anchors maps joint index to the
    world position of its pivot, needed for contact torque mapping.
    """
    b = body.root_pos.shape[0]
    pos = np.zeros((b, 2, N_PARTS, 2))
    ang = np.zeros((b, 2, N_PARTS))
    vel = np.zeros((b, 2, N_PARTS, 2))
    angv = np.zeros((b, 2, N_PARTS))
    anchors = np.zeros((b, 2, N_JOINTS, 2))

    h = body.heading
    c, s = np.cos(h), np.sin(h)
    fwd = np.stack([c, s], axis=-1)
    left = np.stack([-s, c], axis=-1)
    root = body.root_pos
    w = body.angvel[..., None]

    pos[:, :, TORSO] = root
    ang[:, :, TORSO] = h
    vel[:, :, TORSO] = body.linvel
    angv[:, :, TORSO] = body.angvel

    head_pos = root + config.head_offset * fwd
    pos[:, :, HEAD] = head_pos
    ang[:, :, HEAD] = h
    vel[:, :, HEAD] = body.linvel + w * _perp(head_pos - root)
    angv[:, :, HEAD] = body.angvel

    for side, sj, ej, ua, fa, fi in _ARMS:
        shoulder = root + side * config.shoulder_offset * left
        anchors[:, :, sj] = shoulder
        sh_vel = body.linvel + w * _perp(shoulder - root)

        a_u = h + side * body.q[..., sj]
        w_u = (body.angvel + side * body.qd[..., sj])[..., None]
        du = np.stack([np.cos(a_u), np.sin(a_u)], axis=-1)
        elbow = shoulder + config.upper_arm_len * du
        anchors[:, :, ej] = elbow
        ua_center = shoulder + 0.5 * config.upper_arm_len * du
        pos[:, :, ua] = ua_center
        ang[:, :, ua] = a_u
        vel[:, :, ua] = sh_vel + w_u * _perp(ua_center - shoulder)
        angv[:, :, ua] = w_u[..., 0]
        el_vel = sh_vel + w_u * _perp(elbow - shoulder)

        a_f = a_u - side * body.q[..., ej]
        w_f = w_u - side * body.qd[..., ej][..., None]
        df = np.stack([np.cos(a_f), np.sin(a_f)], axis=-1)
        fa_center = elbow + 0.5 * config.forearm_len * df
        fist = elbow + config.forearm_len * df
        pos[:, :, fa] = fa_center
        ang[:, :, fa] = a_f
        vel[:, :, fa] = el_vel + w_f * _perp(fa_center - elbow)
        angv[:, :, fa] = w_f[..., 0]
        pos[:, :, fi] = fist
        ang[:, :, fi] = a_f
        vel[:, :, fi] = el_vel + w_f * _perp(fist - elbow)
        angv[:, :, fi] = w_f[..., 0]

    return pos, ang, vel, angv, anchors


def forward_kinematics(fighter: FighterState, config: ArenaConfig) -> PartPose:
    body = _pack([fighter, fighter])
    pos, ang, vel, angv, _ = fk_arrays(body, config)
    return PartPose(pos[0, 0], ang[0, 0], vel[0, 0], angv[0, 0])


def pd_torque(q, qd, target, kp, kd):
    """tau = kp (q* - q) - kd qdot."""
    return kp * (target - q) - kd * qd


# Contact mapping: generalized sign of a world torque on each joint, and
# which joints feel a contact on each part (shoulder only for the upper arm,
# shoulder + elbow for forearm and fist).
_PART_JOINTS = {p: () for p in range(N_PARTS)}
for _side, _sj, _ej, _ua, _fa, _fi in _ARMS:
    _PART_JOINTS[_ua] = ((_sj, _side),)
    _PART_JOINTS[_fa] = ((_sj, _side), (_ej, -_side))
    _PART_JOINTS[_fi] = ((_sj, _side), (_ej, -_side))


def _contacts(pos, vel, radii):
    """All overlapping circle pairs between fighter 0 and fighter 1.

    Returns index arrays (env, part_i, part_j) plus normals (0 -> 1), depths,
    force points and relative approach speeds.
    """
    d = pos[:, 1, None, :, :] - pos[:, 0, :, None, :]      # (B, 8, 8, 2)
    dist = np.linalg.norm(d, axis=-1)
    rsum = radii[:, None] + radii[None, :]
    depth = rsum - dist
    mask = (depth > 0.0) & (dist > 1e-9)
    if not mask.any():
        return None
    env, pi, pj = np.nonzero(mask)
    n = d[env, pi, pj] / dist[env, pi, pj][:, None]
    v_rel = vel[env, 1, pj] - vel[env, 0, pi]
    sep_rate = np.sum(v_rel * n, axis=-1)                  # d(dist)/dt
    point = pos[env, 0, pi] + (radii[pi] - 0.5 * depth[env, pi, pj])[:, None] * n
    return env, pi, pj, n, depth[env, pi, pj], sep_rate, point


def _substep(body: BodyArrays, config: ArenaConfig, inertias, events_out):
    dt = config.dt_sim
    kp = np.array([g[0] for g in config.pd_gains])
    kd = np.array([g[1] for g in config.pd_gains])
    radii = np.asarray(config.part_radii)
    m_total = float(sum(config.masses))
    b = body.root_pos.shape[0]

    pos, ang, vel, angv, anchors = fk_arrays(body, config)

    tau = np.clip(pd_torque(body.q, body.qd, body.targets, kp, kd),
                  -config.torque_limit, config.torque_limit)
    root_force = np.zeros((b, 2, 2))
    root_torque = np.zeros((b, 2))

    hit = _contacts(pos, vel, radii)
    if hit is not None:
        env, pi, pj, n, depth, sep_rate, point = hit
        mag = config.contact_stiffness * depth + config.contact_damping * np.maximum(0.0, -sep_rate)
        for k in range(len(env)):
            e, i, j = int(env[k]), int(pi[k]), int(pj[k])
            f = float(mag[k])
            nf = n[k] * f
            # Equal and opposite through the pair: +nf on fighter 1 part j.
            for fighter, part, force in ((1, j, nf), (0, i, -nf)):
                root_force[e, fighter] += force
                arm = point[k] - body.root_pos[e, fighter]
                root_torque[e, fighter] += arm[0] * force[1] - arm[1] * force[0]
                for joint, sign in _PART_JOINTS[part]:
                    lever = point[k] - anchors[e, fighter, joint]
                    tau[e, fighter, joint] += sign * (lever[0] * force[1] - lever[1] * force[0])
            events_out[int(env[k])].append(ContactEvent(
                src=(0, i), dst=(1, j), normal=n[k].copy(), force_mag=f, point=point[k].copy()))
            events_out[int(env[k])].append(ContactEvent(
                src=(1, j), dst=(0, i), normal=-n[k], force_mag=f, point=point[k].copy()))

    # Root velocity servo toward the commanded local-frame velocity.
    c, s = np.cos(body.heading), np.sin(body.heading)
    vx = c * body.cmd[..., 0] - s * body.cmd[..., 1]
    vy = s * body.cmd[..., 0] + c * body.cmd[..., 1]
    servo = config.root_gains[0] * (np.stack([vx, vy], axis=-1) - body.linvel)
    norm = np.linalg.norm(servo, axis=-1, keepdims=True)
    scale = np.minimum(1.0, config.root_force_limit / np.maximum(norm, 1e-12))
    root_force += servo * scale
    root_torque += np.clip(config.root_gains[1] * (body.cmd[..., 2] - body.angvel),
                           -config.torque_limit, config.torque_limit)

    # Stiff penalty walls on the torso, per axis.
    limit = config.halfextent - radii[TORSO]
    over = np.abs(body.root_pos) - limit
    outward = np.sign(body.root_pos)
    pushing_out = body.linvel * outward > 0
    wall = np.where(over > 0,
                    -outward * (10.0 * config.contact_stiffness) * over
                    - np.where(pushing_out, 5.0 * config.contact_damping * body.linvel, 0.0),
                    0.0)
    root_force += wall

    # Semi-implicit Euler with safety clamps.
    body.linvel += (dt / m_total) * root_force
    speed = np.linalg.norm(body.linvel, axis=-1, keepdims=True)
    body.linvel *= np.minimum(1.0, config.max_root_speed / np.maximum(speed, 1e-12))
    body.angvel = np.clip(body.angvel + (dt / config.root_inertia) * root_torque,
                          -config.max_root_angvel, config.max_root_angvel)
    body.qd = np.clip(body.qd + dt * tau / inertias,
                      -config.max_joint_vel, config.max_joint_vel)

    body.root_pos += dt * body.linvel
    # Wrap by shifting a period instead of np.mod so zero angular velocity
    # leaves the heading bit-identical (equilibrium stays a fixed point).
    h = body.heading + dt * body.angvel
    h = np.where(h > np.pi, h - 2 * np.pi, h)
    body.heading = np.where(h < -np.pi, h + 2 * np.pi, h)
    body.q += dt * body.qd

    lo = np.asarray(config.joint_lo)
    hi = np.asarray(config.joint_hi)
    at_lo = body.q < lo
    at_hi = body.q > hi
    body.q = np.clip(body.q, lo, hi)
    body.qd = np.where(at_lo, np.maximum(body.qd, 0.0), body.qd)
    body.qd = np.where(at_hi, np.minimum(body.qd, 0.0), body.qd)

    for name, arr in (("root position", body.root_pos), ("root velocity", body.linvel),
                      ("heading", body.heading), ("angular velocity", body.angvel),
                      ("joint angles", body.q), ("joint velocities", body.qd)):
        if not np.isfinite(arr).all():
            raise SimulationDiverged(name)


def step_arrays(body: BodyArrays, config: ArenaConfig, inertias=None):
    """Advance one control step (all substeps); returns per-env event lists."""
    if inertias is None:
        inertias = joint_inertias(config)
    events = [[] for _ in range(body.root_pos.shape[0])]
    with np.errstate(invalid="ignore", over="ignore"):
        # Non-finite intermediates surface as SimulationDiverged, not warnings.
        for _ in range(config.substeps):
            _substep(body, config, inertias, events)
    return events


def action_mapping(config: ArenaConfig):
    """(center, half) mapping normalized policy outputs onto physical actions.

    Policy networks emit values near [-1, 1]; physical targets are
    center + half * a.  Velocity and yaw scale to the command caps, joint
    targets to their limit range, so every demo pose sits within one unit
    of the policy's near-zero initialization.
    """
    lo = np.asarray(config.joint_lo)
    hi = np.asarray(config.joint_hi)
    center = np.concatenate([[0.0, 0.0, 0.0], (lo + hi) / 2.0])
    half = np.concatenate([[config.max_lin_speed, config.max_lin_speed,
                            config.max_yaw_rate], (hi - lo) / 2.0])
    return center, half


def apply_action_arrays(body: BodyArrays, config: ArenaConfig, actions: np.ndarray) -> None:
    """Clamp and store commands: (B, 2, 7) = local linvel(2), yaw rate, 4 joint targets."""
    actions = np.asarray(actions, dtype=np.float64)
    if not np.isfinite(actions).all():
        raise ValueError("non-finite action entries")
    v = actions[..., 0:2]
    speed = np.linalg.norm(v, axis=-1, keepdims=True)
    body.cmd[..., 0:2] = v * np.minimum(1.0, config.max_lin_speed / np.maximum(speed, 1e-12))
    body.cmd[..., 2] = np.clip(actions[..., 2], -config.max_yaw_rate, config.max_yaw_rate)
    body.targets = np.clip(actions[..., 3:7], config.joint_lo, config.joint_hi)


# --- single-arena API -------------------------------------------------------

def _pack(fighters) -> BodyArrays:
    body = BodyArrays.zeros(1)
    for i, f in enumerate(fighters[:2]):
        body.root_pos[0, i] = f.root_pos
        body.heading[0, i] = f.root_heading
        body.linvel[0, i] = f.root_linvel
        body.angvel[0, i] = f.root_angvel
        body.q[0, i] = f.joint_angles
        body.qd[0, i] = f.joint_vels
        body.targets[0, i] = f.pd_targets
        body.cmd[0, i] = f.root_cmd
    return body


def _unpack(body: BodyArrays, fighters) -> None:
    for i, f in enumerate(fighters[:2]):
        f.root_pos = body.root_pos[0, i].copy()
        f.root_heading = float(body.heading[0, i])
        f.root_linvel = body.linvel[0, i].copy()
        f.root_angvel = float(body.angvel[0, i])
        f.joint_angles = body.q[0, i].copy()
        f.joint_vels = body.qd[0, i].copy()
        f.pd_targets = body.targets[0, i].copy()
        f.root_cmd = body.cmd[0, i].copy()


def _spawn_fighters(config: ArenaConfig, rng: np.random.Generator,
                    init_mode: str, demo_source) -> list:
    margin = config.halfextent - 0.5
    for _ in range(100):
        pts = rng.uniform(-margin, margin, size=(2, 2))
        if np.linalg.norm(pts[0] - pts[1]) >= config.min_separation:
            break
    else:
        raise RuntimeError(
            "could not place fighters with the required separation; arena over-constrained")
    headings = rng.uniform(-np.pi, np.pi, size=2)
    fighters = []
    for i in range(2):
        q = np.zeros(N_JOINTS)
        qd = np.zeros(N_JOINTS)
        if init_mode == "from_demo":
            if demo_source is None:
                raise ValueError("from_demo spawn requires a demo dataset")
            q, qd = demo_source.sample_pose(rng)
            q = np.clip(q, config.joint_lo, config.joint_hi)
        elif init_mode != "random":
            raise ValueError(f"unknown init mode {init_mode!r}")
        fighters.append(FighterState(
            root_pos=pts[i].copy(), root_heading=float(headings[i]),
            root_linvel=np.zeros(2), root_angvel=0.0,
            joint_angles=q.astype(np.float64), joint_vels=qd.astype(np.float64),
            pd_targets=q.astype(np.float64).copy(), root_cmd=np.zeros(3),
        ))
    return fighters


def spawn_arena(config: ArenaConfig, seed: int, init_mode: str = "random",
                demo_source=None) -> ArenaState:
    """Place two fighters with rejection-sampled separation >= min_separation."""
    config.validate()
    rng = np.random.default_rng(seed)
    return ArenaState(config, _spawn_fighters(config, rng, init_mode, demo_source))


def apply_actions(state: ArenaState, actions) -> ArenaState:
    actions = np.asarray(actions, dtype=np.float64).reshape(1, 2, 7)
    body = _pack(state.fighters)
    apply_action_arrays(body, state.config, actions)
    _unpack(body, state.fighters)
    return state


def step_physics(state: ArenaState) -> tuple[ArenaState, list]:
    body = _pack(state.fighters)
    events = step_arrays(body, state.config)
    _unpack(body, state.fighters)
    state.step_count += 1
    return state, events[0]


def damage_tally(contacts, receiver: int) -> float:
    """Total opponent-applied contact force on the receiver's head and torso."""
    total = 0.0
    for ev in contacts:
        if ev.src[0] != receiver and ev.dst[1] in DAMAGE_PARTS:
            total += ev.force_mag
    return total


class VecArena:
    """B independent arenas stepping together on stacked arrays."""

    def __init__(self, config: ArenaConfig, num_envs: int, seed: int,
                 demo_source=None, demo_spawn_frac: float = 0.0):
        config.validate()
        self.config = config
        self.num_envs = num_envs
        self.demo_source = demo_source
        self.demo_spawn_frac = demo_spawn_frac
        self.rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        self.inertias = joint_inertias(config)
        self.body = BodyArrays.zeros(num_envs)
        self.step_count = np.zeros(num_envs, dtype=np.int64)
        self._fk = None
        for i in range(num_envs):
            self.reset_env(i)

    def reset_env(self, i: int) -> None:
        mode = "random"
        if self.demo_source is not None and self.rng.random() < self.demo_spawn_frac:
            mode = "from_demo"
        fighters = _spawn_fighters(self.config, self.rng, mode, self.demo_source)
        one = _pack(fighters)
        for name in ("root_pos", "heading", "linvel", "angvel", "q", "qd", "targets", "cmd"):
            getattr(self.body, name)[i] = getattr(one, name)[0]
        self.step_count[i] = 0
        self._fk = None

    def fk(self):
        if self._fk is None:
            self._fk = fk_arrays(self.body, self.config)
        return self._fk

    def apply_actions(self, actions: np.ndarray) -> None:
        apply_action_arrays(self.body, self.config, actions)

    def step(self) -> list:
        events = step_arrays(self.body, self.config, self.inertias)
        self.step_count += 1
        self._fk = None
        return events

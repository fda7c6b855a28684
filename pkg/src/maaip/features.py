"""Observation features for policies and discriminators.

Everything an agent sees is expressed in its own root frame (x forward,
y left), which makes every feature invariant to global translation and
rotation of the scene.  Self features cover all 8 body parts; opponent
features are a reduced set (root pose/velocity plus head, torso and both
fists).  Discriminators consume raw features; policy and value inputs go
through the running normalizer.

Layout (documented in docs/observation-layout.md, versioned by
``config.LAYOUT_VERSION``):

* self obs, 56 = 8 parts x [pos_local(2), cos, sin, vel_local(2), angvel]
* opponent obs, 23 = root [pos(2), cos, sin, vel(2), angvel] + 4 parts x
  [pos(2), vel(2)] for head, torso, fist_l, fist_r
* motion transition 112 = [self_t, self_t+1]
* interaction transition 135 = [self_t, opp_t, self_t+1]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .config import FIST_L, FIST_R, HEAD, TORSO, ArenaConfig

SELF_OBS_DIM = 56
OPP_OBS_DIM = 23
OBS_DIM = SELF_OBS_DIM + OPP_OBS_DIM  # 79
MOTION_TRANSITION_DIM = 2 * SELF_OBS_DIM  # 112
INTERACTION_TRANSITION_DIM = 2 * SELF_OBS_DIM + OPP_OBS_DIM  # 135
HEADING_DIM = 2
AGENT_ONEHOT_DIM = 2

_OPP_PARTS = (HEAD, TORSO, FIST_L, FIST_R)


def policy_feature_dim(heading: bool) -> int:
    """Width of the normalized feature block of a policy input (no one-hot)."""
    return OBS_DIM + (HEADING_DIM if heading else 0)


def policy_input_dim(heading: bool) -> int:
    return policy_feature_dim(heading) + AGENT_ONEHOT_DIM


def value_input_dim(heading: bool) -> int:
    return 2 * policy_feature_dim(heading)


@dataclass
class ObservationPair:
    """One agent's view: own body, the opponent, optional target direction."""

    o_self: np.ndarray            # (56,)
    o_opp: np.ndarray             # (23,)
    heading: np.ndarray | None = None  # (2,) unit vector in the self frame

    def features(self) -> np.ndarray:
        parts = [self.o_self, self.o_opp]
        if self.heading is not None:
            parts.append(self.heading)
        return np.concatenate(parts)


def world_to_local(root_pos, root_heading, point, kind: str = "point") -> np.ndarray:
    """Express a world point or vector in the frame anchored at the root.

    Points are translated then rotated; vectors only rotate.
    """
    p = np.asarray(point, dtype=np.float64)
    if kind == "point":
        p = p - np.asarray(root_pos, dtype=np.float64)
    elif kind != "vector":
        raise ValueError(f"kind must be 'point' or 'vector', got {kind!r}")
    c, s = np.cos(root_heading), np.sin(root_heading)
    return np.array([c * p[0] + s * p[1], -s * p[0] + c * p[1]])


def _rot_to_local(c, s, v):
    """Rotate world vectors v[..., 2] by -heading; c, s broadcast against v[..., 0]."""
    x = c * v[..., 0] + s * v[..., 1]
    y = -s * v[..., 0] + c * v[..., 1]
    return np.stack([x, y], axis=-1)


def observations_from_parts(root_pos, heading, root_vel, root_angvel,
                            part_pos, part_ang, part_vel, part_angvel,
                            heading_target=None):
    """Batched observation builder over (..., 2 fighters) state arrays.

    Shapes: root_pos (..., 2, 2), heading (..., 2), part_pos (..., 2, 8, 2),
    part_ang (..., 2, 8), matching velocities.  Returns (self_obs, opp_obs,
    heading_local) with shapes (..., 2, 56), (..., 2, 23) and (..., 2, 2)
    (None when no target is given).  Fighter axis index i is "self", 1-i the
    opponent.
    """
    root_pos = np.asarray(root_pos, dtype=np.float64)
    lead = root_pos.shape[:-2]
    c, s = np.cos(heading), np.sin(heading)

    # Self features, per fighter in its own frame.
    rel = part_pos - root_pos[..., :, None, :]
    pos_local = _rot_to_local(c[..., None], s[..., None], rel)
    ang_rel = part_ang - heading[..., :, None]
    vel_local = _rot_to_local(c[..., None], s[..., None], part_vel)
    self_obs = np.concatenate([
        pos_local,
        np.cos(ang_rel)[..., None],
        np.sin(ang_rel)[..., None],
        vel_local,
        part_angvel[..., None],
    ], axis=-1).reshape(*lead, 2, SELF_OBS_DIM)

    # Opponent features: swap fighter axis, express in the self frame.
    opp_root = np.flip(root_pos, axis=-2)
    opp_head = np.flip(heading, axis=-1)
    opp_vel = np.flip(root_vel, axis=-2)
    opp_angvel = np.flip(root_angvel, axis=-1)
    root_local = _rot_to_local(c, s, opp_root - root_pos)
    head_rel = opp_head - heading
    velr_local = _rot_to_local(c, s, opp_vel)
    sel = list(_OPP_PARTS)
    opp_part_pos = np.flip(part_pos[..., sel, :], axis=-3)
    opp_part_vel = np.flip(part_vel[..., sel, :], axis=-3)
    opp_pos_local = _rot_to_local(c[..., None], s[..., None], opp_part_pos - root_pos[..., :, None, :])
    opp_vel_local = _rot_to_local(c[..., None], s[..., None], opp_part_vel)
    opp_parts = np.concatenate([opp_pos_local, opp_vel_local], axis=-1).reshape(*lead, 2, 16)
    opp_obs = np.concatenate([
        root_local,
        np.cos(head_rel)[..., None],
        np.sin(head_rel)[..., None],
        velr_local,
        opp_angvel[..., None],
        opp_parts,
    ], axis=-1)

    heading_local = None
    if heading_target is not None:
        heading_local = _rot_to_local(c, s, np.asarray(heading_target, dtype=np.float64))
    return self_obs, opp_obs, heading_local


def build_observation(self_state, opp_state, config: ArenaConfig,
                      heading=None) -> ObservationPair:
    """Single-pair observation from two fighter states."""
    from .arena import forward_kinematics

    states = (self_state, opp_state)
    root_pos = np.stack([f.root_pos for f in states])[None]
    head = np.array([[f.root_heading for f in states]])
    root_vel = np.stack([f.root_linvel for f in states])[None]
    root_angvel = np.array([[f.root_angvel for f in states]])
    pp, pa, pv, pw = [], [], [], []
    for f in states:
        parts = forward_kinematics(f, config)
        pp.append(parts.pos)
        pa.append(parts.angle)
        pv.append(parts.vel)
        pw.append(parts.angvel)
    target = None
    if heading is not None:
        h = np.asarray(heading, dtype=np.float64)
        n = np.linalg.norm(h)
        if not np.isfinite(n) or n < 1e-9:
            raise ValueError("heading must be a nonzero finite vector")
        target = np.stack([h / n, h / n])[None]
    self_obs, opp_obs, heading_local = observations_from_parts(
        root_pos, head, root_vel, root_angvel,
        np.stack(pp)[None], np.stack(pa)[None], np.stack(pv)[None], np.stack(pw)[None],
        target,
    )
    return ObservationPair(
        o_self=self_obs[0, 0],
        o_opp=opp_obs[0, 0],
        heading=None if heading_local is None else heading_local[0, 0],
    )


def motion_transition(o_self_t: np.ndarray, o_self_t1: np.ndarray) -> np.ndarray:
    """Discriminator input for single-body motion: [self_t, self_t+1]."""
    out = np.concatenate([o_self_t, o_self_t1], axis=-1)
    assert out.shape[-1] == MOTION_TRANSITION_DIM
    return out


def interaction_transition(o_t: ObservationPair, o_self_t1: np.ndarray) -> np.ndarray:
    """Discriminator input for reactions: [self_t, opp_t, self_t+1].

    The optional heading conditioning never reaches discriminator inputs.
    """
    out = np.concatenate([o_t.o_self, o_t.o_opp, o_self_t1], axis=-1)
    assert out.shape[-1] == INTERACTION_TRANSITION_DIM
    return out


def exp_map_to_axis_angle(q) -> tuple[np.ndarray, float]:
    """Decode a 3D exponential-map rotation into (unit axis, angle).

    Near-zero encodings map to the identity convention (x-axis, 0).
    """
    q = np.asarray(q, dtype=np.float64)
    angle = float(np.linalg.norm(q))
    if angle < 1e-8:
        return np.array([1.0, 0.0, 0.0]), 0.0
    return q / angle, angle


class RunningNormalizer:
    """Streaming mean/variance (Welford) with clipped standardization."""

    def __init__(self, dim: int, clip: float = 5.0):
        self.dim = dim
        self.clip = clip
        self.count = 0.0
        self.mean = np.zeros(dim, dtype=np.float64)
        self.m2 = np.zeros(dim, dtype=np.float64)

    @property
    def var(self) -> np.ndarray:
        if self.count < 1.0:
            return np.ones(self.dim, dtype=np.float64)
        return self.m2 / self.count

    def update(self, batch: np.ndarray) -> "RunningNormalizer":
        batch = np.asarray(batch, dtype=np.float64).reshape(-1, self.dim)
        if batch.shape[1] != self.dim:
            raise ValueError(f"batch dim {batch.shape[1]} != normalizer dim {self.dim}")
        n = batch.shape[0]
        if n == 0:
            return self
        b_mean = batch.mean(axis=0)
        b_m2 = ((batch - b_mean) ** 2).sum(axis=0)
        delta = b_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + b_m2 + delta * delta * (self.count * n / total)
        self.count = total
        return self

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"input dim {x.shape[-1]} != normalizer dim {self.dim}")
        if self.count < 1.0:
            scaled = x
        else:
            scaled = (x - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(scaled, -self.clip, self.clip)

    def invert(self, xhat: np.ndarray) -> np.ndarray:
        """Inverse of apply on the unclipped region."""
        if self.count < 1.0:
            return np.asarray(xhat, dtype=np.float64)
        return xhat * np.sqrt(self.var + 1e-8) + self.mean

    def to_bytes(self) -> bytes:
        head = struct.pack("<Idd", self.dim, self.clip, self.count)
        return b"NRM1" + head + self.mean.tobytes() + self.m2.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "RunningNormalizer":
        if blob[:4] != b"NRM1":
            raise ValueError("bad normalizer blob")
        dim, clip, count = struct.unpack_from("<Idd", blob, 4)
        off = 4 + struct.calcsize("<Idd")
        n = cls(dim, clip)
        n.count = count
        n.mean = np.frombuffer(blob, dtype=np.float64, count=dim, offset=off).copy()
        n.m2 = np.frombuffer(blob, dtype=np.float64, count=dim, offset=off + 8 * dim).copy()
        return n

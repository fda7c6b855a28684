"""Physics contracts: determinism, contacts, PD control, boundedness."""

import numpy as np
import pytest

from maaip import arena
from maaip.arena import (
    ContactEvent,
    FighterState,
    SimulationDiverged,
    VecArena,
    apply_actions,
    damage_tally,
    forward_kinematics,
    pd_torque,
    spawn_arena,
    step_physics,
)
from maaip.config import FIST_L, HEAD, TORSO, ArenaConfig

CFG = ArenaConfig()


def states_equal(a, b) -> bool:
    for fa, fb in zip(a.fighters, b.fighters):
        checks = [
            np.array_equal(fa.root_pos, fb.root_pos),
            fa.root_heading == fb.root_heading,
            np.array_equal(fa.root_linvel, fb.root_linvel),
            fa.root_angvel == fb.root_angvel,
            np.array_equal(fa.joint_angles, fb.joint_angles),
            np.array_equal(fa.joint_vels, fb.joint_vels),
            np.array_equal(fa.pd_targets, fb.pd_targets),
            np.array_equal(fa.root_cmd, fb.root_cmd),
        ]
        if not all(checks):
            return False
    return True


# --- spawning ----------------------------------------------------------------

def test_spawn_deterministic():
    a = spawn_arena(CFG, seed=42)
    b = spawn_arena(CFG, seed=42)
    assert states_equal(a, b)


def test_spawn_bounds_and_separation():
    s = spawn_arena(CFG, seed=1)
    p0, p1 = (f.root_pos for f in s.fighters)
    assert np.all(np.abs(p0) <= CFG.halfextent)
    assert np.all(np.abs(p1) <= CFG.halfextent)
    assert np.linalg.norm(p0 - p1) >= CFG.min_separation


def test_spawn_overconstrained_errors():
    import dataclasses
    tiny = dataclasses.replace(CFG, halfextent=0.55, min_separation=0.6)
    with pytest.raises(RuntimeError):
        spawn_arena(tiny, seed=0)


def test_spawn_from_demo_empty_errors():
    class Empty:
        def sample_pose(self, rng):
            raise ValueError("empty demo dataset")

    with pytest.raises(ValueError):
        spawn_arena(CFG, seed=0, init_mode="from_demo", demo_source=Empty())


# --- actions -----------------------------------------------------------------

def test_pd_formula():
    assert pd_torque(0.0, 0.0, 1.0, kp=1.0, kd=0.0) == 1.0
    assert pd_torque(0.7, 0.0, 0.7, kp=50.0, kd=5.0) == 0.0


def test_apply_actions_clamps_targets():
    s = spawn_arena(CFG, seed=3)
    acts = np.zeros((2, 7))
    acts[0, 3] = 10.0  # left shoulder, limit 2.5
    apply_actions(s, acts)
    assert s.fighters[0].pd_targets[0] == 2.5


def test_apply_actions_clamps_speed():
    s = spawn_arena(CFG, seed=3)
    acts = np.zeros((2, 7))
    acts[0, 0:2] = (10.0, 0.0)
    acts[0, 2] = -99.0
    apply_actions(s, acts)
    assert np.isclose(np.linalg.norm(s.fighters[0].root_cmd[0:2]), CFG.max_lin_speed)
    assert s.fighters[0].root_cmd[2] == -CFG.max_yaw_rate


def test_apply_actions_rejects_nonfinite():
    s = spawn_arena(CFG, seed=3)
    acts = np.zeros((2, 7))
    acts[1, 4] = np.nan
    with pytest.raises(ValueError):
        apply_actions(s, acts)


# --- stepping ----------------------------------------------------------------

def far_apart_state():
    s = spawn_arena(CFG, seed=9)
    s.fighters[0].root_pos = np.array([-2.0, 0.0])
    s.fighters[1].root_pos = np.array([2.0, 0.0])
    for f in s.fighters:
        f.root_heading = 0.0
        f.root_linvel[:] = 0.0
        f.root_angvel = 0.0
        f.joint_angles[:] = (0.0, 0.0, 0.5, 0.5)
        f.joint_vels[:] = 0.0
        f.pd_targets = f.joint_angles.copy()
        f.root_cmd[:] = 0.0
    return s


def test_equilibrium_is_fixed_point():
    s = far_apart_state()
    before = s.copy()
    s, events = step_physics(s)
    assert events == []
    assert states_equal(before, s)


def test_step_determinism_with_actions():
    def run():
        s = spawn_arena(CFG, seed=77)
        rng = np.random.default_rng(5)
        traj = []
        for _ in range(40):
            acts = rng.uniform(-1, 1, size=(2, 7))
            apply_actions(s, acts)
            s, _ = step_physics(s)
            traj.append(np.concatenate([f.root_pos for f in s.fighters]))
        return np.array(traj)

    assert np.array_equal(run(), run())


def test_contact_force_matches_penalty_formula():
    import dataclasses
    # Shrink everything except the torsos so only they can touch.
    cfg = dataclasses.replace(
        CFG, part_radii=(0.1, 0.001, 0.001, 0.001, 0.001, 0.001, 0.001, 0.001),
        head_offset=0.0, upper_arm_len=0.05, forearm_len=0.05,
        contact_stiffness=1000.0, contact_damping=10.0)
    s = spawn_arena(cfg, seed=1)
    s.fighters[0].root_pos = np.array([0.0, 0.0])
    s.fighters[1].root_pos = np.array([0.15, 0.0])
    for f in s.fighters:
        f.root_linvel[:] = 0.0
        f.root_angvel = 0.0
        f.root_heading = 0.0
        f.joint_angles[:] = 0.0
        f.joint_vels[:] = 0.0
        f.pd_targets[:] = 0.0
        f.root_cmd[:] = 0.0
    _, events = step_physics(s)
    torso_hits = [e for e in events if e.src[1] == TORSO and e.dst[1] == TORSO]
    # Two substeps, each yielding an action/reaction pair; the first substep
    # sees the untouched geometry: depth 0.05 at rest -> 1000 * 0.05 = 50 N.
    assert len(torso_hits) == 4
    first = [e for e in torso_hits[:2]]
    assert np.isclose(first[0].force_mag, 50.0)
    assert np.isclose(first[1].force_mag, 50.0)
    assert np.allclose(first[0].normal, -first[1].normal)


def test_every_event_is_paired():
    s = spawn_arena(CFG, seed=13)
    s.fighters[0].root_pos = np.array([-0.3, 0.0])
    s.fighters[1].root_pos = np.array([0.3, 0.0])
    s.fighters[0].root_heading = 0.0
    s.fighters[1].root_heading = np.pi
    _, events = step_physics(s)
    assert len(events) > 0 and len(events) % 2 == 0
    for k in range(0, len(events), 2):
        a, b = events[k], events[k + 1]
        assert a.src == b.dst and a.dst == b.src
        assert np.isclose(a.force_mag, b.force_mag)
        assert np.allclose(a.normal, -b.normal)


def test_contact_forces_sum_to_zero():
    s = spawn_arena(CFG, seed=13)
    s.fighters[0].root_pos = np.array([-0.25, 0.05])
    s.fighters[1].root_pos = np.array([0.25, -0.05])
    total = np.zeros(2)
    for _ in range(30):
        s, events = step_physics(s)
        for e in events:
            total += e.force_mag * e.normal
    assert np.allclose(total, 0.0, atol=1e-9)


def test_penalty_force_zero_iff_no_overlap_and_monotone():
    import dataclasses
    cfg = dataclasses.replace(
        CFG, part_radii=(0.1, 0.001, 0.001, 0.001, 0.001, 0.001, 0.001, 0.001),
        head_offset=0.0, upper_arm_len=0.05, forearm_len=0.05)
    forces = []
    for gap in (0.25, 0.21, 0.19, 0.15, 0.12):
        s = spawn_arena(cfg, seed=1)
        s.fighters[0].root_pos = np.array([0.0, 0.0])
        s.fighters[1].root_pos = np.array([gap, 0.0])
        for f in s.fighters:
            f.root_linvel[:] = 0.0
            f.root_angvel = 0.0
            f.joint_angles[:] = 0.0
            f.joint_vels[:] = 0.0
            f.pd_targets[:] = 0.0
            f.root_cmd[:] = 0.0
        _, events = step_physics(s)
        torso = [e for e in events if e.src[1] == TORSO and e.dst[1] == TORSO]
        forces.append(torso[0].force_mag if torso else 0.0)
    assert forces[0] == 0.0 and forces[1] == 0.0  # separated or touching
    assert forces[2] > 0.0
    assert forces[2] < forces[3] < forces[4]  # increasing with depth


def test_substep_count_contract():
    assert CFG.substeps == 2
    assert np.isclose(CFG.control_dt / CFG.dt_sim, 2.0)
    CFG.validate()


def test_divergence_raises():
    s = far_apart_state()
    s.fighters[0].root_linvel = np.array([np.inf, 0.0])
    with pytest.raises(SimulationDiverged) as err:
        step_physics(s)
    assert "root" in str(err.value)


# --- damage tally -------------------------------------------------------------

def ev(src, dst, mag):
    return ContactEvent(src=src, dst=dst, normal=np.array([1.0, 0.0]),
                        force_mag=mag, point=np.zeros(2))


def test_damage_tally_empty():
    assert damage_tally([], receiver=0) == 0.0


def test_damage_tally_single_hit():
    events = [ev((1, FIST_L), (0, HEAD), 50.0), ev((0, HEAD), (1, FIST_L), 50.0)]
    assert damage_tally(events, receiver=0) == 50.0
    assert damage_tally(events, receiver=1) == 0.0


def test_damage_tally_ignores_fist_on_fist():
    events = [ev((1, FIST_L), (0, FIST_L), 80.0), ev((0, FIST_L), (1, FIST_L), 80.0)]
    assert damage_tally(events, receiver=0) == 0.0


# --- forward kinematics --------------------------------------------------------

def test_fk_rest_pose_geometry():
    f = FighterState(
        root_pos=np.zeros(2), root_heading=0.0, root_linvel=np.zeros(2),
        root_angvel=0.0, joint_angles=np.zeros(4), joint_vels=np.zeros(4),
        pd_targets=np.zeros(4), root_cmd=np.zeros(3))
    parts = forward_kinematics(f, CFG)
    reach = CFG.upper_arm_len + CFG.forearm_len
    assert np.allclose(parts.pos[FIST_L], (reach, CFG.shoulder_offset))
    assert np.allclose(parts.pos[HEAD], (CFG.head_offset, 0.0))
    assert np.allclose(parts.pos[TORSO], (0.0, 0.0))


def test_fk_translation_equivariance():
    rng = np.random.default_rng(2)
    q = rng.uniform(CFG.joint_lo, CFG.joint_hi)
    base = FighterState(np.zeros(2), 0.3, np.zeros(2), 0.0, q, np.zeros(4), q.copy(), np.zeros(3))
    moved = base.copy()
    moved.root_pos = np.array([1.0, 2.0])
    a = forward_kinematics(base, CFG)
    b = forward_kinematics(moved, CFG)
    assert np.allclose(b.pos, a.pos + np.array([1.0, 2.0]))
    assert np.allclose(b.angle, a.angle)


def test_fk_rotation_equivariance():
    rng = np.random.default_rng(3)
    q = rng.uniform(CFG.joint_lo, CFG.joint_hi)
    base = FighterState(np.zeros(2), 0.0, np.zeros(2), 0.0, q, np.zeros(4), q.copy(), np.zeros(3))
    rot = base.copy()
    rot.root_heading = np.pi / 2
    a = forward_kinematics(base, CFG)
    b = forward_kinematics(rot, CFG)
    rmat = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert np.allclose(b.pos, a.pos @ rmat.T, atol=1e-12)


# --- long-run boundedness -------------------------------------------------------

def test_boundedness_random_actions_long_run():
    vec = VecArena(CFG, num_envs=4, seed=100)
    rng = np.random.default_rng(0)
    steps = 2500  # x 4 envs = 10k env-steps
    for t in range(steps):
        acts = rng.uniform(-3, 3, size=(4, 2, 7))
        vec.apply_actions(acts)
        vec.step()
        if t % 250 == 0 or t == steps - 1:
            assert np.all(np.abs(vec.body.root_pos) <= CFG.halfextent)
            assert np.all(np.linalg.norm(vec.body.linvel, axis=-1) <= CFG.max_root_speed + 1e-9)
            assert np.all(np.abs(vec.body.angvel) <= CFG.max_root_angvel)
            assert np.all(vec.body.q >= np.asarray(CFG.joint_lo) - 1e-12)
            assert np.all(vec.body.q <= np.asarray(CFG.joint_hi) + 1e-12)
            assert np.all(np.abs(vec.body.qd) <= CFG.max_joint_vel)
    for arr in (vec.body.root_pos, vec.body.linvel, vec.body.q, vec.body.qd):
        assert np.isfinite(arr).all()


def test_vec_matches_single_arena():
    # One env stepped through VecArena equals the single-arena API.
    vec = VecArena(CFG, num_envs=1, seed=5)
    single = arena.ArenaState(CFG, [
        FighterState(vec.body.root_pos[0, i].copy(), float(vec.body.heading[0, i]),
                     vec.body.linvel[0, i].copy(), float(vec.body.angvel[0, i]),
                     vec.body.q[0, i].copy(), vec.body.qd[0, i].copy(),
                     vec.body.targets[0, i].copy(), vec.body.cmd[0, i].copy())
        for i in range(2)])
    rng = np.random.default_rng(8)
    for _ in range(25):
        acts = rng.uniform(-1, 1, size=(1, 2, 7))
        vec.apply_actions(acts)
        apply_actions(single, acts[0])
        vec.step()
        step_physics(single)
    assert np.allclose(vec.body.root_pos[0, 0], single.fighters[0].root_pos, atol=0)
    assert np.allclose(vec.body.q[0, 1], single.fighters[1].joint_angles, atol=0)

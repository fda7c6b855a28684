"""Expert FSM behavior, dataset generation, file round-trips, transitions."""

import numpy as np
import pytest

from maaip import demos
from maaip.arena import apply_actions, spawn_arena, step_physics
from maaip.config import ArenaConfig
from maaip.demos import (
    STYLES,
    DemoClip,
    DemoDataset,
    ExpertState,
    demo_to_transitions,
    expert_step,
    generate_interaction_dataset,
    generate_single_dataset,
    read_dataset,
    write_dataset,
)
from maaip.features import INTERACTION_TRANSITION_DIM, MOTION_TRANSITION_DIM, ObservationPair

CFG = ArenaConfig()


def obs_with_opponent_at(dist, fist_pos=None, fist_vel=None) -> ObservationPair:
    o_opp = np.zeros(23)
    o_opp[0] = dist
    o_opp[2] = 1.0  # cos of relative heading
    if fist_pos is not None:
        o_opp[15:17] = fist_pos
        o_opp[17:19] = fist_vel if fist_vel is not None else (0, 0)
    else:
        o_opp[15:17] = (dist, 0.3)
        o_opp[19:21] = (dist, -0.3)
    return ObservationPair(o_self=np.zeros(56), o_opp=o_opp)


# --- expert FSM ----------------------------------------------------------------

def test_expert_approaches_when_far():
    style = STYLES["outfighter"]
    fsm = ExpertState()
    action, fsm = expert_step(style, fsm, obs_with_opponent_at(3.5), np.random.default_rng(0))
    assert fsm.mode == "approach"
    assert action[0] > 0.5  # forward command toward the opponent


def test_expert_dodges_incoming_fist():
    style = STYLES["outfighter"]
    fsm = ExpertState(mode="guard", timer=10)
    # Fist 0.3 m from the head, closing fast.
    obs = obs_with_opponent_at(0.9, fist_pos=(0.35, 0.15), fist_vel=(-2.0, -0.5))
    action, fsm = expert_step(style, fsm, obs, np.random.default_rng(0))
    assert fsm.mode == "dodge"
    assert abs(action[1]) > 1.0  # lateral burst


def test_expert_styles_have_distinct_attack_occupancy():
    rng_a = np.random.default_rng(7)
    rng_b = np.random.default_rng(7)  # same seed stream
    counts = {}
    for name, rng in (("outfighter", rng_a), ("swarmer", rng_b)):
        style = STYLES[name]
        fsm = ExpertState()
        jab = 0
        for _ in range(1000):
            _, fsm = expert_step(style, fsm, obs_with_opponent_at(style.engagement_distance),
                                 rng)
            jab += fsm.mode == "jab"
        counts[name] = jab
    assert counts["outfighter"] > 2 * counts["swarmer"]


def test_expert_actions_within_limits():
    style = STYLES["swarmer"]
    fsm = ExpertState()
    rng = np.random.default_rng(1)
    state = spawn_arena(CFG, seed=2)
    for _ in range(50):
        from maaip.features import build_observation
        obs = build_observation(state.fighters[0], state.fighters[1], CFG)
        action, fsm = expert_step(style, fsm, obs, rng)
        assert np.isfinite(action).all()
        acts = np.zeros((2, 7))
        acts[0] = action
        apply_actions(state, acts)  # raises on invalid actions
        step_physics(state)


# --- dataset generation -----------------------------------------------------------

def test_single_dataset_frame_accounting():
    ds = generate_single_dataset(STYLES["outfighter"], seconds=40, seed=3, config=CFG)
    assert ds.total_frames() == 40 * 30
    assert ds.n_chars == 1
    for clip in ds.clips:
        assert clip.n_frames >= 2
        assert clip.frames.shape[1:] == (1, demos.FRAME_WIDTH)


def test_single_dataset_deterministic():
    a = generate_single_dataset(STYLES["swarmer"], seconds=12, seed=9, config=CFG)
    b = generate_single_dataset(STYLES["swarmer"], seconds=12, seed=9, config=CFG)
    for ca, cb in zip(a.clips, b.clips):
        assert np.array_equal(ca.frames, cb.frames)


def test_single_dataset_frames_valid():
    ds = generate_single_dataset(STYLES["fullcommit"], seconds=15, seed=4, config=CFG)
    for clip in ds.clips:
        assert np.isfinite(clip.frames).all()
        q = clip.frames[:, :, 6:10]
        assert np.all(q >= np.asarray(CFG.joint_lo) - 1e-9)
        assert np.all(q <= np.asarray(CFG.joint_hi) + 1e-9)


def test_interaction_dataset_shape_and_roles():
    ds = generate_interaction_dataset(STYLES["outfighter"], STYLES["swarmer"],
                                      rounds=3, seed=5, config=CFG, round_seconds=10)
    assert len(ds.clips) == 3
    for clip in ds.clips:
        assert clip.n_frames == 300
        assert clip.n_chars == 2
        assert clip.styles[0] == "outfighter"
    assert ds.styles == ["outfighter", "swarmer"]


def test_interaction_initial_separation():
    ds = generate_interaction_dataset(STYLES["swarmer"], STYLES["swarmer"],
                                      rounds=3, seed=6, config=CFG, round_seconds=5)
    for clip in ds.clips:
        p0 = clip.frames[0, 0, 0:2]
        p1 = clip.frames[0, 1, 0:2]
        assert np.linalg.norm(p0 - p1) >= 2.5


def test_style_separability_engagement_distance():
    # Mean engagement distance across seeds must separate the styles by
    # at least 3x the within-style spread.
    def mean_dist(style, seed):
        ds = generate_interaction_dataset(style, style, rounds=1, seed=seed,
                                          config=CFG, round_seconds=15)
        f = ds.clips[0].frames
        return float(np.mean(np.linalg.norm(f[:, 0, 0:2] - f[:, 1, 0:2], axis=1)))

    a = np.array([mean_dist(STYLES["outfighter"], s) for s in (0, 1, 2)])
    b = np.array([mean_dist(STYLES["swarmer"], s) for s in (0, 1, 2)])
    spread = max(a.std(), b.std(), 1e-6)
    assert abs(a.mean() - b.mean()) >= 3.0 * spread


# --- pose sampling -----------------------------------------------------------------

def test_sample_pose_and_empty_error():
    ds = generate_single_dataset(STYLES["outfighter"], seconds=10, seed=1, config=CFG)
    q, qd = ds.sample_pose(np.random.default_rng(0))
    assert q.shape == (4,) and qd.shape == (4,)
    empty = DemoDataset(fps=30.0, n_chars=1, styles=[], arena_sig=CFG.geometry_signature())
    with pytest.raises(ValueError):
        empty.sample_pose(np.random.default_rng(0))


# --- transitions --------------------------------------------------------------------

def test_transition_counts_and_widths():
    ds = generate_single_dataset(STYLES["outfighter"], seconds=12, seed=2, config=CFG)
    batch = demo_to_transitions(ds, "single", CFG)
    expected = sum(c.n_frames - 1 for c in ds.clips)
    assert batch.data.shape == (expected, MOTION_TRANSITION_DIM)
    assert batch.source == "expert"

    di = generate_interaction_dataset(STYLES["outfighter"], STYLES["swarmer"],
                                      rounds=2, seed=3, config=CFG, round_seconds=5)
    for agent in (0, 1):
        ib = demo_to_transitions(di, ("interaction", agent), CFG)
        assert ib.data.shape == (2 * (150 - 1), INTERACTION_TRANSITION_DIM)


def test_transitions_do_not_span_clips():
    # Two clips with wildly different, internally constant poses: every
    # transition must have matching halves.
    frame_a = np.zeros((5, 1, demos.FRAME_WIDTH))
    frame_b = np.zeros((5, 1, demos.FRAME_WIDTH))
    frame_b[:, :, 0] = 3.0   # different root x
    frame_b[:, :, 6] = 1.0   # different shoulder angle
    ds = DemoDataset(fps=30.0, n_chars=1, styles=["x"], arena_sig=CFG.geometry_signature(),
                     clips=[DemoClip(0, ["x"], frame_a), DemoClip(1, ["x"], frame_b)])
    batch = demo_to_transitions(ds, "single", CFG)
    assert batch.data.shape[0] == 8  # 4 + 4, not 9
    half = MOTION_TRANSITION_DIM // 2
    assert np.allclose(batch.data[:, :half], batch.data[:, half:])


def test_static_clip_transition_halves_equal():
    frames = np.zeros((2, 1, demos.FRAME_WIDTH))
    frames[:, :, 6:10] = (0.5, 0.5, 1.0, 1.0)
    ds = DemoDataset(fps=30.0, n_chars=1, styles=["x"], arena_sig=CFG.geometry_signature(),
                     clips=[DemoClip(0, ["x"], frames)])
    t = demo_to_transitions(ds, "single", CFG)
    half = MOTION_TRANSITION_DIM // 2
    assert np.array_equal(t.data[0, :half], t.data[0, half:])


def test_layout_version_mismatch_rejected():
    ds = generate_single_dataset(STYLES["outfighter"], seconds=10, seed=8, config=CFG)
    ds.layout_version = 99
    with pytest.raises(ValueError):
        demo_to_transitions(ds, "single", CFG)


# --- file round trip ------------------------------------------------------------------

def test_dataset_io_round_trip(tmp_path):
    ds = generate_interaction_dataset(STYLES["outfighter"], STYLES["swarmer"],
                                      rounds=2, seed=11, config=CFG, round_seconds=4)
    path = tmp_path / "demo.jsonl"
    write_dataset(ds, str(path))
    back = read_dataset(str(path))
    assert back.n_chars == 2 and back.styles == ds.styles
    for a, b in zip(ds.clips, back.clips):
        assert np.max(np.abs(a.frames - b.frames)) <= 1e-12


def test_dataset_io_rejects_bad_fps(tmp_path):
    ds = generate_single_dataset(STYLES["outfighter"], seconds=10, seed=1, config=CFG)
    ds.fps = 60.0
    path = tmp_path / "bad.jsonl"
    write_dataset(ds, str(path))
    with pytest.raises(ValueError, match="fps"):
        read_dataset(str(path))


def test_dataset_io_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        read_dataset(str(path))


def test_dataset_io_malformed_line_number(tmp_path):
    ds = generate_single_dataset(STYLES["outfighter"], seconds=10, seed=1, config=CFG)
    path = tmp_path / "x.jsonl"
    write_dataset(ds, str(path))
    lines = path.read_text().splitlines()
    lines[2] = "{not json"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match=":3:"):
        read_dataset(str(path))

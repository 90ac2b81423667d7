import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pose_eval.errors import DegenerateSkeleton, InvalidFps, NoHandComponent
from pose_eval.pose import PoseSequence, from_arrays, resolve_selection
from pose_eval.preprocess import (
    PreprocessConfig, drop_world_components, fill_masked, hide_low_confidence,
    normalize_by_shoulders, planned_steps, resample_fps, run_pipeline, select_keypoints,
    trim_inactive,
)
from pose_eval.selections import get_selection, holistic_header

from _helpers import holistic_like


def test_drop_world_noop_without_world():
    seq = holistic_like(2)
    assert drop_world_components(seq) is seq


def test_drop_world_removes_component():
    seq = holistic_like(2, world=True)
    out = drop_world_components(seq)
    assert "POSE_WORLD" not in [c.name for c in out.header.components]
    assert out.num_points == seq.num_points - 33
    # same data as direct index arithmetic
    full = select_keypoints(out, "FULL")
    np.testing.assert_array_equal(full.coords, seq.coords[:, :543])
    np.testing.assert_array_equal(full.confidence, seq.confidence[:, :543])


def test_select_full_and_hands():
    seq = holistic_like(3)
    assert np.array_equal(select_keypoints(seq, "FULL").coords, seq.coords)
    hands = select_keypoints(seq, "HANDS_ONLY")
    assert hands.num_points == 42
    np.testing.assert_array_equal(hands.coords, seq.coords[:, 501:543])


def test_select_single_point_trajectory():
    from pose_eval.pose import KeypointSelection
    seq = holistic_like(4)
    one = select_keypoints(seq, KeypointSelection("one", (("FACE", 7),)))
    assert one.num_points == 1
    np.testing.assert_array_equal(one.coords[:, 0], seq.coords[:, 33 + 7])
    assert one.header.components[0].point_names == ("FACE:7",)


def test_select_twice_through_provenance():
    seq = holistic_like(2)
    once = select_keypoints(seq, "UPPER_BODY")
    twice = select_keypoints(once, "HANDS_ONLY")
    np.testing.assert_array_equal(twice.coords, seq.coords[:, 501:543])


def _hands_seq(active):
    seq = holistic_like(len(active))
    conf = seq.confidence.copy()
    for f, on in enumerate(active):
        if not on:
            conf[f, 501:543] = 0.0
    return seq.replace(confidence=conf)


def test_trim_examples():
    full = _hands_seq([True] * 6)
    assert trim_inactive(full) == full
    seq = _hands_seq([False] * 3 + [True] * 5 + [False] * 2)
    out = trim_inactive(seq)
    assert out.frames == 5
    np.testing.assert_array_equal(out.coords, seq.coords[3:8])
    assert trim_inactive(_hands_seq([False] * 4)).frames == 0


def test_trim_keeps_interior_gaps():
    seq = _hands_seq([False, True, False, False, True, False])
    out = trim_inactive(seq)
    np.testing.assert_array_equal(out.coords, seq.coords[1:5])


def test_trim_without_hands():
    with pytest.raises(NoHandComponent):
        trim_inactive(from_arrays(np.zeros((2, 1, 2))))


def test_resample_identity_and_closed_form():
    seq = from_arrays([[[0.0, 0.0]], [[1.0, 1.0]]], fps=1.0)
    assert resample_fps(seq, 1.0) == seq
    out = resample_fps(seq, 3.0)
    assert out.frames == 4 and out.fps == 3.0
    np.testing.assert_allclose(out.coords[:, 0], [[0, 0], [1 / 3, 1 / 3], [2 / 3, 2 / 3], [1, 1]], atol=1e-12)


def test_resample_confidence_min_rule():
    seq = from_arrays([[[0.0, 0.0]], [[1.0, 1.0]]], [[1.0], [0.0]], fps=1.0)
    out = resample_fps(seq, 2.0)
    assert out.confidence[1, 0] == 0.0


def test_resample_endpoints_and_bad_fps():
    rng = np.random.default_rng(3)
    seq = from_arrays(rng.normal(size=(11, 3, 2)), fps=50.0)
    out = resample_fps(seq, 25.0)
    assert out.frames == 6
    np.testing.assert_allclose(out.coords[0], seq.coords[0], atol=1e-9)
    np.testing.assert_allclose(out.coords[-1], seq.coords[-1], atol=1e-9)
    with pytest.raises(InvalidFps):
        resample_fps(seq, 0.0)
    with pytest.raises(InvalidFps):
        PreprocessConfig(target_fps=-5)


def _shoulder_seq(points, left=(-1.0, 0.0), right=(1.0, 0.0), frames=2):
    seq = holistic_like(frames)
    coords = seq.coords.copy()
    coords[:, 11] = left
    coords[:, 12] = right
    coords[:, 0] = points
    return seq.replace(coords=coords)


def test_normalize_example():
    seq = _shoulder_seq((1.0, 2.0))
    out = normalize_by_shoulders(seq)
    np.testing.assert_allclose(out.coords[0, 0], [0.5, 1.0])


def test_normalize_identity_when_already_normal():
    seq = _shoulder_seq((0.3, 0.1), left=(0.5, 0.0), right=(-0.5, 0.0))
    np.testing.assert_allclose(normalize_by_shoulders(seq).coords, seq.coords, atol=1e-12)


def test_normalize_degenerate():
    seq = _shoulder_seq((0.0, 0.0), left=(0.2, 0.2), right=(0.2, 0.2))
    with pytest.raises(DegenerateSkeleton):
        normalize_by_shoulders(seq)


def test_normalize_uses_only_frames_with_both_shoulders():
    seq = _shoulder_seq((0.0, 0.0), frames=3)
    coords = seq.coords.copy()
    conf = seq.confidence.copy()
    coords[2, 11] = (100.0, 100.0)
    conf[2, 11] = 0.0
    out = normalize_by_shoulders(seq.replace(coords=coords, confidence=conf))
    np.testing.assert_allclose(out.coords[0, 12], [0.5, 0.0])


def test_normalize_idempotent():
    seq = holistic_like(4, seed=7)
    once = normalize_by_shoulders(seq)
    np.testing.assert_allclose(normalize_by_shoulders(once).coords, once.coords, atol=1e-9)


def test_hide_examples():
    seq = from_arrays(np.zeros((2, 2, 2)), [[0.2, 0.6], [0.6, 0.2]])
    assert hide_low_confidence(seq, 0.0) == seq
    out = hide_low_confidence(seq, 0.5)
    assert int((out.confidence == 0).sum()) == 2
    assert hide_low_confidence(hide_low_confidence(seq, 0.5), 0.5) == out
    high = from_arrays(np.zeros((1, 3, 2)), np.full((1, 3), 0.9))
    assert not hide_low_confidence(high, 1.0).mask.any()


def test_fill_examples():
    seq = from_arrays(np.ones((1, 2, 2)))
    assert fill_masked(seq, 10.0) is seq
    masked = from_arrays(np.ones((1, 2, 2)), [[1.0, 0.0]])
    out = fill_masked(masked, 10.0)
    np.testing.assert_array_equal(out.coords[0, 1], [10.0, 10.0])
    assert out.confidence[0, 1] == 1.0
    assert (out.confidence > 0).all()


def test_pipeline_all_off_identity():
    seq = holistic_like(3)
    audit = []
    assert run_pipeline(seq, PreprocessConfig(), audit) == seq
    assert audit == []


def test_pipeline_audit_order():
    cfg = PreprocessConfig(drop_world=True, selection="HANDS_ONLY", trim=True, target_fps=12.5,
                           normalize=True, hide_below_confidence=0.5, fill_value=1.0)
    assert [s.split(":")[0] for s in planned_steps(cfg)] == [
        "drop_world", "select", "trim", "resample", "normalize", "hide", "fill"]


def test_pipeline_hands_only_normalize_uses_shoulders():
    # the selection drops the shoulders; normalization still resolves them
    seq = _shoulder_seq((0.0, 0.0), left=(-2.0, 1.0), right=(2.0, 1.0))
    out = run_pipeline(seq, PreprocessConfig(selection="HANDS_ONLY", normalize=True))
    expected = (seq.coords[:, 501:543] - [0.0, 1.0]) / 4.0
    np.testing.assert_allclose(out.coords, expected)


def test_pipeline_normalize_before_hide():
    # a low-confidence shoulder frame still contributes to the transform
    seq = _shoulder_seq((0.0, 0.0), frames=2)
    coords = seq.coords.copy()
    conf = seq.confidence.copy()
    coords[1, 11] = (-3.0, 0.0)
    conf[1, 11] = 0.3
    seq = seq.replace(coords=coords, confidence=conf)
    out = run_pipeline(seq, PreprocessConfig(normalize=True, hide_below_confidence=0.5))
    # mean width (2 + 4) / 2 = 3, mean midpoint x (0 + -1) / 2 = -0.5
    np.testing.assert_allclose(out.coords[0, 12], [(1.0 + 0.5) / 3.0, 0.0])
    assert out.confidence[1, 11] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 1000))
def test_normalization_invariance(scale, tx, ty, seed):
    seq = holistic_like(3, seed=seed)
    moved = seq.replace(coords=seq.coords * scale + [tx, ty])
    cfg = PreprocessConfig(normalize=True, selection="REDUCED")
    np.testing.assert_allclose(run_pipeline(moved, cfg).coords, run_pipeline(seq, cfg).coords,
                               rtol=1e-6, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=12))
def test_trim_idempotent_and_contiguous(active):
    seq = _hands_seq(active)
    once = trim_inactive(seq)
    assert trim_inactive(once) == once
    if once.frames:
        start = next(i for i, a in enumerate(active) if a)
        np.testing.assert_array_equal(once.coords, seq.coords[start:start + once.frames])

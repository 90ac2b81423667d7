import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pose_eval.distance import (
    Base, MetricConfig, PairScorer, Padding, Pointwise, ape, dtw_mje, frame_cost_matrix, mse,
    ndtw_mje, pad_sequences, pairwise_zero_fill, score_pair,
)
from pose_eval.errors import EmptySequence, IncompatibleSelections, ShapeMismatch
from pose_eval.grid import named_config
from pose_eval.pose import from_arrays
from pose_eval.preprocess import PreprocessConfig, fill_masked

from _helpers import brute_dtw, cost_matrix_py, holistic_like, seq1d


def pt(x, y=0.0):
    return from_arrays([[[x, y]]])


def test_ape_mse_basic():
    assert ape(pt(0, 0), pt(3, 4)) == 5.0
    assert mse(pt(0, 0), pt(3, 4)) == 25.0
    a = from_arrays([[[1.0, 0.0]], [[1.0, 0.0]]])
    b = from_arrays([[[1.0, 0.0]]])
    cfg = MetricConfig(Base.APE, Padding.ZERO)
    assert score_pair(a, b, cfg).value == 0.5


def test_padding_examples():
    a = from_arrays([[[1.0, 1.0]], [[2.0, 2.0]]])
    b = from_arrays([[[5.0, 5.0]]])
    pa, pb = pad_sequences(a, b, "ZERO")
    assert pa is a
    np.testing.assert_array_equal(pb.coords[:, 0], [[5, 5], [0, 0]])
    _, pb = pad_sequences(a, b, Padding.FIRST_FRAME)
    np.testing.assert_array_equal(pb.coords[:, 0], [[5, 5], [5, 5]])
    assert pad_sequences(a, a, "ZERO") == (a, a)


def test_appendix_pairwise_zero_fill():
    A = seq1d([7, None, 7])
    B = seq1d([None, 8, 8])
    fa, fb = pairwise_zero_fill(A, B)
    assert fa.coords[:, 0, 0].tolist() == [0, 0, 7]
    assert fb.coords[:, 0, 0].tolist() == [0, 0, 8]
    assert fa.mask.all() and fb.mask.all()
    assert pairwise_zero_fill(fa, fb) == (fa, fb)


def test_appendix_independent_fill_contrast():
    A = seq1d([7, None, 7])
    B = seq1d([None, 8, 8])
    assert fill_masked(A, 10.0).coords[:, 0, 0].tolist() == [7, 10, 7]
    assert fill_masked(B, 10.0).coords[:, 0, 0].tolist() == [10, 8, 8]


def test_appendix_scores_through_named_variants():
    A = seq1d([7, None, 7])
    B = seq1d([None, 8, 8])
    # pairwise zero fill: frame costs (0, 0, 1)
    cfg = MetricConfig(Base.APE, pairwise_zero_fill=True)
    assert score_pair(A, B, cfg).value == pytest.approx(1 / 3)
    # independent fill 10 writes (10, 10), so the y axis differs too
    expected = (math.sqrt(3**2 + 10**2) + math.sqrt(2**2 + 10**2) + 1) / 3
    assert score_pair(A, B, named_config("APE+MaskFill10.0")).value == pytest.approx(expected)


def test_mask_rule_and_default_distance():
    a = from_arrays([[[0.0, 0.0], [0.0, 0.0]]], [[1.0, 0.0]])
    b = from_arrays([[[3.0, 4.0], [9.0, 9.0]]])
    assert ape(a, b) == 5.0
    assert ape(a, b, MetricConfig(Base.APE, default_distance=1.0)) == 3.0
    none = from_arrays([[[0.0, 0.0]]], [[0.0]])
    assert ape(none, pt(1, 1)) == 0.0
    assert dtw_mje(none, pt(1, 1)) == 0.0


def test_l1_pointwise():
    cfg = MetricConfig(Base.APE, pointwise=Pointwise.L1)
    assert ape(pt(0, 0), pt(3, 4), cfg) == 7.0


def test_dtw_examples():
    a = seq1d([0, 1, 2])
    assert dtw_mje(a, a) == 0.0
    assert ndtw_mje(a, a) == 0.0
    p2, p4 = seq1d([3, 3]), seq1d([3, 3, 3, 3])
    assert ndtw_mje(p2, p4) == 0.0
    # stretched copy aligns for free
    assert dtw_mje(seq1d([0, 1, 2]), seq1d([0, 0, 1, 1, 2, 2])) == 0.0
    assert dtw_mje(seq1d([0, 1]), seq1d([0, 3])) == 2.0


def test_ndtw_path_length():
    # costs [[0,1],[1,0]]: the diagonal path has 2 steps, total 0
    assert ndtw_mje(seq1d([0, 1]), seq1d([0, 1])) == 0.0
    # [0] vs [1,1,1]: the only path has 3 steps, total 3
    assert ndtw_mje(seq1d([0]), seq1d([1, 1, 1])) == 1.0


def test_dtw_empty():
    empty = from_arrays(np.zeros((0, 1, 2)))
    with pytest.raises(EmptySequence):
        dtw_mje(empty, pt(0))


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ape(pt(0), from_arrays(np.zeros((1, 2, 2))))
    with pytest.raises(IncompatibleSelections):
        score_pair(pt(0), from_arrays(np.zeros((1, 2, 2))), MetricConfig(Base.DTW))


def test_score_pair_identical_is_zero_and_audited():
    seq = holistic_like(5)
    rec = score_pair(seq, seq, named_config("DTWp"))
    assert rec.value == 0.0
    assert rec.variant == "DTW+Trim+MaskFill10.0+Hands-Only"
    assert rec.audit[-1] == "metric:DTW"
    assert "trim" in rec.audit


def test_score_pair_aligns_fps():
    slow = from_arrays([[[0.0, 0.0]], [[1.0, 0.0]]], fps=1.0)
    fast = from_arrays([[[0.0, 0.0]], [[0.5, 0.0]], [[1.0, 0.0]]], fps=2.0)
    rec = score_pair(slow, fast, MetricConfig(Base.APE))
    assert rec.value == pytest.approx(0.0)
    assert "align_fps:2.0" in rec.audit


def test_pair_scorer_matches_score_pair():
    a, b = holistic_like(4, seed=1), holistic_like(6, seed=2)
    for name in ("DTWp", "nDTWp", "nAPE", "APE+Trim+PadFirst+Reduced"):
        cfg = named_config(name)
        assert PairScorer(cfg)(a, b) == score_pair(a, b, cfg).value


def small_pair(draw):
    k = draw(st.integers(1, 3))
    ints = st.integers(-2, 2)
    n = draw(st.integers(1, 6))
    m = draw(st.integers(1, 6))
    a = np.array(draw(st.lists(ints, min_size=n * k * 2, max_size=n * k * 2)), float).reshape(n, k, 2)
    b = np.array(draw(st.lists(ints, min_size=m * k * 2, max_size=m * k * 2)), float).reshape(m, k, 2)
    return from_arrays(a), from_arrays(b)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_dtw_matches_brute_force(data):
    a, b = small_pair(data.draw)
    best, lengths = brute_dtw(cost_matrix_py(a, b))
    assert abs(dtw_mje(a, b) - best) <= 1e-9
    nd = ndtw_mje(a, b)
    assert any(abs(nd - best / n) <= 1e-9 for n in lengths)
    # the shortest optimal path is the documented tie-break
    assert abs(nd - best / min(lengths)) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_symmetry_and_nonnegativity(data):
    a, b = small_pair(data.draw)
    for fn in (dtw_mje, ndtw_mje):
        assert fn(a, b) == pytest.approx(fn(b, a), abs=1e-12)
        assert fn(a, b) >= 0
    if a.frames == b.frames:
        for fn in (ape, mse):
            assert fn(a, b) == fn(b, a) >= 0
    assert ndtw_mje(a, b) <= dtw_mje(a, b) + 1e-12


def test_frame_cost_matches_python():
    rng = np.random.default_rng(0)
    a = from_arrays(rng.normal(size=(4, 5, 2)), rng.integers(0, 2, (4, 5)).astype(float))
    b = from_arrays(rng.normal(size=(3, 5, 2)), rng.integers(0, 2, (3, 5)).astype(float))
    np.testing.assert_allclose(frame_cost_matrix(a, b, MetricConfig(Base.DTW)),
                               cost_matrix_py(a, b), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_masked_coordinates_are_opaque(seed):
    rng = np.random.default_rng(seed)
    conf = (rng.uniform(size=(5, 4)) > 0.3).astype(float)
    a = from_arrays(rng.normal(size=(5, 4, 2)), conf)
    junk = np.where(conf[:, :, None] == 0, rng.normal(size=(5, 4, 2)) * 100, a.coords)
    a2 = a.replace(coords=junk)
    b = from_arrays(rng.normal(size=(4, 4, 2)))
    for base in Base:
        cfg = MetricConfig(base)
        assert score_pair(a, b, cfg).value == score_pair(a2, b, cfg).value


def test_padding_only_matters_for_unequal_lengths():
    rng = np.random.default_rng(1)
    a = from_arrays(rng.normal(size=(3, 2, 2)))
    b = from_arrays(rng.normal(size=(3, 2, 2)))
    z = score_pair(a, b, MetricConfig(Base.APE, Padding.ZERO)).value
    f = score_pair(a, b, MetricConfig(Base.APE, Padding.FIRST_FRAME)).value
    assert z == f


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 100))
def test_normalized_scores_invariant(scale, tx, ty, seed):
    a, b = holistic_like(4, seed=seed), holistic_like(6, seed=seed + 1)
    moved = a.replace(coords=a.coords * scale + [tx, ty])
    for base in Base:
        cfg = MetricConfig(base, preprocess=PreprocessConfig(normalize=True, selection="UPPER_BODY"))
        x, y = score_pair(a, b, cfg).value, score_pair(moved, b, cfg).value
        assert math.isclose(x, y, rel_tol=1e-6, abs_tol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        MetricConfig(Base.DTW, Padding.ZERO)
    with pytest.raises(ValueError):
        MetricConfig(Base.APE, Padding.NONE)
    with pytest.raises(ValueError):
        MetricConfig(Base.APE, pairwise_zero_fill=True, preprocess=PreprocessConfig(fill_value=1.0))

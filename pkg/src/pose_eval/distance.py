"""Keypoint distance metrics: APE, MSE, DTW-MJE and path-normalized DTW.

Mask rule (no fill configured): a (frame, point) pair where either side is
masked is left out of that frame's mean; a frame with no usable pair costs 0.
With ``default_distance`` set, such pairs contribute that fixed distance
instead. Accumulation is float64 throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import EmptySequence, IncompatibleSelections, ShapeMismatch
from .pose import PoseSequence
from .preprocess import PreprocessConfig, resample_fps, run_pipeline
from .selections import get_selection


class Base(str, enum.Enum):
    APE = "APE"
    MSE = "MSE"
    DTW = "DTW"
    NDTW = "NDTW"

    @property
    def is_dtw(self) -> bool:
        return self in (Base.DTW, Base.NDTW)


class Padding(str, enum.Enum):
    ZERO = "ZERO"
    FIRST_FRAME = "FIRST_FRAME"
    NONE = "NONE"


class Pointwise(str, enum.Enum):
    L2 = "L2"
    L1 = "L1"


@dataclass(frozen=True)
class MetricConfig:
    base: Base
    padding: Padding | None = None  # None: NONE for DTW bases, ZERO otherwise
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    pairwise_zero_fill: bool = False
    pointwise: Pointwise = Pointwise.L2
    default_distance: float | None = None

    def __post_init__(self):
        base = Base(self.base)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "pointwise", Pointwise(self.pointwise))
        pad = self.padding
        if pad is None:
            pad = Padding.NONE if base.is_dtw else Padding.ZERO
        pad = Padding(pad)
        object.__setattr__(self, "padding", pad)
        if (pad is Padding.NONE) != base.is_dtw:
            raise ValueError(f"{base.value} cannot use padding {pad.value}")
        if self.pairwise_zero_fill:
            if self.preprocess.fill_value is not None:
                raise ValueError("pairwise_zero_fill and fill_value are mutually exclusive")
            if base.is_dtw:
                raise ValueError("pairwise_zero_fill needs equal-length (padded) sequences")

    @property
    def name(self) -> str:
        return canonical_name(self)


def _fmt(v: float) -> str:
    return repr(float(v))


def canonical_name(cfg: MetricConfig) -> str:
    """``BASE[+Trim][+Norm][+MaskFill<v>][...][+Pad<Zero|First>][+<Selection>]``."""
    p = cfg.preprocess
    parts = [cfg.base.value]
    if p.trim:
        parts.append("Trim")
    if p.normalize:
        parts.append("Norm")
    if p.fill_value is not None:
        parts.append(f"MaskFill{_fmt(p.fill_value)}")
    if cfg.pairwise_zero_fill:
        parts.append("PairZeroFill")
    if cfg.default_distance is not None:
        parts.append(f"MaskDist{_fmt(cfg.default_distance)}")
    if p.hide_below_confidence is not None:
        parts.append(f"Hide{_fmt(p.hide_below_confidence)}")
    if p.target_fps is not None:
        parts.append(f"FPS{_fmt(p.target_fps)}")
    if p.drop_world:
        parts.append("DropWorld")
    if cfg.pointwise is Pointwise.L1:
        parts.append("L1")
    if cfg.padding is Padding.ZERO:
        parts.append("PadZero")
    elif cfg.padding is Padding.FIRST_FRAME:
        parts.append("PadFirst")
    if p.selection is not None:
        parts.append(get_selection(p.selection).display_name)
    return "+".join(parts)


# --- sequence alignment helpers ---------------------------------------------


def _check_shapes(a: PoseSequence, b: PoseSequence) -> None:
    if a.num_points != b.num_points:
        raise ShapeMismatch(f"point counts differ: {a.num_points} vs {b.num_points}")
    if a.dims != b.dims:
        raise ShapeMismatch(f"dims differ: {a.dims} vs {b.dims}")


def _pad_one(seq: PoseSequence, length: int, strategy: Padding) -> PoseSequence:
    extra = length - seq.frames
    if extra <= 0:
        return seq
    if strategy is Padding.ZERO:
        pad_c = np.zeros((extra, seq.num_points, seq.dims))
        pad_k = np.ones((extra, seq.num_points))
    elif strategy is Padding.FIRST_FRAME:
        if seq.frames == 0:
            raise EmptySequence("cannot pad an empty sequence with its first frame")
        pad_c = np.repeat(seq.coords[:1], extra, axis=0)
        pad_k = np.repeat(seq.confidence[:1], extra, axis=0)
    else:
        raise ValueError(f"cannot pad with strategy {strategy}")
    return seq.replace(
        coords=np.concatenate([seq.coords, pad_c]),
        confidence=np.concatenate([seq.confidence, pad_k]),
    )


def pad_sequences(
    a: PoseSequence, b: PoseSequence, strategy: Padding | str
) -> tuple[PoseSequence, PoseSequence]:
    """Extend the shorter sequence at the end to the longer one's length."""
    _check_shapes(a, b)
    strategy = Padding(strategy)
    n = max(a.frames, b.frames)
    return _pad_one(a, n, strategy), _pad_one(b, n, strategy)


def pairwise_zero_fill(a: PoseSequence, b: PoseSequence) -> tuple[PoseSequence, PoseSequence]:
    """Zero both sides wherever either side is masked (Ham2Pose semantics)."""
    _check_shapes(a, b)
    if a.frames != b.frames:
        raise ShapeMismatch(f"lengths differ: {a.frames} vs {b.frames}; pad first")
    either = ~(a.mask & b.mask)
    if not either.any():
        return a, b

    def zero(s: PoseSequence) -> PoseSequence:
        return s.replace(
            coords=np.where(either[:, :, None], 0.0, s.coords),
            confidence=np.where(either, 1.0, s.confidence),
        )

    return zero(a), zero(b)


# --- per-point and per-frame costs ------------------------------------------


def _point_distance(diff: np.ndarray, pointwise: Pointwise, squared: bool) -> np.ndarray:
    if squared:
        return np.einsum("...d,...d->...", diff, diff)
    if pointwise is Pointwise.L1:
        return np.abs(diff).sum(axis=-1)
    return np.sqrt(np.einsum("...d,...d->...", diff, diff))


def _masked_mean(d: np.ndarray, valid: np.ndarray, default: float | None) -> np.ndarray:
    """Mean over the last axis under the mask rule."""
    if default is not None:
        return np.where(valid, d, default).mean(axis=-1)
    total = np.where(valid, d, 0.0).sum(axis=-1)
    count = valid.sum(axis=-1)
    return np.divide(total, count, out=np.zeros_like(total), where=count > 0)


def _framewise_cost(a: PoseSequence, b: PoseSequence, cfg: MetricConfig, squared: bool) -> np.ndarray:
    _check_shapes(a, b)
    if a.frames != b.frames:
        raise ShapeMismatch(f"lengths differ: {a.frames} vs {b.frames}; pad first")
    d = _point_distance(a.coords - b.coords, cfg.pointwise, squared)
    return _masked_mean(d, a.mask & b.mask, cfg.default_distance)


@njit(cache=True)
def _cost_matrix(a, b, ma, mb, l1, use_default, default):  # pragma: no cover - compiled
    n, k, dims = a.shape
    m = b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            total = 0.0
            count = 0
            for p in range(k):
                if ma[i, p] and mb[j, p]:
                    acc = 0.0
                    for q in range(dims):
                        diff = a[i, p, q] - b[j, p, q]
                        acc += abs(diff) if l1 else diff * diff
                    total += acc if l1 else np.sqrt(acc)
                    count += 1
                elif use_default:
                    total += default
            if use_default:
                out[i, j] = total / k
            elif count > 0:
                out[i, j] = total / count
    return out


def frame_cost_matrix(a: PoseSequence, b: PoseSequence, cfg: MetricConfig) -> np.ndarray:
    """``c[i, j]`` = mean joint error between frame i of ``a`` and frame j of ``b``."""
    _check_shapes(a, b)
    default = cfg.default_distance
    return _cost_matrix(
        np.ascontiguousarray(a.coords),
        np.ascontiguousarray(b.coords),
        np.ascontiguousarray(a.mask),
        np.ascontiguousarray(b.mask),
        cfg.pointwise is Pointwise.L1,
        default is not None,
        0.0 if default is None else float(default),
    )


@njit(cache=True)
def _dtw_accumulate(cost):  # pragma: no cover - compiled
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    length = np.zeros((n + 1, m + 1), dtype=np.int64)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            # candidates in preference order: diagonal, advance a, advance b;
            # among equal costs the shorter path wins
            best = acc[i - 1, j - 1]
            blen = length[i - 1, j - 1]
            up = acc[i - 1, j]
            if up < best or (up == best and length[i - 1, j] < blen):
                best = up
                blen = length[i - 1, j]
            left = acc[i, j - 1]
            if left < best or (left == best and length[i, j - 1] < blen):
                best = left
                blen = length[i, j - 1]
            acc[i, j] = cost[i - 1, j - 1] + best
            length[i, j] = blen + 1
    return acc[n, m], length[n, m]


def dtw_from_cost(cost: np.ndarray) -> tuple[float, int]:
    """Total cost and step count of the optimal ``{→, ↓, ↘}`` alignment path."""
    if cost.shape[0] == 0 or cost.shape[1] == 0:
        raise EmptySequence("DTW needs two non-empty sequences")
    total, steps = _dtw_accumulate(np.ascontiguousarray(cost, dtype=np.float64))
    return float(total), int(steps)


def ape(a: PoseSequence, b: PoseSequence, cfg: MetricConfig | None = None) -> float:
    cfg = cfg or MetricConfig(Base.APE)
    c = _framewise_cost(a, b, cfg, squared=False)
    return float(c.mean()) if c.size else 0.0


def mse(a: PoseSequence, b: PoseSequence, cfg: MetricConfig | None = None) -> float:
    cfg = cfg or MetricConfig(Base.MSE)
    c = _framewise_cost(a, b, cfg, squared=True)
    return float(c.mean()) if c.size else 0.0


def dtw_mje(a: PoseSequence, b: PoseSequence, cfg: MetricConfig | None = None) -> float:
    cfg = cfg or MetricConfig(Base.DTW)
    if a.frames == 0 or b.frames == 0:
        raise EmptySequence("DTW needs two non-empty sequences")
    return dtw_from_cost(frame_cost_matrix(a, b, cfg))[0]


def ndtw_mje(a: PoseSequence, b: PoseSequence, cfg: MetricConfig | None = None) -> float:
    cfg = cfg or MetricConfig(Base.NDTW)
    if a.frames == 0 or b.frames == 0:
        raise EmptySequence("DTW needs two non-empty sequences")
    total, steps = dtw_from_cost(frame_cost_matrix(a, b, cfg))
    return total / steps


_BASE_FN = {Base.APE: ape, Base.MSE: mse, Base.DTW: dtw_mje, Base.NDTW: ndtw_mje}


@dataclass(frozen=True)
class ScoreRecord:
    variant: str
    value: float
    audit: tuple[str, ...] = ()
    hyp_id: str | None = None
    ref_id: str | None = None


def compare_preprocessed(hyp: PoseSequence, ref: PoseSequence, cfg: MetricConfig) -> float:
    """Base metric on already preprocessed sequences (fps alignment, padding, fill)."""
    if hyp.num_points != ref.num_points:
        raise IncompatibleSelections(
            f"after preprocessing hyp has {hyp.num_points} points, ref has {ref.num_points}"
        )
    if cfg.preprocess.target_fps is None and hyp.fps != ref.fps:
        hyp = resample_fps(hyp, ref.fps)
    if not cfg.base.is_dtw:
        hyp, ref = pad_sequences(hyp, ref, cfg.padding)
        if cfg.pairwise_zero_fill:
            hyp, ref = pairwise_zero_fill(hyp, ref)
    return _BASE_FN[cfg.base](hyp, ref, cfg)


def score_pair(
    hyp: PoseSequence,
    ref: PoseSequence,
    cfg: MetricConfig,
    hyp_id: str | None = None,
    ref_id: str | None = None,
) -> ScoreRecord:
    audit: list[str] = []
    h = run_pipeline(hyp, cfg.preprocess, audit)
    r = run_pipeline(ref, cfg.preprocess)
    if cfg.preprocess.target_fps is None and h.fps != r.fps:
        audit.append(f"align_fps:{r.fps!r}")
    if not cfg.base.is_dtw:
        audit.append(f"pad:{cfg.padding.value}")
        if cfg.pairwise_zero_fill:
            audit.append("pairwise_zero_fill")
    audit.append(f"metric:{cfg.base.value}")
    value = compare_preprocessed(h, r, cfg)
    return ScoreRecord(cfg.name, value, tuple(audit), hyp_id, ref_id)


class PairScorer:
    """Callable ``(hyp, ref) -> float`` that preprocesses each sequence once.

    Intended for retrieval runs where every sequence is compared with many
    others. Picklable, so it can be shipped to worker processes.
    """

    def __init__(self, cfg: MetricConfig):
        self.cfg = cfg
        self._cache: dict[int, tuple[PoseSequence, PoseSequence]] = {}

    @property
    def name(self) -> str:
        return self.cfg.name

    def prepare(self, seq: PoseSequence) -> PoseSequence:
        hit = self._cache.get(id(seq))
        if hit is not None and hit[0] is seq:
            return hit[1]
        out = run_pipeline(seq, self.cfg.preprocess)
        self._cache[id(seq)] = (seq, out)
        return out

    def __call__(self, hyp: PoseSequence, ref: PoseSequence) -> float:
        return compare_preprocessed(self.prepare(hyp), self.prepare(ref), self.cfg)

    def __getstate__(self):
        return {"cfg": self.cfg, "_cache": {}}

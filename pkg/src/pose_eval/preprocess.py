"""Pre-metric transformations of pose sequences.

Every step is a pure function ``PoseSequence -> PoseSequence``.
:func:`run_pipeline` applies them in a fixed order:

    drop_world -> select -> trim -> resample -> normalize -> hide -> fill

Trimming and shoulder normalization need hand and shoulder keypoints, which a
selection may have removed. The pipeline therefore resolves both against the
sequence *before* selection (trim/resample/hide commute with picking points,
and the normalization transform is global), then restricts to the selection.
Normalization comes before hiding, as in the Ham2Pose recipe: the shoulder
transform is estimated from every frame where both shoulders are detected,
including low-confidence ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSkeleton, InvalidFps, NoHandComponent, UnknownComponent
from .pose import ComponentSpec, KeypointSelection, PoseHeader, PoseSequence, resolve_selection
from .selections import LEFT_SHOULDER, RIGHT_SHOULDER, get_selection

SHOULDER_EPS = 1e-8
DEFAULT_HIDE_THRESHOLD = 0.5


@dataclass(frozen=True)
class PreprocessConfig:
    drop_world: bool = False
    selection: str | None = None
    trim: bool = False
    target_fps: float | None = None
    normalize: bool = False
    hide_below_confidence: float | None = None
    fill_value: float | None = None

    def __post_init__(self):
        if self.target_fps is not None and not self.target_fps > 0:
            raise InvalidFps(f"target_fps must be positive, got {self.target_fps}")
        t = self.hide_below_confidence
        if t is not None and not 0.0 <= t <= 1.0:
            raise ValueError(f"hide_below_confidence must be in [0, 1], got {t}")
        if self.fill_value is not None and not math.isfinite(self.fill_value):
            raise ValueError("fill_value must be finite")


def _is_provenance(comp: ComponentSpec) -> bool:
    return comp.point_names is not None and all(":" in n for n in comp.point_names)


def _labels(header: PoseHeader) -> list[str]:
    """Provenance label of every flat point (``COMPONENT:index``)."""
    out: list[str] = []
    for c in header.components:
        if _is_provenance(c):
            out.extend(c.point_names)
        else:
            out.extend(f"{c.name}:{i}" for i in range(c.point_count))
    return out


def locate_point(header: PoseHeader, component: str, index: int) -> int:
    """Flat index of ``component:index``, also through a selection's provenance names."""
    try:
        spec = header.component(component)
    except UnknownComponent:
        label = f"{component}:{index}"
        labels = _labels(header)
        if label in labels:
            return labels.index(label)
        raise
    if not 0 <= index < spec.point_count:
        raise UnknownComponent(f"{component}:{index} out of range")
    return header.offset(component) + index


def hand_point_indices(header: PoseHeader) -> list[int]:
    idx: list[int] = []
    off = 0
    for c in header.components:
        if _is_provenance(c):
            idx.extend(off + i for i, n in enumerate(c.point_names) if "HAND" in n.split(":")[0])
        elif "HAND" in c.name:
            idx.extend(range(off, off + c.point_count))
        off += c.point_count
    return idx


def drop_world_components(seq: PoseSequence) -> PoseSequence:
    keep = [c for c in seq.header.components if not c.name.endswith("_WORLD")]
    if len(keep) == len(seq.header.components):
        return seq
    flat: list[int] = []
    for c in keep:
        base = seq.header.offset(c.name)
        flat.extend(range(base, base + c.point_count))
    return PoseSequence(
        header=PoseHeader(fps=seq.fps, components=tuple(keep)),
        coords=seq.coords[:, flat],
        confidence=seq.confidence[:, flat],
    )


def select_keypoints(seq: PoseSequence, sel: KeypointSelection | str) -> PoseSequence:
    """Restrict to ``sel``'s points, rewriting the header to one component.

    The new component is named after the selection and carries
    ``COMPONENT:index`` provenance names so later steps can still find
    specific points.
    """
    if isinstance(sel, str):
        sel = get_selection(sel)
    try:
        flat = resolve_selection(sel, seq.header)
    except UnknownComponent:
        # a previously selected sequence: resolve through provenance labels
        labels = _labels(seq.header)
        lookup = {lab: i for i, lab in enumerate(labels)}
        flat = []
        for comp, idx in sel.entries:
            if idx is None:
                hits = [i for i, lab in enumerate(labels) if comp == "*" or lab.split(":")[0] == comp]
                if not hits:
                    raise
                flat.extend(hits)
            elif f"{comp}:{idx}" in lookup:
                flat.append(lookup[f"{comp}:{idx}"])
            else:
                raise
    labels = _labels(seq.header)
    comp = ComponentSpec(sel.name, len(flat), seq.dims, tuple(labels[i] for i in flat))
    return PoseSequence(
        header=PoseHeader(fps=seq.fps, components=(comp,)),
        coords=seq.coords[:, flat],
        confidence=seq.confidence[:, flat],
    )


def _frames(seq: PoseSequence, start: int, stop: int) -> PoseSequence:
    return seq.replace(coords=seq.coords[start:stop], confidence=seq.confidence[start:stop])


def trim_inactive(seq: PoseSequence) -> PoseSequence:
    """Drop leading/trailing frames in which every hand keypoint is masked."""
    hands = hand_point_indices(seq.header)
    if not hands:
        raise NoHandComponent("trim requested but the sequence has no hand keypoints")
    active = np.flatnonzero((seq.confidence[:, hands] > 0).any(axis=1))
    if active.size == 0:
        return _frames(seq, 0, 0)
    return _frames(seq, int(active[0]), int(active[-1]) + 1)


def resample_fps(seq: PoseSequence, target_fps: float) -> PoseSequence:
    """Linear interpolation onto timestamps ``k / target_fps``.

    Interpolated confidence is the minimum of the two bracketing frames, so
    a point is never made visible by interpolation.
    """
    if not (isinstance(target_fps, (int, float)) and math.isfinite(target_fps) and target_fps > 0):
        raise InvalidFps(f"target fps must be positive, got {target_fps}")
    header = seq.header.with_fps(float(target_fps))
    n = seq.frames
    if target_fps == seq.fps or n < 2:
        return seq.replace(header=header)
    duration_frames = (n - 1) * target_fps / seq.fps
    n_out = int(math.floor(duration_frames + 1e-9)) + 1
    pos = np.arange(n_out, dtype=np.float64) * seq.fps / target_fps
    i0 = np.minimum(np.floor(pos + 1e-9).astype(np.int64), n - 1)
    frac = pos - i0
    frac[np.abs(frac) < 1e-9] = 0.0
    i1 = np.minimum(i0 + 1, n - 1)
    w = frac[:, None, None]
    coords = (1.0 - w) * seq.coords[i0] + w * seq.coords[i1]
    conf = np.where(
        (frac > 0)[:, None],
        np.minimum(seq.confidence[i0], seq.confidence[i1]),
        seq.confidence[i0],
    )
    return PoseSequence(header=header, coords=coords, confidence=conf)


def shoulder_transform(
    seq: PoseSequence,
    left_shoulder: tuple[str, int] = LEFT_SHOULDER,
    right_shoulder: tuple[str, int] = RIGHT_SHOULDER,
) -> tuple[np.ndarray, float]:
    """Mean shoulder midpoint and mean shoulder width over frames where both are visible."""
    li = locate_point(seq.header, *left_shoulder)
    ri = locate_point(seq.header, *right_shoulder)
    both = (seq.confidence[:, li] > 0) & (seq.confidence[:, ri] > 0)
    if not both.any():
        raise DegenerateSkeleton("no frame with both shoulders visible")
    left = seq.coords[both, li]
    right = seq.coords[both, ri]
    origin = ((left + right) / 2.0).mean(axis=0)
    width = float(np.linalg.norm(left - right, axis=1).mean())
    if width < SHOULDER_EPS:
        raise DegenerateSkeleton(f"shoulder width {width:g} below {SHOULDER_EPS:g}")
    return origin, width


def _apply_transform(seq: PoseSequence, origin: np.ndarray, width: float) -> PoseSequence:
    return seq.replace(coords=(seq.coords - origin) / width)


def normalize_by_shoulders(
    seq: PoseSequence,
    left_shoulder: tuple[str, int] = LEFT_SHOULDER,
    right_shoulder: tuple[str, int] = RIGHT_SHOULDER,
) -> PoseSequence:
    origin, width = shoulder_transform(seq, left_shoulder, right_shoulder)
    return _apply_transform(seq, origin, width)


def hide_low_confidence(seq: PoseSequence, threshold: float) -> PoseSequence:
    conf = np.where(seq.confidence < threshold, 0.0, seq.confidence)
    return seq.replace(confidence=conf)


def fill_masked(seq: PoseSequence, value: float) -> PoseSequence:
    masked = seq.confidence == 0
    if not masked.any():
        return seq
    coords = np.where(masked[:, :, None], float(value), seq.coords)
    conf = np.where(masked, 1.0, seq.confidence)
    return seq.replace(coords=coords, confidence=conf)


def planned_steps(cfg: PreprocessConfig) -> list[str]:
    """Names of the steps ``cfg`` enables, in application order."""
    steps = []
    if cfg.drop_world:
        steps.append("drop_world")
    if cfg.selection is not None:
        steps.append(f"select:{cfg.selection}")
    if cfg.trim:
        steps.append("trim")
    if cfg.target_fps is not None:
        steps.append(f"resample:{cfg.target_fps!r}")
    if cfg.normalize:
        steps.append("normalize")
    if cfg.hide_below_confidence is not None:
        steps.append(f"hide:{cfg.hide_below_confidence!r}")
    if cfg.fill_value is not None:
        steps.append(f"fill:{cfg.fill_value!r}")
    return steps


def run_pipeline(
    seq: PoseSequence,
    cfg: PreprocessConfig,
    audit: list[str] | None = None,
    shoulders: tuple[tuple[str, int], tuple[str, int]] = (LEFT_SHOULDER, RIGHT_SHOULDER),
) -> PoseSequence:
    """Apply the configured steps; append applied step names to ``audit``."""
    if cfg.drop_world:
        seq = drop_world_components(seq)
    if cfg.trim:
        seq = trim_inactive(seq)
    if cfg.target_fps is not None:
        seq = resample_fps(seq, cfg.target_fps)
    transform = shoulder_transform(seq, *shoulders) if cfg.normalize else None
    if cfg.hide_below_confidence is not None:
        seq = hide_low_confidence(seq, cfg.hide_below_confidence)
    if cfg.selection is not None:
        seq = select_keypoints(seq, cfg.selection)
    if transform is not None:
        seq = _apply_transform(seq, *transform)
    if cfg.fill_value is not None:
        seq = fill_masked(seq, cfg.fill_value)
    if audit is not None:
        audit.extend(planned_steps(cfg))
    return seq

"""Pose sequence types and the ``.posec`` container format.

A ``.posec`` file is::

    POSEC\\n
    fps=<decimal>\\n
    component=<name>:<point_count>:<dims>[:<name>,<name>,...]\\n   (one per component)
    frames=<integer>\\n
    \\n
    <frames x points x dims float32 LE coords><frames x points float32 LE confidences>

Coordinates are held in memory as float64; the file stores float32, so a
write/read round trip is exact for every sequence whose values are
representable in float32 (which includes everything read from disk).
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    IoFailure,
    MalformedFile,
    NonFiniteValue,
    UnknownComponent,
)

MAGIC = b"POSEC\n"
_NAME_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")
_POINT_NAME_RE = re.compile(r"^[^,\s]+$")

_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class ComponentSpec:
    name: str
    point_count: int
    dims: int
    point_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise ValueError(f"invalid component name {self.name!r}")
        if self.point_count < 1:
            raise ValueError(f"component {self.name}: point_count must be >= 1")
        if self.dims not in (2, 3):
            raise ValueError(f"component {self.name}: dims must be 2 or 3, got {self.dims}")
        if self.point_names is not None:
            object.__setattr__(self, "point_names", tuple(self.point_names))
            if len(self.point_names) != self.point_count:
                raise ValueError(
                    f"component {self.name}: {len(self.point_names)} point names "
                    f"for {self.point_count} points"
                )
            for pn in self.point_names:
                if not _POINT_NAME_RE.match(pn):
                    raise ValueError(f"component {self.name}: invalid point name {pn!r}")


@dataclass(frozen=True)
class PoseHeader:
    fps: float
    components: tuple[ComponentSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise ValueError(f"fps must be a positive finite number, got {self.fps}")
        names = [c.name for c in self.components]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate component names in {names}")
        if len({c.dims for c in self.components}) > 1:
            raise ValueError("all components must share the same dims")

    @property
    def total_points(self) -> int:
        return sum(c.point_count for c in self.components)

    @property
    def dims(self) -> int:
        return self.components[0].dims if self.components else 2

    def offset(self, component: str) -> int:
        """Flat index of the first point of ``component``."""
        start = 0
        for c in self.components:
            if c.name == component:
                return start
            start += c.point_count
        raise UnknownComponent(f"component {component!r} not in header")

    def component(self, name: str) -> ComponentSpec:
        for c in self.components:
            if c.name == name:
                return c
        raise UnknownComponent(f"component {name!r} not in header")

    def point_labels(self) -> list[str]:
        """``COMPONENT:index`` provenance label for every flat point."""
        labels = []
        for c in self.components:
            labels.extend(f"{c.name}:{i}" for i in range(c.point_count))
        return labels

    def with_fps(self, fps: float) -> "PoseHeader":
        return PoseHeader(fps=fps, components=self.components)


@dataclass(frozen=True, eq=False)
class PoseSequence:
    header: PoseHeader
    coords: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        conf = np.array(self.confidence, dtype=np.float64)
        h = self.header
        if coords.ndim != 3:
            raise DimensionMismatch(f"coords must be 3-D (frames, points, dims), got {coords.ndim}-D")
        if conf.ndim != 2:
            raise DimensionMismatch(f"confidence must be 2-D (frames, points), got {conf.ndim}-D")
        if coords.shape[0] != conf.shape[0]:
            raise DimensionMismatch(
                f"coords has {coords.shape[0]} frames but confidence has {conf.shape[0]}"
            )
        if coords.shape[1] != h.total_points or conf.shape[1] != h.total_points:
            raise DimensionMismatch(
                f"header declares {h.total_points} points, arrays have "
                f"{coords.shape[1]} (coords) and {conf.shape[1]} (confidence)"
            )
        if coords.shape[2] != h.dims:
            raise DimensionMismatch(f"header declares dims={h.dims}, coords have {coords.shape[2]}")
        if not np.isfinite(coords).all():
            raise NonFiniteValue("coordinates must be finite")
        if not np.isfinite(conf).all() or (conf < 0).any() or (conf > 1).any():
            raise NonFiniteValue("confidence values must be finite and within [0, 1]")
        coords.flags.writeable = False
        conf.flags.writeable = False
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "confidence", conf)

    @property
    def frames(self) -> int:
        return self.coords.shape[0]

    @property
    def num_points(self) -> int:
        return self.coords.shape[1]

    @property
    def dims(self) -> int:
        return self.coords.shape[2]

    @property
    def fps(self) -> float:
        return self.header.fps

    @property
    def mask(self) -> np.ndarray:
        """True where a keypoint is present (confidence > 0)."""
        return self.confidence > 0

    def replace(self, *, header=None, coords=None, confidence=None) -> "PoseSequence":
        return PoseSequence(
            header=self.header if header is None else header,
            coords=self.coords if coords is None else coords,
            confidence=self.confidence if confidence is None else confidence,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PoseSequence):
            return NotImplemented
        return (
            self.header == other.header
            and self.coords.shape == other.coords.shape
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.confidence, other.confidence)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class KeypointSelection:
    """Ordered list of ``(component, index)`` entries.

    ``index=None`` stands for every point of the component, and the component
    ``"*"`` (with ``index=None``) for every point of every component; both are
    expanded against a header by :func:`resolve_selection`.
    """

    name: str
    entries: tuple[tuple[str, int | None], ...]
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((c, i) for c, i in self.entries))
        if len(set(self.entries)) != len(self.entries):
            raise ValueError(f"selection {self.name}: duplicate entries")

    @property
    def display_name(self) -> str:
        return self.label or self.name


def resolve_selection(sel: KeypointSelection, header: PoseHeader) -> list[int]:
    """Flat point indices for ``sel`` against ``header``, in selection order."""
    out: list[int] = []
    seen: set[int] = set()
    for comp, idx in sel.entries:
        if comp == "*":
            flat = range(header.total_points)
        else:
            spec = header.component(comp)
            base = header.offset(comp)
            if idx is None:
                flat = range(base, base + spec.point_count)
            else:
                if not 0 <= idx < spec.point_count:
                    raise IndexOutOfRange(
                        f"selection {sel.name}: {comp}:{idx} out of range "
                        f"(component has {spec.point_count} points)"
                    )
                flat = (base + idx,)
        for f in flat:
            if f in seen:
                raise ValueError(f"selection {sel.name}: point {f} selected twice")
            seen.add(f)
            out.append(f)
    return out


def parse_selection_entries(items: Iterable[str]) -> list[tuple[str, int | None]]:
    """Parse ``COMP:idx``, ``COMP:a-b``, ``COMP:*`` and ``*`` entry strings."""
    entries: list[tuple[str, int | None]] = []
    for item in items:
        if item == "*":
            entries.append(("*", None))
            continue
        comp, sep, rest = item.partition(":")
        if not sep or not comp:
            raise ValueError(f"bad selection entry {item!r}")
        if rest == "*":
            entries.append((comp, None))
        elif "-" in rest:
            lo, hi = (int(x) for x in rest.split("-", 1))
            if hi < lo:
                raise ValueError(f"bad selection range {item!r}")
            entries.extend((comp, i) for i in range(lo, hi + 1))
        else:
            entries.append((comp, int(rest)))
    return entries


# --- file I/O ---------------------------------------------------------------


def _fmt_fps(fps: float) -> str:
    return repr(float(fps))


def encode_header(header: PoseHeader, frames: int) -> bytes:
    lines = [f"fps={_fmt_fps(header.fps)}"]
    for c in header.components:
        line = f"component={c.name}:{c.point_count}:{c.dims}"
        if c.point_names is not None:
            line += ":" + ",".join(c.point_names)
        lines.append(line)
    lines.append(f"frames={frames}")
    return MAGIC + ("\n".join(lines) + "\n\n").encode("utf-8")


def write_pose_file(seq: PoseSequence, path: str | os.PathLike) -> None:
    """Write ``seq`` as a ``.posec`` file (float32 little-endian body)."""
    if not (np.isfinite(seq.coords).all() and np.isfinite(seq.confidence).all()):
        raise NonFiniteValue("refusing to write non-finite values")
    data = b"".join(
        (
            encode_header(seq.header, seq.frames),
            seq.coords.astype(_F32).tobytes(order="C"),
            seq.confidence.astype(_F32).tobytes(order="C"),
        )
    )
    try:
        Path(path).write_bytes(data)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def _parse_header(raw: bytes, path: str | None) -> tuple[PoseHeader, int, int]:
    if not raw.startswith(MAGIC):
        raise MalformedFile("missing POSEC magic", "byte 0", path)
    end = raw.find(b"\n\n", len(MAGIC) - 1)
    if end < 0:
        raise MalformedFile("header not terminated by a blank line", f"byte {len(raw)}", path)
    body_start = end + 2
    try:
        text = raw[len(MAGIC) : end + 1].decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedFile("header is not valid UTF-8", f"byte {len(MAGIC) + e.start}", path) from e

    fps = None
    frames = None
    components: list[ComponentSpec] = []
    for lineno, line in enumerate(text.split("\n")[:-1], start=2):
        loc = f"line {lineno}"
        key, sep, value = line.partition("=")
        if not sep:
            raise MalformedFile(f"expected key=value, got {line!r}", loc, path)
        if key == "fps":
            if fps is not None:
                raise MalformedFile("duplicate fps", loc, path)
            try:
                fps = float(value)
            except ValueError:
                raise MalformedFile(f"fps is not a number: {value!r}", loc, path) from None
            if not (math.isfinite(fps) and fps > 0):
                raise MalformedFile(f"fps must be positive, got {value}", loc, path)
        elif key == "component":
            if frames is not None:
                raise MalformedFile("component declared after frames", loc, path)
            parts = value.split(":", 3)
            if len(parts) < 3:
                raise MalformedFile(f"component needs name:count:dims, got {value!r}", loc, path)
            try:
                count, dims = int(parts[1]), int(parts[2])
            except ValueError:
                raise MalformedFile(f"non-integer count/dims in {value!r}", loc, path) from None
            names = tuple(parts[3].split(",")) if len(parts) == 4 else None
            try:
                components.append(ComponentSpec(parts[0], count, dims, names))
            except ValueError as e:
                raise MalformedFile(str(e), loc, path) from None
        elif key == "frames":
            if frames is not None:
                raise MalformedFile("duplicate frames", loc, path)
            if not value.isdigit():
                raise MalformedFile(f"frames must be a non-negative integer, got {value!r}", loc, path)
            frames = int(value)
        else:
            raise MalformedFile(f"unknown header key {key!r}", loc, path)
    if fps is None:
        raise MalformedFile("missing fps", "header", path)
    if frames is None:
        raise MalformedFile("missing frames", "header", path)
    if not components:
        raise MalformedFile("no components declared", "header", path)
    try:
        header = PoseHeader(fps=fps, components=tuple(components))
    except ValueError as e:
        raise MalformedFile(str(e), "header", path) from None
    return header, frames, body_start


def parse_pose_bytes(raw: bytes, path: str | None = None) -> PoseSequence:
    header, frames, start = _parse_header(raw, path)
    n, d = header.total_points, header.dims
    n_coords = frames * n * d
    n_conf = frames * n
    expected = 4 * (n_coords + n_conf)
    actual = len(raw) - start
    if actual != expected:
        raise DimensionMismatch(
            f"{path or '<bytes>'}: body at byte {start} has {actual} bytes, "
            f"header declares {frames} frames x {n} points x {d} dims = {expected} bytes"
        )
    flat = np.frombuffer(raw, dtype=_F32, offset=start)
    coords = flat[:n_coords].reshape(frames, n, d)
    conf = flat[n_coords:].reshape(frames, n)
    bad = ~np.isfinite(coords)
    if bad.any():
        f, p, _ = np.argwhere(bad)[0]
        raise NonFiniteValue(f"{path or '<bytes>'}: non-finite coordinate at frame {f}, point {p}")
    badc = ~np.isfinite(conf) | (conf < 0) | (conf > 1)
    if badc.any():
        f, p = np.argwhere(badc)[0]
        raise MalformedFile(
            f"confidence {conf[f, p]!r} outside [0, 1] at frame {f}, point {p}",
            f"byte {start + 4 * (n_coords + f * n + p)}",
            path,
        )
    return PoseSequence(header=header, coords=coords, confidence=conf)


def _read_posec(path: Path) -> PoseSequence:
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    return parse_pose_bytes(raw, str(path))


# Extension point: other containers register a reader by file suffix.
READERS: dict[str, Callable[[Path], PoseSequence]] = {".posec": _read_posec}


def register_reader(suffix: str, reader: Callable[[Path], PoseSequence]) -> None:
    READERS[suffix.lower()] = reader


def read_pose_file(path: str | os.PathLike) -> PoseSequence:
    """Read a pose file; the reader is chosen by suffix (``.posec`` by default)."""
    p = Path(path)
    reader = READERS.get(p.suffix.lower(), _read_posec)
    return reader(p)


def from_arrays(
    coords: Sequence | np.ndarray,
    confidence: Sequence | np.ndarray | None = None,
    fps: float = 25.0,
    components: Sequence[tuple[str, int]] | None = None,
) -> PoseSequence:
    """Convenience constructor: one component ``POINTS`` unless given."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 2:  # frames x points, 1-D coordinates promoted to 2-D (y = 0)
        coords = np.stack([coords, np.zeros_like(coords)], axis=-1)
    frames, points, dims = coords.shape
    if confidence is None:
        confidence = np.ones((frames, points))
    if components is None:
        components = [("POINTS", points)]
    header = PoseHeader(fps=fps, components=tuple(ComponentSpec(n, c, dims) for n, c in components))
    return PoseSequence(header=header, coords=coords, confidence=confidence)


__all__ = [
    "ComponentSpec",
    "PoseHeader",
    "PoseSequence",
    "KeypointSelection",
    "resolve_selection",
    "parse_selection_entries",
    "read_pose_file",
    "write_pose_file",
    "parse_pose_bytes",
    "register_reader",
    "from_arrays",
]

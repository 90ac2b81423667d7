"""Metric-variant grids and the canonical variant-name grammar.

Grammar (``+``-separated, base first, remaining tokens in any order)::

    BASE        APE | MSE | DTW | NDTW
    Trim        trim signing-inactive edge frames
    Norm        shoulder normalization (``Norm.`` accepted)
    MaskFill<v> fill masked keypoints with v
    PairZeroFill  Ham2Pose pairwise zero fill
    MaskDist<v> masked pairs contribute distance v
    Hide<v>     mask keypoints with confidence < v
    FPS<v>      resample to v frames/second
    DropWorld   drop ``*_WORLD`` components
    L1          L1 point distance (L2 otherwise)
    PadZero | PadFirst
    <selection> preset key or label, e.g. ``Hands-Only``
"""

from __future__ import annotations

import itertools
import logging
import re
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .distance import Base, MetricConfig, Padding, Pointwise
from .errors import ConfigError, EmptyAxis, ParseError, UnknownComponent
from .preprocess import DEFAULT_HIDE_THRESHOLD, PreprocessConfig
from .selections import get_selection

log = logging.getLogger(__name__)

_NUM = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_VALUED = re.compile(rf"^(MaskFill|MaskDist|Hide|FPS)({_NUM})$")

# Short names used in reports and on the command line.
ALIASES = {
    "DTWp": "DTW+Trim+MaskFill10.0+Hands-Only",
    "nDTWp": "DTW+Norm+MaskFill1.0+Hands-Only",
    "nAPE": f"APE+Norm+PairZeroFill+Hide{DEFAULT_HIDE_THRESHOLD!r}+DropWorld+PadZero+Reduced",
    "nMSE": f"MSE+Norm+PairZeroFill+Hide{DEFAULT_HIDE_THRESHOLD!r}+DropWorld+PadZero+Reduced",
    "nDTW": f"DTW+Norm+Hide{DEFAULT_HIDE_THRESHOLD!r}+DropWorld+Reduced",
}


def named_config(name: str) -> MetricConfig:
    """Parse a canonical variant name (or an alias from ``ALIASES``)."""
    if name in ALIASES:
        name = ALIASES[name]
    tokens = name.split("+")
    positions = list(itertools.accumulate([0] + [len(t) + 1 for t in tokens[:-1]]))
    try:
        base = Base(tokens[0])
    except ValueError:
        raise ParseError(f"unknown base metric {tokens[0]!r}", name, 0) from None

    pre: dict = {}
    opts: dict = {}
    seen: set[str] = set()
    for tok, pos in zip(tokens[1:], positions[1:]):
        if not tok:
            raise ParseError("empty token", name, pos)
        m = _VALUED.match(tok)
        key = m.group(1) if m else ("Norm" if tok == "Norm." else tok)
        key_id = "Pad" if key in ("PadZero", "PadFirst") else key
        if key_id in seen:
            raise ParseError(f"duplicate token {tok!r}", name, pos)
        seen.add(key_id)
        if m:
            value = float(m.group(2))
            field_name = {
                "MaskFill": ("pre", "fill_value"),
                "MaskDist": ("opt", "default_distance"),
                "Hide": ("pre", "hide_below_confidence"),
                "FPS": ("pre", "target_fps"),
            }[m.group(1)]
            (pre if field_name[0] == "pre" else opts)[field_name[1]] = value
        elif key == "Trim":
            pre["trim"] = True
        elif key == "Norm":
            pre["normalize"] = True
        elif key == "DropWorld":
            pre["drop_world"] = True
        elif key == "PairZeroFill":
            opts["pairwise_zero_fill"] = True
        elif key == "L1":
            opts["pointwise"] = Pointwise.L1
        elif key_id == "Pad":
            if base.is_dtw:
                raise ParseError(f"{base.value} takes no padding", name, pos)
            opts["padding"] = Padding.ZERO if key == "PadZero" else Padding.FIRST_FRAME
        else:
            try:
                sel = get_selection(tok)
            except UnknownComponent:
                raise ParseError(f"unknown token {tok!r}", name, pos) from None
            if "selection" in pre:
                raise ParseError("more than one keypoint selection", name, pos)
            pre["selection"] = sel.name
    try:
        return MetricConfig(base=base, preprocess=PreprocessConfig(**pre), **opts)
    except ValueError as e:
        raise ParseError(str(e), name, 0) from None


def resolve_metric(spec: str | MetricConfig) -> MetricConfig:
    return spec if isinstance(spec, MetricConfig) else named_config(spec)


@dataclass(frozen=True)
class GridSpec:
    bases: tuple[Base, ...]
    fills: tuple[float | None, ...] = (None,)
    trims: tuple[bool, ...] = (False,)
    norms: tuple[bool, ...] = (False,)
    paddings: tuple[Padding, ...] = (Padding.ZERO,)
    selections: tuple[str | None, ...] = (None,)
    pointwise: tuple[Pointwise, ...] = (Pointwise.L2,)
    base_preprocess: PreprocessConfig = PreprocessConfig()

    def __post_init__(self):
        for axis in ("bases", "fills", "trims", "norms", "paddings", "selections", "pointwise"):
            values = tuple(getattr(self, axis))
            if not values:
                raise EmptyAxis(f"grid axis {axis!r} is empty")
            object.__setattr__(self, axis, values)
        object.__setattr__(self, "bases", tuple(Base(b) for b in self.bases))
        object.__setattr__(self, "paddings", tuple(Padding(p) for p in self.paddings))
        object.__setattr__(self, "pointwise", tuple(Pointwise(p) for p in self.pointwise))
        if Padding.NONE in self.paddings:
            raise ConfigError("padding axis takes ZERO / FIRST_FRAME; DTW bases ignore it")
        for s in self.selections:
            if s is not None:
                get_selection(s)

    @property
    def size(self) -> int:
        """Raw cross-product size, before dropping invalid/duplicate combinations."""
        n = 1
        for axis in (self.bases, self.fills, self.trims, self.norms, self.paddings,
                     self.selections, self.pointwise):
            n *= len(axis)
        return n

    @classmethod
    def from_mapping(cls, table: dict) -> "GridSpec":
        def opt(v):
            return None if isinstance(v, str) and v.lower() == "none" else v

        kw = {}
        if "bases" not in table:
            raise EmptyAxis("grid needs a 'bases' axis")
        kw["bases"] = tuple(table["bases"])
        if "fills" in table:
            kw["fills"] = tuple(None if opt(v) is None else float(v) for v in table["fills"])
        for key in ("trims", "norms"):
            if key in table:
                kw[key] = tuple(bool(v) for v in table[key])
        if "paddings" in table:
            kw["paddings"] = tuple(
                Padding.FIRST_FRAME if str(p).upper() in ("FIRST", "FIRST_FRAME") else Padding(str(p).upper())
                for p in table["paddings"]
            )
        if "selections" in table:
            kw["selections"] = tuple(
                None if opt(s) is None else get_selection(s).name for s in table["selections"]
            )
        if "pointwise" in table:
            kw["pointwise"] = tuple(table["pointwise"])
        extra = {k: table[k] for k in ("drop_world", "hide_below_confidence", "target_fps") if k in table}
        if extra:
            kw["base_preprocess"] = PreprocessConfig(**extra)
        unknown = set(table) - {"bases", "fills", "trims", "norms", "paddings", "selections",
                                "pointwise", "drop_world", "hide_below_confidence", "target_fps"}
        if unknown:
            raise ConfigError(f"unknown grid keys: {sorted(unknown)}")
        return cls(**kw)


def expand(spec: GridSpec) -> list[MetricConfig]:
    """Cross product of the grid axes minus invalid and duplicate combinations."""
    log.info("grid cross-product size %d", spec.size)
    out: list[MetricConfig] = []
    seen: set[MetricConfig] = set()
    for base, fill, trim, norm, pad, sel, pw in itertools.product(
        spec.bases, spec.fills, spec.trims, spec.norms, spec.paddings, spec.selections, spec.pointwise
    ):
        pre = replace(spec.base_preprocess, fill_value=fill, trim=trim, normalize=norm, selection=sel)
        cfg = MetricConfig(
            base=base,
            padding=Padding.NONE if base.is_dtw else pad,
            preprocess=pre,
            pointwise=pw,
        )
        if cfg not in seen:
            seen.add(cfg)
            out.append(cfg)
    return out


def load_grid(path: str | Path | None = None, section: str = "grid") -> GridSpec:
    """Load a ``[grid]`` table from a TOML file (the shipped 48-variant grid by default)."""
    if path is None:
        text = resources.files("pose_eval.data").joinpath("variant_grid.toml").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table = tomllib.loads(text)
    if section not in table:
        raise ConfigError(f"no [{section}] section in {path or 'variant_grid.toml'}")
    return GridSpec.from_mapping(table[section])


def variant_names(configs: Sequence[MetricConfig]) -> list[str]:
    return [c.name for c in configs]

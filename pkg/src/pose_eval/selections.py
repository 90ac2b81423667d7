"""Named keypoint selection presets and the MediaPipe Holistic layout."""

from __future__ import annotations

import sys
from functools import lru_cache
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import UnknownComponent
from .pose import ComponentSpec, KeypointSelection, PoseHeader, parse_selection_entries

POSE_LANDMARK_NAMES = (
    "NOSE", "LEFT_EYE_INNER", "LEFT_EYE", "LEFT_EYE_OUTER", "RIGHT_EYE_INNER",
    "RIGHT_EYE", "RIGHT_EYE_OUTER", "LEFT_EAR", "RIGHT_EAR", "MOUTH_LEFT",
    "MOUTH_RIGHT", "LEFT_SHOULDER", "RIGHT_SHOULDER", "LEFT_ELBOW", "RIGHT_ELBOW",
    "LEFT_WRIST", "RIGHT_WRIST", "LEFT_PINKY", "RIGHT_PINKY", "LEFT_INDEX",
    "RIGHT_INDEX", "LEFT_THUMB", "RIGHT_THUMB", "LEFT_HIP", "RIGHT_HIP",
    "LEFT_KNEE", "RIGHT_KNEE", "LEFT_ANKLE", "RIGHT_ANKLE", "LEFT_HEEL",
    "RIGHT_HEEL", "LEFT_FOOT_INDEX", "RIGHT_FOOT_INDEX",
)  # fmt: skip

LEFT_SHOULDER = ("POSE", 11)
RIGHT_SHOULDER = ("POSE", 12)


def holistic_header(
    fps: float = 25.0, dims: int = 2, face_points: int = 468, world: bool = False
) -> PoseHeader:
    """Header with the MediaPipe Holistic components (543 points by default)."""
    comps = [
        ComponentSpec("POSE", 33, dims, POSE_LANDMARK_NAMES),
        ComponentSpec("FACE", face_points, dims),
        ComponentSpec("LEFT_HAND", 21, dims),
        ComponentSpec("RIGHT_HAND", 21, dims),
    ]
    if world:
        comps.append(ComponentSpec("POSE_WORLD", 33, dims, POSE_LANDMARK_NAMES))
    return PoseHeader(fps=fps, components=tuple(comps))


def load_presets(path: str | Path | None = None) -> dict[str, KeypointSelection]:
    if path is None:
        text = resources.files("pose_eval.data").joinpath("selections.toml").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table = tomllib.loads(text)
    out = {}
    for name, body in table.items():
        entries = parse_selection_entries(body["points"])
        out[name] = KeypointSelection(name=name, entries=tuple(entries), label=body.get("label"))
    return out


@lru_cache(maxsize=None)
def _builtin() -> dict[str, KeypointSelection]:
    return load_presets()


def preset_names() -> list[str]:
    return list(_builtin())


def get_selection(name: str) -> KeypointSelection:
    """Look a preset up by key (``HANDS_ONLY``) or display label (``Hands-Only``)."""
    presets = _builtin()
    if name in presets:
        return presets[name]
    for sel in presets.values():
        if sel.label == name:
            return sel
    raise UnknownComponent(f"unknown selection preset {name!r}; known: {sorted(presets)}")

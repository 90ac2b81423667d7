"""Deterministic synthetic sign corpora for exercising the retrieval protocol.

Each gloss gets a prototype: a wrist trajectory and a hand shape for both
hands. A sample is the prototype played back on a warped time axis with
Gaussian coordinate noise, on a fixed body and face. Hands are undetected
(confidence 0) for a few frames at both ends, as in real recordings where
the signer starts and ends with hands down.

``separable``: mild warps and small noise. Every intra-gloss distance is far
below every inter-gloss distance, so a DTW metric must retrieve perfectly.

``noisy``: strong nonlinear warps, length spread and random keypoint dropout.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pose import PoseSequence, write_pose_file
from .retrieval import RetrievalDataset, RetrievalItem, write_manifest
from .selections import holistic_header


@dataclass(frozen=True)
class CorpusParams:
    glosses: int = 10
    samples: int = 10
    min_frames: int = 20
    max_frames: int = 28
    warp: float = 0.15  # exponent range for t -> t**g is [1/(1+w), 1+w]
    noise: float = 0.004
    dropout: float = 0.0  # chance a hand is missing in an interior frame
    point_dropout: float = 0.0  # chance any single point is missing
    edge_frames: tuple[int, int] = (1, 3)  # masked hand frames at each end
    amplitude: float = 0.35


SEPARABLE = CorpusParams()
NOISY = CorpusParams(min_frames=14, max_frames=44, warp=1.2, noise=0.03,
                     dropout=0.12, point_dropout=0.05, edge_frames=(0, 5), amplitude=0.25)
KINDS = {"separable": SEPARABLE, "noisy": NOISY}

FPS = 25.0
_SHOULDERS = np.array([[0.2, 0.0], [-0.2, 0.0]])  # POSE 11 (left), 12 (right)


def _body(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Static pose (33) and face (468) coordinates shared by the whole corpus."""
    pose = np.zeros((33, 2))
    pose[0] = (0.0, -0.45)  # nose
    pose[1:11] = pose[0] + rng.normal(0, 0.05, (10, 2))
    pose[11:13] = _SHOULDERS
    pose[23:25] = [[0.15, 0.6], [-0.15, 0.6]]
    pose[25:33] = [[0.15, 1.0], [-0.15, 1.0], [0.15, 1.4], [-0.15, 1.4],
                   [0.15, 1.45], [-0.15, 1.45], [0.18, 1.5], [-0.18, 1.5]]
    ang = rng.uniform(0, 2 * np.pi, 468)
    rad = 0.12 * np.sqrt(rng.uniform(0, 1, 468))
    face = pose[0] + np.stack([rad * np.cos(ang), 1.3 * rad * np.sin(ang)], axis=1)
    return pose, face


@dataclass(frozen=True)
class _Prototype:
    coef: np.ndarray  # (hand, harmonic, dim, sin/cos)
    start: np.ndarray  # (hand, dim)
    shape: np.ndarray  # (hand, 21, dim) offsets from the wrist

    def wrists(self, t: np.ndarray, amplitude: float) -> np.ndarray:
        k = np.arange(1, self.coef.shape[1] + 1)
        phase = np.pi * t[:, None] * k[None, :]  # (T, K)
        wave = (np.einsum("hkds,tk->thd", self.coef[..., :1], np.sin(phase))
                + np.einsum("hkds,tk->thd", self.coef[..., 1:], 1 - np.cos(phase)))
        return self.start[None] + amplitude * wave


def _prototype(rng: np.random.Generator) -> _Prototype:
    coef = rng.normal(0, 1, (2, 3, 2, 2)) / np.array([1, 2, 3])[None, :, None, None]
    start = np.array([[0.25, -0.1], [-0.25, -0.1]]) + rng.normal(0, 0.05, (2, 2))
    shape = rng.normal(0, 0.05, (2, 21, 2))
    shape[:, 0] = 0.0
    return _Prototype(coef, start, shape)


def _sample(rng: np.random.Generator, proto: _Prototype, pose: np.ndarray, face: np.ndarray,
            p: CorpusParams) -> PoseSequence:
    n = int(rng.integers(p.min_frames, p.max_frames + 1))
    g = float(np.exp(rng.uniform(-np.log1p(p.warp), np.log1p(p.warp))))
    t = np.linspace(0.0, 1.0, n) ** g
    wrists = proto.wrists(t, p.amplitude)  # (n, 2 hands, 2)
    hands = wrists[:, :, None, :] + proto.shape[None]  # (n, 2, 21, 2)

    body = np.repeat(pose[None], n, axis=0)
    body[:, 15] = wrists[:, 0]  # left wrist
    body[:, 16] = wrists[:, 1]
    body[:, 13] = (body[:, 11] + body[:, 15]) / 2 + [0.05, 0.05]
    body[:, 14] = (body[:, 12] + body[:, 16]) / 2 + [-0.05, 0.05]
    body[:, 17:23] = np.repeat(wrists, 3, axis=1)[:, [0, 3, 1, 4, 2, 5]]
    coords = np.concatenate([body, np.repeat(face[None], n, axis=0),
                             hands[:, 0], hands[:, 1]], axis=1)
    coords = coords + rng.normal(0, p.noise, coords.shape)
    conf = np.ones(coords.shape[:2])

    lh, rh = slice(501, 522), slice(522, 543)
    lo, hi = p.edge_frames
    lead, trail = int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))
    hand_off = np.zeros(n, dtype=bool)
    hand_off[:lead] = True
    hand_off[n - trail:] = True
    for sl in (lh, rh):
        off = hand_off | (rng.uniform(size=n) < p.dropout)
        conf[off, sl] = 0.0
    if p.point_dropout:
        conf[rng.uniform(size=conf.shape) < p.point_dropout] = 0.0
    conf[:, 11:13] = 1.0  # keep shoulders so normalization is always defined
    coords[conf == 0] = 0.0
    # values as stored on disk, so in-memory and file corpora are identical
    coords = coords.astype(np.float32).astype(np.float64)
    return PoseSequence(holistic_header(fps=FPS), coords, conf)


def make_corpus(kind: str | CorpusParams = "separable", seed: int = 0,
                glosses: int | None = None, samples: int | None = None
                ) -> list[tuple[str, str, PoseSequence]]:
    """``(id, gloss, sequence)`` triples, fully determined by (kind, seed)."""
    p = KINDS[kind] if isinstance(kind, str) else kind
    n_gloss = glosses or p.glosses
    n_samp = samples or p.samples
    rng = np.random.default_rng(seed)
    pose, face = _body(rng)
    protos = [_prototype(rng) for _ in range(n_gloss)]
    out = []
    for gi, proto in enumerate(protos):
        gloss = f"G{gi:02d}"
        for si in range(n_samp):
            out.append((f"{gloss}_{si:02d}", gloss, _sample(rng, proto, pose, face, p)))
    return out


def write_corpus(out_dir: str | os.PathLike, kind: str = "separable", seed: int = 0,
                 glosses: int | None = None, samples: int | None = None) -> RetrievalDataset:
    """Write ``<id>.posec`` files plus ``manifest.tsv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = []
    for sid, gloss, seq in make_corpus(kind, seed, glosses, samples):
        path = out / f"{sid}.posec"
        write_pose_file(seq, path)
        items.append(RetrievalItem(sid, gloss, str(path)))
    ds = RetrievalDataset(tuple(items), seed)
    write_manifest(out / "manifest.tsv", ds, relative_to=out)
    return ds


def shuffled_labels(ds: RetrievalDataset, seed: int = 0) -> RetrievalDataset:
    """Same items and paths with the gloss labels randomly permuted."""
    glosses = [it.gloss for it in ds.items]
    perm = np.random.default_rng(seed).permutation(len(glosses))
    items = tuple(RetrievalItem(it.id, glosses[j], it.path) for it, j in zip(ds.items, perm))
    return RetrievalDataset(items, ds.rng_seed)

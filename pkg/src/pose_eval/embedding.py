"""Similarity over precomputed embeddings, and ingestion of external score files.

No encoder runs here: SignCLIP-style embeddings and per-segment model scores
(SkeletonVAE, SKL, back-translation likelihood, BLEURT) arrive as CSV files.

Embedding CSV: ``id,source,v0,...,v{d-1}``. External score CSV: ``id,score``.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateSegment,
    InconsistentDimension,
    IoFailure,
    MalformedFile,
    SourceMismatch,
    ZeroVector,
)
from .stats import Polarity


class Source(str, enum.Enum):
    POSE = "POSE"
    TEXT = "TEXT"


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    id: str
    values: np.ndarray
    source: Source = Source.POSE

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(v).all():
            raise ValueError(f"embedding {self.id}: non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "source", Source(self.source))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return (
            self.id == other.id
            and self.source == other.source
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None  # type: ignore[assignment]


def _dot(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dim != b.dim:
        raise DimensionMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    return float(np.dot(a.values, b.values))


def signclip_score_pp(ref: EmbeddingVector, hyp: EmbeddingVector) -> float:
    """Pose-to-pose score: plain dot product of reference and hypothesis embeddings."""
    if ref.source is not Source.POSE or hyp.source is not Source.POSE:
        raise SourceMismatch("pose-to-pose scoring needs two POSE embeddings")
    return _dot(ref, hyp)


def signclip_score_pt(text_emb: EmbeddingVector, pose_emb: EmbeddingVector) -> float:
    """Reference-free pose-to-text score: dot product of a TEXT and a POSE embedding."""
    if text_emb.source is not Source.TEXT or pose_emb.source is not Source.POSE:
        raise SourceMismatch(
            f"pose-to-text scoring needs (TEXT, POSE), got "
            f"({text_emb.source.value}, {pose_emb.source.value})"
        )
    return _dot(text_emb, pose_emb)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return max(-1.0, min(1.0, _dot(a, b) / (na * nb)))


def read_embedding_set(path: str | os.PathLike) -> list[EmbeddingVector]:
    path = str(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if header[:2] != ["id", "source"] or header[2:] != [f"v{i}" for i in range(len(header) - 2)]:
            raise MalformedFile("header must be id,source,v0,v1,...", "line 1", path)
        dim = len(header) - 2
        out: list[EmbeddingVector] = []
        seen: set[tuple[str, str]] = set()
        for row in reader:
            loc = f"line {reader.line_num}"
            if not row:
                continue
            if len(row) != dim + 2:
                raise InconsistentDimension(
                    f"row has {len(row) - 2} values, header declares {dim}", loc, path
                )
            try:
                source = Source(row[1])
            except ValueError:
                raise MalformedFile(f"source must be POSE or TEXT, got {row[1]!r}", loc, path) from None
            try:
                values = [float(v) for v in row[2:]]
            except ValueError:
                raise MalformedFile("non-numeric embedding value", loc, path) from None
            if not all(math.isfinite(v) for v in values):
                raise MalformedFile("non-finite embedding value", loc, path)
            key = (row[0], source.value)
            if key in seen:
                raise DuplicateSegment(f"duplicate embedding {row[0]} ({source.value})", loc, path)
            seen.add(key)
            out.append(EmbeddingVector(row[0], np.array(values), source))
    return out


def write_embedding_set(path: str | os.PathLike, vectors: Iterable[EmbeddingVector]) -> None:
    vectors = list(vectors)
    dims = {v.dim for v in vectors}
    if len(dims) > 1:
        raise InconsistentDimension(f"mixed embedding dims {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "source"] + [f"v{i}" for i in range(dim)])
        for v in vectors:
            w.writerow([v.id, v.source.value] + [repr(float(x)) for x in v.values])


def index_embeddings(
    vectors: Iterable[EmbeddingVector], source: Source | str | None = None
) -> dict[str, EmbeddingVector]:
    """Map segment id to vector, optionally keeping a single source."""
    src = None if source is None else Source(source)
    return {v.id: v for v in vectors if src is None or v.source is src}


@dataclass
class ExternalScoreSet:
    metric_name: str
    polarity: Polarity
    scores: dict[str, float] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not self.scores


def read_external_scores(
    path: str | os.PathLike,
    polarity: Polarity | str = Polarity.HIGHER_BETTER,
    metric_name: str | None = None,
) -> ExternalScoreSet:
    path = str(path)
    polarity = Polarity.parse(polarity)
    name = metric_name or Path(path).stem
    scores: dict[str, float] = {}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return ExternalScoreSet(name, polarity, scores)
        if header != ["id", "score"]:
            raise MalformedFile(f"header must be id,score, got {','.join(header)}", "line 1", path)
        for row in reader:
            loc = f"line {reader.line_num}"
            if not row:
                continue
            if len(row) != 2:
                raise MalformedFile(f"expected 2 columns, got {len(row)}", loc, path)
            seg, raw = row
            try:
                value = float(raw)
            except ValueError:
                raise MalformedFile(f"score is not a number: {raw!r}", loc, path) from None
            if not math.isfinite(value):
                raise MalformedFile(f"non-finite score {raw!r}", loc, path)
            if seg in scores:
                raise DuplicateSegment(f"duplicate segment id {seg!r}", loc, path)
            scores[seg] = value
    return ExternalScoreSet(name, polarity, scores)

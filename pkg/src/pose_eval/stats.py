"""Correlation and agreement statistics for human-judgment meta-evaluation.

Ratings CSV: ``segment,system,language,rater,score`` (repeats add ``pass``).
Score-table CSV: ``segment,system,language,metric,value``.

A rated *item* is a (segment, system) pair: the same source segment
translated by two systems is two items.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import (
    DegenerateVariance,
    DuplicateSegment,
    EmptyJoin,
    InsufficientRaters,
    IoFailure,
    LengthMismatch,
    MalformedFile,
    NoRepeats,
    PoseEvalError,
)

DEFAULT_BINS = 7
SD_DDOF = 1  # sample SD; reproduces the SD row of the published correlation table


class Polarity(str, enum.Enum):
    HIGHER_BETTER = "HIGHER_BETTER"
    LOWER_BETTER = "LOWER_BETTER"

    @property
    def arrow(self) -> str:
        return "↑" if self is Polarity.HIGHER_BETTER else "↓"

    @classmethod
    def parse(cls, value: "Polarity | str") -> "Polarity":
        if isinstance(value, Polarity):
            return value
        v = str(value).strip().lower()
        if v in ("higher_better", "higher", "high", "up", "↑", "+"):
            return cls.HIGHER_BETTER
        if v in ("lower_better", "lower", "low", "down", "↓", "-"):
            return cls.LOWER_BETTER
        raise ValueError(f"unknown polarity {value!r}")


class GroupBy(str, enum.Enum):
    SYSTEM = "SYSTEM"
    LANGUAGE = "LANGUAGE"
    OVERALL = "OVERALL"


@dataclass(frozen=True)
class Rating:
    segment: str
    system: str
    language: str
    rater: str
    score: float

    @property
    def item(self) -> tuple[str, str]:
        return (self.segment, self.system)


@dataclass(frozen=True)
class TableRecord:
    segment: str
    system: str
    language: str
    metric: str
    value: float


# --- file I/O ---------------------------------------------------------------


def _open_csv(path: str):
    try:
        return open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e


def _number(raw: str, what: str, loc: str, path: str) -> float:
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise MalformedFile(f"{what} is not a number: {raw!r}", loc, path) from None
    if not math.isfinite(v):
        raise MalformedFile(f"non-finite {what} {raw!r}", loc, path)
    return v


_RATING_COLS = ["segment", "system", "language", "rater", "score"]


def _read_rating_rows(path: str, with_pass: bool) -> list[tuple[Rating, int]]:
    cols = _RATING_COLS + (["pass"] if with_pass else [])
    out: list[tuple[Rating, int]] = []
    seen: set[tuple] = set()
    with _open_csv(path) as fh:
        reader = csv.DictReader(fh)
        missing = set(cols) - set(reader.fieldnames or ())
        if missing:
            raise MalformedFile(f"missing columns {sorted(missing)}", "line 1", path)
        for row in reader:
            loc = f"line {reader.line_num}"
            score = _number(row["score"], "score", loc, path)
            if not 0.0 <= score <= 100.0:
                raise MalformedFile(f"score {score} outside [0, 100]", loc, path)
            p = 1
            if with_pass:
                if row["pass"] not in ("1", "2"):
                    raise MalformedFile(f"pass must be 1 or 2, got {row['pass']!r}", loc, path)
                p = int(row["pass"])
            r = Rating(row["segment"], row["system"], row["language"], row["rater"], score)
            key = (r.segment, r.system, r.rater, p)
            if key in seen:
                raise DuplicateSegment(
                    f"rater {r.rater} rated {r.segment}/{r.system} twice", loc, path
                )
            seen.add(key)
            out.append((r, p))
    return out


def read_ratings(path: str | os.PathLike) -> list[Rating]:
    return [r for r, _ in _read_rating_rows(str(path), with_pass=False)]


def read_repeats(path: str | os.PathLike) -> tuple[list[Rating], list[Rating]]:
    """Split a replication file into (first pass, second pass) ratings."""
    rows = _read_rating_rows(str(path), with_pass=True)
    return [r for r, p in rows if p == 1], [r for r, p in rows if p == 2]


@dataclass
class ScoreTable:
    records: list[TableRecord] = field(default_factory=list)
    polarity: dict[str, Polarity] = field(default_factory=dict)

    def __post_init__(self):
        seen: set[tuple[str, str, str]] = set()
        for r in self.records:
            key = (r.segment, r.system, r.metric)
            if key in seen:
                raise DuplicateSegment(f"two values for {r.segment}/{r.system} metric {r.metric}")
            seen.add(key)

    @property
    def metrics(self) -> list[str]:
        """Metric names in order of first appearance."""
        return list(dict.fromkeys(r.metric for r in self.records))

    def polarity_of(self, metric: str) -> Polarity:
        return self.polarity.get(metric, Polarity.HIGHER_BETTER)

    def merged(self, other: "ScoreTable") -> "ScoreTable":
        return ScoreTable(self.records + other.records, {**self.polarity, **other.polarity})

    @classmethod
    def read(
        cls, path: str | os.PathLike, polarity: Mapping[str, Polarity | str] | None = None
    ) -> "ScoreTable":
        path = str(path)
        records: list[TableRecord] = []
        seen: set[tuple[str, str, str]] = set()
        with _open_csv(path) as fh:
            reader = csv.DictReader(fh)
            cols = {"segment", "system", "language", "metric", "value"}
            missing = cols - set(reader.fieldnames or ())
            if missing:
                raise MalformedFile(f"missing columns {sorted(missing)}", "line 1", path)
            for row in reader:
                loc = f"line {reader.line_num}"
                key = (row["segment"], row["system"], row["metric"])
                if key in seen:
                    raise DuplicateSegment(f"two values for {'/'.join(key)}", loc, path)
                seen.add(key)
                records.append(TableRecord(
                    row["segment"], row["system"], row["language"], row["metric"],
                    _number(row["value"], "value", loc, path),
                ))
        pol = {k: Polarity.parse(v) for k, v in (polarity or {}).items()}
        return cls(records, pol)

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["segment", "system", "language", "metric", "value"])
            for r in self.records:
                w.writerow([r.segment, r.system, r.language, r.metric, repr(float(r.value))])


def table_from_external(
    scores: Mapping[str, float], metric: str, ratings: Sequence[Rating],
    polarity: Polarity | str = Polarity.HIGHER_BETTER,
) -> ScoreTable:
    """Attach ``id -> score`` values to rated items.

    An id matches ``system:segment`` or, when the segment was rated for a
    single system only, the bare segment id. Ids that match nothing are
    dropped (the correlation join would ignore them anyway).
    """
    items: dict[tuple[str, str], str] = {}
    for r in ratings:
        items.setdefault(r.item, r.language)
    by_segment: dict[str, list[tuple[str, str]]] = defaultdict(list)
    for seg, sys_ in items:
        by_segment[seg].append((seg, sys_))
    records = []
    for sid in sorted(scores):
        if ":" in sid and tuple(reversed(sid.split(":", 1))) in items:
            sys_, seg = sid.split(":", 1)
            keys = [(seg, sys_)]
        elif len(by_segment.get(sid, ())) == 1:
            keys = by_segment[sid]
        else:
            continue
        for seg, sys_ in keys:
            records.append(TableRecord(seg, sys_, items[(seg, sys_)], metric, float(scores[sid])))
    return ScoreTable(records, {metric: Polarity.parse(polarity)})


# --- averages and ranks -----------------------------------------------------


def average_human(ratings: Iterable[Rating]) -> dict[tuple[str, str], float]:
    """Mean score per (segment, system) item."""
    sums: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in ratings:
        sums[r.item].append(r.score)
    if not sums:
        raise InsufficientRaters("no ratings to average")
    return {k: math.fsum(v) / len(v) for k, v in sums.items()}


def rankdata(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of their rank range."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks.

    Ranks are multiples of 1/2 and their mean is (n+1)/2, so the centred
    sums are exact in float64; the only rounding is in the final
    ``sxy / sqrt(sxx * syy)``.
    """
    if len(x) != len(y):
        raise LengthMismatch(f"lengths differ: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise LengthMismatch(f"need at least 3 observations, got {n}")
    rx, ry = rankdata(x), rankdata(y)
    mean = (n + 1) / 2
    dx = [r - mean for r in rx]
    dy = [r - mean for r in ry]
    sxx = sum(d * d for d in dx)
    syy = sum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise DegenerateVariance("Spearman correlation undefined for constant input")
    sxy = sum(a * b for a, b in zip(dx, dy))
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def std(values: Sequence[float], ddof: int = SD_DDOF) -> float:
    n = len(values)
    if n - ddof <= 0:
        return float("nan")
    m = math.fsum(values) / n
    return math.sqrt(math.fsum((v - m) ** 2 for v in values) / (n - ddof))


# --- correlation report -----------------------------------------------------


@dataclass(frozen=True)
class Cell:
    value: float | None = None
    error: str | None = None

    def render(self, digits: int = 6) -> str:
        if self.error is not None:
            return f"ERR:{self.error}"
        return f"{self.value:.{digits}f}"


@dataclass
class CorrelationReport:
    metrics: list[str]
    polarity: dict[str, Polarity]
    rows: list[tuple[str, str, dict[str, Cell]]]  # (section, group, cells)
    ddof: int = SD_DDOF

    def sd(self) -> dict[str, Cell]:
        """Per-metric SD over every reported row with a value."""
        out = {}
        for m in self.metrics:
            vals = [c[m].value for _, _, c in self.rows if c[m].value is not None]
            s = std(vals, self.ddof)
            out[m] = Cell(error="TooFewRows") if math.isnan(s) else Cell(s)
        return out

    def to_csv(self, path: str | os.PathLike | None = None, digits: int = 6) -> str:
        lines = [",".join(["section", "group"] + [f"{m} {self.polarity[m].arrow}" for m in self.metrics])]
        for section, group, cells in self.rows:
            lines.append(",".join([section, group] + [cells[m].render(digits) for m in self.metrics]))
        if len(self.rows) > 1:
            sd = self.sd()
            lines.append(",".join(["SD", "SD"] + [sd[m].render(digits) for m in self.metrics]))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _correlate_cell(pairs: list[tuple[float, float]], polarity: Polarity) -> Cell:
    sign = -1.0 if polarity is Polarity.LOWER_BETTER else 1.0
    try:
        return Cell(spearman([sign * m for m, _ in pairs], [h for _, h in pairs]))
    except PoseEvalError as e:
        return Cell(error=type(e).__name__)


def correlate(
    table: ScoreTable,
    human: Mapping[tuple[str, str], float],
    group_by: Sequence[GroupBy | str] | GroupBy | str = (GroupBy.SYSTEM, GroupBy.LANGUAGE, GroupBy.OVERALL),
) -> CorrelationReport:
    """Spearman correlation of each metric with the human means, per group.

    LOWER_BETTER metrics are negated first. The OVERALL row pools every
    joined record. Groups or cells that cannot be computed carry an error
    marker instead of a value.
    """
    if isinstance(group_by, (str, GroupBy)):
        group_by = [group_by]
    groups = [GroupBy(g.upper() if isinstance(g, str) else g) for g in group_by]
    metrics = table.metrics
    for r in table.records:
        if any("," in v for v in (r.metric, r.system, r.language)):
            raise MalformedFile(f"commas are not allowed in names: {r.system}/{r.language}/{r.metric}")
    polarity = {m: table.polarity_of(m) for m in metrics}

    joined: list[tuple[TableRecord, float]] = [
        (r, human[(r.segment, r.system)]) for r in table.records if (r.segment, r.system) in human
    ]
    rows: list[tuple[str, str, dict[str, Cell]]] = []
    for g in groups:
        if g is GroupBy.OVERALL:
            keys = ["Overall"]
            key_of = lambda r: "Overall"  # noqa: E731
        else:
            attr = "system" if g is GroupBy.SYSTEM else "language"
            keys = sorted({getattr(r, attr) for r in table.records})
            key_of = lambda r, a=attr: getattr(r, a)  # noqa: E731
        for key in keys:
            recs = [(r, h) for r, h in joined if key_of(r) == key]
            if not recs:
                rows.append((g.value, key, {m: Cell(error=EmptyJoin.__name__) for m in metrics}))
                continue
            cells = {}
            for m in metrics:
                # sorted for record-order independence
                pairs = sorted((r.segment, r.system, r.value, h) for r, h in recs if r.metric == m)
                cells[m] = _correlate_cell([(v, h) for _, _, v, h in pairs], polarity[m])
            rows.append((g.value, key, cells))
    return CorrelationReport(metrics, polarity, rows)


def absolute_score_table(table: ScoreTable) -> "AbsoluteTable":
    if not table.records:
        raise EmptyJoin("score table is empty")
    acc: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in table.records:
        acc[(r.system, r.metric)].append(r.value)
    systems = sorted({s for s, _ in acc})
    means = {k: math.fsum(v) / len(v) for k, v in acc.items()}
    return AbsoluteTable(systems, table.metrics, {m: table.polarity_of(m) for m in table.metrics}, means)


@dataclass
class AbsoluteTable:
    systems: list[str]
    metrics: list[str]
    polarity: dict[str, Polarity]
    means: dict[tuple[str, str], float]

    def to_csv(self, path: str | os.PathLike | None = None, digits: int = 6) -> str:
        lines = [",".join(["system"] + [f"{m} {self.polarity[m].arrow}" for m in self.metrics])]
        for s in self.systems:
            vals = [f"{self.means[(s, m)]:.{digits}f}" if (s, m) in self.means else "" for m in self.metrics]
            lines.append(",".join([s] + vals))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


# --- agreement --------------------------------------------------------------


def score_bin(score: float, bins: int = DEFAULT_BINS) -> int:
    """Equal-width bin of a 0-100 score; 100 falls in the top bin."""
    return min(int(math.floor(score * bins / 100.0)), bins - 1)


@dataclass(frozen=True)
class KappaParts:
    kappa: float
    p_bar: float
    p_e: float
    items: int


def fleiss_kappa_counts(counts: Sequence[Sequence[int]]) -> KappaParts:
    """Fleiss κ over an item × category count matrix.

    Items may have different rater counts n_i (each ≥ 2): per-item agreement
    is ``(Σ_j n_ij² − n_i) / (n_i (n_i − 1))`` and category proportions are
    pooled over all ratings.
    """
    rows = [list(r) for r in counts if sum(r) > 0]
    if not rows:
        raise InsufficientRaters("no rated items")
    total = 0
    p_items = []
    col = [0] * len(rows[0])
    for r in rows:
        n = sum(r)
        if n < 2:
            raise InsufficientRaters("every item needs at least 2 ratings")
        p_items.append((sum(c * c for c in r) - n) / (n * (n - 1)))
        total += n
        for j, c in enumerate(r):
            col[j] += c
    p_bar = math.fsum(p_items) / len(p_items)
    p_e = math.fsum((c / total) ** 2 for c in col)
    if p_e == 1.0:
        # every rating in one category: agreement is perfect by construction
        return KappaParts(1.0, p_bar, p_e, len(rows))
    return KappaParts((p_bar - p_e) / (1 - p_e), p_bar, p_e, len(rows))


def _count_matrix(groups: Iterable[Sequence[float]], bins: int) -> list[list[int]]:
    out = []
    for scores in groups:
        row = [0] * bins
        for s in scores:
            row[score_bin(s, bins)] += 1
        out.append(row)
    return out


def fleiss_kappa_binned(ratings: Iterable[Rating], bins: int = DEFAULT_BINS) -> KappaParts:
    """Fleiss κ after binning scores; items with fewer than 2 raters are left out."""
    by_item: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in ratings:
        by_item[r.item].append(r.score)
    usable = [by_item[k] for k in sorted(by_item) if len(by_item[k]) >= 2]
    if not usable:
        raise InsufficientRaters("no item was rated by at least 2 raters")
    return fleiss_kappa_counts(_count_matrix(usable, bins))


def kappa_by_language(
    ratings: Iterable[Rating], bins: int = DEFAULT_BINS
) -> dict[str, KappaParts | InsufficientRaters]:
    by_lang: dict[str, list[Rating]] = defaultdict(list)
    for r in ratings:
        by_lang[r.language].append(r)
    out: dict[str, KappaParts | InsufficientRaters] = {}
    for lang in sorted(by_lang):
        try:
            out[lang] = fleiss_kappa_binned(by_lang[lang], bins)
        except InsufficientRaters as e:
            out[lang] = e
    return out


@dataclass(frozen=True)
class IntraRaterResult:
    per_rater: dict[str, KappaParts]
    mean: float
    sd: float  # sample SD across raters; 0.0 with a single rater


def intra_rater_kappa(
    original: Iterable[Rating], repeats: Iterable[Rating], bins: int = DEFAULT_BINS
) -> IntraRaterResult:
    """Per-rater two-pass κ over that rater's repeated items."""
    first = {(r.rater, r.item): r.score for r in original}
    pairs: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for r in repeats:
        key = (r.rater, r.item)
        if key in first:
            pairs[r.rater].append((first[key], r.score))
    if not pairs:
        raise NoRepeats("no repeated rating matches an original rating by the same rater")
    per = {
        rater: fleiss_kappa_counts(_count_matrix(sorted(pairs[rater]), bins))
        for rater in sorted(pairs)
    }
    ks = [p.kappa for p in per.values()]
    mean = math.fsum(ks) / len(ks)
    sd = std(ks) if len(ks) > 1 else 0.0
    return IntraRaterResult(per, mean, sd)

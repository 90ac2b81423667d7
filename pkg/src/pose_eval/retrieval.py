"""Retrieval meta-evaluation of pose distance metrics.

Every sample of a gloss is a query. Its candidates are the other samples
of the same gloss (targets) plus distractors drawn from other glosses at a
1:4 target-to-distractor ratio. Candidates are ranked by the metric, and
the ranking is scored with average precision and precision@10.

Ties in score are broken by ascending candidate id, so results never depend
on dictionary or scheduling order.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Collection, Iterable, Mapping, Sequence

from .errors import InsufficientDistractors, IoFailure, MalformedFile, NoRelevant, PoseEvalError
from .pose import PoseSequence, read_pose_file

log = logging.getLogger(__name__)

DISTRACTOR_RATIO = 4
TOP_K = 10

Metric = Callable[[PoseSequence, PoseSequence], float]
Loader = Callable[[str], PoseSequence]


@dataclass(frozen=True)
class RetrievalItem:
    id: str
    gloss: str
    path: str


@dataclass(frozen=True)
class RetrievalDataset:
    items: tuple[RetrievalItem, ...]
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise MalformedFile(f"duplicate dataset ids: {dup[:5]}")

    @property
    def glosses(self) -> list[str]:
        """Glosses in order of first appearance."""
        return list(dict.fromkeys(it.gloss for it in self.items))

    def by_id(self) -> dict[str, RetrievalItem]:
        return {it.id: it for it in self.items}


def read_manifest(path: str | os.PathLike, rng_seed: int = 0) -> RetrievalDataset:
    """Read an ``id<TAB>gloss<TAB>path`` manifest; relative paths are taken
    relative to the manifest's directory."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    items = []
    with fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header != ["id", "gloss", "path"]:
            raise MalformedFile("header must be id<TAB>gloss<TAB>path", "line 1", str(path))
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise MalformedFile(f"expected 3 fields, got {len(row)}", f"line {reader.line_num}", str(path))
            p = Path(row[2])
            if not p.is_absolute():
                p = path.parent / p
            items.append(RetrievalItem(row[0], row[1], str(p)))
    return RetrievalDataset(tuple(items), rng_seed)


def write_manifest(path: str | os.PathLike, ds: RetrievalDataset, relative_to: str | os.PathLike | None = None) -> None:
    base = Path(relative_to) if relative_to is not None else None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("id\tgloss\tpath\n")
        for it in ds.items:
            p = os.path.relpath(it.path, base) if base is not None else it.path
            fh.write(f"{it.id}\t{it.gloss}\t{Path(p).as_posix()}\n")


# --- pools ------------------------------------------------------------------


@dataclass(frozen=True)
class RetrievalPool:
    gloss: str
    targets: tuple[str, ...]
    distractors: tuple[str, ...]

    @property
    def wanted(self) -> int:
        return DISTRACTOR_RATIO * len(self.targets)

    @property
    def shortfall(self) -> int:
        """Distractors missing to reach the 1:4 ratio (0 when met)."""
        return self.wanted - len(self.distractors)


def gloss_seed(rng_seed: int, gloss: str) -> int:
    """Per-gloss sampling seed, so adding a gloss does not reshuffle the others."""
    digest = hashlib.sha256(f"{rng_seed}:{gloss}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def build_pools(ds: RetrievalDataset, ratio: int = DISTRACTOR_RATIO) -> list[RetrievalPool]:
    glosses = ds.glosses
    if len(glosses) < 2:
        raise InsufficientDistractors("retrieval needs at least two glosses")
    pools = []
    for g in glosses:
        targets = tuple(it.id for it in ds.items if it.gloss == g)
        foreign = [it.id for it in ds.items if it.gloss != g]
        k = min(ratio * len(targets), len(foreign))
        picked = random.Random(gloss_seed(ds.rng_seed, g)).sample(range(len(foreign)), k)
        pool = RetrievalPool(g, targets, tuple(foreign[i] for i in sorted(picked)))
        if len(pool.distractors) < ratio * len(targets):
            log.warning("gloss %s: %d distractors available, %d wanted",
                        g, len(pool.distractors), ratio * len(targets))
        pools.append(pool)
    return pools


# --- ranking measures -------------------------------------------------------


def rank_candidates(scores: Mapping[str, float], lower_is_better: bool = True) -> list[str]:
    """Candidate ids best first; equal scores in ascending id order."""
    if lower_is_better:
        return sorted(scores, key=lambda c: (scores[c], c))
    return sorted(scores, key=lambda c: (-scores[c], c))


def average_precision(ranked: Sequence[str], relevant: Collection[str]) -> float:
    """Un-truncated AP: precision at each relevant rank, averaged over |relevant|."""
    relevant = set(relevant)
    if not relevant:
        raise NoRelevant("average precision needs at least one relevant item")
    hits = 0
    total = 0.0
    for r, item in enumerate(ranked, start=1):
        if item in relevant:
            hits += 1
            total += hits / r
    return total / len(relevant)


def precision_at_k(ranked: Sequence[str], relevant: Collection[str], k: int = TOP_K,
                   capped: bool = False) -> float:
    """Precision over the top ``min(k, len(ranked))`` items.

    With ``capped`` the denominator is further limited to ``|relevant|``, so
    a query with fewer than k possible hits can still reach 1.0. The two
    agree whenever ``|relevant| >= k``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    top = ranked[: min(k, len(ranked))]
    if not top:
        return 0.0
    relevant = set(relevant)
    hits = sum(1 for c in top if c in relevant)
    denom = min(len(top), len(relevant)) if capped and relevant else len(top)
    return hits / denom


# --- pair scoring -----------------------------------------------------------


def _score_chunk(metric: Metric, loader: Loader, paths: dict[str, str],
                 keys: list[tuple[str, str]]) -> dict[tuple[str, str], float | str]:
    """Score ``(hyp_id, ref_id)`` pairs; failures become an error string."""
    seqs: dict[str, PoseSequence | str] = {}

    def get(i: str):
        if i not in seqs:
            try:
                seqs[i] = loader(paths[i])
            except PoseEvalError as e:
                seqs[i] = f"{type(e).__name__}: {e}"
        return seqs[i]

    out: dict[tuple[str, str], float | str] = {}
    for h, r in keys:
        hs, rs = get(h), get(r)
        if isinstance(hs, str) or isinstance(rs, str):
            out[(h, r)] = hs if isinstance(hs, str) else rs
            continue
        try:
            v = float(metric(hs, rs))
        except PoseEvalError as e:
            out[(h, r)] = f"{type(e).__name__}: {e}"
            continue
        out[(h, r)] = v if math.isfinite(v) else "non-finite score"
    return out


def _chunks(keys: list[tuple[str, str]], n: int) -> list[list[tuple[str, str]]]:
    size = max(1, math.ceil(len(keys) / n))
    return [keys[i : i + size] for i in range(0, len(keys), size)]


def score_pairs(
    metric: Metric,
    keys: Sequence[tuple[str, str]],
    paths: Mapping[str, str],
    loader: Loader = read_pose_file,
    jobs: int = 1,
) -> dict[tuple[str, str], float | str]:
    keys = list(keys)
    paths = dict(paths)
    if jobs <= 1 or len(keys) < 2:
        return _score_chunk(metric, loader, paths, keys)
    out: dict[tuple[str, str], float | str] = {}
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futs = [ex.submit(_score_chunk, metric, loader, paths, c) for c in _chunks(keys, jobs * 4)]
        for f in futs:
            out.update(f.result())
    return out


# --- report -----------------------------------------------------------------


@dataclass(frozen=True)
class QueryResult:
    query: str
    gloss: str
    n_candidates: int
    n_relevant: int
    ap: float
    p_at_k: float  # capped: denominator min(k, candidates, relevant)
    p_at_k_raw: float  # denominator min(k, candidates)


@dataclass
class RetrievalReport:
    metric_name: str
    seed: int
    pools: list[RetrievalPool]
    queries: list[QueryResult]
    k: int = TOP_K
    skipped_errors: int = 0
    skipped_no_relevant: int = 0
    pair_errors: dict[tuple[str, str], str] = field(default_factory=dict)

    @property
    def mean_ap(self) -> float:
        return math.fsum(q.ap for q in self.queries) / len(self.queries) if self.queries else float("nan")

    @property
    def precision_at_10(self) -> float:
        return math.fsum(q.p_at_k for q in self.queries) / len(self.queries) if self.queries else float("nan")

    @property
    def precision_at_10_raw(self) -> float:
        return math.fsum(q.p_at_k_raw for q in self.queries) / len(self.queries) if self.queries else float("nan")

    @property
    def short_queries(self) -> int:
        """Queries with fewer than k candidates (P@k uses the min-k rule)."""
        return sum(1 for q in self.queries if q.n_candidates < self.k)

    @property
    def few_targets(self) -> int:
        """Queries where capped and uncapped P@k can differ."""
        return sum(1 for q in self.queries if q.n_relevant < self.k)

    def per_gloss(self) -> list[tuple[RetrievalPool, float, float, int]]:
        """``(pool, mean AP, mean P@k, n_queries)`` per gloss, in pool order."""
        rows = []
        for pool in self.pools:
            qs = [q for q in self.queries if q.gloss == pool.gloss]
            if qs:
                rows.append((pool, math.fsum(q.ap for q in qs) / len(qs),
                             math.fsum(q.p_at_k for q in qs) / len(qs), len(qs)))
            else:
                rows.append((pool, float("nan"), float("nan"), 0))
        return rows

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        lines = ["gloss,n_targets,n_distractors,mean_ap,p_at_10"]
        for pool, ap, pk, _ in self.per_gloss():
            lines.append(f"{_csv_field(pool.gloss)},{len(pool.targets)},{len(pool.distractors)},"
                         f"{_num(ap)},{_num(pk)}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    def to_text(self, path: str | os.PathLike | None = None, header: Iterable[str] = ()) -> str:
        lines = [f"# {h}" for h in header]
        lines += [
            f"metric: {self.metric_name}",
            f"seed: {self.seed}",
            "",
            f"{'gloss':<20} {'targets':>7} {'distr.':>7} {'lack':>5} {'queries':>7} {'mAP':>8} {'P@' + str(self.k):>8}",
        ]
        for pool, ap, pk, nq in self.per_gloss():
            lines.append(f"{pool.gloss:<20} {len(pool.targets):>7} {len(pool.distractors):>7} "
                         f"{pool.shortfall:>5} {nq:>7} {_num(ap):>8} {_num(pk):>8}")
        lines += [
            "",
            f"queries evaluated: {len(self.queries)}",
            f"queries skipped (scoring errors): {self.skipped_errors}",
            f"queries skipped (no other target): {self.skipped_no_relevant}",
            f"queries with fewer than {self.k} candidates: {self.short_queries}",
            f"queries with fewer than {self.k} targets: {self.few_targets}",
            f"pools short of the 1:{DISTRACTOR_RATIO} ratio: {sum(1 for p in self.pools if p.shortfall > 0)}",
            f"mAP: {_num(self.mean_ap)}",
            f"P@{self.k}: {_num(self.precision_at_10)}",
            f"P@{self.k} (uncapped, min-k rule): {_num(self.precision_at_10_raw)}",
        ]
        for (h, r), msg in sorted(self.pair_errors.items())[:20]:
            lines.append(f"error {h} vs {r}: {msg}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text


def _num(v: float) -> str:
    return "NA" if math.isnan(v) else f"{v:.6f}"


def _csv_field(s: str) -> str:
    return f'"{s}"' if any(c in s for c in ',"\n') else s


def run_retrieval(
    ds: RetrievalDataset,
    metric: Metric,
    lower_is_better: bool = True,
    loader: Loader = read_pose_file,
    symmetric: bool = True,
    jobs: int = 1,
    k: int = TOP_K,
    metric_name: str | None = None,
    pools: list[RetrievalPool] | None = None,
) -> RetrievalReport:
    """Rank each query's pool by ``metric(candidate, query)`` and score the rankings.

    With ``symmetric`` set, each unordered pair is scored once, as
    ``metric(x, y)`` with ``x < y`` by id.
    """
    pools = build_pools(ds) if pools is None else pools
    paths = {it.id: it.path for it in ds.items}

    def key(cand: str, query: str) -> tuple[str, str]:
        if symmetric:
            return (cand, query) if cand < query else (query, cand)
        return (cand, query)

    plan: list[tuple[RetrievalPool, str, list[str]]] = []
    keys: dict[tuple[str, str], None] = {}
    for pool in pools:
        for q in pool.targets:
            cands = [t for t in pool.targets if t != q] + list(pool.distractors)
            plan.append((pool, q, cands))
            for c in cands:
                keys[key(c, q)] = None
    scores = score_pairs(metric, sorted(keys), paths, loader, jobs)

    results: list[QueryResult] = []
    skipped_err = skipped_rel = 0
    errors = {kk: v for kk, v in scores.items() if isinstance(v, str)}
    for pool, q, cands in plan:
        relevant = [t for t in pool.targets if t != q]
        if not relevant:
            skipped_rel += 1
            continue
        vals = {c: scores[key(c, q)] for c in cands}
        if any(isinstance(v, str) for v in vals.values()):
            skipped_err += 1
            continue
        ranked = rank_candidates(vals, lower_is_better)
        results.append(QueryResult(q, pool.gloss, len(cands), len(relevant),
                                   average_precision(ranked, relevant),
                                   precision_at_k(ranked, relevant, k, capped=True),
                                   precision_at_k(ranked, relevant, k)))
    name = metric_name or getattr(metric, "name", None) or getattr(metric, "__name__", "metric")
    return RetrievalReport(name, ds.rng_seed, pools, results, k, skipped_err, skipped_rel, errors)


def summary_csv(reports: Sequence[RetrievalReport], path: str | os.PathLike | None = None) -> str:
    """One row per variant, best mAP first (ties by name)."""
    rows = sorted(reports, key=lambda r: (-_sort_val(r.mean_ap), r.metric_name))
    lines = ["variant,mean_ap,p_at_10,queries,skipped"]
    for r in rows:
        lines.append(f"{_csv_field(r.metric_name)},{_num(r.mean_ap)},{_num(r.precision_at_10)},"
                     f"{len(r.queries)},{r.skipped_errors + r.skipped_no_relevant}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def _sort_val(v: float) -> float:
    return -math.inf if math.isnan(v) else v

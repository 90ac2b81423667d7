"""Small constructors and independent oracles shared by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np

from pose_eval.pose import ComponentSpec, PoseHeader, PoseSequence, from_arrays


def seq1d(values, fps=25.0):
    """Single-point 2-D sequence; ``None`` entries are masked."""
    coords = [[(0.0 if v is None else float(v), 0.0)] for v in values]
    conf = [[0.0 if v is None else 1.0] for v in values]
    return from_arrays(np.array(coords).reshape(len(values), 1, 2),
                       np.array(conf).reshape(len(values), 1), fps=fps)


def make_seq(coords, conf=None, fps=25.0, components=None):
    coords = np.asarray(coords, dtype=np.float64)
    return from_arrays(coords, conf, fps=fps, components=components)


def frame_cost_py(a, b, ma, mb, l1=False):
    """Mean point distance over mutually visible points; 0 when none."""
    total, count = 0.0, 0
    for p in range(len(a)):
        if ma[p] and mb[p]:
            if l1:
                total += sum(abs(x - y) for x, y in zip(a[p], b[p]))
            else:
                total += math.sqrt(sum((x - y) ** 2 for x, y in zip(a[p], b[p])))
            count += 1
    return total / count if count else 0.0


def cost_matrix_py(a: PoseSequence, b: PoseSequence):
    return [[frame_cost_py(a.coords[i].tolist(), b.coords[j].tolist(),
                           a.mask[i].tolist(), b.mask[j].tolist())
             for j in range(b.frames)] for i in range(a.frames)]


def monotone_paths(n, m):
    """Every path from (0,0) to (n-1,m-1) with steps (1,0), (0,1), (1,1)."""
    def rec(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni < n and nj < m:
                for rest in rec(ni, nj):
                    yield [(i, j)] + rest
    yield from rec(0, 0)


def brute_dtw(cost):
    """(min total, lengths of all minimal paths) by exhaustive enumeration."""
    n, m = len(cost), len(cost[0])
    best, lengths = math.inf, []
    for path in monotone_paths(n, m):
        total = sum(cost[i][j] for i, j in path)
        if total < best - 1e-12:
            best, lengths = total, [len(path)]
        elif abs(total - best) <= 1e-12:
            lengths.append(len(path))
    return best, lengths


def brute_ranks(values):
    """Average ranks by counting: rank = #less + (#equal + 1) / 2."""
    return [sum(1 for w in values if w < v) + (sum(1 for w in values if w == v) + 1) / 2
            for v in values]


def brute_spearman(x, y):
    rx, ry = brute_ranks(x), brute_ranks(y)
    n = len(x)
    mean = (n + 1) / 2
    sxy = sum((a - mean) * (b - mean) for a, b in zip(rx, ry))
    sxx = sum((a - mean) ** 2 for a in rx)
    syy = sum((b - mean) ** 2 for b in ry)
    return sxy / math.sqrt(sxx * syy)


def brute_ap(scores, relevant, lower_is_better=True):
    """AP from scratch: rank by (score, id), walk the list."""
    sign = 1 if lower_is_better else -1
    ranked = [c for _, c in sorted((sign * s, c) for c, s in scores.items())]
    hits, acc = 0, 0.0
    for pos, c in enumerate(ranked, 1):
        if c in relevant:
            hits += 1
            acc += hits / pos
    p10_top = ranked[:10]
    p10_hits = sum(1 for c in p10_top if c in relevant)
    return acc / len(relevant), p10_hits / min(len(p10_top), len(relevant))


def holistic_like(frames=3, fps=25.0, world=False, seed=0):
    from pose_eval.selections import holistic_header
    rng = np.random.default_rng(seed)
    h = holistic_header(fps=fps, world=world)
    coords = rng.uniform(-1, 1, (frames, h.total_points, 2))
    coords[:, 11] = (1.0, 0.0)
    coords[:, 12] = (-1.0, 0.0)
    return PoseSequence(h, coords, np.ones((frames, h.total_points)))


def header(*comps, fps=25.0, dims=2):
    return PoseHeader(fps, tuple(ComponentSpec(n, c, dims) for n, c in comps))


def valid_posec_bytes():
    """A small valid file used as the starting point for corruptions."""
    from pose_eval.pose import encode_header
    seq = make_seq(np.arange(12, dtype=np.float64).reshape(2, 3, 2),
                   components=[("BODY", 2), ("HAND", 1)])
    body = seq.coords.astype("<f4").tobytes() + seq.confidence.astype("<f4").tobytes()
    return encode_header(seq.header, seq.frames), body


def malformed_corpus():
    """Ten crafted corruptions of a valid file, as ``(label, bytes)``."""
    head, body = valid_posec_bytes()
    nan = np.array([np.nan], dtype="<f4").tobytes()
    big_conf = np.array([1.5], dtype="<f4").tobytes()
    h = head.decode()
    return [
        ("bad magic", b"POSEX\n" + head[6:] + body),
        ("no blank line", head.rstrip(b"\n") + b"\n"),
        ("truncated body", head + body[:-4]),
        ("trailing bytes", head + body + b"\0\0\0\0"),
        ("bad fps", h.replace("fps=25.0", "fps=abc").encode() + body),
        ("negative fps", h.replace("fps=25.0", "fps=-1").encode() + body),
        ("bad dims", h.replace("BODY:2:2", "BODY:2:4").encode() + body),
        ("unknown key", h.replace("frames=2", "colour=red\nframes=2").encode() + body),
        ("nan coordinate", head + nan + body[4:]),
        ("confidence above one", head + body[:-4] + big_conf),
    ]


class Boxed:
    """Loader result for table-driven metrics (a bare str would read as an error)."""

    def __init__(self, key):
        self.key = key


def box_loader(path):
    return Boxed(path)


class TableMetric:
    """Metric looked up from a symmetric ``{frozenset(ids): value}`` table."""

    name = "table"

    def __init__(self, table, transform=None):
        self.table = table
        self.transform = transform

    def __call__(self, a, b):
        v = self.table[frozenset((a.key, b.key))]
        return self.transform(v) if self.transform else v


def toy_dataset(glosses, seed=0):
    from pose_eval.retrieval import RetrievalDataset, RetrievalItem
    items = []
    for g, n in glosses.items():
        items.extend(RetrievalItem(f"{g}_{i:02d}", g, f"{g}_{i:02d}") for i in range(n))
    return RetrievalDataset(tuple(items), seed)


def random_table(ds, rng):
    ids = [it.id for it in ds.items]
    return {frozenset((a, b)): float(rng.integers(0, 6))
            for i, a in enumerate(ids) for b in ids[i + 1:]}


def brute_retrieval(ds, pools, table, lower_is_better=True):
    """Mean AP and mean capped P@10 computed from scratch."""
    aps, pks = [], []
    for pool in pools:
        for q in pool.targets:
            cands = [c for c in list(pool.targets) + list(pool.distractors) if c != q]
            relevant = {t for t in pool.targets if t != q}
            if not relevant:
                continue
            ap, pk = brute_ap({c: table[frozenset((c, q))] for c in cands}, relevant, lower_is_better)
            aps.append(ap)
            pks.append(pk)
    return sum(aps) / len(aps), sum(pks) / len(pks)


class MemoryCorpus:
    """Picklable loader over in-memory sequences keyed by id."""

    def __init__(self, seqs):
        self.seqs = seqs

    def __call__(self, key):
        return self.seqs[key]


def memory_dataset(corpus, seed=0):
    from pose_eval.retrieval import RetrievalDataset, RetrievalItem
    ds = RetrievalDataset(tuple(RetrievalItem(i, g, i) for i, g, _ in corpus), seed)
    return ds, MemoryCorpus({i: s for i, _, s in corpus})


def all_path_costs(cost):
    """(total, length) of every monotone path, enumerated via shared suffixes."""
    from functools import lru_cache
    n, m = len(cost), len(cost[0])

    @lru_cache(maxsize=None)
    def rec(i, j):
        here = cost[i][j]
        if (i, j) == (n - 1, m - 1):
            return ((here, 1),)
        out = []
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            if i + di < n and j + dj < m:
                out.extend((here + t, k + 1) for t, k in rec(i + di, j + dj))
        return tuple(out)

    return rec(0, 0)

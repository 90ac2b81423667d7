"""``pose-eval`` command line.

Exit status: 0 success, 1 input error, 2 configuration error, 3 internal error.

Settings come from flags, then the ``--config`` TOML file, then defaults.
The seed falls back to ``POSE_EVAL_SEED`` and finally 0. Every output
directory gets a ``manifest.json`` with the toolkit version, the resolved
settings and the seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .distance import MetricConfig, PairScorer, score_pair
from .embedding import (
    Source,
    cosine_similarity,
    index_embeddings,
    read_embedding_set,
    read_external_scores,
    signclip_score_pp,
    signclip_score_pt,
)
from .errors import ConfigError, InputError, IoFailure, MalformedFile, PoseEvalError
from .grid import ALIASES, GridSpec, expand, load_grid, named_config
from .pose import read_pose_file
from .preprocess import PreprocessConfig
from .retrieval import build_pools, read_manifest, run_retrieval, summary_csv
from .stats import (
    GroupBy,
    Polarity,
    ScoreTable,
    TableRecord,
    absolute_score_table,
    average_human,
    correlate,
    intra_rater_kappa,
    kappa_by_language,
    read_ratings,
    read_repeats,
    table_from_external,
)
from .synthetic import KINDS, write_corpus
from .text import BLEU_SIGNATURE, CHRF_SIGNATURE, bleu4, chrf, read_backtranslations, segment_scores

log = logging.getLogger("pose_eval")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


# --- configuration ----------------------------------------------------------


class RunConfig:
    """Merged view of the config file; flags are applied on top by each command."""

    def __init__(self, data: dict[str, Any] | None = None, path: str | None = None):
        self.data = data or {}
        self.path = path

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            text = Path(path).read_text("utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        unknown = set(data) - {"paths", "grid", "preprocess", "seed", "jobs"}
        if unknown:
            raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
        return cls(data, path)

    def path_for(self, key: str, flag: str | None) -> str | None:
        if flag is not None:
            return flag
        value = self.data.get("paths", {}).get(key)
        if value is None:
            return None
        p = Path(value)
        if not p.is_absolute() and self.path is not None:
            p = Path(self.path).parent / p
        return str(p)

    def metric(self, name: str) -> MetricConfig:
        """Canonical name, alias, or a ``[preprocess.<name>]`` section of the config."""
        section = self.data.get("preprocess", {}).get(name)
        if section is None:
            return named_config(name)
        body = dict(section)
        if "base" not in body:
            raise ConfigError(f"[preprocess.{name}] needs a 'base' key")
        opts = {k: body.pop(k) for k in ("base", "padding", "pairwise_zero_fill", "pointwise",
                                         "default_distance") if k in body}
        try:
            return MetricConfig(preprocess=PreprocessConfig(**body), **opts)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[preprocess.{name}]: {e}") from e


def _seed(args, cfg: RunConfig) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in cfg.data:
        return int(cfg.data["seed"])
    env = os.environ.get("POSE_EVAL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"POSE_EVAL_SEED must be an integer, got {env!r}") from None
    return 0


def _jobs(args, cfg: RunConfig) -> int:
    jobs = args.jobs if args.jobs is not None else cfg.data.get("jobs")
    if jobs is None:
        return os.cpu_count() or 1
    if int(jobs) < 1:
        raise ConfigError("--jobs must be >= 1")
    return int(jobs)


def _require(path: str | None, what: str) -> str:
    if path is None:
        raise ConfigError(f"missing {what}")
    if not Path(path).is_file():
        raise IoFailure(f"{what} not found: {path}")
    return path


def _out_dir(path: str | None) -> Path:
    if path is None:
        raise ConfigError("missing --out directory")
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(f"cannot create {out}: {e}") from e
    return out


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "value") and not isinstance(v, (int, float, str)):
        return v.value
    return v


def _write_manifest(out: Path, command: str, seed: int | None, settings: dict[str, Any]) -> None:
    doc = {"tool": "pose-eval", "version": __version__, "command": command,
           "seed": seed, "settings": _jsonable(settings)}
    _write_text(out / "manifest.json", json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def _write_text(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


# --- score ------------------------------------------------------------------


def _read_pairs(path: str) -> list[dict[str, str]]:
    """Pairs manifest: TSV ``segment system language hyp ref`` (paths relative to the file)."""
    base = Path(path).parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        need = {"segment", "system", "language", "hyp", "ref"}
        missing = need - set(reader.fieldnames or ())
        if missing:
            raise MalformedFile(f"missing columns {sorted(missing)}", "line 1", path)
        rows = []
        for row in reader:
            for k in ("hyp", "ref"):
                p = Path(row[k])
                row[k] = str(p if p.is_absolute() else base / p)
            rows.append(row)
    return rows


def _score_rows(cfg: MetricConfig, rows: list[dict[str, str]]) -> list[float | str]:
    scorer = PairScorer(cfg)
    cache: dict[str, Any] = {}
    out: list[float | str] = []
    for row in rows:
        try:
            seqs = []
            for k in ("hyp", "ref"):
                if row[k] not in cache:
                    cache[row[k]] = read_pose_file(row[k])
                seqs.append(cache[row[k]])
            out.append(scorer(*seqs))
        except InputError as e:
            out.append(f"{type(e).__name__}: {e}")
    return out


def cmd_score(args, cfg: RunConfig) -> int:
    metrics = args.metric or ["DTWp"]
    configs = [cfg.metric(m) for m in metrics]
    if args.batch is None:
        if len(args.files) != 2:
            raise ConfigError("score needs REF and HYP files (or --batch PAIRS)")
        ref_path, hyp_path = args.files
        ref, hyp = read_pose_file(ref_path), read_pose_file(hyp_path)
        for c in configs:
            rec = score_pair(hyp, ref, c)
            print(f"{rec.value:.6f}\t{rec.variant}")
            if args.audit:
                print("\t" + " -> ".join(rec.audit))
        return EXIT_OK

    pairs = _read_pairs(_require(args.batch, "pairs manifest"))
    for row in pairs:
        for k in ("hyp", "ref"):
            _require(row[k], "pose file")
    out_path = args.output
    if out_path is None:
        raise ConfigError("--batch needs --output")
    jobs = _jobs(args, cfg)
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_score_rows, configs, [pairs] * len(configs)))
    else:
        results = [_score_rows(c, pairs) for c in configs]
    records, failures = [], 0
    for c, values in zip(configs, results):
        for row, v in zip(pairs, values):
            if isinstance(v, str):
                failures += 1
                print(f"error: {row['segment']}/{row['system']} {c.name}: {v}", file=sys.stderr)
                continue
            records.append(TableRecord(row["segment"], row["system"], row["language"], c.name, v))
    ScoreTable(records).write(out_path)
    print(f"wrote {len(records)} scores for {len(configs)} metric(s) to {out_path}")
    if failures:
        print(f"{failures} pair(s) failed", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


# --- retrieval --------------------------------------------------------------


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9.+-]", "_", name)


def _variants(args, cfg: RunConfig) -> tuple[list[MetricConfig], dict[str, Any]]:
    if args.metric:
        return [cfg.metric(m) for m in args.metric], {"metrics": list(args.metric)}
    if args.grid is not None:
        spec = load_grid(args.grid)
        src = args.grid
    elif "grid" in cfg.data:
        spec = GridSpec.from_mapping(cfg.data["grid"])
        src = f"{cfg.path}:[grid]"
    else:
        spec = load_grid()
        src = "builtin variant_grid.toml"
    return expand(spec), {"grid": src, "grid_size": spec.size}


def cmd_retrieval(args, cfg: RunConfig) -> int:
    seed = _seed(args, cfg)
    manifest = _require(cfg.path_for("manifest", args.manifest), "dataset manifest")
    ds = read_manifest(manifest, seed)
    for it in ds.items:
        _require(it.path, "pose file")
    variants, vsettings = _variants(args, cfg)
    out = _out_dir(cfg.path_for("out", args.out))
    jobs = _jobs(args, cfg)
    pools = build_pools(ds)
    (out / "variants").mkdir(exist_ok=True)
    header = [f"pose-eval {__version__}", f"manifest: {Path(manifest).name}", f"seed: {seed}"]
    reports = []
    for i, v in enumerate(variants):
        rep = run_retrieval(ds, PairScorer(v), lower_is_better=True, jobs=jobs,
                            metric_name=v.name, pools=pools)
        # names contain dots (MaskFill10.0), so append rather than with_suffix
        stem = f"{i:03d}_{_slug(v.name)}"
        _write_text(out / "variants" / f"{stem}.csv", rep.to_csv())
        _write_text(out / "variants" / f"{stem}.txt", rep.to_text(header=header))
        reports.append(rep)
        log.info("%s: mAP %.4f", v.name, rep.mean_ap)
    _write_text(out / "summary.csv", summary_csv(reports))
    _write_manifest(out, "retrieval", seed, {
        "manifest": Path(manifest).name, "items": len(ds.items), "glosses": len(pools),
        **vsettings, "variants": [v.name for v in variants],
    })
    best = max(reports, key=lambda r: (r.mean_ap, r.metric_name), default=None)
    print(f"{len(reports)} variant(s) evaluated; summary in {out / 'summary.csv'}")
    if best is not None:
        print(f"best: {best.metric_name} mAP {best.mean_ap:.4f} P@10 {best.precision_at_10:.4f}")
    return EXIT_OK


# --- correlate --------------------------------------------------------------


def _key_value(text: str, flag: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"{flag} expects NAME=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k, v


def cmd_correlate(args, cfg: RunConfig) -> int:
    ratings = read_ratings(_require(cfg.path_for("ratings", args.ratings), "ratings CSV"))
    human = average_human(ratings)
    try:
        polarity = {k: Polarity.parse(v) for k, v in (_key_value(p, "--polarity") for p in args.polarity)}
    except ValueError as e:
        raise ConfigError(str(e)) from e
    table = ScoreTable([], {})
    score_files = list(args.scores)
    if not score_files and cfg.path_for("scores", None):
        score_files = [cfg.path_for("scores", None)]
    for path in score_files:
        table = table.merged(ScoreTable.read(_require(path, "score table")))
    empty_external = []
    for spec in args.external:
        name, path = _key_value(spec, "--external")
        pol = "higher"
        head, sep, tail = path.rpartition(":")
        if sep and tail.lower() in ("higher", "lower"):
            path, pol = head, tail
        ext = read_external_scores(_require(path, "external score file"), pol, name)
        if ext.empty:
            print(f"warning: external score file for {name} is empty", file=sys.stderr)
            empty_external.append(name)
        table = table.merged(table_from_external(ext.scores, name, ratings, ext.polarity))
    if not table.records:
        raise ConfigError("no metric scores given (--scores or --external)")
    table = ScoreTable(table.records, {**table.polarity, **polarity})
    groups = [GroupBy(g.upper()) for g in (args.group_by or ["system", "language", "overall"])]
    report = correlate(table, human, groups)
    out = _out_dir(cfg.path_for("out", args.out))
    _write_text(out / "correlation.csv", report.to_csv())
    _write_text(out / "absolute.csv", absolute_score_table(table).to_csv())
    _write_manifest(out, "correlate", None, {
        "group_by": [g.value for g in groups], "metrics": table.metrics,
        "polarity": {m: table.polarity_of(m).value for m in table.metrics},
        "sd_ddof": report.ddof, "ratings": len(ratings), "items": len(human),
        "empty_external": empty_external,
    })
    sys.stdout.write(report.to_csv(digits=4))
    return EXIT_OK


# --- agreement --------------------------------------------------------------


def cmd_agreement(args, cfg: RunConfig) -> int:
    ratings = read_ratings(_require(cfg.path_for("ratings", args.ratings), "ratings CSV"))
    out = _out_dir(cfg.path_for("out", args.out))
    buf = io.StringIO()
    buf.write("section,group,kappa,p_bar,p_e,items\n")
    for lang, res in kappa_by_language(ratings, args.bins).items():
        if isinstance(res, PoseEvalError):
            buf.write(f"inter,{lang},ERR:{type(res).__name__},,,\n")
        else:
            buf.write(f"inter,{lang},{res.kappa:.6f},{res.p_bar:.6f},{res.p_e:.6f},{res.items}\n")
    repeats = cfg.path_for("repeats", args.repeats)
    settings: dict[str, Any] = {"bins": args.bins, "ratings": len(ratings), "repeats": repeats is not None}
    if repeats is not None:
        first, second = read_repeats(_require(repeats, "repeats CSV"))
        intra = intra_rater_kappa(ratings + first, second, args.bins) if first else \
            intra_rater_kappa(ratings, second, args.bins)
        for rater, res in intra.per_rater.items():
            buf.write(f"intra,{rater},{res.kappa:.6f},{res.p_bar:.6f},{res.p_e:.6f},{res.items}\n")
        buf.write(f"intra,mean,{intra.mean:.6f},,,\n")
        buf.write(f"intra,sd,{intra.sd:.6f},,,\n")
    _write_text(out / "agreement.csv", buf.getvalue())
    _write_manifest(out, "agreement", None, settings)
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


# --- grid -------------------------------------------------------------------


def cmd_grid(args, cfg: RunConfig) -> int:
    if args.grid_command != "expand":
        raise ConfigError("usage: pose-eval grid expand")
    if args.grid is not None:
        spec = load_grid(args.grid)
    elif "grid" in cfg.data:
        spec = GridSpec.from_mapping(cfg.data["grid"])
    else:
        spec = load_grid()
    variants = expand(spec)
    print(f"cross-product size: {spec.size}")
    print(f"variants: {len(variants)}")
    manifest = cfg.path_for("manifest", args.manifest)
    if manifest is not None:
        ds = read_manifest(_require(manifest, "dataset manifest"), _seed(args, cfg))
        pairs: set[tuple[str, str]] = set()
        for pool in build_pools(ds):
            for q in pool.targets:
                for c in list(pool.targets) + list(pool.distractors):
                    if c != q:
                        pairs.add((min(c, q), max(c, q)))
        print(f"pairs per variant: {len(pairs)}")
        print(f"total pair scorings: {len(pairs) * len(variants)}")
    for v in variants:
        print(v.name)
    return EXIT_OK


# --- extras -----------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig) -> int:
    seed = _seed(args, cfg)
    out = _out_dir(args.out)
    ds = write_corpus(out, args.kind, seed, args.glosses, args.samples)
    _write_manifest(out, "synth", seed, {"kind": args.kind, "items": len(ds.items)})
    print(f"wrote {len(ds.items)} sequences and manifest.tsv to {out}")
    return EXIT_OK


def cmd_text(args, cfg: RunConfig) -> int:
    pairs = read_backtranslations(_require(args.input, "back-translation CSV"))
    print(f"BLEU {bleu4(pairs):.4f}\t{BLEU_SIGNATURE}")
    print(f"chrF {chrf(pairs):.4f}\t{CHRF_SIGNATURE}")
    if args.segments:
        lines = ["id,bleu,chrf"] + [f"{i},{b:.6f},{c:.6f}" for i, b, c in segment_scores(pairs)]
        _write_text(Path(args.segments), "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_embed(args, cfg: RunConfig) -> int:
    vectors = read_embedding_set(_require(args.embeddings, "embedding CSV"))
    pose = index_embeddings(vectors, Source.POSE)
    text = index_embeddings(vectors, Source.TEXT)
    rows = []
    with open(_require(args.pairs, "pairs file"), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if set(reader.fieldnames or ()) < {"id", "hyp", "ref"}:
            raise MalformedFile("pairs file needs id, hyp, ref columns", "line 1", args.pairs)
        for row in reader:
            hyp = pose.get(row["hyp"])
            ref = (text if args.mode == "pt" else pose).get(row["ref"])
            if hyp is None or ref is None:
                raise MalformedFile(f"no embedding for {row['hyp']} / {row['ref']}",
                                    f"line {reader.line_num}", args.pairs)
            if args.mode == "pp":
                v = signclip_score_pp(ref, hyp)
            elif args.mode == "pt":
                v = signclip_score_pt(ref, hyp)
            else:
                v = cosine_similarity(ref, hyp)
            rows.append(f"{row['id']},{v!r}")
    _write_text(Path(args.output), "id,score\n" + "".join(r + "\n" for r in rows))
    print(f"wrote {len(rows)} scores to {args.output}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pose-eval", description="Pose-based sign language evaluation toolkit.")
    p.add_argument("--version", action="version", version=f"pose-eval {__version__}")
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--seed", type=int, help="random seed (default: config, $POSE_EVAL_SEED, 0)")
    p.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("score", help="score pose pairs with one or more metrics")
    s.add_argument("files", nargs="*", metavar="REF HYP")
    s.add_argument("--metric", "-m", action="append",
                   help=f"canonical variant name, alias ({', '.join(ALIASES)}) or config preset")
    s.add_argument("--batch", help="pairs TSV: segment, system, language, hyp, ref")
    s.add_argument("--output", "-o", help="score-table CSV for --batch")
    s.add_argument("--audit", action="store_true", help="print applied preprocessing steps")
    s.set_defaults(func=cmd_score)

    r = sub.add_parser("retrieval", help="retrieval meta-evaluation over a dataset manifest")
    r.add_argument("--manifest", help="TSV id, gloss, path")
    r.add_argument("--metric", "-m", action="append", help="variant(s) to evaluate instead of a grid")
    r.add_argument("--grid", help="TOML file with a [grid] table (default: config or built-in 48 variants)")
    r.add_argument("--out", help="output directory")
    r.set_defaults(func=cmd_retrieval)

    c = sub.add_parser("correlate", help="segment-level correlation with human ratings")
    c.add_argument("--ratings")
    c.add_argument("--scores", action="append", default=[], help="score-table CSV (repeatable)")
    c.add_argument("--external", action="append", default=[], metavar="NAME=PATH[:POLARITY]",
                   help="id,score CSV (repeatable)")
    c.add_argument("--polarity", action="append", default=[], metavar="METRIC=higher|lower")
    c.add_argument("--group-by", action="append", choices=["system", "language", "overall"])
    c.add_argument("--out")
    c.set_defaults(func=cmd_correlate)

    a = sub.add_parser("agreement", help="binned Fleiss kappa, inter- and intra-rater")
    a.add_argument("--ratings")
    a.add_argument("--repeats", help="replication CSV with a pass column")
    a.add_argument("--bins", type=int, default=7)
    a.add_argument("--out")
    a.set_defaults(func=cmd_agreement)

    g = sub.add_parser("grid", help="metric-variant grids")
    g.add_argument("grid_command", choices=["expand"])
    g.add_argument("--grid", help="TOML file with a [grid] table")
    g.add_argument("--manifest", help="estimate the pair workload on this dataset")
    g.set_defaults(func=cmd_grid)

    y = sub.add_parser("synth", help="write a synthetic corpus")
    y.add_argument("--kind", choices=sorted(KINDS), default="separable")
    y.add_argument("--glosses", type=int)
    y.add_argument("--samples", type=int)
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_synth)

    t = sub.add_parser("text", help="BLEU and chrF over back-translations")
    t.add_argument("input", help="CSV id, hypothesis, reference")
    t.add_argument("--segments", help="write per-segment scores here")
    t.set_defaults(func=cmd_text)

    e = sub.add_parser("embed", help="similarity scores from precomputed embeddings")
    e.add_argument("--embeddings", required=True)
    e.add_argument("--pairs", required=True, help="TSV id, hyp, ref (embedding ids)")
    e.add_argument("--mode", choices=["pp", "pt", "cosine"], default="pp")
    e.add_argument("--output", "-o", required=True)
    e.set_defaults(func=cmd_embed)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) and EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        return args.func(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:  # noqa: BLE001 - last-resort mapping to the documented exit status
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

"""Back-translation text metrics: BLEU-4 and chrF.

Settings match the signatures
``nrefs:1|case:mixed|eff:yes|tok:13a|smooth:exp`` (BLEU) and
``nrefs:1|case:mixed|eff:yes|nc:6|nw:0|space:no`` (chrF).
Inputs are NFC-normalized before anything else.
"""

from __future__ import annotations

import csv
import math
import os
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EmptyBatch, IoFailure, MalformedFile

BLEU_SIGNATURE = "nrefs:1|case:mixed|eff:yes|tok:13a|smooth:exp"
CHRF_SIGNATURE = "nrefs:1|case:mixed|eff:yes|nc:6|nw:0|space:no"

MAX_NGRAM = 4
CHAR_ORDER = 6
BETA = 2.0


@dataclass(frozen=True)
class TextSegmentPair:
    id: str
    hypothesis: str
    reference: str


# --- 13a tokenization -------------------------------------------------------

_13A_RULES = [
    # pad symbols and punctuation other than . , -
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),
    # period/comma unless preceded by a digit
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),
    # period/comma unless followed by a digit
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),
    # dash when preceded by a digit
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),
]


def tokenize_13a(s: str) -> list[str]:
    s = unicodedata.normalize("NFC", s)
    s = s.replace("<skipped>", "").replace("-\n", "").replace("\n", " ")
    if "&" in s:
        s = s.replace("&quot;", '"').replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">")
    s = f" {s} "
    for pattern, repl in _13A_RULES:
        s = pattern.sub(repl, s)
    return s.split()


# --- BLEU -------------------------------------------------------------------


def _ngrams(tokens: Sequence[str], max_order: int) -> Counter:
    counts: Counter = Counter()
    for n in range(1, max_order + 1):
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i : i + n])] += 1
    return counts


def bleu_statistics(hypothesis: str, reference: str) -> list[int]:
    """``[hyp_len, ref_len, correct_1..4, total_1..4]`` for one segment."""
    hyp = tokenize_13a(hypothesis.rstrip())
    ref = tokenize_13a(reference.rstrip())
    h, r = _ngrams(hyp, MAX_NGRAM), _ngrams(ref, MAX_NGRAM)
    correct = [0] * MAX_NGRAM
    total = [max(0, len(hyp) - n) for n in range(MAX_NGRAM)]
    for gram, count in h.items():
        correct[len(gram) - 1] += min(count, r.get(gram, 0))
    return [len(hyp), len(ref)] + correct + total


def _log(x: float) -> float:
    return -9999999999.0 if x == 0 else math.log(x)


def bleu_from_statistics(stats: Sequence[int], effective_order: bool = True) -> float:
    sys_len, ref_len = stats[0], stats[1]
    correct = list(stats[2 : 2 + MAX_NGRAM])
    total = list(stats[2 + MAX_NGRAM : 2 + 2 * MAX_NGRAM])
    if sys_len < ref_len:
        bp = math.exp(1 - ref_len / sys_len) if sys_len > 0 else 0.0
    else:
        bp = 1.0
    if not any(correct):
        return 0.0
    precisions = [0.0] * MAX_NGRAM
    smooth = 1.0
    eff_order = MAX_NGRAM
    for n in range(1, MAX_NGRAM + 1):
        if total[n - 1] == 0:
            break
        if effective_order:
            eff_order = n
        if correct[n - 1] == 0:
            smooth *= 2
            precisions[n - 1] = 100.0 / (smooth * total[n - 1])
        else:
            precisions[n - 1] = 100.0 * correct[n - 1] / total[n - 1]
    return bp * math.exp(sum(_log(p) for p in precisions[:eff_order]) / eff_order)


def _check_batch(pairs: Sequence[TextSegmentPair]) -> None:
    if not pairs:
        raise EmptyBatch("text metrics need at least one segment pair")


def bleu4(pairs: Sequence[TextSegmentPair]) -> float:
    """Corpus BLEU-4 over the batch, in [0, 100]."""
    _check_batch(pairs)
    stats = [0] * (2 + 2 * MAX_NGRAM)
    for p in pairs:
        for i, v in enumerate(bleu_statistics(p.hypothesis, p.reference)):
            stats[i] += v
    return bleu_from_statistics(stats)


def sentence_bleu(hypothesis: str, reference: str) -> float:
    return bleu_from_statistics(bleu_statistics(hypothesis, reference))


# --- chrF -------------------------------------------------------------------


def _char_ngrams(s: str, order: int) -> Counter:
    return Counter(s[i : i + order] for i in range(len(s) - order + 1))


def chrf_statistics(hypothesis: str, reference: str) -> list[int]:
    """``[hyp_n, ref_n, match_n]`` for each character order 1..6."""
    hyp = "".join(unicodedata.normalize("NFC", hypothesis).strip().split())
    ref = "".join(unicodedata.normalize("NFC", reference).strip().split())
    stats: list[int] = []
    for n in range(1, CHAR_ORDER + 1):
        h, r = _char_ngrams(hyp, n), _char_ngrams(ref, n)
        match = sum(min(c, r[g]) for g, c in h.items() if g in r)
        # hypothesis n-grams are not counted when the reference has none of this order
        stats += [sum(h.values()) if r else 0, sum(r.values()), match]
    return stats


def chrf_from_statistics(stats: Sequence[int]) -> float:
    factor = BETA**2
    prec = rec = 0.0
    order = 0
    for n in range(CHAR_ORDER):
        n_hyp, n_ref, n_match = stats[3 * n : 3 * n + 3]
        if n_hyp > 0 and n_ref > 0:
            prec += n_match / n_hyp
            rec += n_match / n_ref
            order += 1
    if order == 0:
        return 0.0
    prec /= order
    rec /= order
    if prec + rec == 0:
        return 0.0
    return 100.0 * (1 + factor) * prec * rec / (factor * prec + rec)


def chrf(pairs: Sequence[TextSegmentPair]) -> float:
    """Corpus chrF (statistics summed over segments), in [0, 100]."""
    _check_batch(pairs)
    stats = [0] * (3 * CHAR_ORDER)
    for p in pairs:
        for i, v in enumerate(chrf_statistics(p.hypothesis, p.reference)):
            stats[i] += v
    return chrf_from_statistics(stats)


def sentence_chrf(hypothesis: str, reference: str) -> float:
    return chrf_from_statistics(chrf_statistics(hypothesis, reference))


# --- I/O --------------------------------------------------------------------


def read_backtranslations(path: str | os.PathLike) -> list[TextSegmentPair]:
    """Read ``id,hypothesis,reference`` CSV (extra columns are ignored)."""
    path = str(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.DictReader(fh)
        missing = {"id", "hypothesis", "reference"} - set(reader.fieldnames or ())
        if missing:
            raise MalformedFile(f"missing columns {sorted(missing)}", "line 1", path)
        out: list[TextSegmentPair] = []
        seen: set[str] = set()
        for row in reader:
            if row["id"] in seen:
                raise MalformedFile(f"duplicate id {row['id']!r}", f"line {reader.line_num}", path)
            seen.add(row["id"])
            out.append(TextSegmentPair(row["id"], row["hypothesis"] or "", row["reference"] or ""))
    return out


def segment_scores(pairs: Iterable[TextSegmentPair]) -> list[tuple[str, float, float]]:
    """Per-segment ``(id, BLEU, chrF)``."""
    return [(p.id, sentence_bleu(p.hypothesis, p.reference), sentence_chrf(p.hypothesis, p.reference))
            for p in pairs]

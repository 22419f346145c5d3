"""Scoring: WER with alignment counts, matched-pair significance, SNR bins.

Text is normalized (lowercase, punctuation stripped, whitespace collapsed)
identically on both sides before scoring; the rules are versioned so scored
numbers stay reproducible. The matched-pair test uses the normal
approximation on per-segment error-count differences, with one utterance
treated as one segment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import DataError

NORMALIZER_VERSION = "v1"
_PUNCTUATION = ".,;:!?\"'()[]{}<>-_/\\"
_PUNCT_TABLE = str.maketrans({c: " " for c in _PUNCTUATION})


def normalize_text(text: str, version: str = NORMALIZER_VERSION) -> str:
    if version != NORMALIZER_VERSION:
        raise ValueError(f"unknown normalizer version {version!r}")
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


@dataclass
class WERResult:
    substitutions: int
    deletions: int
    insertions: int
    reference_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        return self.errors / self.reference_words

    def to_dict(self) -> dict:
        return {
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "reference_words": self.reference_words,
            "wer": self.wer,
        }


def wer(reference, hypothesis) -> WERResult:
    """Minimum-edit-distance word alignment with unit costs.

    Accepts token lists or whitespace-joined strings (strings are split, not
    normalized; use `wer_text` to score raw text). When alignment costs tie,
    the backtrace prefers substitution over insertion over deletion, making
    the S/D/I decomposition deterministic.
    """
    ref = reference.split() if isinstance(reference, str) else list(reference)
    hyp = hypothesis.split() if isinstance(hypothesis, str) else list(hypothesis)
    n, m = len(ref), len(hyp)
    if n < 1:
        raise ValueError("reference must contain at least one word")
    # dist[i, j]: edit distance between ref[:i] and hyp[:j].
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            hit = ref[i - 1] == hyp[j - 1]
            dist[i, j] = min(
                dist[i - 1, j - 1] + (0 if hit else 1),
                dist[i, j - 1] + 1,
                dist[i - 1, j] + 1,
            )
    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i, j] == dist[i - 1, j - 1]:
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + 1:
            subs += 1
            i, j = i - 1, j - 1
        elif j > 0 and dist[i, j] == dist[i, j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dels += 1
            i -= 1
    return WERResult(substitutions=subs, deletions=dels, insertions=ins, reference_words=n)


def wer_text(reference: str, hypothesis: str) -> WERResult:
    """Normalize both sides, then score. Empty normalized references are an error."""
    return wer(normalize_text(reference).split(), normalize_text(hypothesis).split())


@dataclass
class SegmentPair:
    segment_id: str
    errors_a: int
    errors_b: int

    def __post_init__(self):
        if self.errors_a < 0 or self.errors_b < 0:
            raise ValueError("error counts must be non-negative")


@dataclass
class MatchedPairResult:
    z: float
    p_value: float
    significant: bool
    n_segments: int


def matched_pair_test(pairs: list[SegmentPair], alpha: float = 0.001) -> MatchedPairResult:
    """Normal-approximation matched-pair test on per-segment error differences.

    Z = mean(d) / (std(d, unbiased) / sqrt(n)); two-tailed p-value. All-zero
    differences return Z=0, p=1. Constant nonzero differences have zero
    variance; by convention that counts as significant with p ~ 0.
    """
    if len(pairs) < 2:
        raise ValueError("matched-pair test needs at least 2 segments")
    d = np.array([p.errors_a - p.errors_b for p in pairs], dtype=np.float64)
    n = d.size
    if not d.any():
        return MatchedPairResult(z=0.0, p_value=1.0, significant=False, n_segments=n)
    sd = d.std(ddof=1)
    if sd == 0.0:
        z = math.inf if d.mean() > 0 else -math.inf
        return MatchedPairResult(z=z, p_value=0.0, significant=True, n_segments=n)
    z = float(d.mean() / (sd / math.sqrt(n)))
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return MatchedPairResult(z=z, p_value=p, significant=p < alpha, n_segments=n)


DEFAULT_SNR_BINS: tuple[tuple[float, float], ...] = (
    (-10.0, 0.0),
    (0.0, 10.0),
    (10.0, 20.0),
    (20.0, 30.0),
    (30.0, 40.0),
)


@dataclass
class SNRBin:
    low: float
    high: float
    result: WERResult | None
    utterances: int

    @property
    def wer(self) -> float | None:
        return None if self.result is None or self.result.reference_words == 0 else self.result.wer


@dataclass
class SNRBinReport:
    bins: list[SNRBin]
    other: SNRBin

    def to_rows(self) -> list[dict]:
        rows = []
        for b in self.bins + [self.other]:
            rows.append(
                {
                    "low_db": b.low,
                    "high_db": b.high,
                    "utterances": b.utterances,
                    "reference_words": 0 if b.result is None else b.result.reference_words,
                    "wer": b.wer,
                }
            )
        return rows


def _pool(results: list[WERResult]) -> WERResult | None:
    if not results:
        return None
    return WERResult(
        substitutions=sum(r.substitutions for r in results),
        deletions=sum(r.deletions for r in results),
        insertions=sum(r.insertions for r in results),
        reference_words=sum(r.reference_words for r in results),
    )


def snr_binned_wer(
    entries: list[tuple[float, WERResult]],
    bins: tuple[tuple[float, float], ...] = DEFAULT_SNR_BINS,
) -> SNRBinReport:
    """Pool WER per SNR bin ([low, high), last bin closed on the right).

    Entries outside every bin land in an "other" bucket that is reported but
    not part of the bins. Empty bins report WER as None, not 0.
    """
    for (lo1, hi1), (lo2, _) in zip(bins, bins[1:]):
        if hi1 > lo2:
            raise ValueError("SNR bins must be non-overlapping and ordered")
    grouped: list[list[WERResult]] = [[] for _ in bins]
    other: list[WERResult] = []
    other_count = 0
    counts = [0] * len(bins)
    for snr_db, result in entries:
        placed = False
        for i, (lo, hi) in enumerate(bins):
            closed_right = i == len(bins) - 1
            if (lo <= snr_db < hi) or (closed_right and snr_db == hi):
                grouped[i].append(result)
                counts[i] += 1
                placed = True
                break
        if not placed:
            other.append(result)
            other_count += 1
    report_bins = [
        SNRBin(low=lo, high=hi, result=_pool(grouped[i]), utterances=counts[i])
        for i, (lo, hi) in enumerate(bins)
    ]
    other_bin = SNRBin(low=math.nan, high=math.nan, result=_pool(other), utterances=other_count)
    return SNRBinReport(bins=report_bins, other=other_bin)


def aggregate_folds(fold_results: list[WERResult]) -> WERResult:
    """Micro-average: pool S/D/I/N counts across folds, then one WER."""
    if not fold_results:
        raise ValueError("need at least one fold result")
    pooled = _pool(fold_results)
    assert pooled is not None
    return pooled


# ---------------------------------------------------------------------------
# file-level scoring


def load_text_jsonl(path: str | Path) -> dict[str, str]:
    """Read a JSONL of {"id": ..., "text": ...} records."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"text file not found: {path}")
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from exc
            if "id" not in rec or "text" not in rec:
                raise DataError(f"{path}: line {lineno}: need 'id' and 'text' fields")
            if rec["id"] in out:
                raise DataError(f"{path}: line {lineno}: duplicate id '{rec['id']}'")
            out[str(rec["id"])] = str(rec["text"])
    return out


def save_text_jsonl(texts: dict[str, str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for utt_id, text in texts.items():
            fh.write(json.dumps({"id": utt_id, "text": text}) + "\n")


@dataclass
class CorpusScore:
    overall: WERResult
    per_utterance: dict[str, WERResult]
    snr_report: SNRBinReport | None

    def to_dict(self) -> dict:
        out = {
            "normalizer_version": NORMALIZER_VERSION,
            "overall": self.overall.to_dict(),
            "per_utterance": {k: v.to_dict() for k, v in self.per_utterance.items()},
        }
        if self.snr_report is not None:
            out["snr_bins"] = self.snr_report.to_rows()
        return out


def score_corpus(
    references: dict[str, str],
    hypotheses: dict[str, str],
    snr_by_id: dict[str, float] | None = None,
    bins: tuple[tuple[float, float], ...] = DEFAULT_SNR_BINS,
) -> CorpusScore:
    """Score hypotheses against references by utterance id.

    Every reference id must have a hypothesis (missing ones are an error so
    silent truncation cannot inflate scores).
    """
    missing = sorted(set(references) - set(hypotheses))
    if missing:
        raise DataError(f"hypotheses missing for ids: {missing[:10]}")
    per_utt: dict[str, WERResult] = {}
    for utt_id, ref in references.items():
        per_utt[utt_id] = wer_text(ref, hypotheses[utt_id])
    overall = aggregate_folds(list(per_utt.values()))
    snr_report = None
    if snr_by_id is not None:
        entries = [(snr_by_id[u], r) for u, r in per_utt.items() if u in snr_by_id]
        snr_report = snr_binned_wer(entries, bins)
    return CorpusScore(overall=overall, per_utterance=per_utt, snr_report=snr_report)

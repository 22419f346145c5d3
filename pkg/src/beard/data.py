"""Corpus manifests, cross-validation folds, and a synthetic tone corpus.

The synthetic corpus stands in for a real unlabeled/labeled speech corpus:
each vocab token maps to a distinct tone frequency, utterances concatenate
token tones, and white noise is added at a per-utterance SNR drawn from a
configured range. Because the token-to-frequency map is injective, the toy
ASR task is learnable in minutes and transcripts are recoverable in
principle by a spectral oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import DataError, seed_rng
from .features import REQUIRED_SAMPLE_RATE, Waveform, write_wav

MANIFEST_FIELDS = ("id", "audio_path", "duration_s", "transcript", "snr_db")


@dataclass
class ManifestEntry:
    id: str
    audio_path: str
    duration_s: float
    transcript: str | None = None
    snr_db: float | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("entry id must be non-empty")
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be > 0, got {self.duration_s}")

    @property
    def labeled(self) -> bool:
        return self.transcript is not None

    def to_json(self) -> str:
        record = {"id": self.id, "audio_path": self.audio_path, "duration_s": self.duration_s}
        if self.transcript is not None:
            record["transcript"] = self.transcript
        if self.snr_db is not None:
            record["snr_db"] = self.snr_db
        return json.dumps(record, sort_keys=False)


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Parse a JSONL manifest; errors carry the 1-based offending line."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise DataError(f"{path}: line {lineno}: expected a JSON object")
            for key in ("id", "audio_path", "duration_s"):
                if key not in record:
                    raise DataError(f"{path}: line {lineno}: missing required field '{key}'")
            unknown = set(record) - set(MANIFEST_FIELDS)
            if unknown:
                raise DataError(f"{path}: line {lineno}: unknown fields {sorted(unknown)}")
            try:
                entry = ManifestEntry(
                    id=str(record["id"]),
                    audio_path=str(record["audio_path"]),
                    duration_s=float(record["duration_s"]),
                    transcript=record.get("transcript"),
                    snr_db=None if record.get("snr_db") is None else float(record["snr_db"]),
                )
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
            if entry.id in seen:
                raise DataError(f"{path}: line {lineno}: duplicate id '{entry.id}'")
            seen.add(entry.id)
            entries.append(entry)
    return entries


def save_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(entry.to_json() + "\n")


@dataclass
class FoldPlan:
    """Assignment of every labeled entry id to one of k folds."""

    k: int
    assignments: dict[str, int]

    def fold_ids(self, fold: int) -> list[str]:
        return [eid for eid, f in self.assignments.items() if f == fold]


def make_folds(entries: list[ManifestEntry], k: int, seed: int = 0) -> FoldPlan:
    """Shuffle labeled entries with a seeded RNG and deal them round-robin,
    so fold sizes differ by at most one."""
    labeled = [e for e in entries if e.labeled]
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    if len(labeled) < k:
        raise ValueError(f"need at least {k} labeled entries for {k} folds, got {len(labeled)}")
    ids = [e.id for e in labeled]
    order = seed_rng("folds", seed).permutation(len(ids))
    assignments = {ids[j]: i % k for i, j in enumerate(order)}
    return FoldPlan(k=k, assignments=assignments)


DEFAULT_SPLIT_RATIOS = (0.60, 0.15, 0.25)  # train / validation / test by duration


def split_fold(
    entries: list[ManifestEntry],
    plan: FoldPlan,
    fold: int,
    ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
    seed: int = 0,
) -> tuple[list[ManifestEntry], list[ManifestEntry], list[ManifestEntry]]:
    """Materialize one cross-validation run: held-out fold is the test set,
    the rest splits into train/validation by the configured duration ratios."""
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    if not 0 <= fold < plan.k:
        raise ValueError(f"fold index {fold} out of range for k={plan.k}")
    by_id = {e.id: e for e in entries}
    test = [by_id[eid] for eid in plan.assignments if plan.assignments[eid] == fold]
    rest = [by_id[eid] for eid in plan.assignments if plan.assignments[eid] != fold]
    order = seed_rng("fold-split", seed, fold).permutation(len(rest))
    rest = [rest[i] for i in order]
    total = sum(e.duration_s for e in rest)
    train_target = total * ratios[0] / (ratios[0] + ratios[1])
    train: list[ManifestEntry] = []
    val: list[ManifestEntry] = []
    acc = 0.0
    for e in rest:
        if acc < train_target or not train:
            train.append(e)
            acc += e.duration_s
        else:
            val.append(e)
    if not val:
        val.append(train.pop())
    return train, val, test


@dataclass(frozen=True)
class SyntheticSpec:
    vocab: tuple[str, ...]
    utterance_count: int
    noise_snr_range_db: tuple[float, float] = (0.0, 40.0)
    seed: int = 0
    labeled_count: int = 0
    tokens_per_utterance: tuple[int, int] = (3, 8)
    tone_s: float = 0.25
    gap_s: float = 0.05
    amplitude: float = 0.35

    def __post_init__(self):
        if not self.vocab:
            raise ValueError("vocab must be non-empty")
        if len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocab tokens must be distinct")
        if self.utterance_count < 1:
            raise ValueError("utterance_count must be >= 1")
        if not 0 <= self.labeled_count <= self.utterance_count:
            raise ValueError("labeled_count must be within [0, utterance_count]")
        lo, hi = self.noise_snr_range_db
        if hi < lo:
            raise ValueError("noise_snr_range_db must be (low, high) with low <= high")


def token_frequencies(vocab: tuple[str, ...] | list[str]) -> dict[str, float]:
    """Injective token -> tone frequency map, spaced well apart in mel terms."""
    base, step = 420.0, 1.26
    return {tok: base * step**i for i, tok in enumerate(vocab)}


def synthesize_utterance(
    tokens: list[str],
    freqs: dict[str, float],
    spec: SyntheticSpec,
    rng: np.random.Generator,
    snr_db: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Return (clean, noisy) float arrays for one tone utterance."""
    sr = REQUIRED_SAMPLE_RATE
    tone_n = int(round(spec.tone_s * sr))
    gap_n = int(round(spec.gap_s * sr))
    ramp_n = max(1, int(0.01 * sr))
    ramp = np.linspace(0.0, 1.0, ramp_n)
    pieces = [np.zeros(gap_n)]
    t = np.arange(tone_n) / sr
    for tok in tokens:
        tone = spec.amplitude * np.sin(2.0 * np.pi * freqs[tok] * t)
        tone[:ramp_n] *= ramp
        tone[-ramp_n:] *= ramp[::-1]
        pieces.append(tone)
        pieces.append(np.zeros(gap_n))
    clean = np.concatenate(pieces)
    signal_power = float(np.mean(clean**2))
    noise_std = math.sqrt(signal_power / 10.0 ** (snr_db / 10.0))
    noisy = clean + rng.normal(0.0, noise_std, size=clean.shape)
    return clean, noisy


@dataclass
class SyntheticCorpus:
    out_dir: Path
    unlabeled_manifest: Path
    labeled_manifest: Path


def generate_synthetic_corpus(spec: SyntheticSpec, out_dir: str | Path) -> SyntheticCorpus:
    """Write WAVs plus unlabeled.jsonl / labeled.jsonl under out_dir.

    The first `labeled_count` utterances keep their transcripts; the rest go
    to the unlabeled split (SNR metadata is recorded for both). Fully
    deterministic for a fixed spec.
    """
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    try:
        wav_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create corpus directory {wav_dir}: {exc}") from exc
    freqs = token_frequencies(spec.vocab)
    lo, hi = spec.noise_snr_range_db
    labeled: list[ManifestEntry] = []
    unlabeled: list[ManifestEntry] = []
    for i in range(spec.utterance_count):
        rng = seed_rng("synth", spec.seed, i)
        n_tok = int(rng.integers(spec.tokens_per_utterance[0], spec.tokens_per_utterance[1] + 1))
        tokens = [spec.vocab[int(j)] for j in rng.integers(0, len(spec.vocab), size=n_tok)]
        snr_db = float(rng.uniform(lo, hi))
        _, noisy = synthesize_utterance(tokens, freqs, spec, rng, snr_db)
        utt_id = f"utt-{i:05d}"
        wav_path = wav_dir / f"{utt_id}.wav"
        write_wav(wav_path, Waveform(np.clip(noisy, -1.0, 1.0)))
        entry = ManifestEntry(
            id=utt_id,
            audio_path=str(wav_path),
            duration_s=len(noisy) / REQUIRED_SAMPLE_RATE,
            transcript=" ".join(tokens) if i < spec.labeled_count else None,
            snr_db=snr_db,
        )
        (labeled if entry.labeled else unlabeled).append(entry)
    unlabeled_path = out_dir / "unlabeled.jsonl"
    labeled_path = out_dir / "labeled.jsonl"
    save_manifest(unlabeled, unlabeled_path)
    save_manifest(labeled, labeled_path)
    return SyntheticCorpus(out_dir, unlabeled_path, labeled_path)


PAD_ID, BOS_ID, EOS_ID = 0, 1, 2
SPECIALS = ("<pad>", "<bos>", "<eos>")


class Tokenizer:
    """Word-level tokenizer over a fixed vocab plus pad/bos/eos specials."""

    def __init__(self, vocab: list[str] | tuple[str, ...]):
        if not vocab:
            raise ValueError("vocab must be non-empty")
        self.words = list(SPECIALS) + sorted(set(vocab))
        self._index = {w: i for i, w in enumerate(self.words)}

    @property
    def size(self) -> int:
        return len(self.words)

    def encode(self, text: str, add_specials: bool = True) -> list[int]:
        ids = []
        for word in text.split():
            if word not in self._index:
                raise ValueError(f"token {word!r} not covered by tokenizer")
            ids.append(self._index[word])
        if add_specials:
            return [BOS_ID] + ids + [EOS_ID]
        return ids

    def decode(self, ids) -> str:
        words = []
        for i in ids:
            i = int(i)
            if i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            if not 0 <= i < len(self.words):
                raise ValueError(f"token id {i} out of range")
            words.append(self.words[i])
        return " ".join(words)

    @classmethod
    def from_entries(cls, entries: list[ManifestEntry]) -> "Tokenizer":
        words: set[str] = set()
        for e in entries:
            if e.transcript:
                words.update(e.transcript.split())
        if not words:
            raise DataError("no transcripts available to build a tokenizer")
        return cls(sorted(words))

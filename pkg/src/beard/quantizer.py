"""Frozen random-projection quantizer mapping feature frames to code labels.

Construction draws a fixed projection and codebook once from a seeded,
platform-stable RNG (PCG64); nothing in training ever updates them. Frames
are standardized per vector, projected, and assigned the index of the
nearest codebook row.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._util import DataError, content_hash, seed_rng, standardize_rows
from .features import FeatureMatrix

_MAGIC = b"BRQ1"
DEFAULT_CODEBOOK_SIZE = 2048


@dataclass(frozen=True, eq=False)
class QuantizerState:
    """Frozen projection (d_in x d_code) and codebook (V x d_code)."""

    projection: np.ndarray
    codebook: np.ndarray
    seed: int

    def __post_init__(self):
        proj = np.asarray(self.projection, dtype=np.float32)
        code = np.asarray(self.codebook, dtype=np.float32)
        if proj.ndim != 2 or code.ndim != 2:
            raise ValueError("projection and codebook must be 2-D")
        if proj.shape[1] != code.shape[1]:
            raise ValueError("projection and codebook disagree on code dimension")
        proj.setflags(write=False)
        code.setflags(write=False)
        object.__setattr__(self, "projection", proj)
        object.__setattr__(self, "codebook", code)
        # Duplicate rows would make nearest-neighbor labels ambiguous.
        diffs = code[:, None, :] - code[None, :, :]
        dist = np.sqrt((diffs**2).sum(axis=-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= 1e-9:
            raise ValueError("codebook contains duplicate rows")

    @property
    def d_in(self) -> int:
        return self.projection.shape[0]

    @property
    def d_code(self) -> int:
        return self.projection.shape[1]

    @property
    def codebook_size(self) -> int:
        return self.codebook.shape[0]

    def content_hash(self) -> str:
        return content_hash([("projection", self.projection), ("codebook", self.codebook)])


@dataclass
class LabelSequence:
    """Integer code labels in [0, V), one per quantized frame."""

    labels: np.ndarray
    codebook_size: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValueError("labels must be 1-D")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.codebook_size):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class UtilizationStats:
    """Diagnostics of how evenly the codebook is used."""

    entropy_bits: float
    fraction_used: float
    num_labels: int


def build_quantizer(
    d_in: int,
    d_code: int = 16,
    codebook_size: int = DEFAULT_CODEBOOK_SIZE,
    seed: int = 0,
) -> QuantizerState:
    """Draw the frozen projection and codebook for a given seed.

    Projection entries are standard normal scaled by 1/sqrt(d_in); codebook
    rows are i.i.d. standard normal, then L2-normalized. Both are drawn from
    PCG64 seeded with (tag, seed), so construction is bit-reproducible.
    """
    if d_in < 1 or d_code < 1 or codebook_size < 1:
        raise ValueError("all quantizer dimensions must be >= 1")
    rng = seed_rng("quantizer", seed)
    projection = rng.standard_normal((d_in, d_code)) / np.sqrt(d_in)
    codebook = rng.standard_normal((codebook_size, d_code))
    codebook /= np.linalg.norm(codebook, axis=1, keepdims=True)
    return QuantizerState(
        projection=projection.astype(np.float32),
        codebook=codebook.astype(np.float32),
        seed=seed,
    )


def normalize_vector(v: np.ndarray) -> np.ndarray:
    """Shift/scale one vector to zero mean, unit std (std floored at 1e-5)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("normalize_vector expects a 1-D vector")
    if v.size < 2:
        raise ValueError("normalize_vector needs at least 2 elements")
    return standardize_rows(v)


def quantize(q: QuantizerState, f: FeatureMatrix | np.ndarray, normalize: bool = True) -> LabelSequence:
    """Assign each frame the nearest codebook row after projection.

    Distance is squared Euclidean; ties resolve to the lowest index.
    `normalize=False` skips the per-frame standardization (diagnostic path
    for measuring how much normalization protects codebook utilization).
    """
    frames = f.frames if isinstance(f, FeatureMatrix) else np.asarray(f)
    if frames.ndim != 2:
        raise ValueError("quantize expects a 2-D frame matrix")
    if frames.shape[1] != q.d_in:
        raise ValueError(
            f"frame width {frames.shape[1]} does not match quantizer d_in {q.d_in}"
        )
    x = frames.astype(np.float64)
    if normalize:
        x = standardize_rows(x)
    projected = x @ q.projection.astype(np.float64)
    code = q.codebook.astype(np.float64)
    # ||p - c||^2 = ||p||^2 - 2 p.c + ||c||^2; ||p||^2 is constant per frame.
    dist = -2.0 * projected @ code.T + (code**2).sum(axis=1)[None, :]
    labels = np.argmin(dist, axis=1)
    return LabelSequence(labels=labels, codebook_size=q.codebook_size)


def codebook_utilization(labels: LabelSequence | np.ndarray, codebook_size: int | None = None) -> UtilizationStats:
    """Empirical label entropy (bits) and fraction of distinct codes used."""
    if isinstance(labels, LabelSequence):
        codebook_size = labels.codebook_size if codebook_size is None else codebook_size
        arr = labels.labels
    else:
        arr = np.asarray(labels, dtype=np.int64)
        if codebook_size is None:
            raise ValueError("codebook_size required for raw label arrays")
    if arr.size == 0:
        raise ValueError("cannot compute utilization of an empty label sequence")
    counts = np.bincount(arr, minlength=codebook_size)
    p = counts[counts > 0] / arr.size
    entropy = float(-(p * np.log2(p)).sum())
    return UtilizationStats(
        entropy_bits=entropy,
        fraction_used=float((counts > 0).sum()) / codebook_size,
        num_labels=int(arr.size),
    )


def save_quantizer(q: QuantizerState, path: str | Path) -> None:
    """Serialize to the versioned little-endian binary blob format."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIq", q.d_in, q.d_code, q.codebook_size, q.seed))
        fh.write(np.ascontiguousarray(q.projection, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(q.codebook, dtype="<f4").tobytes())


def load_quantizer(path: str | Path) -> QuantizerState:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        d_in, d_code, v, seed = struct.unpack("<IIIq", fh.read(20))
        proj = np.frombuffer(fh.read(4 * d_in * d_code), dtype="<f4").reshape(d_in, d_code)
        code = np.frombuffer(fh.read(4 * v * d_code), dtype="<f4").reshape(v, d_code)
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after quantizer blob")
    return QuantizerState(projection=proj.copy(), codebook=code.copy(), seed=seed)

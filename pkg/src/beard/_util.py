"""Shared plumbing: errors, seeded RNG derivation, hashing, normalization."""

from __future__ import annotations

import hashlib
import json
from typing import Iterable, Mapping

import numpy as np


class BeardError(Exception):
    """Base class for errors raised by this package."""


class DataError(BeardError):
    """Bad or missing input data (files, manifests, schemas)."""


class NumericError(BeardError):
    """Non-finite values where finite ones are required."""


class UnsupportedPrimitiveError(BeardError):
    """A computation graph contains a node outside the supported op set."""


def _entropy_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        v = int(part)
        if v < 0:
            # SeedSequence entropy must be non-negative; fold sign in reversibly.
            v = (abs(v) << 1) | 1
        return v
    if isinstance(part, str):
        return int.from_bytes(hashlib.sha256(part.encode("utf-8")).digest()[:16], "little")
    raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")


def seed_rng(*parts) -> np.random.Generator:
    """Deterministic, platform-stable RNG derived from a tuple of int/str keys.

    Uses PCG64 seeded through SeedSequence; the stream is a pure function of
    the key tuple, so the same keys always reproduce the same draws.
    """
    entropy = [_entropy_int(p) for p in parts]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(*parts) -> int:
    """Collapse a key tuple to a single non-negative 63-bit integer seed."""
    h = hashlib.sha256()
    for p in parts:
        h.update(str(_entropy_int(p)).encode("ascii"))
        h.update(b"/")
    return int.from_bytes(h.digest()[:8], "little") >> 1


def content_hash(arrays: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]) -> str:
    """SHA-256 over (name, dtype, shape, bytes) of each array, order-sensitive."""
    items = arrays.items() if isinstance(arrays, Mapping) else arrays
    h = hashlib.sha256()
    for name, arr in items:
        arr = np.ascontiguousarray(arr)
        h.update(name.encode("utf-8"))
        h.update(str(arr.dtype).encode("ascii"))
        h.update(str(arr.shape).encode("ascii"))
        h.update(arr.tobytes())
    return h.hexdigest()


def config_hash(config: Mapping) -> str:
    """Stable short hash of a JSON-serializable config mapping."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:8]


STD_FLOOR = 1e-5


def standardize_rows(x: np.ndarray, eps: float = STD_FLOOR) -> np.ndarray:
    """Per-row shift/scale to zero mean and unit (population) std.

    The divisor is floored at `eps`, so constant rows map to zero rows.
    Shared by the quantizer input path and the projection-head input path,
    which must normalize identically.
    """
    x = np.asarray(x)
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    sd = np.sqrt(np.mean(centered * centered, axis=-1, keepdims=True))
    return centered / np.maximum(sd, eps)


def require_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")

"""Log-mel frontend: 16 kHz mono waveforms to time-major feature matrices.

Convention (fixed, documented, not tied to any pretrained weights): 25 ms
Hann window, 10 ms hop, no centering, power spectrum through an HTK-mel
triangular filterbank, natural log with an additive floor.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import DataError, require_finite

REQUIRED_SAMPLE_RATE = 16_000


@dataclass
class Waveform:
    """Mono audio samples in [-1, 1] at exactly 16 kHz."""

    samples: np.ndarray
    sample_rate: int = REQUIRED_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate != REQUIRED_SAMPLE_RATE:
            raise ValueError(
                f"sample rate must be {REQUIRED_SAMPLE_RATE} Hz, got {self.sample_rate}"
            )
        require_finite(self.samples, "waveform samples")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FeatureMatrix:
    """Time-major matrix of log-mel energies: frames[t, mel_bin]."""

    frames: np.ndarray
    frame_rate: float
    mel_bins: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("feature matrix must have at least one frame")
        if self.frames.shape[1] != self.mel_bins:
            raise ValueError(
                f"mel_bins={self.mel_bins} does not match frame width {self.frames.shape[1]}"
            )
        require_finite(self.frames, "feature matrix")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class FeatureConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    mel_bins: int = 80
    log_floor: float = 1e-10
    fmin_hz: float = 0.0
    fmax_hz: float = 8000.0

    @property
    def window_samples(self) -> int:
        return int(round(REQUIRED_SAMPLE_RATE * self.window_ms / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(REQUIRED_SAMPLE_RATE * self.hop_ms / 1000.0))


def hz_to_mel(f):
    # HTK mel scale.
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_fft: int, cfg: FeatureConfig) -> np.ndarray:
    """Triangular HTK-mel filters, shape (n_bins, n_fft//2 + 1), peak 1."""
    n_freqs = n_fft // 2 + 1
    fft_hz = np.arange(n_freqs) * (REQUIRED_SAMPLE_RATE / n_fft)
    edges_mel = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.mel_bins + 2)
    edges_hz = mel_to_hz(edges_mel)
    bank = np.zeros((cfg.mel_bins, n_freqs), dtype=np.float64)
    for i in range(cfg.mel_bins):
        lo, mid, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (fft_hz - lo) / max(mid - lo, 1e-12)
        falling = (hi - fft_hz) / max(hi - mid, 1e-12)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


_BANK_CACHE: dict[tuple, np.ndarray] = {}


def _cached_bank(n_fft: int, cfg: FeatureConfig) -> np.ndarray:
    key = (n_fft, cfg.mel_bins, cfg.fmin_hz, cfg.fmax_hz)
    if key not in _BANK_CACHE:
        _BANK_CACHE[key] = mel_filterbank(n_fft, cfg)
    return _BANK_CACHE[key]


def compute_logmel(w: Waveform, cfg: FeatureConfig | None = None) -> FeatureMatrix:
    """Frame the waveform and return log(mel_power + floor) per frame.

    Frame count is floor((len - window) / hop) + 1; inputs shorter than one
    window are rejected. Deterministic: no dithering, no padding.
    """
    cfg = cfg or FeatureConfig()
    n = len(w.samples)
    win = cfg.window_samples
    hop = cfg.hop_samples
    if n == 0:
        raise ValueError("empty waveform")
    if n < win:
        raise ValueError(f"waveform shorter than one {win}-sample analysis window")
    n_frames = (n - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = w.samples[idx]
    # Periodic Hann window.
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)
    spectrum = np.fft.rfft(frames * window, n=win, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    mel_power = power @ _cached_bank(win, cfg).T
    logmel = np.log(mel_power + cfg.log_floor)
    return FeatureMatrix(
        frames=logmel,
        frame_rate=REQUIRED_SAMPLE_RATE / hop,
        mel_bins=cfg.mel_bins,
    )


def stack_frames(f: FeatureMatrix, factor: int) -> FeatureMatrix:
    """Concatenate `factor` consecutive frames into one wider frame.

    Output has ceil(T / factor) rows; the final group is zero-padded. Aligns
    one quantizer label with one encoder output frame when `factor` equals
    the encoder's time-downsampling factor.
    """
    if factor < 1:
        raise ValueError(f"stack factor must be >= 1, got {factor}")
    if factor == 1:
        return FeatureMatrix(f.frames.copy(), f.frame_rate, f.mel_bins)
    t, width = f.frames.shape
    t_out = -(-t // factor)
    padded = np.zeros((t_out * factor, width), dtype=f.frames.dtype)
    padded[:t] = f.frames
    stacked = padded.reshape(t_out, factor * width)
    return FeatureMatrix(stacked, f.frame_rate / factor, f.mel_bins * factor)


def unstack_frames(f: FeatureMatrix, factor: int, original_len: int | None = None) -> FeatureMatrix:
    """Inverse of stack_frames up to the zero padding of the last group."""
    if factor < 1:
        raise ValueError(f"stack factor must be >= 1, got {factor}")
    if f.mel_bins % factor != 0:
        raise ValueError("stacked width is not divisible by factor")
    width = f.mel_bins // factor
    flat = f.frames.reshape(f.frames.shape[0] * factor, width)
    if original_len is not None:
        flat = flat[:original_len]
    return FeatureMatrix(flat, f.frame_rate * factor, width)


def read_wav(path: str | Path) -> Waveform:
    """Read a mono 16-bit PCM RIFF WAV file at 16 kHz."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            n_channels = fh.getnchannels()
            sampwidth = fh.getsampwidth()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (OSError, wave.Error) as exc:
        raise DataError(f"cannot read WAV file {path}: {exc}") from exc
    if n_channels != 1:
        raise DataError(f"{path}: expected mono audio, got {n_channels} channels")
    if sampwidth != 2:
        raise DataError(f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit")
    if rate != REQUIRED_SAMPLE_RATE:
        raise DataError(f"{path}: expected {REQUIRED_SAMPLE_RATE} Hz, got {rate}")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples=samples, sample_rate=rate)


def write_wav(path: str | Path, w: Waveform) -> None:
    """Write a mono 16-bit PCM RIFF WAV file (values clipped to [-1, 1])."""
    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(pcm.tobytes())

"""Span masking over feature frames and projection to encoder-output frames.

Each input frame independently starts a span with probability `prob`; a
started span covers `span` frames (clipped at the sequence end) and
overlapping spans merge. An output frame counts as masked if any input
frame mapped to it is masked. Plans are re-drawn (seed+1, seed+2, ...)
until at least one output frame stays unmasked, because distillation needs
unmasked frames to operate on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import seed_rng
from .features import FeatureMatrix

MASK_NOISE_STD = 0.1
MAX_REDRAWS = 100


@dataclass
class MaskPlan:
    input_mask: np.ndarray
    output_mask: np.ndarray
    span: int
    prob: float
    seed: int
    downsample_factor: int = 1

    def __post_init__(self):
        self.input_mask = np.asarray(self.input_mask, dtype=bool)
        self.output_mask = np.asarray(self.output_mask, dtype=bool)

    @property
    def num_input_frames(self) -> int:
        return self.input_mask.shape[0]

    @property
    def num_output_frames(self) -> int:
        return self.output_mask.shape[0]


def _spans_to_mask(starts: np.ndarray, span: int) -> np.ndarray:
    t = starts.shape[0]
    mask = np.zeros(t, dtype=bool)
    for s in np.flatnonzero(starts):
        mask[s : s + span] = True
    return mask


def project_mask(input_mask: np.ndarray, downsample_factor: int) -> np.ndarray:
    """Any-overlap rule: output frame t is masked iff any input frame in
    [t*factor, (t+1)*factor) is masked."""
    if downsample_factor < 1:
        raise ValueError(f"downsample_factor must be >= 1, got {downsample_factor}")
    mask = np.asarray(input_mask, dtype=bool)
    if downsample_factor == 1:
        return mask.copy()
    t = mask.shape[0]
    t_out = -(-t // downsample_factor)
    padded = np.zeros(t_out * downsample_factor, dtype=bool)
    padded[:t] = mask
    return padded.reshape(t_out, downsample_factor).any(axis=1)


def sample_mask(
    t_in: int,
    span: int,
    prob: float,
    seed: int,
    downsample_factor: int = 1,
) -> MaskPlan:
    """Draw a span mask plan; deterministic for fixed arguments.

    Raises if no draw within MAX_REDRAWS leaves an unmasked output frame
    (e.g. prob=1 with span covering the whole sequence).
    """
    if t_in < 1:
        raise ValueError(f"t_in must be >= 1, got {t_in}")
    if span < 1:
        raise ValueError(f"span must be >= 1, got {span}")
    if not (0.0 <= prob <= 1.0):
        raise ValueError(f"prob must be in [0, 1], got {prob}")
    for attempt in range(MAX_REDRAWS + 1):
        rng = seed_rng("mask", seed + attempt)
        starts = rng.random(t_in) < prob
        input_mask = _spans_to_mask(starts, span)
        output_mask = project_mask(input_mask, downsample_factor)
        if output_mask.size == 0 or not output_mask.all():
            return MaskPlan(
                input_mask=input_mask,
                output_mask=output_mask,
                span=span,
                prob=prob,
                seed=seed,
                downsample_factor=downsample_factor,
            )
    raise ValueError(
        f"could not draw a mask with an unmasked output frame after {MAX_REDRAWS} retries "
        f"(t_in={t_in}, span={span}, prob={prob})"
    )


def apply_mask(f: FeatureMatrix, plan: MaskPlan, noise_seed: int) -> FeatureMatrix:
    """Replace masked frames with i.i.d. Gaussian noise, mean 0, std 0.1.

    Unmasked frames are copied through untouched; deterministic per seed.
    """
    frames = f.frames
    if plan.input_mask.shape[0] != frames.shape[0]:
        raise ValueError(
            f"mask length {plan.input_mask.shape[0]} does not match "
            f"feature frame count {frames.shape[0]}"
        )
    out = frames.copy()
    masked_rows = np.flatnonzero(plan.input_mask)
    if masked_rows.size:
        rng = seed_rng("mask-noise", noise_seed)
        noise = rng.normal(0.0, MASK_NOISE_STD, size=(masked_rows.size, frames.shape[1]))
        out[masked_rows] = noise.astype(out.dtype, copy=False)
    return FeatureMatrix(out, f.frame_rate, f.mel_bins)

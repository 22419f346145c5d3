"""The three re-training loss terms and their weighted combination.

- prediction loss: mean softmax cross-entropy of codebook labels over
  masked output frames only;
- distillation loss: mean (1 - cosine) between student and teacher
  activations over unmasked output frames only (used at both the tap layer
  and the final layer);
- combined objective: prediction + lam * distill_tap + lam * beta * distill_final.

All three accept autodiff tensors (for training) or plain arrays (for
scoring); masked/unmasked selections are boolean per output frame, with an
optional validity mask so padded batch frames count as neither.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

COSINE_EPS = 1e-8
LOSS_CSV_HEADER = "step,l_q,l_d_ell,l_d_n,total"


@dataclass(frozen=True)
class LossWeights:
    lam: float = 0.5
    beta: float = 0.1

    def __post_init__(self):
        if not (math.isfinite(self.lam) and math.isfinite(self.beta)):
            raise ValueError("loss weights must be finite")
        if self.lam < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossBreakdown:
    l_q: float
    l_d_ell: float
    l_d_n: float
    total: float
    masked_count: int
    unmasked_count: int

    def csv_row(self, step: int) -> str:
        return f"{step},{self.l_q!r},{self.l_d_ell!r},{self.l_d_n!r},{self.total!r}"


def _selection(mask: np.ndarray, valid: np.ndarray | None, invert: bool) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    sel = ~mask if invert else mask
    if valid is not None:
        sel = sel & np.asarray(valid, dtype=bool)
    return np.flatnonzero(sel)


def prediction_loss(logits, labels, output_mask, valid=None) -> ad.Tensor:
    """Mean cross-entropy (nats) over masked frames; unmasked contribute nothing.

    Rows outside the selection never enter the computation, so perturbing
    them cannot change the value even bitwise.
    """
    logits = ad.as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(output_mask, dtype=bool)
    if logits.ndim != 2:
        raise ValueError("logits must be (T, V)")
    if labels.shape[0] != logits.shape[0] or mask.shape[0] != logits.shape[0]:
        raise ValueError("logits, labels and mask must agree on frame count")
    idx = _selection(mask, valid, invert=False)
    if idx.size == 0:
        raise ValueError("prediction loss needs at least one masked frame")
    ce = ad.cross_entropy_rows(ad.take_rows(logits, idx), labels[idx])
    return ad.div(ad.tsum(ce), float(idx.size))


def distill_loss(student_act, teacher_act, output_mask, valid=None, eps: float = COSINE_EPS) -> ad.Tensor:
    """Mean (1 - cosine similarity) over unmasked frames.

    The teacher side is treated as a constant. Zero-norm rows are kept
    finite by `eps` in the denominator.
    """
    student = ad.as_tensor(student_act)
    teacher = np.asarray(teacher_act.data if isinstance(teacher_act, ad.Tensor) else teacher_act)
    mask = np.asarray(output_mask, dtype=bool)
    if student.ndim != 2 or teacher.ndim != 2:
        raise ValueError("activations must be (T, d)")
    if student.shape != teacher.shape:
        raise ValueError(f"shape mismatch: student {student.shape} vs teacher {teacher.shape}")
    if mask.shape[0] != student.shape[0]:
        raise ValueError("mask length must match activation frame count")
    idx = _selection(mask, valid, invert=True)
    if idx.size == 0:
        raise ValueError("distillation loss needs at least one unmasked frame")
    s = ad.take_rows(student, idx)
    t = teacher[idx]
    dot = ad.tsum(ad.mul(s, t), axis=-1)
    s_norm = ad.sqrt(ad.tsum(ad.mul(s, s), axis=-1))
    t_norm = np.sqrt((t * t).sum(axis=-1))
    cosine = ad.div(dot, ad.add(ad.mul(s_norm, t_norm), eps))
    per_frame = ad.sub(1.0, cosine)
    return ad.div(ad.tsum(per_frame), float(idx.size))


def combine(l_q: float, l_d_ell: float, l_d_n: float, weights: LossWeights,
            masked_count: int = 0, unmasked_count: int = 0) -> LossBreakdown:
    """Scalar combination: total = l_q + lam * l_d_ell + lam * beta * l_d_n."""
    values = (float(l_q), float(l_d_ell), float(l_d_n))
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"loss terms must be finite, got {values}")
    total = values[0] + weights.lam * values[1] + weights.lam * weights.beta * values[2]
    return LossBreakdown(
        l_q=values[0],
        l_d_ell=values[1],
        l_d_n=values[2],
        total=total,
        masked_count=masked_count,
        unmasked_count=unmasked_count,
    )


def combine_terms(
    l_q_term: ad.Tensor,
    l_d_ell_term: ad.Tensor | None,
    l_d_n_term: ad.Tensor | None,
    weights: LossWeights,
) -> ad.Tensor:
    """Tensor-level counterpart of combine(); disabled terms are simply absent,
    so they contribute exactly zero to both the value and the gradients."""
    total = l_q_term
    if l_d_ell_term is not None:
        total = ad.add(total, ad.mul(weights.lam, l_d_ell_term))
    if l_d_n_term is not None:
        total = ad.add(total, ad.mul(weights.lam * weights.beta, l_d_n_term))
    return total

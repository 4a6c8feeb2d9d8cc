"""Training objective: cross-entropy over every head plus a contrastive
regularizer that aligns the student's temperature-softened old-class
probabilities with a frozen teacher's.

The regularizer treats, for each sample, the per-class products of teacher
and student softened probabilities as scores and penalizes the negative
log of their softmax, summed over old classes:

    R = -(1/N) sum_i sum_j log softmax_j(m_i)   with  m_ij = p_ij * q_ij

where p is the teacher row and q the student row. The products enter the
inner softmax class-by-class; a single row-level dot product would make
the softmax identically 1 and the term vanish, so that reading is
rejected. With a single old class the inner softmax is 1 and R is exactly
zero. Teacher rows are constants: no gradient flows into the teacher.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import softmax


@dataclass
class LossBreakdown:
    cross_entropy: float
    regularizer: float
    total: float
    grad_wrt_logits: np.ndarray


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its exact gradient (q - onehot)/N."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, width = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if n == 0:
        return 0.0, np.zeros_like(logits)
    bad = np.nonzero((labels < 0) | (labels >= width))[0]
    if bad.size:
        raise ValueError(
            f"label {labels[bad[0]]} at row {bad[0]} outside [0, {width})"
        )
    log_q = _log_softmax(logits)
    value = float(-log_q[np.arange(n), labels].mean())
    grad = np.exp(log_q)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return value, grad


def distill_probs(logits, temperature: float) -> np.ndarray:
    """Row-wise temperature-softened probabilities of a logit slice."""
    logits = np.asarray(logits, dtype=np.float64)
    return softmax(logits, temperature)


def _check_prob_rows(p: np.ndarray, name: str) -> None:
    sums = p.sum(axis=1)
    off = np.abs(sums - 1.0)
    if off.size and off.max() > 1e-6:
        row = int(np.argmax(off))
        raise ValueError(f"{name} row {row} sums to {sums[row]!r}, expected 1")


def contrastive_distillation(teacher_probs, student_probs) -> tuple[float, np.ndarray]:
    """Softmax-over-products penalty and its gradient w.r.t. student rows.

    Value per row: P*logsumexp(m) - sum_j m_j with m_j = p_j*q_j, averaged
    over rows. Gradient entry: p_ij * (P*softmax(m_i)_j - 1) / N.
    """
    p = np.asarray(teacher_probs, dtype=np.float64)
    q = np.asarray(student_probs, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: teacher {p.shape}, student {q.shape}")
    n, width = p.shape
    if n == 0 or width == 0:
        return 0.0, np.zeros_like(q)
    _check_prob_rows(p, "teacher_probs")
    _check_prob_rows(q, "student_probs")
    m = p * q
    shifted = m - m.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + m.max(axis=1)
    value = float((width * lse - m.sum(axis=1)).mean())
    inner = softmax(m)
    grad = p * (width * inner - 1.0) / n
    return value, grad


def total_loss(
    student_logits,
    labels,
    teacher_old_logits,
    old_class_count: int,
    temperature: float,
    regularizer_weight: float = 1.0,
) -> LossBreakdown:
    """Cross-entropy over the full logits plus the distillation regularizer
    over the first old_class_count columns, with the combined gradient.

    With old_class_count == 0 (first stream) the regularizer and its
    gradient are zero and the breakdown is pure cross-entropy.
    """
    student_logits = np.asarray(student_logits, dtype=np.float64)
    p_old = int(old_class_count)
    if p_old > student_logits.shape[1]:
        raise ValueError(
            f"old class count {p_old} exceeds student logit width "
            f"{student_logits.shape[1]}"
        )
    ce_value, grad = cross_entropy(student_logits, labels)
    grad = grad.copy()

    reg_value = 0.0
    if p_old > 0:
        teacher_old_logits = np.asarray(teacher_old_logits, dtype=np.float64)
        if teacher_old_logits.shape != (student_logits.shape[0], p_old):
            raise ValueError(
                f"teacher logits shape {teacher_old_logits.shape} does not "
                f"match ({student_logits.shape[0]}, {p_old})"
            )
        teacher_soft = distill_probs(teacher_old_logits, temperature)
        student_soft = distill_probs(student_logits[:, :p_old], temperature)
        reg_raw, d_reg_d_student = contrastive_distillation(teacher_soft, student_soft)
        reg_value = regularizer_weight * reg_raw
        # Chain through the student's temperature softmax: for s = softmax(z/T),
        # dL/dz_l = s_l * (g_l - sum_j g_j s_j) / T.
        g = regularizer_weight * d_reg_d_student
        row_dot = (g * student_soft).sum(axis=1, keepdims=True)
        grad[:, :p_old] += student_soft * (g - row_dot) / temperature
    return LossBreakdown(
        cross_entropy=ce_value,
        regularizer=reg_value,
        total=ce_value + reg_value,
        grad_wrt_logits=grad,
    )

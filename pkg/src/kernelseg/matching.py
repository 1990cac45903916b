"""Prediction-to-ground-truth matching and the loss terms, used here as diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

EPS = 1e-7


@dataclass
class Assignment:
    pairs: list[tuple[int, int]]
    ious: list[float] = field(default_factory=list)
    total_cost: float = 0.0


def iou(mask_a, mask_b) -> float:
    a = np.asarray(mask_a, dtype=bool)
    b = np.asarray(mask_b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("masks must have equal length")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def iou_matrix(pred_masks, gt_masks) -> np.ndarray:
    P = np.asarray(pred_masks, dtype=bool).reshape(-1, np.shape(pred_masks)[-1]).astype(np.float64)
    G = np.asarray(gt_masks, dtype=bool).reshape(-1, np.shape(gt_masks)[-1]).astype(np.float64)
    inter = P @ G.T
    union = P.sum(1)[:, None] + G.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
    return out


def instance_semantic_vote(M, B, n_classes: int | None = None):
    """Majority hard class among points where each soft mask exceeds 0.5.

    Returns ``(labels, empty)``; instances without support get class 0 and
    ``empty=True``.
    """
    M = np.asarray(M, dtype=np.float64)
    B = np.asarray(B, dtype=np.int64)
    if n_classes is None:
        n_classes = int(B.max()) + 1 if len(B) else 1
    labels = np.zeros(len(M), dtype=np.int64)
    empty = np.zeros(len(M), dtype=bool)
    for k, row in enumerate(M):
        support = B[row > 0.5]
        if len(support) == 0:
            empty[k] = True
            continue
        labels[k] = int(np.argmax(np.bincount(support, minlength=n_classes)))
    return labels, empty


def cost_matrix(C_ins, S_ins, C_gt, S_gt, mismatch_penalty: float = 1.0) -> np.ndarray:
    """Centroid distance plus a penalty when the semantic classes differ."""
    if mismatch_penalty < 0:
        raise ValueError("mismatch_penalty must be >= 0")
    C_ins = np.asarray(C_ins, dtype=np.float64).reshape(-1, 3)
    C_gt = np.asarray(C_gt, dtype=np.float64).reshape(-1, 3)
    dist = np.linalg.norm(C_ins[:, None, :] - C_gt[None, :, :], axis=2)
    mismatch = np.asarray(S_ins)[:, None] != np.asarray(S_gt)[None, :]
    return dist + mismatch_penalty * mismatch


def hungarian(cost) -> Assignment:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        return Assignment([])
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]
    return Assignment(pairs, total_cost=float(cost[rows, cols].sum()))


def match_instances(M, M_hat, C_ins, S_ins, C_gt, S_gt, mismatch_penalty=1.0) -> Assignment:
    """Hungarian matching on the centroid/class cost, annotated with mask IoUs."""
    a = hungarian(cost_matrix(C_ins, S_ins, C_gt, S_gt, mismatch_penalty))
    hard = np.asarray(M) > 0.5
    M_hat = np.asarray(M_hat, dtype=bool)
    a.ious = [iou(hard[p], M_hat[g]) for p, g in a.pairs]
    return a


def dice_term(m, m_hat) -> float:
    m = np.asarray(m, dtype=np.float64)
    m_hat = np.asarray(m_hat, dtype=np.float64)
    denom = m.sum() + m_hat.sum()
    if denom == 0:
        return 0.0
    return float(1.0 - 2.0 * (m @ m_hat) / denom)


def mask_loss(M, M_hat, assignment: Assignment, min_iou: float = 0.25) -> tuple[float, int]:
    """Mean of BCE + dice over matched pairs whose hard IoU exceeds ``min_iou``.

    Returns ``(loss, n_pairs)``; with no qualifying pair the loss is 0.
    """
    M = np.asarray(M, dtype=np.float64)
    M_hat = np.asarray(M_hat, dtype=np.float64)
    total, used = 0.0, 0
    for p, g in assignment.pairs:
        if not iou(M[p] > 0.5, M_hat[g] > 0.5) > min_iou:
            continue
        m = np.clip(M[p], EPS, 1 - EPS)
        y = M_hat[g]
        bce = float(np.mean(-(y * np.log(m) + (1 - y) * np.log(1 - m))))
        total += bce + dice_term(M[p], y)
        used += 1
    if used == 0:
        return 0.0, 0
    return total / used, used


def semantic_loss(S, S_hat) -> float:
    """Mean cross-entropy plus multi-class dice."""
    S = np.asarray(S, dtype=np.float64)
    S_hat = np.asarray(S_hat, dtype=np.float64)
    if S_hat.ndim == 1:
        S_hat = np.eye(S.shape[1])[S_hat.astype(np.int64)]
    ce = float(np.mean(-np.sum(S_hat * np.log(np.clip(S, EPS, 1.0)), axis=1)))
    dice = 1.0 - 2.0 * np.sum(S * S_hat) / (np.sum(S * S) + np.sum(S_hat * S_hat))
    return ce + float(dice)


def offset_loss(O, O_hat, indicator) -> float:
    """Mean of ``|O - O_hat| + (1 - cos(O, O_hat))`` over instance points.

    The cosine term is 0 when either vector is shorter than 1e-8.
    """
    O = np.asarray(O, dtype=np.float64)
    O_hat = np.asarray(O_hat, dtype=np.float64)
    mask = np.asarray(indicator, dtype=bool)
    if not mask.any():
        return 0.0
    o, t = O[mask], O_hat[mask]
    dist = np.linalg.norm(o - t, axis=1)
    no, nt = np.linalg.norm(o, axis=1), np.linalg.norm(t, axis=1)
    ok = (no >= 1e-8) & (nt >= 1e-8)
    # 1 - cos(a, b) == |a/|a| - b/|b||^2 / 2, which is exactly 0 for equal directions
    direction = np.zeros(len(o))
    unit_o = o[ok] / no[ok, None]
    unit_t = t[ok] / nt[ok, None]
    direction[ok] = 0.5 * np.sum((unit_o - unit_t) ** 2, axis=1)
    return float(np.mean(dist + direction))

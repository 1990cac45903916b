"""Turning soft instance masks into hard labels.

Stage one reweights every mask by its coverage score (points won in the raw
argmax labelling over points above its Otsu threshold); stage two unifies labels
inside superpoints. Confidence scores come from the intra-points of each mask.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .pointcloud import PointCloud, voxel_downsample

BACKGROUND_SCORE = 0.5
OTSU_LEVELS = 256


def _argmax_labels(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] == 0:
        return np.full(scores.shape[1], -1, dtype=np.int64)
    best = np.argmax(scores, axis=0)
    top = scores[best, np.arange(scores.shape[1])]
    return np.where(top < BACKGROUND_SCORE, -1, best).astype(np.int64)


def raw_labels(M) -> np.ndarray:
    """Per-point argmax instance; ``-1`` where the best score is below 0.5."""
    return _argmax_labels(M)


def quantize(values, K: int = OTSU_LEVELS) -> np.ndarray:
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) * K), 0, K - 1).astype(np.int64)


def otsu_threshold(values, K: int = OTSU_LEVELS) -> float:
    """Otsu split of ``values`` quantized into ``K`` levels.

    Returns ``t / K`` for the level ``t`` maximising the between-class variance of
    ``{level <= t}`` versus ``{level > t}``; the lowest such ``t`` wins ties.
    When every value falls in one level, that level is returned.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    q = quantize(values, K)
    if len(q) == 0:
        raise ValueError("need at least one value")
    hist = np.bincount(q, minlength=K)
    if np.count_nonzero(hist) == 1:
        return float(q[0]) / K
    # between-class variance is proportional to (N*S0 - n0*S)^2 / (n0 * n1); compare
    # the fractions exactly in integer arithmetic so ties resolve deterministically
    N, S = int(len(q)), int(q.sum())
    n0 = np.cumsum(hist).tolist()
    s0 = np.cumsum(hist * np.arange(K)).tolist()
    best_t, best_num, best_den = 0, 0, 1
    for t in range(K - 1):
        a, b = int(n0[t]), N - int(n0[t])
        if a == 0 or b == 0:
            continue
        num = (N * int(s0[t]) - a * S) ** 2
        den = a * b
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t / K


def intra_mask(values, threshold: float, K: int = OTSU_LEVELS) -> np.ndarray:
    """Points whose quantized level lies above the Otsu level ``threshold * K``."""
    return quantize(values, K) > int(round(threshold * K))


def coverage_scores(M, labels, thresholds, K: int = OTSU_LEVELS) -> np.ndarray:
    """``N_inter / N_intra`` per instance; 0 when it has no intra-points."""
    M = np.asarray(M, dtype=np.float64)
    labels = np.asarray(labels)
    out = np.zeros(len(M))
    for k in range(len(M)):
        n_intra = np.count_nonzero(intra_mask(M[k], thresholds[k], K))
        if n_intra:
            out[k] = np.count_nonzero(labels == k) / n_intra
    return out


def refine_labels(M, S_c) -> np.ndarray:
    """Argmax of coverage-weighted masks, same background rule as :func:`raw_labels`."""
    M = np.asarray(M, dtype=np.float64)
    S_c = np.asarray(S_c, dtype=np.float64)
    if len(S_c) != len(M):
        raise ValueError("one coverage score per instance required")
    return _argmax_labels(S_c[:, None] * M)


def build_superpoints(scene, method: str = "oracle", impurity: float = 0.0, cell: float = 0.25,
                      seed: int = 0) -> np.ndarray:
    """Superpoint id per point.

    ``oracle`` splits each ground-truth instance into 2-5 Voronoi chunks (the
    background into ``cell``-sized voxels), then moves an ``impurity`` fraction of
    boundary points into a neighbouring superpoint. ``grid`` uses occupied voxels.
    """
    pos = scene.positions
    if method == "grid":
        if not cell > 0:
            raise ValueError("cell must be positive")
        _, mapping = voxel_downsample(PointCloud(pos), cell)
        return mapping.astype(np.int64)
    if method != "oracle":
        raise ValueError(f"unknown superpoint method {method!r}")
    if not 0.0 <= impurity <= 1.0:
        raise ValueError("impurity must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    sp = np.full(len(pos), -1, dtype=np.int64)
    next_id = 0
    for inst in scene.instances:
        members = np.flatnonzero(scene.instance_ids == inst.id)
        k = min(int(rng.integers(2, 6)), len(members))
        seeds = pos[rng.choice(members, size=k, replace=False)]
        chunk = np.argmin(np.linalg.norm(pos[members, None, :] - seeds[None], axis=2), axis=1)
        sp[members] = next_id + chunk
        next_id += k
    bg = np.flatnonzero(scene.instance_ids < 0)
    if len(bg):
        _, mapping = voxel_downsample(PointCloud(pos[bg]), max(cell, 0.5))
        sp[bg] = next_id + mapping

    if impurity > 0:
        tree = cKDTree(pos)
        _, nbr = tree.query(pos, k=min(8, len(pos)))
        nbr = nbr.reshape(len(pos), -1)
        foreign = sp[nbr] != sp[:, None]
        boundary = np.flatnonzero(foreign.any(axis=1))
        n_move = int(round(impurity * len(boundary)))
        if n_move:
            moved = rng.choice(boundary, size=n_move, replace=False)
            original = sp.copy()
            for i in moved:
                j = nbr[i][foreign[i]][0]
                sp[i] = original[j]

    _, sp = np.unique(sp, return_inverse=True)
    return sp.reshape(-1).astype(np.int64)


def superpoint_refine(labels, partition) -> np.ndarray:
    """Give every superpoint its majority label (``-1`` votes too; ties go low)."""
    labels = np.asarray(labels, dtype=np.int64)
    partition = np.asarray(partition, dtype=np.int64)
    n_sp = int(partition.max()) + 1
    n_lab = int(labels.max()) + 2
    votes = np.zeros((n_sp, n_lab), dtype=np.int64)
    np.add.at(votes, (partition, labels + 1), 1)
    winner = np.argmax(votes, axis=1) - 1
    return winner[partition]


def confidence_scores(M, S, S_ins, thresholds, K: int = OTSU_LEVELS) -> np.ndarray:
    """Mean mask score times mean semantic score of the voted class, over intra-points."""
    M = np.asarray(M, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    out = np.zeros(len(M))
    for k in range(len(M)):
        intra = intra_mask(M[k], thresholds[k], K)
        if intra.any():
            out[k] = M[k, intra].mean() * S[intra, S_ins[k]].mean()
    return out

"""Candidate mining: locally normalized NMS plus the plain-NMS and random baselines.

Every mined candidate is described by two pooled features: ``F_n``, the mean
reduced feature of same-class points within ``R``, and ``F_b``, the mean over
different-class points in the shell ``R <= d < 2R``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pointcloud import SpatialGrid, build_grid, radius_query_with_distances


@dataclass(frozen=True)
class MiningParams:
    R: float = 0.3
    T_theta: float = 0.5
    N_theta: int = 200

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if not 0.0 < self.T_theta <= 1.0:
            raise ValueError("T_theta must lie in (0, 1]")
        if self.N_theta < 1:
            raise ValueError("N_theta must be >= 1")


@dataclass
class Candidate:
    point_index: int
    position: np.ndarray
    shifted_position: np.ndarray
    semantic_label: int
    centroid_score: float
    F_n: np.ndarray
    F_b: np.ndarray
    k_n: int
    k_b: int


def describe_candidate(q, positions, B, F_k, O, H, R, grid) -> Candidate:
    """Pool foreground (``d < R``, same class) and background (``R <= d < 2R``,
    other class) features around point ``q``."""
    idx, d = radius_query_with_distances(grid, positions, positions[q], 2 * R)
    same = B[idx] == B[q]
    fg = idx[(d < R) & same]
    bg = idx[(d >= R) & ~same]
    F_n = F_k[fg].mean(axis=0)
    F_b = F_k[bg].mean(axis=0) if len(bg) else np.zeros(F_k.shape[1])
    return Candidate(
        point_index=int(q),
        position=positions[q].copy(),
        shifted_position=positions[q] + O[q],
        semantic_label=int(B[q]),
        centroid_score=float(H[q]),
        F_n=F_n,
        F_b=F_b,
        k_n=len(fg),
        k_b=len(bg),
    )


def _peak_order(H, is_foreground):
    fg = np.flatnonzero(is_foreground)
    # stable sort on -H keeps the lowest index first among equal scores
    return fg[np.argsort(-H[fg], kind="stable")]


def _suppression_loop(H, positions, is_foreground, params, grid, normalize):
    H = np.asarray(H, dtype=np.float64)
    available = np.ones(len(H), dtype=bool)
    accepted = []
    global_max = H[is_foreground].max() if is_foreground.any() else 0.0
    for q in _peak_order(H, is_foreground):
        if len(accepted) >= params.N_theta:
            break
        if not available[q]:
            continue
        nbrs, _ = radius_query_with_distances(grid, positions, positions[q], params.R)
        available[nbrs] = False
        if normalize:
            local_max = H[nbrs].max()
            ok = local_max > 0 and H[q] / local_max >= params.T_theta
        else:
            ok = H[q] >= params.T_theta * global_max and H[q] > 0
            if not ok:
                # every remaining peak is lower still
                break
        if ok:
            accepted.append(int(q))
    return accepted


def ln_nms(H, positions, B, is_foreground, F_k, O, params: MiningParams = MiningParams(),
           grid: SpatialGrid | None = None) -> list[Candidate]:
    """Locally normalized NMS.

    The current best available foreground point suppresses its whole ``R``-ball
    and is kept only if its score is at least ``T_theta`` times the maximum score
    in that ball. The maximum includes points suppressed earlier, so a weak bump on
    the shoulder of a stronger peak is rejected. A ball whose maximum is 0 never
    yields a candidate.
    """
    positions = np.asarray(positions, dtype=np.float64)
    is_foreground = np.asarray(is_foreground, dtype=bool)
    if grid is None:
        grid = build_grid(positions, params.R)
    picks = _suppression_loop(H, positions, is_foreground, params, grid, normalize=True)
    return [describe_candidate(q, positions, B, F_k, O, H, params.R, grid) for q in picks]


def plain_nms(H, positions, B, is_foreground, F_k, O, params: MiningParams = MiningParams(),
              grid: SpatialGrid | None = None) -> list[Candidate]:
    """Greedy NMS keeping every peak above ``T_theta * max(H)``; no local normalization."""
    positions = np.asarray(positions, dtype=np.float64)
    is_foreground = np.asarray(is_foreground, dtype=bool)
    if grid is None:
        grid = build_grid(positions, params.R)
    picks = _suppression_loop(H, positions, is_foreground, params, grid, normalize=False)
    return [describe_candidate(q, positions, B, F_k, O, H, params.R, grid) for q in picks]


def random_candidates(H, positions, B, is_foreground, F_k, O, threshold: float = 0.1,
                      max_count: int = 200, seed: int = 0, R: float = 0.3,
                      grid: SpatialGrid | None = None) -> list[Candidate]:
    """Uniformly sample up to ``max_count`` foreground points with ``H > threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    positions = np.asarray(positions, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    eligible = np.flatnonzero(np.asarray(is_foreground, dtype=bool) & (H > threshold))
    rng = np.random.default_rng(seed)
    if len(eligible) > max_count:
        eligible = np.sort(rng.choice(eligible, size=max_count, replace=False))
    if grid is None:
        grid = build_grid(positions, R)
    return [describe_candidate(q, positions, B, F_k, O, H, R, grid) for q in eligible]

"""Duplicate-candidate aggregation: merging scores, greedy merging and instance fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .mining import Candidate

EPS = 1e-7


@dataclass
class InstanceGroups:
    M_ins: np.ndarray
    groups: list[list[int]]
    C_ins: np.ndarray | None = None
    F_ins: np.ndarray | None = None

    @property
    def centers(self) -> list[int]:
        return [int(self.M_ins[g[0]]) for g in self.groups]

    def __len__(self):
        return len(self.groups)


def build_aggregation_features(candidates: list[Candidate]) -> np.ndarray:
    """Rows ``[F_n | F_b | shifted_position]``, one per candidate."""
    if not candidates:
        raise ValueError("need at least one candidate")
    return np.stack([np.concatenate([c.F_n, c.F_b, c.shifted_position]) for c in candidates])


def symmetrize(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if not np.array_equal(A, A.T):
        A = 0.5 * (A + A.T)
    return A


def score_map_oracle(candidates: list[Candidate], instance_ids) -> np.ndarray:
    """1 where two candidates sit on the same ground-truth instance, else 0."""
    inst = np.asarray(instance_ids)[[c.point_index for c in candidates]]
    A = (inst[:, None] == inst[None, :]) & (inst[:, None] >= 0)
    return A.astype(np.float64)


def score_map_analytic(features, beta0: float = 4.0, beta1: float = 1.0) -> np.ndarray:
    """``sigmoid(beta0 - beta1 * L1(F_a,i - F_a,j))``."""
    if not beta1 > 0:
        raise ValueError("beta1 must be positive")
    F = np.asarray(features, dtype=np.float64)
    dist = np.abs(F[:, None, :] - F[None, :, :]).sum(axis=2)
    return expit(beta0 - beta1 * dist)


def greedy_merge(A, centroid_scores, threshold: float = 0.5) -> InstanceGroups:
    """Merge the two groups holding the highest-scoring pair until no
    off-diagonal score exceeds ``threshold``.

    After each merge the group is re-centred on its member with the highest
    centroid score and all scores inside the group are zeroed.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    A = symmetrize(A).copy()
    scores = np.asarray(centroid_scores, dtype=np.float64)
    n = len(scores)
    if A.shape != (n, n):
        raise ValueError("score map and centroid scores disagree in size")
    np.fill_diagonal(A, -np.inf)
    M = np.arange(n)
    while n > 1:
        flat = int(np.argmax(A))
        i, j = divmod(flat, n)
        if not A[i, j] > threshold:
            break
        members = np.flatnonzero((M == M[i]) | (M == M[j]))
        # argmax picks the lowest index among equal scores
        center = members[int(np.argmax(scores[members]))]
        M[members] = center
        A[np.ix_(members, members)] = 0.0
        A[members, members] = -np.inf
    return InstanceGroups(M, _groups_from_map(M))


def _groups_from_map(M) -> list[list[int]]:
    return [np.flatnonzero(M == c).tolist() for c in np.unique(M)]


def singleton_groups(n: int) -> InstanceGroups:
    M = np.arange(n)
    return InstanceGroups(M, _groups_from_map(M))


def fuse_instances(groups: InstanceGroups, candidates: list[Candidate], mode: str = "aggregate"):
    """Instance centroids and features for each group.

    The centroid is the shifted position of the group's centre candidate. With
    ``mode="aggregate"`` the feature is the ``k_n``-weighted mean of the members'
    ``F_n``; ``mode="center"`` keeps only the centre candidate's ``F_n``.
    """
    C, F = [], []
    for members, center in zip(groups.groups, groups.centers):
        C.append(candidates[center].shifted_position)
        if mode == "center":
            F.append(candidates[center].F_n)
        elif mode == "aggregate":
            w = np.array([candidates[m].k_n for m in members], dtype=np.float64)
            Fn = np.stack([candidates[m].F_n for m in members])
            F.append((w[:, None] * Fn).sum(axis=0) / w.sum())
        else:
            raise ValueError(f"unknown fusion mode {mode!r}")
    groups.C_ins = np.array(C).reshape(-1, 3)
    groups.F_ins = np.array(F).reshape(len(C), -1)
    return groups.C_ins, groups.F_ins


def aggre_loss(A, A_hat) -> float:
    """Mean binary cross-entropy over off-diagonal entries."""
    A = np.asarray(A, dtype=np.float64)
    A_hat = np.asarray(A_hat, dtype=np.float64)
    if A.shape != A_hat.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A and A_hat must be equal-shaped square matrices")
    n = A.shape[0]
    if n < 2:
        return 0.0
    off = ~np.eye(n, dtype=bool)
    p = np.clip(A[off], EPS, 1 - EPS)
    y = A_hat[off]
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))

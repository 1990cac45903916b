"""Geometry-adaptive Gaussian centroid heatmaps and the centroid regression loss."""

from __future__ import annotations

import warnings

import numpy as np

DEFAULT_ALPHA = 25.0
MIN_INSTANCE_SIZE = 1e-3


def pseudo_gt_heatmap(scene, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Ground-truth centroid heatmap, ``exp(-alpha * d^2 / r^2)`` per instance point.

    ``d`` is the distance to the centroid of the point's instance and ``r`` the
    longest side of that instance's bounding box. Background points get 0.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    pos = scene.cloud.positions
    ids = scene.instance_ids
    values = np.zeros(len(pos))
    for inst in scene.instances:
        members = ids == inst.id
        r = inst.r
        if r <= 0:
            warnings.warn(f"instance {inst.id} has zero extent; clamping r to {MIN_INSTANCE_SIZE}")
            r = MIN_INSTANCE_SIZE
        d2 = np.sum((pos[members] - inst.centroid) ** 2, axis=1)
        values[members] = np.exp(-alpha * d2 / r**2)
    return values


def center_loss(H, H_hat, instance_ids) -> float:
    """Mean absolute heatmap error over points that belong to an instance."""
    H = np.asarray(H, dtype=np.float64)
    H_hat = np.asarray(H_hat, dtype=np.float64)
    instance_ids = np.asarray(instance_ids)
    if not (len(H) == len(H_hat) == len(instance_ids)):
        raise ValueError("H, H_hat and instance_ids must have equal length")
    mask = instance_ids >= 0
    if not mask.any():
        return 0.0
    return float(np.mean(np.abs(H[mask] - H_hat[mask])))

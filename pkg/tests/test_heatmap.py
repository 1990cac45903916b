import math

import numpy as np
import pytest

from kernelseg.heatmap import center_loss, pseudo_gt_heatmap
from kernelseg.pointcloud import PointCloud
from kernelseg.scene import InstanceRecord, SceneConfig, SyntheticScene, generate_scene


def _scene(points, ids):
    points = np.asarray(points, dtype=float)
    ids = np.asarray(ids)
    sem = np.where(ids >= 0, 1, 0)
    recs = [InstanceRecord.from_points(g, 1, points[ids == g]) for g in range(ids.max() + 1)]
    return SyntheticScene(PointCloud(points), ids, sem, recs, 2)


def test_heatmap_hand_values():
    # centroid at origin, bounding-box longest side r = 2
    pts = [[-1, 0, 0], [1, 0, 0], [0, 0, 0], [5, 5, 5]]
    scene = _scene(pts, [0, 0, 0, -1])
    H = pseudo_gt_heatmap(scene, alpha=25)
    assert H[2] == 1.0
    assert math.isclose(H[0], math.exp(-25 * 1 / 4))
    assert H[3] == 0.0


def test_heatmap_in_unit_interval():
    scene = generate_scene(SceneConfig(), 1)
    H = pseudo_gt_heatmap(scene)
    assert np.all((H >= 0) & (H <= 1))


def test_heatmap_zero_extent_warns():
    scene = _scene([[1, 1, 1], [1, 1, 1]], [0, 0])
    with pytest.warns(UserWarning):
        H = pseudo_gt_heatmap(scene)
    assert np.all(H == 1.0)


def test_heatmap_rejects_bad_alpha():
    scene = _scene([[0, 0, 0], [1, 0, 0]], [0, 0])
    with pytest.raises(ValueError):
        pseudo_gt_heatmap(scene, alpha=0)


def test_cube_mean_matches_quadrature():
    # closed form for a filled cube: per-axis mean of exp(-alpha u^2), u uniform in [-1/2, 1/2]
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, size=(40_000, 3))
    H = pseudo_gt_heatmap(_scene(pts, np.zeros(len(pts), dtype=int)), alpha=25)
    closed = (math.sqrt(math.pi / 25) * math.erf(2.5)) ** 3
    assert abs(H.mean() - closed) < 2e-3


def test_center_loss_is_masked_l1():
    ids = np.array([0, 0, -1, 1])
    H = np.array([0.5, 1.0, 0.9, 0.0])
    H_hat = np.array([0.0, 1.0, 0.0, 0.5])
    assert center_loss(H, H_hat, ids) == pytest.approx((0.5 + 0 + 0.5) / 3)
    assert center_loss(H, H_hat, np.full(4, -1)) == 0.0
    with pytest.raises(ValueError):
        center_loss(H, H_hat[:3], ids)

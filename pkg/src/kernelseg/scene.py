"""Synthetic indoor scenes with ground-truth instances, plus simulated backbone outputs.

The trained sparse-convolution backbone is replaced by :func:`simulate_predictions`,
which derives point features, centroid offsets, semantic scores and a centroid
heatmap from the ground truth and corrupts them with controllable Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .heatmap import DEFAULT_ALPHA, pseudo_gt_heatmap
from .pointcloud import PointCloud


class SceneGenerationError(RuntimeError):
    pass


@dataclass
class InstanceRecord:
    id: int
    semantic_class: int
    centroid: np.ndarray
    aabb_min: np.ndarray
    aabb_max: np.ndarray

    @property
    def r(self) -> float:
        """Longest side of the axis-aligned bounding box."""
        return float(np.max(self.aabb_max - self.aabb_min))

    @classmethod
    def from_points(cls, id, semantic_class, points):
        return cls(id, int(semantic_class), points.mean(axis=0), points.min(axis=0), points.max(axis=0))


@dataclass
class SyntheticScene:
    cloud: PointCloud
    instance_ids: np.ndarray
    semantic_labels: np.ndarray
    instances: list[InstanceRecord]
    n_classes: int
    background_classes: tuple[int, ...] = (0,)

    def __post_init__(self):
        self.instance_ids = np.asarray(self.instance_ids, dtype=np.int64)
        self.semantic_labels = np.asarray(self.semantic_labels, dtype=np.int64)
        n = len(self.cloud)
        if self.instance_ids.shape != (n,) or self.semantic_labels.shape != (n,):
            raise ValueError("label arrays must have one entry per point")
        ids = sorted(inst.id for inst in self.instances)
        if ids != list(range(len(ids))):
            raise ValueError("instance ids must be contiguous from 0")
        for inst in self.instances:
            members = self.instance_ids == inst.id
            if np.any(self.semantic_labels[members] != inst.semantic_class):
                raise ValueError(f"instance {inst.id} has points of a foreign semantic class")
        self.instances = sorted(self.instances, key=lambda inst: inst.id)

    @property
    def positions(self) -> np.ndarray:
        return self.cloud.positions

    @property
    def n_points(self) -> int:
        return len(self.cloud)

    def gt_masks(self) -> np.ndarray:
        """Boolean ground-truth masks, one row per instance."""
        return self.instance_ids[None, :] == np.arange(len(self.instances))[:, None]

    def gt_centroids(self) -> np.ndarray:
        return np.array([inst.centroid for inst in self.instances]).reshape(-1, 3)

    def gt_classes(self) -> np.ndarray:
        return np.array([inst.semantic_class for inst in self.instances], dtype=np.int64)


@dataclass
class SceneConfig:
    # a fixed count, or an inclusive (lo, hi) range drawn per scene
    n_instances: int | tuple[int, int] = 8
    points_per_instance: tuple[int, int] = (150, 400)
    n_classes: int = 6
    background_classes: tuple[int, ...] = (0,)
    room_extent: tuple[float, float] = (4.0, 4.0)
    min_separation: float = 0.6
    # minimum clearance between instance bounding boxes
    min_gap: float = 0.05
    half_size_range: tuple[float, float] = (0.1, 0.35)
    shapes: tuple[str, ...] = ("box", "ellipsoid")
    n_background: int = 2000
    max_retries: int = 2000


_CLASS_COLORS = np.array([
    [0.55, 0.55, 0.55], [0.80, 0.30, 0.25], [0.25, 0.60, 0.80], [0.35, 0.75, 0.35],
    [0.85, 0.70, 0.25], [0.60, 0.35, 0.75], [0.30, 0.75, 0.70], [0.85, 0.45, 0.65],
])


def _sample_shape(rng, shape, half, n):
    if shape == "box":
        return rng.uniform(-half, half, size=(n, 3))
    if shape == "ellipsoid":
        direction = rng.normal(size=(n, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = rng.random(n) ** (1.0 / 3.0)
        return direction * radius[:, None] * half
    raise ValueError(f"unknown shape kind {shape!r}")


def generate_scene(config: SceneConfig, seed: int) -> SyntheticScene:
    """Place ``n_instances`` box/ellipsoid objects on a floor plane.

    Instances keep centroids at least ``min_separation`` apart and bounding boxes at
    least ``min_gap`` apart. Raises :class:`SceneGenerationError` when a placement
    cannot be found within ``max_retries`` attempts.
    """
    n_range = config.n_instances if isinstance(config.n_instances, (tuple, list)) \
        else (config.n_instances, config.n_instances)
    if len(n_range) != 2 or n_range[0] < 1 or n_range[1] < n_range[0]:
        raise ValueError("n_instances must be >= 1 (or a valid (lo, hi) range)")
    if config.min_separation < 0:
        raise ValueError("min_separation must be >= 0")
    fg_classes = [c for c in range(config.n_classes) if c not in config.background_classes]
    if not fg_classes:
        raise ValueError("no foreground classes available")
    for shape in config.shapes:
        if shape not in ("box", "ellipsoid"):
            raise ValueError(f"unknown shape kind {shape!r}")

    rng = np.random.default_rng(seed)
    n_instances = int(n_range[0]) if n_range[0] == n_range[1] else int(rng.integers(n_range[0], n_range[1] + 1))
    ex, ey = config.room_extent
    lo, hi = config.points_per_instance
    placed_pts, placed_cls, placed_box = [], [], []

    for _ in range(n_instances):
        for _attempt in range(config.max_retries):
            half = rng.uniform(*config.half_size_range, size=3)
            shape = config.shapes[rng.integers(len(config.shapes))]
            if ex - 2 * half[0] <= 0 or ey - 2 * half[1] <= 0:
                continue
            center = np.array([
                rng.uniform(half[0], ex - half[0]),
                rng.uniform(half[1], ey - half[1]),
                half[2] + 0.02,
            ])
            box_lo, box_hi = center - half, center + half
            if any(np.all(box_lo < b_hi + config.min_gap) and np.all(b_lo < box_hi + config.min_gap)
                   for b_lo, b_hi in placed_box):
                continue
            n = int(rng.integers(lo, hi + 1))
            pts = center + _sample_shape(rng, shape, half, n)
            centroid = pts.mean(axis=0)
            if any(np.linalg.norm(centroid - p.mean(axis=0)) < config.min_separation for p in placed_pts):
                continue
            placed_pts.append(pts)
            placed_cls.append(fg_classes[rng.integers(len(fg_classes))])
            placed_box.append((box_lo, box_hi))
            break
        else:
            raise SceneGenerationError(
                f"could not place instance {len(placed_pts)} after {config.max_retries} attempts")

    bg = np.column_stack([
        rng.uniform(0, ex, config.n_background),
        rng.uniform(0, ey, config.n_background),
        rng.uniform(0, 0.01, config.n_background),
    ])
    bg_class = config.background_classes[0] if config.background_classes else 0

    positions = np.concatenate(placed_pts + [bg])
    ids = np.concatenate([np.full(len(p), g) for g, p in enumerate(placed_pts)] + [np.full(len(bg), -1)])
    sem = np.concatenate([np.full(len(p), c) for p, c in zip(placed_pts, placed_cls)]
                         + [np.full(len(bg), bg_class)])
    base = _CLASS_COLORS[sem % len(_CLASS_COLORS)]
    colors = np.clip(base + rng.normal(0, 0.03, size=base.shape), 0.0, 1.0)

    perm = rng.permutation(len(positions))
    positions, ids, sem, colors = positions[perm], ids[perm], sem[perm], colors[perm]
    instances = [InstanceRecord.from_points(g, placed_cls[g], positions[ids == g])
                 for g in range(len(placed_pts))]
    return SyntheticScene(PointCloud(positions, colors), ids, sem, instances,
                          config.n_classes, tuple(config.background_classes))


def gt_offsets(scene: SyntheticScene) -> np.ndarray:
    """Per-point vector to the centroid of its instance; zero for background."""
    out = np.zeros((scene.n_points, 3))
    for inst in scene.instances:
        members = scene.instance_ids == inst.id
        out[members] = inst.centroid - scene.positions[members]
    return out


@dataclass
class NoiseSpec:
    sigma_offset: float = 0.0
    sigma_heatmap: float = 0.0
    semantic_flip_prob: float = 0.0
    sigma_feature: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_offset", "sigma_heatmap", "sigma_feature"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.semantic_flip_prob <= 1.0:
            raise ValueError("semantic_flip_prob must lie in [0, 1]")


@dataclass
class SimulatedPredictions:
    """Stand-in backbone outputs.

    ``F_p`` point features [N x D], ``O`` centroid offsets [N x 3], ``S`` semantic
    scores [N x C] and ``H`` centroid heatmap [N]. The heatmap branch of the real
    network consumes ``[F_p | O]``; here ``H`` is derived from the ground truth.
    """

    F_p: np.ndarray
    O: np.ndarray
    S: np.ndarray
    H: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def hard_semantics(self) -> np.ndarray:
        return np.argmax(self.S, axis=1)


def instance_embeddings(rng, n_instances: int, dim: int) -> np.ndarray:
    """Random unit vectors; mutually orthogonal while ``n_instances <= dim``."""
    if n_instances == 0:
        return np.zeros((0, dim))
    if n_instances <= dim:
        q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        return q[:, :n_instances].T.copy()
    emb = rng.normal(size=(n_instances, dim))
    return emb / np.linalg.norm(emb, axis=1, keepdims=True)


def simulate_predictions(scene: SyntheticScene, noise: NoiseSpec, feature_dim: int = 32,
                         class_dim: int = 16, alpha: float = DEFAULT_ALPHA) -> SimulatedPredictions:
    C = scene.n_classes
    if feature_dim < C or class_dim < C or class_dim > feature_dim:
        raise ValueError(f"need n_classes <= class_dim <= feature_dim (C={C}, "
                         f"class_dim={class_dim}, D={feature_dim})")
    rng = np.random.default_rng(noise.seed)
    n = scene.n_points
    G = len(scene.instances)
    ids = scene.instance_ids
    inst_mask = ids >= 0

    emb = instance_embeddings(rng, G, feature_dim - class_dim)

    O = gt_offsets(scene) + rng.normal(0.0, noise.sigma_offset, size=(n, 3))

    H = pseudo_gt_heatmap(scene, alpha) + rng.normal(0.0, noise.sigma_heatmap, size=n)
    H = np.clip(H, 0.0, 1.0)

    truth = scene.semantic_labels
    flip = rng.random(n) < noise.semantic_flip_prob
    other = rng.integers(0, max(C - 1, 1), size=n)
    other = other + (other >= truth)
    chosen = np.where(flip & (C > 1), other, truth)
    if C > 1:
        S = np.full((n, C), 0.1 / (C - 1))
        S[np.arange(n), chosen] = 0.9
    else:
        S = np.ones((n, 1))

    F_p = np.zeros((n, feature_dim))
    F_p[np.arange(n), truth] = 1.0
    F_p[inst_mask, class_dim:] = emb[ids[inst_mask]]
    F_p += rng.normal(0.0, noise.sigma_feature, size=F_p.shape)

    return SimulatedPredictions(F_p, O, S, H, meta={"class_dim": class_dim, "alpha": alpha})

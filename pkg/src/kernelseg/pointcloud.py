"""Point-cloud containers, a uniform-grid spatial index and voxel downsampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# voxel sizes used for the two indoor benchmarks
SCANNET_VOXEL = 0.02
S3DIS_VOXEL = 0.05


@dataclass
class PointCloud:
    positions: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError(f"positions must be [N x 3], got {self.positions.shape}")
        if len(self.positions) < 1:
            raise ValueError("a point cloud needs at least one point")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64)
            if self.colors.shape != self.positions.shape:
                raise ValueError("colors must match positions in shape")
            if self.colors.min() < 0.0 or self.colors.max() > 1.0:
                raise ValueError("colors must lie in [0, 1]")

    def __len__(self):
        return len(self.positions)


@dataclass
class SpatialGrid:
    """Hash grid mapping integer cell coordinates to the point indices inside."""

    cell_size: float
    cells: dict[tuple[int, int, int], np.ndarray] = field(repr=False)
    n_points: int

    def cell_of(self, point) -> tuple[int, int, int]:
        c = np.floor(np.asarray(point, dtype=np.float64) / self.cell_size).astype(np.int64)
        return int(c[0]), int(c[1]), int(c[2])


def _as_positions(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.positions
    return np.asarray(cloud, dtype=np.float64)


def build_grid(cloud, cell_size: float) -> SpatialGrid:
    if not cell_size > 0:
        raise ValueError(f"cell_size must be positive, got {cell_size}")
    pos = _as_positions(cloud)
    keys = np.floor(pos / cell_size).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
    cells = {}
    for c, key in enumerate(uniq):
        cells[(int(key[0]), int(key[1]), int(key[2]))] = order[bounds[c]:bounds[c + 1]]
    return SpatialGrid(cell_size=float(cell_size), cells=cells, n_points=len(pos))


def _gather(grid: SpatialGrid, center: np.ndarray, reach: float) -> np.ndarray:
    lo = np.floor((center - reach) / grid.cell_size).astype(np.int64)
    hi = np.floor((center + reach) / grid.cell_size).astype(np.int64)
    chunks = []
    for i in range(lo[0], hi[0] + 1):
        for j in range(lo[1], hi[1] + 1):
            for k in range(lo[2], hi[2] + 1):
                idx = grid.cells.get((i, j, k))
                if idx is not None:
                    chunks.append(idx)
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(chunks)


def radius_query(grid: SpatialGrid, positions, center, radius: float) -> np.ndarray:
    """Sorted indices of points strictly closer than ``radius`` to ``center``."""
    idx, _ = radius_query_with_distances(grid, positions, center, radius)
    return idx


def radius_query_with_distances(grid: SpatialGrid, positions, center, radius: float):
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    positions = np.asarray(positions, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    idx = _gather(grid, center, radius)
    if len(idx) == 0:
        return idx, np.empty(0)
    d = np.linalg.norm(positions[idx] - center, axis=1)
    keep = d < radius
    idx, d = idx[keep], d[keep]
    order = np.argsort(idx)
    return idx[order], d[order]


def voxel_downsample(cloud: PointCloud, voxel_size: float) -> tuple[PointCloud, np.ndarray]:
    """Replace the points of every occupied voxel by their centroid.

    Returns the downsampled cloud and, for every input point, the index of the
    output point it was merged into. Output order follows the lexicographic
    order of the voxel coordinates.
    """
    if not voxel_size > 0:
        raise ValueError(f"voxel_size must be positive, got {voxel_size}")
    keys = np.floor(cloud.positions / voxel_size).astype(np.int64)
    _, mapping = np.unique(keys, axis=0, return_inverse=True)
    mapping = mapping.reshape(-1)
    n_out = int(mapping.max()) + 1
    counts = np.bincount(mapping, minlength=n_out).astype(np.float64)

    def _mean(values):
        out = np.zeros((n_out, values.shape[1]))
        np.add.at(out, mapping, values)
        return out / counts[:, None]

    colors = None if cloud.colors is None else np.clip(_mean(cloud.colors), 0.0, 1.0)
    return PointCloud(_mean(cloud.positions), colors), mapping

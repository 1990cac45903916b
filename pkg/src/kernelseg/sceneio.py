"""On-disk scene format.

A scene directory holds ``cloud.ply`` (ASCII PLY with x, y, z, red, green, blue),
``labels.json`` with the ground truth and optionally ``pred.bin``: a 32-byte header
(magic ``DKSIM001``, little-endian u32 N, D, C and 12 reserved bytes) followed by
float32 blocks F_p, O, S and H in row-major order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .pointcloud import PointCloud
from .scene import InstanceRecord, SimulatedPredictions, SyntheticScene

PRED_MAGIC = b"DKSIM001"
_HEADER = struct.Struct("<8sIII12s")


def write_ply(path, positions, colors=None):
    positions = np.asarray(positions, dtype=np.float64)
    if colors is None:
        rgb = np.full((len(positions), 3), 128, dtype=np.int64)
    else:
        rgb = np.clip(np.rint(np.asarray(colors) * 255.0), 0, 255).astype(np.int64)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(positions)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    for p, c in zip(positions, rgb):
        lines.append(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c[0]} {c[1]} {c[2]}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> PointCloud:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n_vertex = None
    props = []
    body_start = None
    for i, line in enumerate(text[1:], start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format" and parts[1] != "ascii":
            raise ValueError(f"{path}: only ASCII PLY is supported")
        if parts[0] == "element" and parts[1] == "vertex":
            n_vertex = int(parts[2])
        elif parts[0] == "property":
            props.append(parts[-1])
        elif parts[0] == "end_header":
            body_start = i + 1
            break
    if n_vertex is None or body_start is None:
        raise ValueError(f"{path}: malformed PLY header")
    rows = text[body_start:body_start + n_vertex]
    if len(rows) != n_vertex:
        raise ValueError(f"{path}: expected {n_vertex} vertices, found {len(rows)}")
    data = np.array([[float(v) for v in row.split()] for row in rows]).reshape(n_vertex, len(props))
    col = {name: i for i, name in enumerate(props)}
    positions = data[:, [col["x"], col["y"], col["z"]]]
    colors = None
    if all(k in col for k in ("red", "green", "blue")):
        colors = data[:, [col["red"], col["green"], col["blue"]]] / 255.0
    return PointCloud(positions, colors)


def write_predictions(path, pred: SimulatedPredictions):
    n, d = pred.F_p.shape
    c = pred.S.shape[1]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(PRED_MAGIC, n, d, c, bytes(12)))
        for block in (pred.F_p, pred.O, pred.S, pred.H):
            fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())


def read_predictions(path) -> SimulatedPredictions:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, n, d, c, _ = _HEADER.unpack_from(raw)
    if magic != PRED_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * n * (d + 3 + c + 1)
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    sizes = np.cumsum([n * d, n * 3, n * c])
    F_p, O, S, H = np.split(flat, sizes)
    return SimulatedPredictions(F_p.reshape(n, d), O.reshape(n, 3), S.reshape(n, c), H)


def labels_dict(scene: SyntheticScene) -> dict:
    return {
        "n_classes": int(scene.n_classes),
        "background_classes": [int(c) for c in scene.background_classes],
        "instance_ids": scene.instance_ids.tolist(),
        "semantic_labels": scene.semantic_labels.tolist(),
        "instances": [
            {
                "id": int(inst.id),
                "class": int(inst.semantic_class),
                "centroid": [round(float(v), 6) for v in inst.centroid],
                "aabb": [[round(float(v), 6) for v in inst.aabb_min],
                         [round(float(v), 6) for v in inst.aabb_max]],
            }
            for inst in scene.instances
        ],
    }


def save_scene(scene: SyntheticScene, directory, predictions: SimulatedPredictions | None = None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_ply(directory / "cloud.ply", scene.positions, scene.cloud.colors)
    (directory / "labels.json").write_text(json.dumps(labels_dict(scene)))
    if predictions is not None:
        write_predictions(directory / "pred.bin", predictions)


def load_scene(directory) -> tuple[SyntheticScene, SimulatedPredictions | None]:
    directory = Path(directory)
    cloud = read_ply(directory / "cloud.ply")
    labels = json.loads((directory / "labels.json").read_text())
    instances = [
        InstanceRecord(int(r["id"]), int(r["class"]), np.array(r["centroid"], dtype=np.float64),
                       np.array(r["aabb"][0], dtype=np.float64), np.array(r["aabb"][1], dtype=np.float64))
        for r in labels["instances"]
    ]
    n_classes = labels.get("n_classes")
    if n_classes is None:
        n_classes = int(max(labels["semantic_labels"])) + 1
    scene = SyntheticScene(cloud, labels["instance_ids"], labels["semantic_labels"], instances,
                           int(n_classes), tuple(labels.get("background_classes", [0])))
    pred = None
    if (directory / "pred.bin").exists():
        pred = read_predictions(directory / "pred.bin")
        if len(pred.H) != scene.n_points:
            raise ValueError(f"{directory}: pred.bin has {len(pred.H)} points, cloud has {scene.n_points}")
    return scene, pred

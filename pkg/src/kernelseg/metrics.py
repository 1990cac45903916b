"""Instance segmentation metrics: AP over IoU thresholds and coverage/precision/recall."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .matching import iou_matrix

AP_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2))


@dataclass
class PredictedInstance:
    mask: np.ndarray
    label: int
    confidence: float


@dataclass
class GTInstance:
    mask: np.ndarray
    label: int


def _check_scenes(preds, gts):
    if len(preds) != len(gts):
        raise ValueError("predictions and ground truth must cover the same scenes")


def _scene_ious(preds, gts, iou_fn):
    out = []
    for p, g in zip(preds, gts):
        if p and g:
            out.append(iou_fn([x.mask for x in p], [y.mask for y in g]))
        else:
            out.append(np.zeros((len(p), len(g))))
    return out


def average_precision(tp_flags, n_gt) -> float:
    """All-point interpolated area under the PR curve of confidence-ranked TP flags."""
    if n_gt == 0:
        return float("nan")
    tp_flags = np.asarray(tp_flags, dtype=np.float64)
    if len(tp_flags) == 0:
        return 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(1.0 - tp_flags)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    mrec = np.concatenate([[0.0], recall, [recall[-1]]])
    mpre = np.concatenate([[1.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def ap_at_iou(preds, gts, iou_thr: float, iou_fn=iou_matrix, ious=None):
    """Per-class AP at one IoU threshold and its mean over classes with ground truth.

    ``preds`` and ``gts`` hold one list of instances per scene. Predictions are
    ranked by confidence (stable in scene order) and each takes the unmatched
    same-class ground truth of highest IoU, provided it reaches ``iou_thr``.
    """
    if not 0.0 < iou_thr < 1.0:
        raise ValueError("iou_thr must lie in (0, 1)")
    _check_scenes(preds, gts)
    if ious is None:
        ious = _scene_ious(preds, gts, iou_fn)
    classes = sorted({g.label for scene in gts for g in scene})
    per_class = {}
    for c in classes:
        ranked = [(s, i, p.confidence) for s, scene in enumerate(preds)
                  for i, p in enumerate(scene) if p.label == c]
        ranked.sort(key=lambda t: -t[2])
        matched = [np.zeros(len(g), dtype=bool) for g in gts]
        gt_is_c = [np.array([y.label == c for y in g], dtype=bool) for g in gts]
        flags = []
        for s, i, _ in ranked:
            row = ious[s][i] if len(gts[s]) else np.zeros(0)
            cand = gt_is_c[s] & ~matched[s] & (row >= iou_thr)
            if cand.any():
                j = int(np.flatnonzero(cand)[np.argmax(row[cand])])
                matched[s][j] = True
                flags.append(1.0)
            else:
                flags.append(0.0)
        n_gt = int(sum(m.sum() for m in gt_is_c))
        per_class[c] = average_precision(flags, n_gt)
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return per_class, mean


@dataclass
class MetricsReport:
    per_class_ap: dict = field(default_factory=dict)
    mAP: float = 0.0
    AP50: float = 0.0
    AP25: float = 0.0
    mCov: float = 0.0
    mWCov: float = 0.0
    mPrec: float = 0.0
    mRec: float = 0.0

    def summary(self) -> dict:
        return {k: round(float(v), 6) for k, v in asdict(self).items() if k != "per_class_ap"}

    def to_dict(self) -> dict:
        out = self.summary()
        out["per_class_ap"] = {
            str(thr): {str(c): round(float(v), 6) for c, v in table.items()}
            for thr, table in self.per_class_ap.items()
        }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        keys = ["mAP", "AP50", "AP25", "mCov", "mWCov", "mPrec", "mRec"]
        vals = self.summary()
        head = " ".join(f"{k:>8}" for k in keys)
        row = " ".join(f"{vals[k]:>8.3f}" for k in keys)
        return head + "\n" + row


def map_suite(preds, gts, iou_fn=iou_matrix, ious=None) -> MetricsReport:
    _check_scenes(preds, gts)
    if ious is None:
        ious = _scene_ious(preds, gts, iou_fn)
    report = MetricsReport()
    aps = []
    for thr in AP_THRESHOLDS + (0.25,):
        table, mean = ap_at_iou(preds, gts, float(thr), ious=ious)
        report.per_class_ap[float(thr)] = table
        if thr == 0.25:
            report.AP25 = mean
        else:
            aps.append(mean)
            if thr == 0.5:
                report.AP50 = mean
    report.mAP = float(np.mean(aps))
    report.mCov, report.mWCov, report.mPrec, report.mRec = s3dis_metrics(preds, gts, ious=ious)
    return report


def s3dis_metrics(preds, gts, iou_thr: float = 0.5, ious=None):
    """Class-averaged coverage, weighted coverage, precision and recall.

    Coverage of a ground-truth instance is its best IoU with any same-class
    prediction; weighted coverage weights that by instance size. Precision and
    recall count greedy one-to-one matches at IoU >= ``iou_thr``. Averages run over
    classes that have ground truth; precision of a class without predictions is 0.
    """
    _check_scenes(preds, gts)
    if ious is None:
        ious = _scene_ious(preds, gts, iou_matrix)
    classes = sorted({g.label for scene in gts for g in scene})
    cov, wcov, prec, rec = [], [], [], []
    for c in classes:
        best, sizes = [], []
        tp = n_pred = n_gt = 0
        for s, (p, g) in enumerate(zip(preds, gts)):
            pi = [i for i, x in enumerate(p) if x.label == c]
            gi = [j for j, y in enumerate(g) if y.label == c]
            n_pred += len(pi)
            n_gt += len(gi)
            sub = ious[s][np.ix_(pi, gi)] if pi and gi else np.zeros((len(pi), len(gi)))
            for jj, j in enumerate(gi):
                best.append(sub[:, jj].max() if len(pi) else 0.0)
                sizes.append(np.count_nonzero(g[j].mask))
            # greedy matching, highest IoU pairs first
            used_p, used_g = set(), set()
            order = np.dstack(np.unravel_index(np.argsort(-sub, axis=None, kind="stable"), sub.shape))[0] \
                if sub.size else []
            for a, b in order:
                if sub[a, b] < iou_thr:
                    break
                if a in used_p or b in used_g:
                    continue
                used_p.add(a)
                used_g.add(b)
                tp += 1
        best = np.array(best)
        sizes = np.array(sizes, dtype=np.float64)
        cov.append(best.mean())
        wcov.append(float((best * sizes).sum() / sizes.sum()) if sizes.sum() else 0.0)
        prec.append(tp / n_pred if n_pred else 0.0)
        rec.append(tp / n_gt)
    if not classes:
        return 0.0, 0.0, 0.0, 0.0
    return float(np.mean(cov)), float(np.mean(wcov)), float(np.mean(prec)), float(np.mean(rec))


def masks_to_boxes(masks, positions):
    """Axis-aligned ``(min, max)`` corners per mask; ``None`` for empty masks."""
    positions = np.asarray(positions, dtype=np.float64)
    boxes = []
    for m in masks:
        m = np.asarray(m, dtype=bool)
        if not m.any():
            boxes.append(None)
            continue
        pts = positions[m]
        boxes.append((pts.min(axis=0), pts.max(axis=0)))
    return boxes


def box_iou(a, b) -> float:
    if a is None or b is None:
        return 0.0
    lo = np.maximum(a[0], b[0])
    hi = np.minimum(a[1], b[1])
    inter = float(np.prod(np.clip(hi - lo, 0.0, None)))
    va = float(np.prod(a[1] - a[0]))
    vb = float(np.prod(b[1] - b[0]))
    union = va + vb - inter
    return inter / union if union > 0 else 0.0


def box_iou_fn(positions):
    """IoU function over masks that compares their bounding boxes."""

    def fn(pred_masks, gt_masks):
        pb = masks_to_boxes(pred_masks, positions)
        gb = masks_to_boxes(gt_masks, positions)
        return np.array([[box_iou(p, g) for g in gb] for p in pb]).reshape(len(pb), len(gb))

    return fn


def box_map_suite(preds, gts, positions_per_scene) -> MetricsReport:
    """:func:`map_suite` with IoU measured between mask bounding boxes."""
    _check_scenes(preds, gts)
    ious = [_scene_ious([p], [g], box_iou_fn(pos))[0]
            for p, g, pos in zip(preds, gts, positions_per_scene)]
    return map_suite(preds, gts, ious=ious)

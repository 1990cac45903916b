"""End-to-end flow: predictions -> candidates -> instance groups -> kernels -> masks -> labels."""

from __future__ import annotations

import csv
import dataclasses
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import aggregation as agg
from .heatmap import DEFAULT_ALPHA, center_loss, pseudo_gt_heatmap
from .kernels import DecoderShape, PrototypeHead, DirectHead, decode_masks, encode_kernels, kernel_length
from .matching import instance_semantic_vote, mask_loss, match_instances, offset_loss, semantic_loss
from .metrics import GTInstance, MetricsReport, PredictedInstance, map_suite
from .mining import MiningParams, ln_nms, plain_nms, random_candidates
from .pointcloud import build_grid
from .postprocess import (
    OTSU_LEVELS,
    build_superpoints,
    confidence_scores,
    coverage_scores,
    intra_mask,
    otsu_threshold,
    raw_labels,
    refine_labels,
    superpoint_refine,
)
from .scene import NoiseSpec, SimulatedPredictions, SyntheticScene, gt_offsets, simulate_predictions

MINING_MODES = ("ln_nms", "plain_nms", "random")
AGGREGATION_MODES = ("off", "oracle", "analytic")
REPRESENTATIONS = ("aggregate", "center", "full")
HEADS = ("prototype", "direct")


@dataclass
class PipelineConfig:
    mining: str = "ln_nms"
    R: float = 0.3
    T_theta: float = 0.5
    N_theta: int = 200
    random_threshold: float = 0.1
    aggregation: str = "analytic"
    merge_threshold: float = 0.5
    beta0: float = 4.0
    beta1: float = 1.0
    representation: str = "aggregate"
    head: str = "prototype"
    gamma: float = 10.0
    tau: float = 0.5
    rho: float = 0.5
    head_bias: float = -5.0
    channels: tuple[int, ...] = (16, 1)
    coverage: bool = True
    superpoints: bool = True
    superpoint_method: str = "oracle"
    superpoint_impurity: float = 0.0
    superpoint_cell: float = 0.25
    min_fragment: int = 50
    otsu_levels: int = OTSU_LEVELS
    mismatch_penalty: float = 1.0
    feature_dim: int = 32
    class_dim: int = 16
    alpha: float = DEFAULT_ALPHA
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.mining not in MINING_MODES:
            raise ValueError(f"mining must be one of {MINING_MODES}")
        if self.aggregation not in AGGREGATION_MODES:
            raise ValueError(f"aggregation must be one of {AGGREGATION_MODES}")
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"representation must be one of {REPRESENTATIONS}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        if self.superpoint_method not in ("oracle", "grid"):
            raise ValueError("superpoint_method must be 'oracle' or 'grid'")
        MiningParams(self.R, self.T_theta, self.N_theta)
        if self.min_fragment < 0:
            raise ValueError("min_fragment must be >= 0")

    @property
    def mining_params(self) -> MiningParams:
        return MiningParams(self.R, self.T_theta, self.N_theta)

    def make_head(self):
        if self.head == "direct":
            return DirectHead()
        return PrototypeHead(self.gamma, self.tau, self.rho, self.head_bias)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class SegmentationResult:
    """Output for one scene.

    ``M`` holds all decoded soft masks; ``kept`` lists the rows surviving fragment
    removal and ``hard_labels`` index into ``kept`` order (``-1`` is unassigned).
    """

    M: np.ndarray
    hard_labels: np.ndarray
    kept: np.ndarray
    semantic: np.ndarray
    confidences: np.ndarray
    coverage: np.ndarray
    thresholds: np.ndarray
    n_candidates: int
    C_ins: np.ndarray
    losses: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def n_instances(self) -> int:
        return len(self.M)

    def instances(self) -> list[PredictedInstance]:
        out = []
        for k in range(len(self.kept)):
            mask = self.hard_labels == k
            if mask.any():
                out.append(PredictedInstance(mask, int(self.semantic[k]), float(self.confidences[k])))
        return out


def gt_instances(scene: SyntheticScene) -> list[GTInstance]:
    return [GTInstance(scene.instance_ids == inst.id, inst.semantic_class) for inst in scene.instances]


def predictions_for(scene: SyntheticScene, config: PipelineConfig, index: int = 0) -> SimulatedPredictions:
    """Simulated backbone output; scene ``index`` offsets the noise seed."""
    noise = dataclasses.replace(config.noise, seed=config.noise.seed + index)
    return simulate_predictions(scene, noise, config.feature_dim, config.class_dim, config.alpha)


class _Timer:
    def __init__(self):
        self.timings = {}
        self._t = time.perf_counter()

    def lap(self, name):
        now = time.perf_counter()
        self.timings[name] = self.timings.get(name, 0.0) + (now - self._t)
        self._t = now


def _empty_result(scene, n_candidates, timer, flag):
    n = scene.n_points
    return SegmentationResult(
        M=np.zeros((0, n)), hard_labels=np.full(n, -1, dtype=np.int64), kept=np.zeros(0, dtype=np.int64),
        semantic=np.zeros(0, dtype=np.int64), confidences=np.zeros(0), coverage=np.zeros(0),
        thresholds=np.zeros(0), n_candidates=n_candidates, C_ins=np.zeros((0, 3)),
        timings=timer.timings, flags=[flag])


def _full_instance_features(groups, candidates, scene, F_k):
    F = groups.F_ins.copy()
    for g, center in enumerate(groups.centers):
        inst = scene.instance_ids[candidates[center].point_index]
        if inst >= 0:
            F[g] = F_k[scene.instance_ids == inst].mean(axis=0)
    return F


def run_pipeline(scene: SyntheticScene, predictions: SimulatedPredictions, config: PipelineConfig,
                 F_k: np.ndarray | None = None, F_m: np.ndarray | None = None) -> SegmentationResult:
    """Segment one scene.

    ``F_k`` (features pooled around candidates) and ``F_m`` (mask features) default
    to the point features themselves.
    """
    timer = _Timer()
    X = scene.positions
    pred = predictions
    F_k = pred.F_p if F_k is None else F_k
    F_m = pred.F_p if F_m is None else F_m
    B = pred.hard_semantics
    candidates = mine_candidates(scene, pred, config, F_k)
    timer.lap("mining")
    if not candidates:
        return _empty_result(scene, 0, timer, "no-candidates")

    A_hat = agg.score_map_oracle(candidates, scene.instance_ids)
    if config.aggregation == "off":
        groups = agg.singleton_groups(len(candidates))
        A = None
    else:
        if config.aggregation == "oracle":
            A = A_hat
        else:
            A = agg.score_map_analytic(agg.build_aggregation_features(candidates), config.beta0, config.beta1)
        scores = np.array([c.centroid_score for c in candidates])
        groups = agg.greedy_merge(A, scores, config.merge_threshold)
    mode = "center" if config.representation == "center" else "aggregate"
    C_ins, F_ins = agg.fuse_instances(groups, candidates, mode)
    if config.representation == "full":
        F_ins = _full_instance_features(groups, candidates, scene, F_k)
    timer.lap("aggregation")

    shape = DecoderShape.for_features(F_m.shape[1], config.channels)
    kernels = encode_kernels(F_ins, config.make_head(), shape)
    timer.lap("encoding")
    M = decode_masks(F_m, X, C_ins, kernels, shape)
    timer.lap("decoding")

    K = config.otsu_levels
    thresholds = np.array([otsu_threshold(m, K) for m in M])
    n_intra = np.array([np.count_nonzero(intra_mask(m, t, K)) for m, t in zip(M, thresholds)])
    kept = np.flatnonzero(n_intra >= config.min_fragment)
    Mk, Tk = M[kept], thresholds[kept]
    labels = raw_labels(Mk)
    if config.coverage:
        S_c = coverage_scores(Mk, labels, Tk, K)
        labels = refine_labels(Mk, S_c)
    else:
        S_c = np.ones(len(kept))
    if config.superpoints and len(kept):
        partition = build_superpoints(scene, config.superpoint_method, config.superpoint_impurity,
                                      config.superpoint_cell, config.seed)
        labels = superpoint_refine(labels, partition)
    S_ins, _ = instance_semantic_vote(Mk, B, scene.n_classes)
    conf = confidence_scores(Mk, pred.S, S_ins, Tk, K)
    timer.lap("postprocess")

    result = SegmentationResult(M=M, hard_labels=labels, kept=kept, semantic=S_ins, confidences=conf,
                                coverage=S_c, thresholds=thresholds, n_candidates=len(candidates),
                                C_ins=C_ins, timings=timer.timings)
    if len(kept) == 0:
        result.flags.append("all-fragments-removed")
    result.losses = loss_diagnostics(scene, pred, candidates, A, A_hat, M, C_ins, B, config)
    timer.lap("losses")
    return result


def loss_diagnostics(scene, pred, candidates, A, A_hat, M, C_ins, B, config) -> dict:
    inst = scene.instance_ids >= 0
    losses = {
        "center": center_loss(pred.H, pseudo_gt_heatmap(scene, config.alpha), scene.instance_ids),
        "aggre": agg.aggre_loss(A, A_hat) if A is not None else 0.0,
        "sem": semantic_loss(pred.S, scene.semantic_labels),
        "off": offset_loss(pred.O, gt_offsets(scene), inst),
    }
    if len(M) and scene.instances:
        S_ins, _ = instance_semantic_vote(M, B, scene.n_classes)
        assignment = match_instances(M, scene.gt_masks(), C_ins, S_ins, scene.gt_centroids(),
                                     scene.gt_classes(), config.mismatch_penalty)
        losses["mask"], _ = mask_loss(M, scene.gt_masks(), assignment)
    else:
        losses["mask"] = 0.0
    losses["total"] = sum(losses.values())
    return losses


def evaluate(results: list[SegmentationResult], scenes: list[SyntheticScene]) -> MetricsReport:
    return map_suite([r.instances() for r in results], [gt_instances(s) for s in scenes])


@dataclass
class PipelineRun:
    results: list[SegmentationResult]
    report: MetricsReport

    def mean_losses(self) -> dict:
        keys = self.results[0].losses.keys() if self.results else []
        return {k: float(np.mean([r.losses.get(k, 0.0) for r in self.results])) for k in keys}

    def total_timings(self) -> dict:
        out = {}
        for r in self.results:
            for k, v in r.timings.items():
                out[k] = out.get(k, 0.0) + v
        return out


def _run_one(args):
    scene, pred, config, index = args
    if pred is None:
        pred = predictions_for(scene, config, index)
    return run_pipeline(scene, pred, config)


def run_scenes(scenes, config: PipelineConfig, predictions=None, jobs: int = 1) -> PipelineRun:
    """Run every scene; missing predictions are simulated from ``config.noise``.

    ``jobs > 1`` spreads scenes over worker processes; results keep scene order.
    """
    tasks = [(scene, predictions[i] if predictions is not None else None, config, i)
             for i, scene in enumerate(scenes)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    return PipelineRun(results, evaluate(results, scenes))


def mine_candidates(scene, pred, config: PipelineConfig, F_k=None, grid=None):
    X = scene.positions
    F_k = pred.F_p if F_k is None else F_k
    B = pred.hard_semantics
    is_fg = ~np.isin(B, scene.background_classes)
    params = config.mining_params
    if grid is None:
        grid = build_grid(X, params.R)
    if config.mining == "ln_nms":
        return ln_nms(pred.H, X, B, is_fg, F_k, pred.O, params, grid)
    if config.mining == "plain_nms":
        return plain_nms(pred.H, X, B, is_fg, F_k, pred.O, params, grid)
    return random_candidates(pred.H, X, B, is_fg, F_k, pred.O, config.random_threshold,
                             config.N_theta, config.seed, params.R, grid)


BETA0_GRID = tuple(float(b) for b in range(0, 17))
BETA1_GRID = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0)


def calibrate_analytic_scorer(scenes, config: PipelineConfig, beta0_grid=BETA0_GRID, beta1_grid=BETA1_GRID,
                              seed_offset: int = 0):
    """Fit ``(beta0, beta1)`` of the analytic scorer by minimising the aggregation
    BCE against the ground-truth merge map, over a grid.

    This plays the part of training the merging network: use scenes disjoint from
    the evaluation set. Returns ``(beta0, beta1, loss)``.
    """
    pairs = []
    for i, scene in enumerate(scenes):
        pred = predictions_for(scene, config, seed_offset + i)
        cands = mine_candidates(scene, pred, config)
        if len(cands) < 2:
            continue
        F = agg.build_aggregation_features(cands)
        dist = np.abs(F[:, None, :] - F[None, :, :]).sum(axis=2)
        pairs.append((dist, agg.score_map_oracle(cands, scene.instance_ids)))
    if not pairs:
        return config.beta0, config.beta1, float("nan")
    best = None
    for b0 in beta0_grid:
        for b1 in beta1_grid:
            loss = float(np.mean([agg.aggre_loss(expit(b0 - b1 * d), a) for d, a in pairs]))
            if best is None or loss < best[2]:
                best = (float(b0), float(b1), loss)
    return best


ABLATION_FIELDS = ["variant", "mAP", "AP50", "AP25", "mCov", "mWCov", "mPrec", "mRec",
                   "mean_instances", "mean_candidates"]


def run_ablation(configs, scenes, jobs: int = 1, predictions=None) -> list[dict]:
    """One metrics row per named config (dict or list of ``(name, config)``), in order."""
    items = list(configs.items()) if isinstance(configs, dict) else list(configs)
    if not items:
        raise ValueError("need at least one config")
    rows = []
    for name, config in items:
        run = run_scenes(scenes, config, predictions, jobs=jobs)
        row = {"variant": name, **run.report.summary()}
        row["mean_instances"] = round(float(np.mean([len(r.instances()) for r in run.results])), 6)
        row["mean_candidates"] = round(float(np.mean([r.n_candidates for r in run.results])), 6)
        rows.append(row)
    return rows


def ablation_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=ABLATION_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{row[k]:.6f}" if isinstance(row[k], float) else row[k]) for k in ABLATION_FIELDS})
    return buf.getvalue()


__all__ = [
    "PipelineConfig", "SegmentationResult", "PipelineRun", "run_pipeline", "run_scenes", "run_ablation",
    "ablation_csv", "evaluate", "calibrate_analytic_scorer", "mine_candidates", "gt_instances", "predictions_for", "kernel_length",
]

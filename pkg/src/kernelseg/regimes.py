"""Named experiment settings shared by the scripts and the acceptance suite."""

from __future__ import annotations

from .pipeline import PipelineConfig, calibrate_analytic_scorer
from .scene import NoiseSpec, SceneConfig, generate_scene

# many objects, large size spread, tight clearances
CROWDED_SCENE = SceneConfig(
    n_instances=12,
    room_extent=(4.0, 4.0),
    min_separation=0.35,
    min_gap=0.02,
    half_size_range=(0.08, 0.6),
    points_per_instance=(150, 600),
)
CROWDED_NOISE = NoiseSpec(sigma_offset=0.1, sigma_heatmap=0.05, semantic_flip_prob=0.05, sigma_feature=0.1)
CROWDED_PIPELINE = PipelineConfig(noise=CROWDED_NOISE, superpoint_impurity=0.05)

# scenes used to fit the analytic scorer never overlap evaluation seeds
CALIBRATION_SEEDS = tuple(range(1000, 1010))
OFFSET_SWEEP = (0.0, 0.05, 0.15, 0.30)


def calibration_scenes(scene_config: SceneConfig = CROWDED_SCENE, seeds=CALIBRATION_SEEDS):
    return [generate_scene(scene_config, s) for s in seeds]


def calibrated(config: PipelineConfig, train_scenes) -> PipelineConfig:
    """``config`` with the analytic scorer fitted on ``train_scenes``."""
    b0, b1, _ = calibrate_analytic_scorer(train_scenes, config, seed_offset=CALIBRATION_SEEDS[0])
    return config.replace(beta0=b0, beta1=b1)


def mining_ablation(base: PipelineConfig, train_scenes) -> dict[str, PipelineConfig]:
    """Mining variants plus aggregation on/off, each with its own fitted scorer."""
    ln = calibrated(base, train_scenes)
    return {
        "ln_nms": ln,
        "plain_nms": calibrated(base.replace(mining="plain_nms"), train_scenes),
        "random": calibrated(base.replace(mining="random"), train_scenes),
        "aggregation_off": ln.replace(aggregation="off"),
    }

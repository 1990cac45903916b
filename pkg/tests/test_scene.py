import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelseg.scene import (
    NoiseSpec,
    SceneConfig,
    SceneGenerationError,
    generate_scene,
    gt_offsets,
    instance_embeddings,
    simulate_predictions,
)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_generated_scene_invariants(seed):
    cfg = SceneConfig(n_instances=(3, 9))
    scene = generate_scene(cfg, seed)
    assert 3 <= len(scene.instances) <= 9
    cents = scene.gt_centroids()
    d = np.linalg.norm(cents[:, None] - cents[None], axis=2) + np.eye(len(cents)) * 1e9
    assert d.min() >= cfg.min_separation
    for inst in scene.instances:
        members = scene.instance_ids == inst.id
        assert np.allclose(scene.positions[members].mean(axis=0), inst.centroid)
        assert set(np.unique(scene.semantic_labels[members])) == {inst.semantic_class}
        assert inst.semantic_class not in cfg.background_classes
    assert np.all(scene.semantic_labels[scene.instance_ids < 0] == 0)


def test_same_seed_same_scene():
    a, b = generate_scene(SceneConfig(), 11), generate_scene(SceneConfig(), 11)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.instance_ids, b.instance_ids)


def test_impossible_placement_raises():
    cfg = SceneConfig(n_instances=50, room_extent=(1.0, 1.0), max_retries=20)
    with pytest.raises(SceneGenerationError):
        generate_scene(cfg, 0)


def test_bad_instance_range():
    with pytest.raises(ValueError):
        generate_scene(SceneConfig(n_instances=(5, 3)), 0)


def test_gt_offsets_point_to_centroid():
    scene = generate_scene(SceneConfig(n_instances=3), 2)
    shifted = scene.positions + gt_offsets(scene)
    for inst in scene.instances:
        assert np.allclose(shifted[scene.instance_ids == inst.id], inst.centroid)
    assert np.all(gt_offsets(scene)[scene.instance_ids < 0] == 0)


def test_noiseless_predictions_are_exact():
    scene = generate_scene(SceneConfig(n_instances=4), 3)
    pred = simulate_predictions(scene, NoiseSpec())
    assert np.array_equal(pred.hard_semantics, scene.semantic_labels)
    assert np.allclose(pred.O, gt_offsets(scene))
    assert np.all((pred.H >= 0) & (pred.H <= 1))
    assert np.allclose(pred.S.sum(axis=1), 1.0)


def test_flip_probability_is_respected():
    scene = generate_scene(SceneConfig(n_instances=4), 3)
    pred = simulate_predictions(scene, NoiseSpec(semantic_flip_prob=0.3, seed=1))
    rate = np.mean(pred.hard_semantics != scene.semantic_labels)
    assert abs(rate - 0.3) < 0.05


def test_instance_embeddings_orthonormal():
    E = instance_embeddings(np.random.default_rng(0), 10, 16)
    assert np.allclose(E @ E.T, np.eye(10), atol=1e-12)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(sigma_offset=-1)
    with pytest.raises(ValueError):
        NoiseSpec(semantic_flip_prob=1.5)


def test_feature_dims_validated():
    scene = generate_scene(SceneConfig(n_instances=2), 0)
    with pytest.raises(ValueError):
        simulate_predictions(scene, NoiseSpec(), feature_dim=4, class_dim=4)

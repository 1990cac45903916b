import numpy as np
import pytest

from kernelseg.scene import NoiseSpec, SceneConfig, generate_scene, simulate_predictions
from kernelseg.sceneio import load_scene, read_predictions, save_scene, write_predictions


@pytest.fixture
def scene():
    return generate_scene(SceneConfig(n_instances=3, n_background=300), 4)


def test_scene_round_trip(tmp_path, scene):
    pred = simulate_predictions(scene, NoiseSpec(sigma_offset=0.05, seed=2))
    save_scene(scene, tmp_path / "s", pred)
    loaded, lpred = load_scene(tmp_path / "s")
    assert np.allclose(loaded.positions, scene.positions, atol=1e-6)
    assert np.array_equal(loaded.instance_ids, scene.instance_ids)
    assert np.array_equal(loaded.semantic_labels, scene.semantic_labels)
    assert loaded.n_classes == scene.n_classes
    for a, b in ((lpred.F_p, pred.F_p), (lpred.O, pred.O), (lpred.S, pred.S), (lpred.H, pred.H)):
        assert np.allclose(a, b, atol=1e-6)


def test_save_is_byte_deterministic(tmp_path, scene):
    pred = simulate_predictions(scene, NoiseSpec())
    save_scene(scene, tmp_path / "a", pred)
    save_scene(scene, tmp_path / "b", pred)
    for name in ("cloud.ply", "labels.json", "pred.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_predictions_load_as_none(tmp_path, scene):
    save_scene(scene, tmp_path / "s")
    _, pred = load_scene(tmp_path / "s")
    assert pred is None


def test_bad_magic_and_truncation(tmp_path, scene):
    pred = simulate_predictions(scene, NoiseSpec())
    path = tmp_path / "pred.bin"
    write_predictions(path, pred)
    raw = path.read_bytes()
    path.write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError, match="magic"):
        read_predictions(path)
    path.write_bytes(raw[:-4])
    with pytest.raises(ValueError):
        read_predictions(path)


def test_header_layout(tmp_path, scene):
    pred = simulate_predictions(scene, NoiseSpec())
    path = tmp_path / "pred.bin"
    write_predictions(path, pred)
    raw = path.read_bytes()
    assert raw[:8] == b"DKSIM001"
    n, d, c = np.frombuffer(raw[8:20], dtype="<u4")
    assert (n, d, c) == (scene.n_points, pred.F_p.shape[1], pred.S.shape[1])
    assert len(raw) == 32 + 4 * n * (d + 3 + c + 1)

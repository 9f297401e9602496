import json
import subprocess
import sys

import numpy as np
import pytest

from gasplat.cli import main, sample_receivers
from gasplat.datasets import DatasetManifest, MeasurementRecord, load_rssi_dataset, load_spectrum_dataset, save_spectrum_dataset
from gasplat.io import load_checkpoint

ARCH = {"n_channels": 4, "n_scalars": 8, "width": 32, "head_width": 16}

SCENE = {
    "tx_position": [0.0, 0.0, 2.0],
    "reflectors": [{"point": [3.0, 0.0, 2.0], "normal": [-1.0, 0.0, 0.0], "attenuation": 0.5, "extent": [1.0, 1.0]}],
    "array": {"ura": [2, 2]},
    "cloud_spacing": 0.5,
    "rx_sampling": {"n": 8, "x": [-2.0, 1.5], "y": [-2.0, 2.0], "z": 1.0, "min_horizontal": 1.2},
    "split": {"test_size": 0.25, "seed": 42},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "scene.json").write_text(json.dumps(SCENE))
    assert main(["synth", "--spec", str(root / "scene.json"), "--out", str(root / "data")]) == 0
    cfg = {"estimator": {"target": "rssi", "n_steps": 3, "batch_size": 2, "plane_shape": [24, 8], "arch": ARCH, "n_anchors": 8}}
    (root / "rssi.json").write_text(json.dumps(cfg))
    return root


def test_synth_writes_dataset(workspace):
    m = load_spectrum_dataset(workspace / "data")
    assert len(m) == 8 and len(m.split["test"]) == 2 and m.points.shape[1] == 3
    assert len(load_rssi_dataset(workspace / "data" / "rssi.csv")) == 8
    assert (workspace / "data" / "scene.json").exists()


def test_synth_is_seeded(workspace, tmp_path):
    assert main(["synth", "--spec", str(workspace / "scene.json"), "--out", str(tmp_path / "again")]) == 0
    a = load_spectrum_dataset(workspace / "data")
    b = load_spectrum_dataset(tmp_path / "again")
    assert np.array_equal(a.positions(), b.positions()) and np.array_equal(a.spectra(), b.spectra())


def test_train_render_eval_plot(workspace, capsys):
    ck, log = workspace / "model.npz", workspace / "run.jsonl"
    rc = main(["train", "--data", str(workspace / "data"), "--config", str(workspace / "rssi.json"), "--out", str(ck), "--log", str(log)])
    assert rc == 0 and ck.exists() and log.exists()
    assert main(["render", "--checkpoint", str(ck), "--pose", "0.5,-1.5,1.0", "--out", str(workspace / "map")]) == 0
    grid = np.loadtxt(workspace / "map.csv", delimiter=",")
    assert grid.shape == (24, 8) and (workspace / "map.png").exists()
    assert np.array_equal(grid, load_checkpoint(ck).render([[0.5, -1.5, 1.0]])[0])
    assert main(["eval", "--checkpoint", str(ck), "--data", str(workspace / "data"), "--out", str(workspace / "m.json")]) == 0
    report = json.loads((workspace / "m.json").read_text())
    assert report["kind"] == "rssi" and report["n"] == 2
    assert main(["plot", "--metrics", str(workspace / "m.json"), "--log", str(log), "--grid", str(workspace / "map.csv"), "--out", str(workspace / "plots")]) == 0
    assert {p.name for p in (workspace / "plots").iterdir()} == {"rssi_error_cdf.png", "loss.png", "map.png"}


def test_eval_of_perfect_predictions(workspace, tmp_path):
    ck = tmp_path / "spec.npz"
    cfg = {"estimator": {"target": "spectrum", "n_steps": 1, "arch": ARCH, "n_anchors": 8}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["train", "--data", str(workspace / "data"), "--config", str(tmp_path / "c.json"), "--out", str(ck)]) == 0
    est = load_checkpoint(ck)
    X = np.array([[0.5, -1.5, 1.0], [-1.0, 1.5, 1.0]])
    recs = [MeasurementRecord(x, spectrum=g) for x, g in zip(X, est.predict(X))]
    save_spectrum_dataset(tmp_path / "gt", DatasetManifest(recs))
    out = tmp_path / "m.json"
    assert main(["eval", "--checkpoint", str(ck), "--data", str(tmp_path / "gt"), "--split", "all", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["mean_ssim"] == pytest.approx(1.0) and report["mean_mae"] == 0.0


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.npz"), "--data", str(tmp_path), "--out", str(tmp_path / "x.json")]) == 1
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
    with pytest.raises(SystemExit):
        main(["render", "--checkpoint", "x", "--pose", "1,2", "--out", "y"])


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "gasplat.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("synth", "train", "render", "eval", "plot"):
        assert cmd in out.stdout


def test_sample_receivers_respects_exclusion():
    cfg = {"tx": [0, 0, 2], "n": 50, "x": [-2, 2], "y": [-2, 2], "z": 1.0, "min_horizontal": 1.0}
    p = sample_receivers(cfg, 3)
    assert p.shape == (50, 3) and np.all(np.hypot(p[:, 0], p[:, 1]) >= 1.0)
    assert np.array_equal(p, sample_receivers(cfg, 3))
    with pytest.raises(ValueError):
        sample_receivers({**cfg, "min_horizontal": 10.0}, 0)

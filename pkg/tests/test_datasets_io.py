import json
import logging

import numpy as np
import pytest

from gasplat.datasets import (
    DatasetManifest,
    FormatError,
    MeasurementRecord,
    ParseError,
    check_version,
    load_points,
    load_rssi_dataset,
    load_spectrum_dataset,
    save_points,
    save_rssi_dataset,
    save_spectrum_dataset,
)
from gasplat.estimator import GaussianFieldRegressor
from gasplat.io import load_checkpoint, metrics, plot_cdf, plot_heatmap, save_checkpoint, ssim_cdf

HEADER = "x,y,z,band,rssi1,rssi2,rssi3,rssi4,rssi5\n"


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_rssi_record_is_median(tmp_path):
    m = load_rssi_dataset(_write(tmp_path, HEADER + "1,2,0.5,2.4GHz,-40,-42,-41,-39,-60\n"))
    assert len(m) == 1 and m.records[0].rssi == -41.0
    np.testing.assert_array_equal(m.records[0].rx_position, [1, 2, 0.5])


def test_dead_rows_are_excluded(tmp_path):
    text = HEADER + "0,0,0,a,-100,-100,-100,-100,-100\n1,0,0,a,-50,-100,-50,-50,-50\n"
    m = load_rssi_dataset(_write(tmp_path, text))
    assert len(m) == 1 and m.n_excluded == 1 and m.records[0].rssi == -50.0


def test_empty_file_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        m = load_rssi_dataset(_write(tmp_path, "# gasplat-rssi v1\n"))
    assert len(m) == 0 and "no records" in caplog.text


def test_parse_errors_carry_line_numbers(tmp_path):
    text = "# gasplat-rssi v1\n" + HEADER + "0,0,0,a,-1,-2,-3,-4,-5\n0,0,zero,a,-1,-2,-3,-4,-5\n"
    with pytest.raises(ParseError) as err:
        load_rssi_dataset(_write(tmp_path, text))
    assert err.value.line == 4 and ":4:" in str(err.value)
    with pytest.raises(ParseError) as err:
        load_rssi_dataset(_write(tmp_path, HEADER + "0,0,0,a,-1\n"))
    assert err.value.line == 2
    with pytest.raises(FormatError, match="header"):
        load_rssi_dataset(_write(tmp_path, "0,0,0,a,-1,-2,-3,-4,-5\n"))
    with pytest.raises(ParseError):
        load_rssi_dataset(_write(tmp_path, HEADER + "0,0,nan,a,-1,-2,-3,-4,-5\n"))


def test_version_checks(tmp_path):
    assert check_version("x", "1") == 1
    with pytest.raises(FormatError, match="newer"):
        check_version("x", 2)
    with pytest.raises(FormatError):
        load_rssi_dataset(_write(tmp_path, "# gasplat-rssi v7\n" + HEADER))
    root = tmp_path / "spec"
    save_spectrum_dataset(root, DatasetManifest([MeasurementRecord([0, 0, 0], "b", spectrum=np.zeros((360, 90)))]))
    doc = json.loads((root / "manifest.json").read_text())
    doc["version"] = 2
    (root / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError, match="newer"):
        load_spectrum_dataset(root)


def test_wrong_spectrum_shape_names_expected_shape(tmp_path):
    with pytest.raises(FormatError, match="360x90"):
        MeasurementRecord([0, 0, 0], spectrum=np.zeros((360, 89)))


def test_rssi_round_trip(tmp_path):
    recs = [MeasurementRecord([0.1, 0.2, 1 / 3], "2.4GHz", rssi=-47.123456789012345), MeasurementRecord([1, 2, 3], "2.4GHz", rssi=-60.5)]
    save_rssi_dataset(tmp_path / "r.csv", recs, tx_position=[0.0, 1.0, 2.0])
    m = load_rssi_dataset(tmp_path / "r.csv")
    np.testing.assert_array_equal(m.rssi(), [r.rssi for r in recs])
    np.testing.assert_array_equal(m.positions(), [r.rx_position for r in recs])
    np.testing.assert_array_equal(m.tx_position, [0, 1, 2])


def test_spectrum_round_trip_is_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    recs = [MeasurementRecord(rng.normal(size=3), "b", spectrum=rng.uniform(size=(360, 90)), rssi=-3.3) for _ in range(3)]
    pts = rng.normal(size=(7, 3))
    m = DatasetManifest(recs, tx_position=[1.0, 2.0, 3.0], points=pts).with_split(0.34, 5)
    save_spectrum_dataset(tmp_path / "d", m)
    back = load_spectrum_dataset(tmp_path / "d")
    assert np.array_equal(back.spectra(), m.spectra()) and np.array_equal(back.positions(), m.positions())
    assert back.split == m.split and np.array_equal(back.points, pts)


def test_split_is_deterministic_and_disjoint():
    recs = [MeasurementRecord([float(i), 0, 0], rssi=-50.0) for i in range(40)]
    a = DatasetManifest(recs).with_split(0.25, 7)
    b = DatasetManifest(recs).with_split(0.25, 7)
    assert a.split == b.split and len(a.split["test"]) == 10
    assert not set(a.split["train"]) & set(a.split["test"])
    assert DatasetManifest(recs).with_split(0.25, 8).split != a.split
    with pytest.raises(ValueError):
        DatasetManifest(recs, split={"train": [0], "test": [0]})


def test_gateway_vector_records(tmp_path):
    text = "x,y,z,band,gw1,gw2,gw3\n0,0,0,a,-40,-100,-60\n1,0,0,a,-45,-55,-100\n2,0,0,a,-100,-100,-100\n"
    m = load_rssi_dataset(_write(tmp_path, text))
    assert len(m) == 2 and m.n_excluded == 1
    g2 = m.for_gateway(1)
    assert len(g2) == 1 and g2.records[0].rssi == -55.0 and g2.n_excluded == 1


def test_points_round_trip(tmp_path):
    pts = np.random.default_rng(1).normal(size=(5, 3))
    save_points(tmp_path / "p.csv", pts)
    assert np.array_equal(load_points(tmp_path / "p.csv"), pts)


# -- metrics -------------------------------------------------------------------


def test_metrics_identical_inputs():
    g = np.random.default_rng(2).uniform(size=(4, 20, 20))
    rep = metrics(g, g, "spectrum")
    assert rep["mean_ssim"] == pytest.approx(1.0) and rep["mean_mae"] == 0.0
    assert rep["ssim_cdf"]["quantiles"] == [0.25, 0.5, 0.75, 1.0]
    r = metrics([-40.0, -50.0], [-40.0, -50.0], "rssi")
    assert r["median_mae_db"] == 0.0


def test_metrics_constant_offset():
    gt = np.linspace(-70, -40, 9)
    assert metrics(gt + 2.0, gt, "rssi")["median_mae_db"] == pytest.approx(2.0)


def test_metrics_median_reference():
    rng = np.random.default_rng(3)
    p, g = rng.normal(size=10), rng.normal(size=10)
    err = sorted(abs(a - b) for a, b in zip(p, g))
    assert metrics(p, g, "rssi")["median_mae_db"] == pytest.approx((err[4] + err[5]) / 2, abs=1e-15)


def test_metrics_errors():
    with pytest.raises(ValueError):
        metrics([], [], "rssi")
    with pytest.raises(ValueError):
        metrics([1.0], [1.0, 2.0], "rssi")
    with pytest.raises(ValueError):
        metrics([1.0], [1.0], "phase")


def test_ssim_cdf_is_sorted():
    c = ssim_cdf([0.9, 0.1, 0.5])
    assert c["values"] == [0.1, 0.5, 0.9] and c["quantiles"][-1] == 1.0


def test_plots_write_files(tmp_path):
    plot_heatmap(np.random.default_rng(4).uniform(size=(36, 9)), tmp_path / "h.png", "map")
    plot_cdf([0.8, 0.9, 0.95], tmp_path / "c.png")
    assert (tmp_path / "h.png").stat().st_size > 0 and (tmp_path / "c.png").stat().st_size > 0


# -- checkpoints ---------------------------------------------------------------


def test_checkpoint_round_trip_renders_identically(tmp_path):
    rng = np.random.default_rng(5)
    pts = rng.uniform(-2, 2, (15, 3))
    X = rng.uniform(-1, 1, (3, 3))
    y = rng.uniform(-60, -40, 3)
    arch = {"n_channels": 4, "n_scalars": 8, "width": 32, "head_width": 16}
    est = GaussianFieldRegressor(points=pts, tx_position=(0, 0, 1.0), target="rssi", n_steps=3, batch_size=3, plane_shape=(24, 8), arch=arch, n_anchors=8)
    est.fit(X, y)
    save_checkpoint(est, tmp_path / "m.npz")
    back = load_checkpoint(tmp_path / "m.npz")
    assert np.array_equal(back.render(X), est.render(X))
    assert np.array_equal(back.predict(X), est.predict(X))
    (tmp_path / "bad.npz").write_bytes(b"not a checkpoint")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "bad.npz")

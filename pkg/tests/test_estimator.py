import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gasplat.estimator import GaussianFieldRegressor

ARCH = {"n_channels": 4, "n_scalars": 8, "width": 32, "head_width": 16}


def _est(**kw):
    pts = np.random.default_rng(0).uniform(-2, 2, (12, 3))
    base = dict(points=pts, tx_position=(0, 0, 1.0), target="rssi", n_steps=2, batch_size=2, plane_shape=(24, 8), arch=ARCH, n_anchors=6)
    base.update(kw)
    return GaussianFieldRegressor(**base)


def test_params_and_clone():
    est = _est(lr=0.01)
    p = est.get_params()
    assert p["lr"] == 0.01 and p["target"] == "rssi"
    c = clone(est)
    assert c.get_params()["lr"] == 0.01 and c is not est
    est.set_params(lr=0.5)
    assert est.lr == 0.5
    assert est.get_arch()["n_channels"] == 4 and est.get_arch()["n_blocks"] == 2


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        _est().predict(np.zeros((1, 3)))


def test_input_validation():
    est = _est()
    with pytest.raises(ValueError):
        est.fit(np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        est.fit(np.zeros((3, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        est.fit(np.full((2, 3), np.nan), np.zeros(2))
    with pytest.raises(ValueError):
        _est(target="spectrum").fit(np.zeros((2, 3)), np.zeros((2, 360, 89)))
    with pytest.raises(ValueError):
        _est(target="phase").fit(np.zeros((2, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        _est(points=None).fit(np.zeros((2, 3)), np.zeros(2))


def test_fit_predict_score_rssi():
    rng = np.random.default_rng(1)
    X, y = rng.uniform(-1, 1, (4, 3)), rng.uniform(-60, -40, 4)
    est = _est().fit(X, y)
    pred = est.predict(X)
    assert pred.shape == (4,) and np.all(np.isfinite(pred))
    assert est.score(X, y) == pytest.approx(-np.mean(np.abs(pred - y)))
    assert len(est.step_losses_) == 2 and est.n_features_in_ == 3
    assert est.render(X).shape == (4, 24, 8)


def test_spectrum_target_renders_on_spectrum_grid():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, (1, 3))
    y = rng.uniform(size=(1, 360, 90))
    est = _est(target="spectrum", n_steps=0).fit(X, y)
    assert est.predict(X).shape == (1, 360, 90)
    assert -1.0 <= est.score(X, y) <= 1.0


def test_fit_is_deterministic():
    rng = np.random.default_rng(3)
    X, y = rng.uniform(-1, 1, (4, 3)), rng.uniform(-60, -40, 4)
    a, b = _est().fit(X, y), _est().fit(X, y)
    assert a.step_losses_ == b.step_losses_
    assert np.array_equal(a.predict(X), b.predict(X))

"""scikit-learn style front end: fit on receiver poses, predict spectra or RSSI."""

from __future__ import annotations

import math

import numpy as np
import torch
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import check_fitted_model, check_point, check_positions, check_rssi, check_spectra
from .model import DEFAULT_ARCH, GaussianField
from .render import PerceptionPlane, rssi_from_map_torch
from .scene import init_from_point_cloud
from .training import LossConfig, TrainConfig, ssim, train

__all__ = ["GaussianFieldRegressor", "RSSI_PLANE_SHAPE"]

RSSI_PLANE_SHAPE = (90, 30)


class GaussianFieldRegressor(RegressorMixin, BaseEstimator):
    """Gaussian radio field for one transmitter.

    ``X`` holds receiver positions, shape (n, 3).  With
    ``target="spectrum"`` the targets are (n, 360, 90) angle-power grids and
    the map is rendered directly at the spectrum cells; with
    ``target="rssi"`` they are dB values and the map is rendered on a
    uniform ``plane_shape`` grid before attention pooling.

    ``points`` is the initial point cloud.  When ``seed_tx`` is set a
    primitive is also placed at the transmitter so the line-of-sight
    source exists from the start.
    """

    def __init__(
        self,
        points=None,
        tx_position=(0.0, 0.0, 0.0),
        target: str = "spectrum",
        n_steps: int = 400,
        batch_size: int = 1,
        lr: float = 1e-3,
        beta: float = 0.8,
        alpha_reg: float = 1e-4,
        n_anchors: int = 256,
        plane_shape=None,
        tau: float = 0.1,
        uniform_blend: float = 0.05,
        p0: float = 1.0,
        seed_tx: bool = True,
        arch: dict | None = None,
        seed: int = 0,
        run_log=None,
    ):
        self.points = points
        self.tx_position = tx_position
        self.target = target
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.lr = lr
        self.beta = beta
        self.alpha_reg = alpha_reg
        self.n_anchors = n_anchors
        self.plane_shape = plane_shape
        self.tau = tau
        self.uniform_blend = uniform_blend
        self.p0 = p0
        self.seed_tx = seed_tx
        self.arch = arch
        self.seed = seed
        self.run_log = run_log

    def _check_y(self, y, n):
        if self.target == "spectrum":
            return check_spectra(y, n)
        if self.target == "rssi":
            return check_rssi(y, n)
        raise ValueError(f"target must be 'spectrum' or 'rssi', got {self.target!r}")

    def _plane(self, model) -> PerceptionPlane:
        if self.target == "spectrum":
            return PerceptionPlane.spectrum_grid(model.projection)
        return PerceptionPlane.uniform(*(self.plane_shape or RSSI_PLANE_SHAPE))

    def _train_config(self, n: int) -> TrainConfig:
        per_epoch = math.ceil(n / self.batch_size)
        return TrainConfig(
            target=self.target,
            epochs=math.ceil(self.n_steps / per_epoch) if self.n_steps else 0,
            batch_size=self.batch_size,
            max_steps=self.n_steps,
            lr=self.lr,
            seed=self.seed,
            tau=self.tau,
            uniform_blend=self.uniform_blend,
            p0=self.p0,
            loss=LossConfig(beta=self.beta, alpha_reg=self.alpha_reg),
        )

    def initial_model(self) -> GaussianField:
        if self.points is None:
            raise ValueError("an initial point cloud is required (points=...)")
        tx = check_point(self.tx_position, "tx_position")
        pts = check_positions(self.points, "points")
        if self.seed_tx:
            pts = np.vstack([pts, tx])
        scene = init_from_point_cloud(pts, tx, n_anchors=self.n_anchors)
        torch.manual_seed(self.seed)
        return GaussianField(scene, **(self.arch or {}))

    def fit(self, X, y):
        X = check_positions(X)
        y = self._check_y(y, len(X))
        self.model_ = self.initial_model()
        self.n_features_in_ = 3
        result = train(self.model_, list(zip(X, y)), self._train_config(len(X)), self._plane(self.model_), self.run_log)
        self.loss_curve_ = result.epoch_losses
        self.step_losses_ = result.step_losses
        self.fit_seconds_ = result.seconds
        return self

    def render(self, X) -> np.ndarray:
        """Raw rendered maps for each receiver position, shape (n, W, H)."""
        model = check_fitted_model(self)
        X = check_positions(X)
        plane = self._plane(model)
        with torch.no_grad():
            eff = model.effective()
            return np.stack([model.render(x, plane, eff).numpy() for x in X])

    def predict(self, X) -> np.ndarray:
        maps = self.render(X)
        if self.target == "spectrum":
            return maps
        with torch.no_grad():
            return np.array([float(rssi_from_map_torch(torch.as_tensor(m), self.tau, self.uniform_blend, self.p0)) for m in maps])

    def score(self, X, y, sample_weight=None) -> float:
        """Mean SSIM for spectra; negative mean absolute error (dB) for RSSI."""
        X = check_positions(X)
        y = self._check_y(y, len(X))
        pred = self.predict(X)
        w = None if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if self.target == "spectrum":
            return float(np.average([ssim(p, g, float(np.ptp(g))) for p, g in zip(pred, y)], weights=w))
        return -float(np.average(np.abs(pred - y), weights=w))

    def get_arch(self) -> dict:
        return {**DEFAULT_ARCH, **(self.arch or {})}

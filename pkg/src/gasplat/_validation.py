"""Input checks shared by the estimator, loaders and CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .signal import SPECTRUM_SHAPE

__all__ = ["check_positions", "check_spectra", "check_rssi", "check_point", "check_fitted_model"]


def check_positions(X, name: str = "X") -> np.ndarray:
    """Receiver positions as a finite float array of shape (n, 3)."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, input_name=name)
    if X.shape[1] != 3:
        raise ValueError(f"{name} must have 3 columns (x, y, z), got {X.shape[1]}")
    return X


def check_point(p, name: str = "point") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise ValueError(f"{name} must be a finite 3-vector, got {p!r}")
    return p


def check_spectra(y, n: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 2:
        y = y[None]
    if y.ndim != 3 or y.shape[1:] != SPECTRUM_SHAPE:
        raise ValueError(f"spectra must have shape (n, 360, 90), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("spectra must be finite")
    if n is not None and len(y) != n:
        raise ValueError(f"got {len(y)} spectra for {n} positions")
    return y


def check_rssi(y, n: int | None = None) -> np.ndarray:
    y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), dtype=np.float64, input_name="y").ravel()
    if n is not None and len(y) != n:
        raise ValueError(f"got {len(y)} RSSI values for {n} positions")
    return y


def check_fitted_model(est):
    from sklearn.utils.validation import check_is_fitted

    check_is_fitted(est, "model_")
    return est.model_

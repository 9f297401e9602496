"""Gaussian radio-field reconstruction with geometric-algebra tokens."""

from .algebra import Algebra, Multivector, Signature, SingularVersorError, Versor, compose, sandwich
from .estimator import GaussianFieldRegressor
from .model import GaussianField
from .render import MercatorProjection, PerceptionPlane, render, rssi_from_map
from .scene import ResidualUpdate, Scene, apply_residuals, init_from_point_cloud, select_anchors
from .signal import AngularSpectrum, ArrayGeometry, angle_power_spectrum, rssi, steering_vector
from .training import LossConfig, TrainConfig, loss, ssim, train

__version__ = "0.1.0"

__all__ = [
    "Algebra",
    "Multivector",
    "Signature",
    "SingularVersorError",
    "Versor",
    "compose",
    "sandwich",
    "GaussianFieldRegressor",
    "GaussianField",
    "MercatorProjection",
    "PerceptionPlane",
    "render",
    "rssi_from_map",
    "ResidualUpdate",
    "Scene",
    "apply_residuals",
    "init_from_point_cloud",
    "select_anchors",
    "AngularSpectrum",
    "ArrayGeometry",
    "angle_power_spectrum",
    "rssi",
    "steering_vector",
    "LossConfig",
    "TrainConfig",
    "loss",
    "ssim",
    "train",
]

"""Gaussian scene: primitives, anchor selection and residual updates.

A :class:`Scene` stores primitive parameters as stacked arrays.  Scales
are kept in log space so they stay positive under additive updates, and
rotations are unit quaternions ``(w, x, y, z)``.  Signal coefficients are
real spherical-harmonic coefficients with two channels (real and
imaginary part of the complex signal), shape ``(N, (lmax+1)**2, 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "GaussianPrimitive",
    "ResidualUpdate",
    "Scene",
    "init_from_point_cloud",
    "select_anchors",
    "apply_residuals",
    "n_sh_coeffs",
    "sh_basis",
    "quaternion_to_matrix",
]

MIN_INIT_SCALE = 0.01
MAX_INIT_SCALE = 1.0
DEFAULT_OPACITY = 0.1


def n_sh_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


@dataclass(frozen=True)
class GaussianPrimitive:
    position: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float
    sh: np.ndarray


@dataclass(frozen=True)
class ResidualUpdate:
    """Per-primitive additive updates produced by the mapping heads."""

    d_rotation: np.ndarray
    d_scaling: np.ndarray
    d_signal: np.ndarray
    d_attn: np.ndarray

    @classmethod
    def zeros(cls, n: int, n_coeffs: int = 9) -> "ResidualUpdate":
        return cls(np.zeros((n, 4)), np.zeros((n, 3)), np.zeros((n, n_coeffs, 2)), np.zeros(n))

    def __post_init__(self):
        for name in ("d_rotation", "d_scaling", "d_signal", "d_attn"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True, eq=False)
class Scene:
    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray
    tx_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    n_anchors: int = 256
    base: "Scene | None" = None

    def __post_init__(self):
        pos = _frozen(self.positions, (-1, 3), "positions")
        n = len(pos)
        rot = _frozen(self.rotations, (n, 4), "rotations")
        ls = _frozen(self.log_scales, (n, 3), "log_scales")
        op = _frozen(self.opacities, (n,), "opacities")
        sh = np.asarray(self.sh, dtype=float)
        if sh.ndim != 3 or sh.shape[0] != n or sh.shape[2] != 2:
            raise ValueError(f"sh must have shape ({n}, n_coeffs, 2), got {sh.shape}")
        sh = sh.copy()
        sh.setflags(write=False)
        tx = _frozen(self.tx_position, (3,), "tx_position")
        if n < 1:
            raise ValueError("scene needs at least one primitive")
        if np.any(op < 0) or np.any(op > 1):
            raise ValueError("opacities must lie in [0, 1]")
        if not np.allclose(np.linalg.norm(rot, axis=1), 1.0, rtol=0, atol=1e-9):
            raise ValueError("rotations must be unit quaternions")
        for k, v in dict(positions=pos, rotations=rot, log_scales=ls, opacities=op, sh=sh, tx_position=tx).items():
            object.__setattr__(self, k, v)
        if not 1 <= self.n_anchors:
            raise ValueError(f"n_anchors must be positive, got {self.n_anchors}")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt(self.sh.shape[1]))) - 1

    def __getitem__(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(
            self.positions[i], self.rotations[i], self.scales[i], float(self.opacities[i]), self.sh[i]
        )

    def anchors(self) -> np.ndarray:
        return select_anchors(self, min(self.n_anchors, len(self)))

    def replace(self, **changes) -> "Scene":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "rotations": self.rotations.tolist(),
            "log_scales": self.log_scales.tolist(),
            "opacities": self.opacities.tolist(),
            "sh": self.sh.tolist(),
            "tx_position": self.tx_position.tolist(),
            "n_anchors": self.n_anchors,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(**{k: (v if k == "n_anchors" else np.asarray(v, dtype=float)) for k, v in d.items()})


def _frozen(value, shape, name) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != len(shape) or any(s not in (-1, a) for s, a in zip(shape, arr.shape)):
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


def init_from_point_cloud(
    points,
    tx_position=(0.0, 0.0, 0.0),
    *,
    sh_degree: int = 2,
    opacity: float = DEFAULT_OPACITY,
    n_anchors: int = 256,
) -> Scene:
    """One isotropic primitive per point, sized by mean nearest-neighbour distance.

    The scale is the mean distance from each point to its nearest
    neighbour over the cloud, clamped to [1 cm, 1 m]; a single point gets
    the upper bound.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
    if len(pts) == 0:
        raise ValueError("point cloud is empty")
    n = len(pts)
    if n == 1:
        scale = MAX_INIT_SCALE
    else:
        dist, _ = cKDTree(pts).query(pts, k=2)
        scale = float(np.clip(dist[:, 1].mean(), MIN_INIT_SCALE, MAX_INIT_SCALE))
    rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    return Scene(
        positions=pts,
        rotations=rotations,
        log_scales=np.full((n, 3), np.log(scale)),
        opacities=np.full(n, opacity),
        sh=np.zeros((n, n_sh_coeffs(sh_degree), 2)),
        tx_position=np.asarray(tx_position, dtype=float),
        n_anchors=n_anchors,
    )


def select_anchors(scene_or_opacities, m: int) -> np.ndarray:
    """Indices of the ``m`` most opaque primitives, ties broken by lower index."""
    op = scene_or_opacities.opacities if isinstance(scene_or_opacities, Scene) else np.asarray(scene_or_opacities)
    if not 1 <= m <= len(op):
        raise ValueError(f"anchor count must be in 1..{len(op)}, got {m}")
    return np.argsort(-op, kind="stable")[:m]


def apply_residuals(scene: Scene, r: ResidualUpdate) -> Scene:
    """Effective scene after residual updates; the input is kept as ``base``."""
    n = len(scene)
    expected = {
        "d_rotation": (n, 4),
        "d_scaling": (n, 3),
        "d_signal": scene.sh.shape,
        "d_attn": (n,),
    }
    for name, shape in expected.items():
        got = getattr(r, name).shape
        if got != shape:
            raise ValueError(f"{name} has shape {got}, expected {shape}")
    q = scene.rotations + r.d_rotation
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    return replace(
        scene,
        rotations=q,
        log_scales=scene.log_scales + r.d_scaling,
        sh=scene.sh + r.d_signal,
        opacities=np.clip(scene.opacities + r.d_attn, 0.0, 1.0),
        base=scene.base if scene.base is not None else scene,
    )


# Real spherical harmonics up to degree 2 (the usual splatting constants).
_C0 = 0.28209479177387814
_C1 = 0.4886025119029199
_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792, 0.5462742152960396)


def sh_basis(dirs, degree: int = 2):
    """Real SH basis for unit directions ``(..., 3)``; numpy or torch in, same out."""
    if degree not in (0, 1, 2):
        raise ValueError(f"supported SH degrees are 0..2, got {degree}")
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    terms = [x * 0 + _C0]
    if degree >= 1:
        terms += [-_C1 * y, _C1 * z, -_C1 * x]
    if degree >= 2:
        terms += [
            _C2[0] * x * y,
            _C2[1] * y * z,
            _C2[2] * (2 * z * z - x * x - y * y),
            _C2[3] * x * z,
            _C2[4] * (x * x - y * y),
        ]
    if isinstance(dirs, np.ndarray):
        return np.stack(terms, axis=-1)
    import torch

    return torch.stack(terms, dim=-1)


def quaternion_to_matrix(q):
    """Rotation matrices for quaternions ``(..., 4)`` in (w, x, y, z) order."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rows = [
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ]  # fmt: skip
    if isinstance(q, np.ndarray):
        return np.stack(rows, axis=-1).reshape(q.shape[:-1] + (3, 3))
    import torch

    return torch.stack(rows, dim=-1).reshape(q.shape[:-1] + (3, 3))

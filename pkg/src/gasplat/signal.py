"""Narrowband signal math: complex baseband, multipath, RSSI and angle-power spectra.

Angles are in degrees on the public surface.  Directions use azimuth
measured from +x towards +y and elevation above the x-y plane::

    u(az, el) = (cos el cos az, cos el sin az, sin el)

Array element positions are expressed in wavelengths and steering phases
use the ``exp(+j 2 pi <p, u>)`` convention.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ComplexSample",
    "MultipathChannel",
    "ArrayGeometry",
    "AngularSpectrum",
    "N_AZIMUTH",
    "N_ELEVATION",
    "SPECTRUM_SHAPE",
    "unit_direction",
    "direction_angles",
    "superpose",
    "rssi",
    "steering_vector",
    "steering_matrix",
    "angle_power_spectrum",
]

N_AZIMUTH = 360
N_ELEVATION = 90
SPECTRUM_SHAPE = (N_AZIMUTH, N_ELEVATION)
AZIMUTHS = np.arange(N_AZIMUTH, dtype=float)
ELEVATIONS = np.arange(N_ELEVATION, dtype=float)


@dataclass(frozen=True)
class ComplexSample:
    """Baseband sample ``A exp(j theta)`` with phase wrapped into [-pi, pi)."""

    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ValueError(f"amplitude must be non-negative, got {self.amplitude}")
        object.__setattr__(self, "phase", _wrap(self.phase))

    @classmethod
    def from_complex(cls, z: complex) -> "ComplexSample":
        return cls(abs(z), cmath.phase(z))

    def __complex__(self) -> complex:
        return cmath.rect(self.amplitude, self.phase)

    @property
    def value(self) -> complex:
        return complex(self)


def _wrap(phase: float) -> float:
    w = (phase + np.pi) % (2 * np.pi) - np.pi
    return float(w)


@dataclass(frozen=True)
class MultipathChannel:
    """Per-path attenuation and phase shift."""

    attenuations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phases: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.attenuations, dtype=float))
        p = np.atleast_1d(np.asarray(self.phases, dtype=float))
        if a.shape != p.shape or a.ndim != 1:
            raise ValueError(f"attenuations and phases must be equal-length vectors, got {a.shape} and {p.shape}")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("path attenuations must be finite and non-negative")
        object.__setattr__(self, "attenuations", a)
        object.__setattr__(self, "phases", p)

    @classmethod
    def from_paths(cls, paths: Sequence[tuple[float, float]]) -> "MultipathChannel":
        if not paths:
            return cls()
        a, p = zip(*paths)
        return cls(np.array(a), np.array(p))

    def __len__(self) -> int:
        return len(self.attenuations)

    def gain(self) -> complex:
        """Complex channel gain sum(alpha_l exp(j phi_l))."""
        return complex(np.sum(self.attenuations * np.exp(1j * self.phases)))


def superpose(x: ComplexSample | complex, channel: MultipathChannel) -> ComplexSample:
    """Received sample for transmit sample ``x`` through ``channel``."""
    xc = complex(x)
    return ComplexSample.from_complex(xc * channel.gain())


def rssi(y, p0: float = 1.0) -> float:
    """10 log10(|Y|^2 / P0) in dB.

    ``y`` may be a :class:`ComplexSample`, a complex scalar, or an array
    snapshot, in which case the mean per-element power is used.  Zero
    power returns ``-inf``.
    """
    if not p0 > 0:
        raise ValueError(f"reference power must be positive, got {p0}")
    if isinstance(y, ComplexSample):
        power = y.amplitude**2
    else:
        arr = np.asarray(y)
        power = float(np.mean(np.abs(arr) ** 2)) if arr.ndim else abs(complex(arr)) ** 2
    if power == 0:
        return float("-inf")
    return float(10.0 * np.log10(power / p0))


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna element positions in wavelengths, shape (n_elements, 3)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or len(pos) < 1:
            raise ValueError(f"array positions must have shape (n>=1, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("array positions must be finite")
        pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_elements(self) -> int:
        return len(self.positions)

    @classmethod
    def ula(cls, n: int = 4, spacing: float = 0.5, axis: int = 0) -> "ArrayGeometry":
        """Centred uniform linear array along ``axis``."""
        pos = np.zeros((n, 3))
        pos[:, axis] = (np.arange(n) - (n - 1) / 2) * spacing
        return cls(pos)

    @classmethod
    def ura(cls, nx: int = 4, ny: int = 4, spacing: float = 0.5) -> "ArrayGeometry":
        """Centred uniform rectangular array in the horizontal x-y plane."""
        gx, gy = np.meshgrid((np.arange(nx) - (nx - 1) / 2) * spacing, (np.arange(ny) - (ny - 1) / 2) * spacing, indexing="ij")
        return cls(np.column_stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)]))

    def to_dict(self) -> dict:
        return {"positions": self.positions.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ArrayGeometry":
        """Explicit ``positions`` or a ``{"ura": [nx, ny]}`` / ``{"ula": n}`` shorthand (``spacing`` optional)."""
        spacing = float(d.get("spacing", 0.5))
        if "ura" in d:
            nx, ny = d["ura"]
            return cls.ura(int(nx), int(ny), spacing)
        if "ula" in d:
            return cls.ula(int(d["ula"]), spacing)
        return cls(np.asarray(d["positions"], dtype=float))


def unit_direction(azimuth_deg, elevation_deg) -> np.ndarray:
    """Unit vectors for broadcast azimuth/elevation arrays, shape (..., 3)."""
    az = np.deg2rad(np.asarray(azimuth_deg, dtype=float))
    el = np.deg2rad(np.asarray(elevation_deg, dtype=float))
    ce = np.cos(el)
    return np.stack(np.broadcast_arrays(ce * np.cos(az), ce * np.sin(az), np.sin(el)), axis=-1)


def direction_angles(direction) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`unit_direction`; azimuth in [0, 360), elevation in [-90, 90]."""
    d = np.asarray(direction, dtype=float)
    az = np.rad2deg(np.arctan2(d[..., 1], d[..., 0])) % 360.0
    el = np.rad2deg(np.arctan2(d[..., 2], np.hypot(d[..., 0], d[..., 1])))
    return az, el


def _phase(positions: np.ndarray, u: np.ndarray) -> np.ndarray:
    # explicit per-axis sum so batched and per-cell paths share arithmetic
    u = u[..., None, :]
    return 2.0 * np.pi * (positions[:, 0] * u[..., 0] + positions[:, 1] * u[..., 1] + positions[:, 2] * u[..., 2])


def steering_vector(geometry: ArrayGeometry, azimuth: float, elevation: float) -> np.ndarray:
    """Array response toward one direction, shape (n_elements,)."""
    return np.exp(1j * _phase(geometry.positions, unit_direction(azimuth, elevation)))


def steering_matrix(geometry: ArrayGeometry, azimuths=AZIMUTHS, elevations=ELEVATIONS) -> np.ndarray:
    """Responses on an azimuth x elevation grid, shape (n_az, n_el, n_elements)."""
    az, el = np.meshgrid(azimuths, elevations, indexing="ij")
    return np.exp(1j * _phase(geometry.positions, unit_direction(az, el)))


@dataclass(frozen=True, eq=False)
class AngularSpectrum:
    """Relative power on the 360 x 90 one-degree azimuth x elevation grid."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        if g.shape != SPECTRUM_SHAPE:
            raise ValueError(f"angular spectrum must have shape {SPECTRUM_SHAPE}, got {g.shape}")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise ValueError("angular spectrum entries must be finite and non-negative")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    def peak(self) -> tuple[int, int]:
        """(azimuth, elevation) grid index of the maximum."""
        k = int(np.argmax(self.grid))
        return divmod(k, N_ELEVATION)

    def normalized(self) -> "AngularSpectrum":
        top = self.grid.max()
        return self if top == 0 else AngularSpectrum(self.grid / top)


def angle_power_spectrum(geometry: ArrayGeometry, y, steering: np.ndarray | None = None) -> AngularSpectrum:
    """Beam-steered power |a^H y|^2 on every grid cell.

    ``steering`` may carry a precomputed :func:`steering_matrix` when many
    snapshots share one geometry.
    """
    y = np.asarray(y, dtype=complex)
    if y.shape != (geometry.n_elements,):
        raise ValueError(f"snapshot length {y.shape} does not match {geometry.n_elements} array elements")
    a = steering_matrix(geometry) if steering is None else steering
    # real arithmetic, element by element: keeps the result bit-reproducible
    # by any evaluator that accumulates in the same order
    re = np.zeros(a.shape[:-1])
    im = np.zeros(a.shape[:-1])
    for k in range(geometry.n_elements):
        ar, ai = a[..., k].real, a[..., k].imag
        yr, yi = y[k].real, y[k].imag
        re = re + (ar * yr + ai * yi)
        im = im + (ar * yi - ai * yr)
    return AngularSpectrum(re * re + im * im)

"""Image-source ground truth for specular scenes, cross-checked against GA reflections."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .algebra import Algebra, sandwich
from .datasets import MeasurementRecord
from .signal import (
    ArrayGeometry,
    angle_power_spectrum,
    direction_angles,
    rssi,
    steering_matrix,
)

__all__ = ["Reflector", "SyntheticSceneSpec", "Path", "trace_paths", "synth_generate", "reflect_direction", "snapshot"]

ORACLE_TOL = 1e-9


@dataclass(frozen=True)
class Reflector:
    """Infinite specular plane through ``point`` with unit ``normal``.

    ``extent`` (half sizes along two in-plane axes) only controls where the
    point cloud samples are emitted.
    """

    point: tuple
    normal: tuple
    attenuation: float = 0.5
    extent: tuple = (2.0, 1.5)

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.shape != (3,) or not np.isclose(np.linalg.norm(n), 1.0, rtol=0, atol=1e-9):
            raise ValueError(f"reflector normal must be a unit 3-vector, got {self.normal}")
        if not 0 < self.attenuation <= 1:
            raise ValueError(f"reflector attenuation must lie in (0, 1], got {self.attenuation}")

    def signed_distance(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - np.asarray(self.point)) @ np.asarray(self.normal)

    def mirror(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x - 2 * self.signed_distance(x)[..., None] * np.asarray(self.normal)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        n = np.asarray(self.normal, dtype=float)
        helper = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        a = np.cross(helper, n)
        a /= np.linalg.norm(a)
        return a, np.cross(n, a)

    def samples(self, spacing: float) -> np.ndarray:
        a, b = self.axes()
        ea, eb = self.extent
        sa = np.arange(-ea, ea + 1e-9, spacing)
        sb = np.arange(-eb, eb + 1e-9, spacing)
        ga, gb = np.meshgrid(sa, sb, indexing="ij")
        return np.asarray(self.point) + ga.reshape(-1, 1) * a + gb.reshape(-1, 1) * b


@dataclass(frozen=True)
class SyntheticSceneSpec:
    tx_position: tuple
    rx_positions: np.ndarray
    reflectors: tuple = ()
    wavelength: float = 0.125
    array: ArrayGeometry = field(default_factory=lambda: ArrayGeometry.ura(8, 8))
    max_bounces: int = 2
    los: bool = True
    cloud_spacing: float = 0.5
    p0: float = 1.0
    band: str = "2.4GHz"

    def __post_init__(self):
        rx = np.atleast_2d(np.asarray(self.rx_positions, dtype=float))
        if rx.shape[1] != 3 or len(rx) == 0:
            raise ValueError(f"rx_positions must have shape (n, 3), got {rx.shape}")
        object.__setattr__(self, "rx_positions", rx)
        object.__setattr__(self, "reflectors", tuple(self.reflectors))
        if not self.reflectors and not self.los:
            raise ValueError("a scene needs line of sight or at least one reflector")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if self.max_bounces not in (0, 1, 2):
            raise ValueError("max_bounces must be 0, 1 or 2")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSceneSpec":
        d = dict(d)
        d["reflectors"] = tuple(Reflector(**{k: tuple(v) if isinstance(v, list) else v for k, v in r.items()}) for r in d.get("reflectors", ()))
        if "array" in d:
            d["array"] = ArrayGeometry.from_dict(d["array"])
        d["tx_position"] = tuple(d["tx_position"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "tx_position": list(self.tx_position),
            "rx_positions": self.rx_positions.tolist(),
            "reflectors": [
                {"point": list(r.point), "normal": list(r.normal), "attenuation": r.attenuation, "extent": list(r.extent)}
                for r in self.reflectors
            ],
            "wavelength": self.wavelength,
            "array": self.array.to_dict(),
            "max_bounces": self.max_bounces,
            "los": self.los,
            "cloud_spacing": self.cloud_spacing,
            "p0": self.p0,
            "band": self.band,
        }

    @classmethod
    def load(cls, path) -> "SyntheticSceneSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Path:
    length: float
    gain: float
    phase: float
    arrival: np.ndarray  # unit vector from the receiver toward the last interaction point
    bounces: tuple = ()


def reflect_direction(d, normal, algebra: Algebra | None = None) -> np.ndarray:
    """Mirror a direction with the GA reflection sandwich ``-n d n^-1``."""
    algebra = algebra or Algebra.get()
    v = algebra.vector(d)
    out = sandwich(algebra.reflector(normal), v)
    return out.coeffs[1:4].copy()


def _unit(x):
    return x / np.linalg.norm(x)


def trace_paths(spec: SyntheticSceneSpec, rx, algebra: Algebra | None = None) -> list[Path]:
    """All valid specular paths from the transmitter to ``rx`` up to ``max_bounces``.

    Each reflection is validated by comparing the outgoing segment with the
    GA sandwich reflection of the incoming segment.
    """
    algebra = algebra or Algebra.get()
    tx = np.asarray(spec.tx_position, dtype=float)
    rx = np.asarray(rx, dtype=float)
    for r in spec.reflectors:
        if abs(r.signed_distance(rx)) < 1e-9 or abs(r.signed_distance(tx)) < 1e-9:
            raise ValueError("transmitter or receiver lies on a reflector plane")
    paths = []
    if spec.los:
        d = np.linalg.norm(rx - tx)
        if d == 0:
            raise ValueError("receiver coincides with the transmitter")
        paths.append(_make_path(spec, [tx, rx], ()))
    for k in range(1, spec.max_bounces + 1):
        for seq in itertools.product(range(len(spec.reflectors)), repeat=k):
            if any(a == b for a, b in zip(seq, seq[1:])):
                continue
            pts = _bounce_points(spec, tx, rx, seq)
            if pts is None:
                continue
            for i, ridx in enumerate(seq):
                d_in = _unit(pts[i + 1] - pts[i])
                d_out = _unit(pts[i + 2] - pts[i + 1])
                ga = reflect_direction(d_in, spec.reflectors[ridx].normal, algebra)
                if np.max(np.abs(ga - d_out)) > ORACLE_TOL:
                    raise AssertionError(f"image-source direction disagrees with GA reflection by {np.max(np.abs(ga - d_out)):.3g}")
            paths.append(_make_path(spec, pts, seq))
    return paths


def _bounce_points(spec, tx, rx, seq):
    images = [tx]
    for ridx in seq:
        images.append(spec.reflectors[ridx].mirror(images[-1]))
    pts = [rx]
    target = rx
    for i in range(len(seq) - 1, -1, -1):
        r = spec.reflectors[seq[i]]
        src = images[i + 1]
        da, db = r.signed_distance(target), r.signed_distance(src)
        if da * db >= 0:
            return None  # segment does not cross the plane
        t = da / (da - db)
        hit = target + t * (src - target)
        pts.append(hit)
        target = hit
    pts.append(tx)
    pts = pts[::-1]
    # each leg must stay on the reflecting side of its plane
    for i, ridx in enumerate(seq):
        r = spec.reflectors[ridx]
        if r.signed_distance(pts[i]) * r.signed_distance(pts[i + 2]) <= 0:
            return None
    return pts


def _make_path(spec, pts, seq) -> Path:
    length = float(sum(np.linalg.norm(b - a) for a, b in zip(pts, pts[1:])))
    atten = float(np.prod([spec.reflectors[i].attenuation for i in seq])) if seq else 1.0
    return Path(
        length=length,
        gain=atten / length,
        phase=float(np.mod(2 * np.pi * length / spec.wavelength, 2 * np.pi)),
        arrival=_unit(pts[-2] - pts[-1]),
        bounces=tuple(seq),
    )


def snapshot(spec: SyntheticSceneSpec, paths: list[Path]) -> np.ndarray:
    """Array snapshot for a unit transmit sample."""
    y = np.zeros(spec.array.n_elements, dtype=complex)
    for p in paths:
        az, el = direction_angles(p.arrival)
        a = steering_matrix(spec.array, [float(az)], [float(el)])[0, 0]
        y = y + p.gain * np.exp(1j * p.phase) * a
    return y


def synth_generate(spec: SyntheticSceneSpec) -> tuple[np.ndarray, list[MeasurementRecord]]:
    """Point cloud (reflector samples) and one record per receiver pose.

    Records carry the peak-normalized angle-power spectrum and the RSSI of
    the mean per-element received power.
    """
    algebra = Algebra.get()
    a = steering_matrix(spec.array)
    records = []
    for rx in spec.rx_positions:
        paths = trace_paths(spec, rx, algebra)
        y = snapshot(spec, paths)
        spec_grid = angle_power_spectrum(spec.array, y, a).normalized().grid
        records.append(MeasurementRecord(rx.copy(), spec.band, rssi(y, spec.p0), spec_grid))
    if spec.reflectors:
        cloud = np.vstack([r.samples(spec.cloud_spacing) for r in spec.reflectors])
    else:
        cloud = np.asarray(spec.tx_position, dtype=float)[None]
    return cloud, records


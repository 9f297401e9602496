"""Projection of Gaussian primitives onto the receiver perception plane and compositing.

The plane uses Mercator coordinates in degrees: ``u`` is the azimuth
(periodic, period 360) and ``v = k * ln tan(pi/4 + lat/2)``.  The scale
``k`` is chosen so that the configured latitude limit maps to ``v = 60``.
The default limit, ``atan(sinh(pi/3))`` (about 51.3 degrees), gives
``k = 180/pi`` exactly, which is what keeps ``u`` and ``v`` in the same
angular units and the map conformal.

Footprints use a truncated Gaussian with peak 1::

    g(m) = (exp(-m/2) - exp(-9/2)) / (1 - exp(-9/2))   for m < 9, else 0

where ``m`` is the squared Mahalanobis distance.  The kernel reaches zero
exactly at the 3-sigma ellipse, so tile binning never changes the
composited values.

Two compositing paths share the same per-pixel formula: :func:`composite`
walks a :class:`TileIndex` tile by tile in numpy with early termination,
and :func:`render_torch` evaluates gathered per-pixel lists with autograd.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scene import quaternion_to_matrix, sh_basis

__all__ = [
    "DEFAULT_LAT_MAX",
    "PLANE_V_MAX",
    "COV_FLOOR",
    "DegenerateProjectionError",
    "ContractViolation",
    "MercatorProjection",
    "ProjectedGaussians",
    "PerceptionPlane",
    "TileIndex",
    "footprint",
    "mercator_project",
    "project_covariance",
    "project_primitives",
    "tile_and_sort",
    "composite",
    "render",
    "rssi_from_map",
    "render_torch",
    "project_torch",
    "rssi_from_map_torch",
]

PLANE_V_MAX = 60.0
DEFAULT_LAT_MAX = math.degrees(math.atan(math.sinh(math.pi / 3)))
COV_FLOOR = 1e-6
SIGMA_CUTOFF = 3.0
_TAIL = math.exp(-0.5 * SIGMA_CUTOFF**2)
DEFAULT_TAIL_TOL = 1e-10


class DegenerateProjectionError(ValueError):
    """Raised when a primitive sits on the receiver."""


class ContractViolation(RuntimeError):
    """Raised when compositing input breaks the depth-order contract."""


def footprint(m):
    """Truncated peak-1 Gaussian of the squared Mahalanobis distance."""
    if isinstance(m, np.ndarray) or np.isscalar(m):
        m = np.asarray(m, dtype=float)
        return np.where(m < SIGMA_CUTOFF**2, (np.exp(-0.5 * np.minimum(m, 9.0)) - _TAIL) / (1 - _TAIL), 0.0)
    import torch

    inside = m < SIGMA_CUTOFF**2
    safe = torch.where(inside, m, torch.zeros_like(m))
    return torch.where(inside, (torch.exp(-0.5 * safe) - _TAIL) / (1 - _TAIL), torch.zeros_like(m))


def wrap_degrees(x):
    """Wrap angle differences into [-180, 180)."""
    if isinstance(x, np.ndarray) or np.isscalar(x):
        return (np.asarray(x) + 180.0) % 360.0 - 180.0
    import torch

    return torch.remainder(x + 180.0, 360.0) - 180.0


@dataclass(frozen=True)
class MercatorProjection:
    lat_max: float = DEFAULT_LAT_MAX

    def __post_init__(self):
        if not 0 < self.lat_max < 90:
            raise ValueError(f"latitude limit must be in (0, 90) degrees, got {self.lat_max}")

    @property
    def alpha(self) -> float:
        """Scale so that ``v(lat_max) == 60``."""
        return PLANE_V_MAX / math.asinh(math.tan(math.radians(self.lat_max)))

    def v_of_latitude(self, lat_deg):
        # asinh(tan(lat)) == log(tan(pi/4 + lat/2)), exact at the equator
        lat = np.deg2rad(np.asarray(lat_deg, dtype=float))
        return self.alpha * np.arcsinh(np.tan(lat))

    def project(self, direction) -> tuple[float, float] | None:
        """(u, v) for one direction, or ``None`` when outside the latitude range."""
        u, v, ok = self.project_many(np.asarray(direction, dtype=float)[None])
        return (float(u[0]), float(v[0])) if ok[0] else None

    def project_many(self, directions: np.ndarray):
        d = np.asarray(directions, dtype=float)
        r_h = np.hypot(d[..., 0], d[..., 1])
        if np.any((r_h == 0) & (d[..., 2] == 0)):
            raise ValueError("cannot project a zero direction")
        lon = np.degrees(np.arctan2(d[..., 1], d[..., 0]))
        lat = np.degrees(np.arctan2(d[..., 2], r_h))
        ok = np.abs(lat) <= self.lat_max
        u = wrap_degrees(lon)
        lat_c = np.clip(lat, -89.999999, 89.999999)
        v = self.v_of_latitude(lat_c)
        return u, v, ok

    def jacobian(self, d: np.ndarray) -> np.ndarray:
        """d(u, v)/d(point) in degrees per metre at offsets ``d`` (..., 3) from the receiver."""
        d = np.asarray(d, dtype=float)
        x, y, z = d[..., 0], d[..., 1], d[..., 2]
        rh2 = x * x + y * y
        rh = np.sqrt(rh2)
        r2 = rh2 + z * z
        deg = 180.0 / np.pi
        du = np.stack([-y / rh2, x / rh2, np.zeros_like(x)], axis=-1) * deg
        dphi = np.stack([-x * z / (r2 * rh), -y * z / (r2 * rh), rh / r2], axis=-1)
        sec = np.sqrt(r2) / rh
        dv = dphi * (self.alpha * sec)[..., None]
        return np.stack([du, dv], axis=-2)


def mercator_project(direction, projection: MercatorProjection | None = None):
    """(u, v) in degrees for a direction from the receiver, or ``None`` if out of view."""
    return (projection or MercatorProjection()).project(direction)


def _rx_frame(rx_rotation) -> np.ndarray:
    if rx_rotation is None:
        return np.eye(3)
    q = np.asarray(rx_rotation, dtype=float)
    return quaternion_to_matrix(q / np.linalg.norm(q))


def project_covariance(position, rotation, scale, rx_position, rx_rotation=None, projection=None) -> np.ndarray:
    """2x2 plane covariance (deg^2) of one primitive seen from the receiver."""
    projection = projection or MercatorProjection()
    frame = _rx_frame(rx_rotation)
    d = frame.T @ (np.asarray(position, dtype=float) - np.asarray(rx_position, dtype=float))
    if np.hypot(d[0], d[1]) < 1e-12:
        raise DegenerateProjectionError("primitive lies on the receiver or on its vertical axis")
    q = np.asarray(rotation, dtype=float)
    rot = frame.T @ quaternion_to_matrix(q / np.linalg.norm(q))
    m = rot * np.asarray(scale, dtype=float)[None, :]
    cov3 = m @ m.T
    jac = projection.jacobian(d)
    return _floor_cov(jac @ cov3 @ jac.T)


def _floor_cov(c: np.ndarray) -> np.ndarray:
    c = 0.5 * (c + np.swapaxes(c, -1, -2))
    w, v = np.linalg.eigh(c)
    w = np.maximum(w, COV_FLOOR)
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)


@dataclass(frozen=True, eq=False)
class ProjectedGaussians:
    """Render state for the in-view primitives, one row each."""

    centers: np.ndarray
    covs: np.ndarray
    depths: np.ndarray
    opacities: np.ndarray
    signals: np.ndarray
    deltas: np.ndarray
    index: np.ndarray = None

    def __post_init__(self):
        n = len(self.depths)
        if self.index is None:
            object.__setattr__(self, "index", np.arange(n))
        if np.any(self.depths <= 0):
            raise ValueError("projected depths must be positive")
        if np.any(self.opacities < 0) or np.any(self.opacities > 1):
            raise ValueError("opacities must lie in [0, 1]")
        if np.any(self.deltas <= 0) or np.any(self.deltas > 1):
            raise ValueError("attenuations must lie in (0, 1]")
        if np.any(self.signals < 0):
            raise ValueError("signals must be non-negative")

    def __len__(self):
        return len(self.depths)

    def inverse_covs(self) -> np.ndarray:
        return np.linalg.inv(self.covs)

    def half_extents(self) -> np.ndarray:
        """Axis-aligned half widths of the 3-sigma ellipses, shape (N, 2)."""
        return SIGMA_CUTOFF * np.sqrt(np.stack([self.covs[:, 0, 0], self.covs[:, 1, 1]], axis=1))


@dataclass(frozen=True, eq=False)
class PerceptionPlane:
    """Pixel centres on the (u, v) plane; images are indexed ``[iu, iv]``.

    ``u`` is periodic with period 360; ``v_coords`` must increase.
    """

    u_coords: np.ndarray
    v_coords: np.ndarray
    image: np.ndarray | None = None

    def __post_init__(self):
        u = np.asarray(self.u_coords, dtype=float)
        v = np.asarray(self.v_coords, dtype=float)
        if u.ndim != 1 or v.ndim != 1 or len(u) == 0 or len(v) == 0:
            raise ValueError("plane needs non-empty 1-D pixel coordinates")
        if np.any(np.diff(v) <= 0) or np.any(np.diff(u) <= 0) or u[-1] - u[0] >= 360:
            raise ValueError("pixel coordinates must increase and u must span less than one period")
        object.__setattr__(self, "u_coords", u)
        object.__setattr__(self, "v_coords", v)
        if self.image is not None:
            img = np.asarray(self.image, dtype=float)
            if img.shape != self.shape:
                raise ValueError(f"image shape {img.shape} does not match plane {self.shape}")
            object.__setattr__(self, "image", img)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.u_coords), len(self.v_coords))

    @classmethod
    def uniform(cls, width: int = 360, height: int = 120) -> "PerceptionPlane":
        """Regular grid over u in [-180, 180), v in [-60, 60]."""
        if width < 1 or height < 1:
            raise ValueError("plane dimensions must be positive")
        du = 360.0 / width
        dv = 2 * PLANE_V_MAX / height
        return cls(-180.0 + du * (np.arange(width) + 0.5), -PLANE_V_MAX + dv * (np.arange(height) + 0.5))

    @classmethod
    def spectrum_grid(cls, projection: MercatorProjection | None = None, n_az: int = 360, n_el: int = 90) -> "PerceptionPlane":
        """Pixels at the one-degree azimuth x elevation spectrum cells mapped through Mercator."""
        projection = projection or MercatorProjection()
        return cls(np.arange(n_az, dtype=float), projection.v_of_latitude(np.arange(n_el, dtype=float)))

    def with_image(self, image) -> "PerceptionPlane":
        return PerceptionPlane(self.u_coords, self.v_coords, image)

    def pixel_ranges(self, center, half) -> tuple[list[np.ndarray], np.ndarray]:
        """Pixel indices whose centres lie in the box ``center +/- half``.

        Returns the u index arrays (one per periodic image hit) and the v
        index array.
        """
        uc, vc = center
        hu, hv = half
        v_lo = np.searchsorted(self.v_coords, vc - hv, side="left")
        v_hi = np.searchsorted(self.v_coords, vc + hv, side="right")
        iv = np.arange(v_lo, v_hi)
        if hu >= 180:
            return [np.arange(len(self.u_coords))], iv
        ius = []
        for shift in (-360.0, 0.0, 360.0):
            lo = np.searchsorted(self.u_coords, uc - hu + shift, side="left")
            hi = np.searchsorted(self.u_coords, uc + hu + shift, side="right")
            if hi > lo:
                ius.append(np.arange(lo, hi))
        return ius, iv


def project_primitives(
    positions,
    rotations,
    scales,
    opacities,
    sh,
    deltas,
    rx_position,
    rx_rotation=None,
    projection: MercatorProjection | None = None,
) -> ProjectedGaussians:
    """Project effective primitive parameters for one receiver pose (numpy path)."""
    projection = projection or MercatorProjection()
    frame = _rx_frame(rx_rotation)
    pos = np.asarray(positions, dtype=float)
    rel = (pos - np.asarray(rx_position, dtype=float)) @ frame
    dist = np.linalg.norm(rel, axis=1)
    if np.any(np.hypot(rel[:, 0], rel[:, 1]) < 1e-12):
        raise DegenerateProjectionError("a primitive lies on the receiver or on its vertical axis")
    u, v, ok = projection.project_many(rel)
    idx = np.flatnonzero(ok)
    rel, dist = rel[idx], dist[idx]
    rot = frame.T @ quaternion_to_matrix(np.asarray(rotations, dtype=float)[idx])
    m = rot * np.asarray(scales, dtype=float)[idx][:, None, :]
    cov3 = m @ np.swapaxes(m, 1, 2)
    jac = projection.jacobian(rel)
    covs = _floor_cov(jac @ cov3 @ np.swapaxes(jac, 1, 2))
    view = -(rel @ frame.T) / dist[:, None]  # world-frame direction from primitive to receiver
    basis = sh_basis(view, int(round(np.sqrt(np.asarray(sh).shape[1]))) - 1)
    field_ = np.einsum("nk,nkc->nc", basis, np.asarray(sh, dtype=float)[idx])
    signals = np.sqrt(field_[:, 0] ** 2 + field_[:, 1] ** 2)
    return ProjectedGaussians(
        centers=np.column_stack([u[idx], v[idx]]),
        covs=covs,
        depths=dist,
        opacities=np.asarray(opacities, dtype=float)[idx],
        signals=signals,
        deltas=np.asarray(deltas, dtype=float)[idx],
        index=idx,
    )


@dataclass(frozen=True, eq=False)
class TileIndex:
    tile_px: int
    n_tiles: tuple[int, int]
    lists: dict = field(default_factory=dict)  # (tu, tv) -> array of row indices into ProjectedGaussians

    def __getitem__(self, tile) -> np.ndarray:
        return self.lists.get(tuple(tile), np.zeros(0, dtype=int))

    def replicas(self, row: int) -> int:
        return sum(int(np.any(ids == row)) for ids in self.lists.values())


def _pixel_box_hits(projected: ProjectedGaussians, plane: PerceptionPlane, row: int):
    ius, iv = plane.pixel_ranges(projected.centers[row], projected.half_extents()[row])
    return [iu for iu in ius], iv


def tile_and_sort(projected: ProjectedGaussians, plane: PerceptionPlane, tile_px: int = 16) -> TileIndex:
    """Bin primitives into square pixel tiles and depth-sort each tile.

    A primitive joins every tile holding at least one pixel centre inside
    the bounding box of its 3-sigma ellipse.  Ties in depth fall back to
    the primitive index.
    """
    if tile_px < 1:
        raise ValueError("tile size must be positive")
    w, h = plane.shape
    n_tiles = (-(-w // tile_px), -(-h // tile_px))
    members: dict = {}
    for row in range(len(projected)):
        ius, iv = _pixel_box_hits(projected, plane, row)
        if len(iv) == 0:
            continue
        tvs = np.unique(iv // tile_px)
        for iu in ius:
            for tu in np.unique(iu // tile_px):
                for tv in tvs:
                    members.setdefault((int(tu), int(tv)), []).append(row)
    lists = {}
    for key, rows in members.items():
        rows = np.unique(rows)
        order = np.lexsort((projected.index[rows], projected.depths[rows]))
        lists[key] = rows[order]
    return TileIndex(tile_px, n_tiles, lists)


def composite(
    tiles: TileIndex,
    projected: ProjectedGaussians,
    plane: PerceptionPlane,
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> PerceptionPlane:
    """Front-to-back accumulation of virtual transmitter contributions.

    Per pixel, primitives in depth order contribute
    ``s_i * A_i * alpha_i g_i * T_i`` where ``T_i`` is the product of
    ``1 - alpha_j g_j`` and ``A_i`` the product of ``1 - (1 - delta_j) g_j``
    over the predecessors.  A pixel stops once ``T * A`` times the summed
    ``s_j * alpha_j`` of the primitives still to come, an upper bound on
    everything they could add, drops below ``tail_tol``.
    """
    w, h = plane.shape
    image = np.zeros((w, h))
    inv = projected.inverse_covs() if len(projected) else np.zeros((0, 2, 2))
    for (tu, tv), rows in tiles.lists.items():
        if np.any(np.diff(projected.depths[rows]) < 0):
            raise ContractViolation(f"tile {(tu, tv)} is not sorted by depth")
        iu = np.arange(tu * tiles.tile_px, min((tu + 1) * tiles.tile_px, w))
        iv = np.arange(tv * tiles.tile_px, min((tv + 1) * tiles.tile_px, h))
        pu, pv = np.meshgrid(plane.u_coords[iu], plane.v_coords[iv], indexing="ij")
        acc = np.zeros(pu.shape)
        trans = np.ones(pu.shape)
        atten = np.ones(pu.shape)
        live = np.ones(pu.shape, dtype=bool)
        weight = projected.signals[rows] * projected.opacities[rows]
        tail = np.concatenate([np.cumsum(weight[::-1])[::-1][1:], [0.0]])
        for k, row in enumerate(rows):
            du = wrap_degrees(pu - projected.centers[row, 0])
            dv = pv - projected.centers[row, 1]
            a, b, c = inv[row, 0, 0], inv[row, 0, 1], inv[row, 1, 1]
            g = footprint(a * du * du + 2 * b * du * dv + c * dv * dv)
            g = np.where(live, g, 0.0)
            ag = projected.opacities[row] * g
            acc = acc + projected.signals[row] * atten * ag * trans
            trans = trans * (1 - ag)
            atten = atten * (1 - (1 - projected.deltas[row]) * g)
            live &= trans * atten * tail[k] >= tail_tol
            if not live.any():
                break
        image[np.ix_(iu, iv)] = acc
    return plane.with_image(image)


def render(projected: ProjectedGaussians, plane: PerceptionPlane, tile_px: int = 16, **kw) -> PerceptionPlane:
    return composite(tile_and_sort(projected, plane, tile_px), projected, plane, **kw)


def rssi_from_map(image, tau: float = 0.1, eps: float = 0.05, p0: float = 1.0) -> float:
    """Attention-weighted map average in dB against ``p0``."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if not 0 <= eps <= 1:
        raise ValueError(f"uniform blend must lie in [0, 1], got {eps}")
    r = np.asarray(image.image if isinstance(image, PerceptionPlane) else image, dtype=float).ravel()
    z = (r - r.mean()) / tau
    z = z - z.max()
    w = np.exp(z)
    w = w / w.sum()
    w = (1 - eps) * w + eps / r.size
    power = float(np.sum(w * r))
    if power <= 0:
        return float("-inf")
    return float(10 * np.log10(power / p0))


# -- differentiable path ---------------------------------------------------


def project_torch(positions, rotations, log_scales, opacities, sh, deltas, rx_position, rx_rotation=None, projection=None):
    """Torch counterpart of :func:`project_primitives`.

    Returns a dict of tensors for the in-view primitives plus the index
    array of those primitives.
    """
    import torch

    projection = projection or MercatorProjection()
    frame = torch.as_tensor(_rx_frame(rx_rotation), dtype=positions.dtype)
    rel = (positions - torch.as_tensor(np.array(rx_position, dtype=float), dtype=positions.dtype)) @ frame
    with torch.no_grad():
        rel_np = rel.detach().cpu().numpy()
        if np.any(np.hypot(rel_np[:, 0], rel_np[:, 1]) < 1e-12):
            raise DegenerateProjectionError("a primitive lies on the receiver or on its vertical axis")
        _, _, ok = projection.project_many(rel_np)
    idx = np.flatnonzero(ok)
    ti = torch.as_tensor(idx, dtype=torch.long)
    rel = rel[ti]
    x, y, z = rel[:, 0], rel[:, 1], rel[:, 2]
    rh2 = x * x + y * y
    rh = torch.sqrt(rh2)
    r2 = rh2 + z * z
    dist = torch.sqrt(r2)
    deg = 180.0 / math.pi
    lon = torch.atan2(y, x) * deg
    u = wrap_degrees(lon)
    v = projection.alpha * torch.asinh(z / rh)
    zero = torch.zeros_like(x)
    du = torch.stack([-y / rh2, x / rh2, zero], dim=-1) * deg
    dphi = torch.stack([-x * z / (r2 * rh), -y * z / (r2 * rh), rh / r2], dim=-1)
    dv = dphi * (projection.alpha * dist / rh)[:, None]
    jac = torch.stack([du, dv], dim=-2)
    q = rotations[ti]
    rot = frame.T @ quaternion_to_matrix(q / q.norm(dim=-1, keepdim=True))
    m = rot * torch.exp(log_scales[ti])[:, None, :]
    cov3 = m @ m.transpose(1, 2)
    cov = jac @ cov3 @ jac.transpose(1, 2)
    cov = _floor_cov_torch(0.5 * (cov + cov.transpose(1, 2)))
    view = -(rel @ frame.T) / dist[:, None]
    degree = int(round(math.sqrt(sh.shape[1]))) - 1
    field_ = torch.einsum("nk,nkc->nc", sh_basis(view, degree), sh[ti])
    signals = torch.sqrt(field_[:, 0] ** 2 + field_[:, 1] ** 2 + 1e-12)
    return {
        "centers": torch.stack([u, v], dim=-1),
        "covs": cov,
        "depths": dist,
        "opacities": opacities[ti],
        "signals": signals,
        "deltas": deltas[ti],
        "index": idx,
    }


def _floor_cov_torch(c):
    import torch

    a, b, d = c[:, 0, 0], c[:, 0, 1], c[:, 1, 1]
    mid = 0.5 * (a + d)
    disc = (0.5 * (a - d)) ** 2 + b * b
    pos = disc > 0
    r = torch.where(pos, torch.sqrt(torch.where(pos, disc, torch.ones_like(disc))), torch.zeros_like(disc))
    lo, hi = mid - r, mid + r
    need = lo < COV_FLOOR
    if not bool(need.any()):
        return c
    l1, l2 = torch.clamp(hi, min=COV_FLOOR), torch.clamp(lo, min=COV_FLOOR)
    eye = torch.eye(2, dtype=c.dtype).expand_as(c)
    r_safe = torch.where(pos, r, torch.ones_like(r))
    proj = (c - lo[:, None, None] * eye) / (2 * r_safe)[:, None, None]
    floored = l2[:, None, None] * eye + ((l1 - l2) * pos)[:, None, None] * proj
    return torch.where(need[:, None, None], floored, c)


def pixel_pairs(centers: np.ndarray, covs: np.ndarray, depths: np.ndarray, index: np.ndarray, plane: PerceptionPlane):
    """Depth-ordered per-pixel primitive lists as a padded (P, K) matrix.

    Returns ``(pixels, slots)`` where ``pixels`` holds flat pixel ids with
    at least one candidate and ``slots[p, k]`` the k-th nearest primitive
    row for that pixel (-1 padding).
    """
    w, h = plane.shape
    half = SIGMA_CUTOFF * np.sqrt(np.stack([covs[:, 0, 0], covs[:, 1, 1]], axis=1))
    rows, pix = [], []
    for row in range(len(depths)):
        ius, iv = plane.pixel_ranges(centers[row], half[row])
        for iu in ius:
            flat = (iu[:, None] * h + iv[None, :]).ravel()
            pix.append(flat)
            rows.append(np.full(flat.size, row))
    if not pix:
        return np.zeros(0, dtype=int), np.zeros((0, 0), dtype=int)
    rows = np.concatenate(rows)
    pix = np.concatenate(pix)
    order = np.lexsort((index[rows], depths[rows], pix))
    rows, pix = rows[order], pix[order]
    pixels, start, counts = np.unique(pix, return_index=True, return_counts=True)
    slots = np.full((len(pixels), counts.max()), -1, dtype=int)
    pos = np.arange(len(pix)) - np.repeat(start, counts)
    slots[np.repeat(np.arange(len(pixels)), counts), pos] = rows
    return pixels, slots


def render_torch(proj: dict, plane: PerceptionPlane):
    """Differentiable compositing of :func:`project_torch` output; returns a (W, H) tensor."""
    import torch

    centers, covs = proj["centers"], proj["covs"]
    dtype = centers.dtype
    w, h = plane.shape
    image = torch.zeros(w * h, dtype=dtype)
    if centers.shape[0] == 0:
        return image.reshape(w, h)
    pixels, slots = pixel_pairs(
        centers.detach().numpy(), covs.detach().numpy(), proj["depths"].detach().numpy(), proj["index"], plane
    )
    if len(pixels) == 0:
        return image.reshape(w, h)
    valid = torch.as_tensor(slots >= 0)
    rows = torch.as_tensor(np.where(slots >= 0, slots, 0))
    pu = torch.as_tensor(plane.u_coords[pixels // h], dtype=dtype)[:, None]
    pv = torch.as_tensor(plane.v_coords[pixels % h], dtype=dtype)[:, None]
    det = covs[:, 0, 0] * covs[:, 1, 1] - covs[:, 0, 1] ** 2
    ia, ib, ic = covs[:, 1, 1] / det, -covs[:, 0, 1] / det, covs[:, 0, 0] / det
    du = wrap_degrees(pu - centers[rows, 0])
    dv = pv - centers[rows, 1]
    m = ia[rows] * du * du + 2 * ib[rows] * du * dv + ic[rows] * dv * dv
    g = torch.where(valid, footprint(m), torch.zeros_like(m))
    ag = proj["opacities"][rows] * g
    ones = torch.ones_like(ag[:, :1])
    trans = torch.cumprod(torch.cat([ones, 1 - ag[:, :-1]], dim=1), dim=1)
    atten = torch.cumprod(torch.cat([ones, 1 - (1 - proj["deltas"][rows[:, :-1]]) * g[:, :-1]], dim=1), dim=1)
    acc = (proj["signals"][rows] * atten * ag * trans).sum(dim=1)
    image = image.index_put((torch.as_tensor(pixels),), acc)
    return image.reshape(w, h)


def rssi_from_map_torch(image, tau: float = 0.1, eps: float = 0.05, p0: float = 1.0):
    import torch

    r = image.reshape(-1)
    z = (r - r.mean()) / tau
    z = z - z.max().detach()
    wts = torch.softmax(z, dim=0)
    wts = (1 - eps) * wts + eps / r.numel()
    return 10 * torch.log10((wts * r).sum() / p0)

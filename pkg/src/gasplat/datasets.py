"""Measurement records, manifests and the on-disk dataset formats.

RSSI CSV (one header row, optional leading ``#`` comment lines)::

    # gasplat-rssi v1
    # tx: 0,0,2
    x,y,z,band,rssi1,rssi2,rssi3,rssi4,rssi5
    1.0,0.5,1.0,2.4GHz,-40,-41,-40,-42,-40

A header of ``x,y,z,band,gw1..gwK`` instead declares one RSSI value per
gateway (vector records).  In both layouts -100 dBm marks a dead sample;
a record whose samples are all -100 is invalid and dropped.

Spectrum datasets are directories holding ``manifest.json`` and one
360 x 90 CSV per record (rows = azimuth, columns = elevation).
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from sklearn.model_selection import train_test_split

from .signal import SPECTRUM_SHAPE

__all__ = [
    "FormatError",
    "ParseError",
    "MeasurementRecord",
    "DatasetManifest",
    "INVALID_RSSI",
    "load_rssi_dataset",
    "save_rssi_dataset",
    "load_spectrum_dataset",
    "save_spectrum_dataset",
    "load_points",
    "save_points",
    "check_version",
]

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
INVALID_RSSI = -100.0
RSSI_COLUMNS = ["x", "y", "z", "band", "rssi1", "rssi2", "rssi3", "rssi4", "rssi5"]
SPECTRUM_FORMAT = "gasplat-spectrum"
RSSI_FORMAT = "gasplat-rssi"


class FormatError(ValueError):
    """File does not follow the expected layout or version."""


class ParseError(FormatError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def check_version(kind: str, found, supported: int = FORMAT_VERSION):
    try:
        v = int(found)
    except (TypeError, ValueError):
        raise FormatError(f"{kind}: unreadable format version {found!r}") from None
    if v > supported:
        raise FormatError(f"{kind}: format version {v} is newer than the supported version {supported}")
    if v < 1:
        raise FormatError(f"{kind}: invalid format version {v}")
    return v


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """One receiver pose and its observation (scalar RSSI, gateway vector or spectrum)."""

    rx_position: np.ndarray
    band: str = ""
    rssi: float | None = None
    spectrum: np.ndarray | None = None
    rx_rotation: np.ndarray | None = None
    valid: bool = True
    rssi_vector: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.rx_position, dtype=float)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise ValueError(f"receiver position must be a finite 3-vector, got {self.rx_position!r}")
        object.__setattr__(self, "rx_position", p)
        if self.spectrum is not None:
            s = np.asarray(self.spectrum, dtype=float)
            if s.shape != SPECTRUM_SHAPE:
                raise FormatError(f"spectrum must be 360x90 (azimuth x elevation), got {s.shape[0]}x{s.shape[1] if s.ndim > 1 else ''}")
            object.__setattr__(self, "spectrum", s)
        if self.rx_rotation is not None:
            q = np.asarray(self.rx_rotation, dtype=float)
            if q.shape != (4,) or not np.isclose(np.linalg.norm(q), 1.0, atol=1e-6):
                raise ValueError("receiver rotation must be a unit quaternion (w, x, y, z)")
            object.__setattr__(self, "rx_rotation", q)


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    records: tuple = ()
    tx_position: np.ndarray | None = None
    split: dict | None = None  # {"seed", "test_size", "train": [...], "test": [...]}
    band: str | None = None
    n_excluded: int = 0
    points: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.tx_position is not None:
            object.__setattr__(self, "tx_position", np.asarray(self.tx_position, dtype=float))
        if self.split is not None:
            tr, te = set(self.split["train"]), set(self.split["test"])
            if tr & te or tr | te != set(range(len(self.records))):
                raise ValueError("train/test split must be disjoint and cover every record")

    def __len__(self) -> int:
        return len(self.records)

    def with_split(self, test_size: float = 0.3, seed: int = 42) -> "DatasetManifest":
        """Seeded train/test assignment over the records."""
        idx = np.arange(len(self.records))
        if len(idx) < 2:
            split = {"seed": seed, "test_size": test_size, "train": idx.tolist(), "test": []}
        else:
            tr, te = train_test_split(idx, test_size=test_size, random_state=seed)
            split = {"seed": seed, "test_size": test_size, "train": sorted(tr.tolist()), "test": sorted(te.tolist())}
        return replace(self, split=split)

    def subset(self, which: str) -> list:
        if which == "all":
            return list(self.records)
        if self.split is None:
            raise ValueError("manifest has no train/test split")
        return [self.records[i] for i in self.split[which]]

    def filter_band(self, band: str | None) -> "DatasetManifest":
        if band is None:
            return self
        return DatasetManifest([r for r in self.records if r.band == band], self.tx_position, None, band, self.n_excluded, self.points)

    def for_gateway(self, k: int) -> "DatasetManifest":
        """Scalar-RSSI view of gateway ``k`` from vector records; dead entries are dropped."""
        keep = []
        for r in self.records:
            if r.rssi_vector is None:
                raise ValueError("manifest has no gateway vector records")
            v = r.rssi_vector[k]
            if np.isfinite(v):
                keep.append(replace(r, rssi=float(v)))
        return DatasetManifest(keep, self.tx_position, None, self.band, len(self.records) - len(keep), self.points)

    def positions(self, which: str = "all") -> np.ndarray:
        return np.array([r.rx_position for r in self.subset(which)]).reshape(-1, 3)

    def rssi(self, which: str = "all") -> np.ndarray:
        return np.array([r.rssi for r in self.subset(which)], dtype=float)

    def spectra(self, which: str = "all") -> np.ndarray:
        return np.array([r.spectrum for r in self.subset(which)]).reshape((-1,) + SPECTRUM_SHAPE)


def _split_comments(lines):
    meta, body_start = {}, 0
    for i, line in enumerate(lines):
        s = line.strip()
        if not s:
            body_start = i + 1
            continue
        if not s.startswith("#"):
            break
        body_start = i + 1
        m = re.match(r"#\s*(gasplat-\w+)\s+v(\S+)", s)
        if m:
            meta["format"], meta["version"] = m.group(1), m.group(2)
        m = re.match(r"#\s*tx\s*:\s*(.+)", s)
        if m:
            meta["tx"] = m.group(1)
    return meta, body_start


def load_rssi_dataset(path) -> DatasetManifest:
    """Parse an RSSI CSV; each record keeps the median of its samples."""
    path = Path(path)
    lines = path.read_text().splitlines()
    meta, start = _split_comments(lines)
    if "version" in meta:
        if meta["format"] != RSSI_FORMAT:
            raise FormatError(f"{path}: expected a {RSSI_FORMAT} file, found {meta['format']}")
        check_version(str(path), meta["version"])
    tx = None
    if "tx" in meta:
        try:
            tx = np.array([float(v) for v in meta["tx"].split(",")])
        except ValueError:
            raise ParseError(path, 1, f"bad transmitter position {meta['tx']!r}") from None
    body = lines[start:]
    if not any(line.strip() for line in body):
        log.warning("%s holds no records", path)
        return DatasetManifest((), tx)
    rows = csv.reader(body)
    header = [h.strip() for h in next(rows)]
    header_line = start + 1
    vector = header[:4] == RSSI_COLUMNS[:4] and len(header) > 4 and all(h.startswith("gw") for h in header[4:])
    if header != RSSI_COLUMNS and not vector:
        raise FormatError(f"{path}:{header_line}: missing header; expected {','.join(RSSI_COLUMNS)}")
    records, excluded = [], 0
    for offset, row in enumerate(rows, start=1):
        lineno = header_line + offset
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
        try:
            pos = [float(v) for v in row[:3]]
            samples = np.array([float(v) for v in row[4:]])
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(samples)):
            raise ParseError(path, lineno, "non-finite value")
        band = row[3].strip()
        dead = samples == INVALID_RSSI
        if dead.all():
            excluded += 1
            continue
        if vector:
            records.append(MeasurementRecord(pos, band, rssi_vector=np.where(dead, np.nan, samples)))
        else:
            records.append(MeasurementRecord(pos, band, rssi=float(np.median(samples))))
    if not records:
        log.warning("%s holds no valid records", path)
    return DatasetManifest(records, tx, n_excluded=excluded)


def save_rssi_dataset(path, records, tx_position=None, samples_per_record: int = 5):
    """Write scalar-RSSI records; each value is repeated ``samples_per_record`` times."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# {RSSI_FORMAT} v{FORMAT_VERSION}\n")
        if tx_position is not None:
            fh.write("# tx: " + ",".join(repr(float(v)) for v in tx_position) + "\n")
        w = csv.writer(fh)
        w.writerow(RSSI_COLUMNS[:4] + [f"rssi{i + 1}" for i in range(samples_per_record)])
        for r in records:
            w.writerow([repr(float(v)) for v in r.rx_position] + [r.band] + [repr(float(r.rssi))] * samples_per_record)


def _write_grid(path: Path, grid: np.ndarray):
    np.savetxt(path, grid, delimiter=",", fmt="%.17g")


def _read_grid(path: Path) -> np.ndarray:
    try:
        g = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if g.shape != SPECTRUM_SHAPE:
        raise FormatError(f"{path}: spectrum must be 360x90 (azimuth x elevation), got {g.shape[0]}x{g.shape[1]}")
    return g


def save_points(path, points):
    np.savetxt(path, np.asarray(points, dtype=float).reshape(-1, 3), delimiter=",", fmt="%.17g", header="x,y,z", comments="")


def load_points(path) -> np.ndarray:
    pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if pts.shape[1] != 3:
        raise FormatError(f"{path}: point cloud must have 3 columns")
    return pts


def save_spectrum_dataset(path, manifest: DatasetManifest):
    """Directory with ``manifest.json`` and one grid CSV per record."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, r in enumerate(manifest.records):
        entry = {"rx_position": r.rx_position.tolist(), "band": r.band}
        if r.rx_rotation is not None:
            entry["rx_rotation"] = r.rx_rotation.tolist()
        if r.rssi is not None:
            entry["rssi"] = r.rssi
        if r.spectrum is not None:
            entry["file"] = f"spectrum_{i:05d}.csv"
            _write_grid(root / entry["file"], r.spectrum)
        entries.append(entry)
    doc = {
        "format": SPECTRUM_FORMAT,
        "version": FORMAT_VERSION,
        "tx_position": None if manifest.tx_position is None else manifest.tx_position.tolist(),
        "split": manifest.split,
        "band": manifest.band,
        "records": entries,
    }
    if manifest.points is not None:
        save_points(root / "points.csv", manifest.points)
        doc["points"] = "points.csv"
    (root / "manifest.json").write_text(json.dumps(doc, indent=1))


def load_spectrum_dataset(path) -> DatasetManifest:
    root = Path(path)
    mpath = root / "manifest.json" if root.is_dir() else root
    root = mpath.parent
    try:
        doc = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: {exc}") from None
    if doc.get("format") != SPECTRUM_FORMAT:
        raise FormatError(f"{mpath}: not a {SPECTRUM_FORMAT} manifest")
    check_version(str(mpath), doc.get("version"))
    records = []
    for e in doc.get("records", []):
        records.append(
            MeasurementRecord(
                e["rx_position"],
                e.get("band", ""),
                rssi=e.get("rssi"),
                spectrum=_read_grid(root / e["file"]) if "file" in e else None,
                rx_rotation=e.get("rx_rotation"),
            )
        )
    points = load_points(root / doc["points"]) if doc.get("points") else None
    return DatasetManifest(records, doc.get("tx_position"), doc.get("split"), doc.get("band"), 0, points)

"""Metrics reports, model checkpoints and plots."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .datasets import FORMAT_VERSION, FormatError, check_version
from .estimator import GaussianFieldRegressor
from .model import GaussianField
from .scene import Scene
from .training import ssim

__all__ = [
    "metrics",
    "ssim_cdf",
    "save_checkpoint",
    "load_checkpoint",
    "write_report",
    "plot_heatmap",
    "plot_cdf",
    "plot_run_log",
    "save_grid_csv",
]

CHECKPOINT_FORMAT = "gasplat-checkpoint"


def ssim_cdf(values) -> dict:
    """Empirical CDF: sorted values with quantiles ``(i + 1) / n``."""
    v = np.sort(np.asarray(values, dtype=float))
    return {"values": v.tolist(), "quantiles": ((np.arange(len(v)) + 1) / len(v)).tolist()}


def metrics(pred, gt, kind: str) -> dict:
    """Evaluation report for aligned prediction / ground-truth pairs.

    ``kind="rssi"``: per-receiver absolute errors in dB and their median.
    ``kind="spectrum"``: per-sample SSIM (dynamic range taken from the
    ground truth), its mean and empirical CDF, plus the mean MAE.
    """
    pred, gt = list(pred), list(gt)
    if len(pred) == 0 or len(pred) != len(gt):
        raise ValueError(f"metrics need equal, non-empty prediction and ground-truth sets ({len(pred)} vs {len(gt)})")
    if kind == "rssi":
        err = np.abs(np.asarray(pred, dtype=float) - np.asarray(gt, dtype=float))
        return {
            "kind": "rssi",
            "n": len(err),
            "median_mae_db": float(np.median(err)),
            "mean_mae_db": float(np.mean(err)),
            "abs_errors_db": err.tolist(),
        }
    if kind == "spectrum":
        vals, maes = [], []
        for p, g in zip(pred, gt):
            p, g = np.asarray(p, dtype=float), np.asarray(g, dtype=float)
            vals.append(ssim(p, g, float(np.ptp(g))))
            maes.append(float(np.mean(np.abs(p - g))))
        return {
            "kind": "spectrum",
            "n": len(vals),
            "mean_ssim": float(np.mean(vals)),
            "ssim": vals,
            "ssim_cdf": ssim_cdf(vals),
            "mean_mae": float(np.mean(maes)),
        }
    raise ValueError(f"unknown metric kind {kind!r}; use 'rssi' or 'spectrum'")


def write_report(report: dict, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(report, indent=1))


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    return v


def save_checkpoint(est: GaussianFieldRegressor, path):
    """``.npz`` container: float64 parameter arrays plus a JSON header."""
    model = est.model_
    params = {k: _jsonable(v) for k, v in est.get_params().items() if k != "run_log"}
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": FORMAT_VERSION,
        "estimator": params,
        "arch": model.arch,
        "n_anchors": model.n_anchors,
        "tx_position": model.tx_position.tolist(),
    }
    arrays = {f"param/{k}": v.detach().numpy() for k, v in model.state_dict().items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> GaussianFieldRegressor:
    try:
        data = np.load(path, allow_pickle=False)
        meta = json.loads(str(data["__meta__"]))
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"{path}: not a readable checkpoint ({exc})") from None
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    check_version(str(path), meta.get("version"))
    state = {k[len("param/") :]: torch.from_numpy(data[k].copy()) for k in data.files if k.startswith("param/")}
    scene = Scene(
        positions=state["positions"].numpy(),
        rotations=state["rotations"].numpy(),
        log_scales=state["log_scales"].numpy(),
        opacities=state["opacities"].numpy(),
        sh=state["sh"].numpy(),
        tx_position=meta["tx_position"],
        n_anchors=meta["n_anchors"],
    )
    est = GaussianFieldRegressor(**meta["estimator"])
    model = GaussianField(scene, **meta["arch"])
    model.load_state_dict(state)
    est.model_ = model
    est.n_features_in_ = 3
    return est


def save_grid_csv(path, grid):
    np.savetxt(path, np.asarray(grid, dtype=float), delimiter=",", fmt="%.17g")


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_heatmap(grid, path, title: str = "", db: bool = True, floor_db: float = -40.0):
    """Azimuth x elevation heatmap; the dB range is stored in the PNG metadata."""
    plt = _pyplot()
    g = np.asarray(grid, dtype=float)
    top = g.max() if g.size else 0.0
    if db:
        with np.errstate(divide="ignore"):
            img = 10 * np.log10(np.maximum(g, 1e-300) / (top if top > 0 else 1.0))
        img = np.maximum(img, floor_db)
        lo, hi = floor_db, 0.0
    else:
        img, lo, hi = g, float(g.min()), float(g.max())
    fig, ax = plt.subplots(figsize=(8, 3))
    im = ax.imshow(img.T, origin="lower", aspect="auto", cmap="viridis", vmin=lo, vmax=hi, extent=(0, g.shape[0], 0, g.shape[1]))
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("elevation (deg)")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="relative power (dB)" if db else "value")
    fig.tight_layout()
    fig.savefig(path, metadata={"Description": f"range {lo:g} to {hi:g} {'dB' if db else ''}".strip()})
    plt.close(fig)


def plot_cdf(values, path, xlabel: str = "SSIM"):
    plt = _pyplot()
    cdf = ssim_cdf(values)
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.step(cdf["values"], cdf["quantiles"], where="post")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("CDF")
    ax.set_ylim(0, 1.02)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_run_log(log_path, path):
    plt = _pyplot()
    steps, losses = [], []
    for line in Path(log_path).read_text().splitlines():
        rec = json.loads(line)
        if rec.get("event") == "step":
            steps.append(rec["step"])
            losses.append(rec["loss"])
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(steps, losses)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

"""Losses, SSIM and the optimization loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .mapping import gradients
from .render import PerceptionPlane, rssi_from_map_torch

__all__ = [
    "LossConfig",
    "TrainConfig",
    "TrainResult",
    "DivergenceError",
    "ssim",
    "ssim_map",
    "gaussian_window",
    "loss",
    "rssi_loss",
    "train",
    "RunLog",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.8
    alpha_reg: float = 1e-4
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.alpha_reg >= 0:
            raise ValueError(f"alpha_reg must be non-negative, got {self.alpha_reg}")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"SSIM window must be a positive odd size, got {self.window}")


@dataclass(frozen=True)
class TrainConfig:
    target: str = "spectrum"  # or "rssi"
    epochs: int = 1
    batch_size: int = 1
    max_steps: int | None = None
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    tau: float = 0.1
    uniform_blend: float = 0.05
    p0: float = 1.0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.target not in ("spectrum", "rssi"):
            raise ValueError(f"target must be 'spectrum' or 'rssi', got {self.target!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if isinstance(self.loss, dict):
            object.__setattr__(self, "loss", LossConfig(**self.loss))
        object.__setattr__(self, "betas", tuple(self.betas))


class DivergenceError(RuntimeError):
    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message if dump_path is None else f"{message}; state dumped to {dump_path}")
        self.dump_path = dump_path


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _as_tensor(x):
    return x if isinstance(x, torch.Tensor) else torch.tensor(np.asarray(x, dtype=float))


def ssim_map(a, b, data_range=None, cfg: LossConfig = LossConfig()):
    """Local SSIM values over all fully contained windows (torch tensor)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"SSIM needs two equal 2-D grids, got {tuple(a.shape)} and {tuple(b.shape)}")
    if min(a.shape) < cfg.window:
        raise ValueError(f"grids of shape {tuple(a.shape)} are smaller than the {cfg.window}-pixel window")
    if data_range is None:
        with torch.no_grad():
            data_range = float(torch.maximum(a.max(), b.max()) - torch.minimum(a.min(), b.min()))
    if data_range <= 0:
        data_range = 1.0
    g = torch.as_tensor(gaussian_window(cfg.window, cfg.sigma), dtype=a.dtype)
    kx, ky = g.reshape(1, 1, -1, 1), g.reshape(1, 1, 1, -1)

    def filt(x):
        return F.conv2d(F.conv2d(x[None, None], kx), ky)[0, 0]

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a * mu_a
    sbb = filt(b * b) - mu_b * mu_b
    sab = filt(a * b) - mu_a * mu_b
    c1, c2 = (cfg.k1 * data_range) ** 2, (cfg.k2 * data_range) ** 2
    return ((2 * mu_a * mu_b + c1) * (2 * sab + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2))


def ssim(a, b, data_range=None, cfg: LossConfig = LossConfig()):
    """Mean local SSIM; a tensor if either input is a tensor, else a float.

    ``data_range`` defaults to the joint range of both grids (which keeps
    the value symmetric); a zero range falls back to 1.
    """
    out = ssim_map(a, b, data_range, cfg).mean()
    if isinstance(a, torch.Tensor) or isinstance(b, torch.Tensor):
        return out
    return float(out)


def loss(pred, gt, d_attn=None, cfg: LossConfig = LossConfig()):
    """``mean_i[beta MAE_i + (1 - beta)(1 - SSIM_i)] + alpha_reg ||d_attn||^2``.

    The SSIM dynamic range is ``max(gt) - min(gt)`` over the whole batch.
    """
    if len(pred) != len(gt):
        raise ValueError(f"prediction and ground-truth lists differ in length ({len(pred)} vs {len(gt)})")
    if len(pred) == 0:
        raise ValueError("loss needs at least one measurement")
    gt = [_as_tensor(g) for g in gt]
    pred = [_as_tensor(p) for p in pred]
    rng = float(max(g.max() for g in gt) - min(g.min() for g in gt))
    total = 0.0
    for p, g in zip(pred, gt):
        term = cfg.beta * (p - g).abs().mean()
        if cfg.beta < 1:
            term = term + (1 - cfg.beta) * (1 - ssim(p, g, rng, cfg))
        total = total + term
    total = total / len(pred)
    if d_attn is not None and cfg.alpha_reg:
        total = total + cfg.alpha_reg * (_as_tensor(d_attn) ** 2).sum()
    return total


def rssi_loss(pred, gt, d_attn=None, cfg: LossConfig = LossConfig()):
    """Mean absolute RSSI error in dB plus the opacity-residual penalty."""
    pred, gt = _as_tensor(pred), _as_tensor(gt)
    if pred.numel() == 0 or pred.shape != gt.shape:
        raise ValueError("RSSI loss needs equal, non-empty prediction and target vectors")
    total = (pred - gt).abs().mean()
    if d_attn is not None and cfg.alpha_reg:
        total = total + cfg.alpha_reg * (_as_tensor(d_attn) ** 2).sum()
    return total


class RunLog:
    """JSON-lines run log; no-op without a path."""

    def __init__(self, path=None):
        self.path = None if path is None else Path(path)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def write(self, **record):
        if self.path is None:
            return
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


@dataclass
class TrainResult:
    model: object
    epoch_losses: list
    step_losses: list
    seconds: float


def _dump_state(model, path: Path, step: int) -> str:
    path.mkdir(parents=True, exist_ok=True)
    out = path / f"diverged_step{step}.pt"
    torch.save({k: v.detach().clone() for k, v in model.state_dict().items()}, out)
    return str(out)


def train(model, records, cfg: TrainConfig = TrainConfig(), plane: PerceptionPlane | None = None, run_log=None, dump_dir=None):
    """Optimize ``model`` (a :class:`~gasplat.model.GaussianField`) on measurement records.

    ``records`` is a sequence of ``(rx_position, target)`` pairs where the
    target is a grid matching ``plane`` (spectrum) or a scalar in dB (rssi).
    Each step evaluates the mapping net once, renders every pose of the
    batch and applies one Adam update.  Batches are drawn from a seeded
    permutation per epoch.
    """
    if len(records) == 0:
        raise ValueError("training needs a non-empty dataset")
    plane = plane or PerceptionPlane.spectrum_grid(model.projection)
    runlog = run_log if isinstance(run_log, RunLog) else RunLog(run_log)
    params = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
    opt = torch.optim.Adam([p for _, p in params], lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    targets = [_as_tensor(t) for _, t in records]
    data_range = None
    if cfg.target == "spectrum":
        data_range = float(max(t.max() for t in targets) - min(t.min() for t in targets))
    runlog.write(event="config", config=asdict(cfg), seed=cfg.seed, n_records=len(records), ssim_data_range=data_range)
    epoch_losses, step_losses = [], []
    step = 0
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(records))
        batch_losses = []
        for b in range(0, len(order), cfg.batch_size):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
            batch = order[b : b + cfg.batch_size]
            eff = model.effective()
            preds = [model.render(records[i][0], plane, eff) for i in batch]
            if cfg.target == "spectrum":
                value = loss(preds, [targets[i] for i in batch], eff["d_attn"], cfg.loss)
            else:
                pr = torch.stack([rssi_from_map_torch(p, cfg.tau, cfg.uniform_blend, cfg.p0) for p in preds])
                value = rssi_loss(pr, torch.stack([targets[i] for i in batch]), eff["d_attn"], cfg.loss)
            if not torch.isfinite(value):
                dump = _dump_state(model, Path(dump_dir or "."), step) if dump_dir is not None else None
                runlog.write(event="diverged", step=step, epoch=epoch, loss=float(value.detach()))
                raise DivergenceError(f"non-finite loss at step {step} (epoch {epoch})", dump)
            grads = gradients(value, params)
            for n, p in params:
                p.grad = grads[n]
            opt.step()
            model.project_()
            v = float(value.detach())
            batch_losses.append(v)
            step_losses.append(v)
            runlog.write(event="step", step=step, epoch=epoch, loss=v)
            step += 1
        if batch_losses:
            epoch_losses.append(float(np.mean(batch_losses)))
            runlog.write(event="epoch", epoch=epoch, loss=epoch_losses[-1])
            log.info("epoch %d loss %.6g", epoch, epoch_losses[-1])
        if cfg.max_steps is not None and step >= cfg.max_steps:
            break
    seconds = time.perf_counter() - start
    runlog.write(event="done", steps=step, seconds=seconds)
    return TrainResult(model, epoch_losses, step_losses, seconds)



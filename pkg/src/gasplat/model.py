"""Differentiable Gaussian radio field: scene parameters + tokenizer + mapping net + renderer."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .mapping import MappingNet
from .render import MercatorProjection, PerceptionPlane, project_torch, render_torch, rssi_from_map_torch
from .scene import ResidualUpdate, Scene, apply_residuals, select_anchors
from .tokenizer import GATokenizer

__all__ = ["GaussianField", "DEFAULT_ARCH"]

DEFAULT_ARCH = {
    "n_channels": 8,
    "n_scalars": 16,
    "n_blocks": 2,
    "n_freqs": 6,
    "embed_scale": 10.0,
    "width": 128,
    "head_width": 64,
    "signature": [3, 0, 1],
    "lat_max": MercatorProjection().lat_max,
}


class GaussianField(nn.Module):
    """All learnable state for one transmitter scene, in float64.

    ``effective()`` runs the tokenizer and the mapping net once per
    transmitter; ``render()`` projects and composites the effective
    primitives for a receiver position.  The signal coefficients of a
    primitive are its own learnable SH plus the signal-field value at its
    position plus the signal-head residual.
    """

    def __init__(self, scene: Scene, **arch):
        super().__init__()
        unknown = set(arch) - set(DEFAULT_ARCH)
        if unknown:
            raise ValueError(f"unknown architecture options: {sorted(unknown)}")
        self.arch = {**DEFAULT_ARCH, **arch}
        a = self.arch
        dt = torch.float64
        self.positions = nn.Parameter(torch.tensor(scene.positions, dtype=dt))
        self.rotations = nn.Parameter(torch.tensor(scene.rotations, dtype=dt))
        self.log_scales = nn.Parameter(torch.tensor(scene.log_scales, dtype=dt))
        self.opacities = nn.Parameter(torch.tensor(scene.opacities, dtype=dt))
        self.sh = nn.Parameter(torch.tensor(scene.sh, dtype=dt))
        self.register_buffer("tx_position", torch.tensor(scene.tx_position, dtype=dt))
        self.n_anchors = scene.n_anchors
        self.tokenizer = GATokenizer(
            a["n_channels"], a["n_scalars"], a["n_blocks"], a["n_freqs"], a["embed_scale"], tuple(a["signature"])
        )
        self.mapping = MappingNet(self.tokenizer.embed_dim, self.tokenizer.cls_dim, scene.sh.shape[1], a["width"], a["head_width"])
        self.projection = MercatorProjection(a["lat_max"])
        self.double()

    def __len__(self) -> int:
        return self.positions.shape[0]

    def anchors(self) -> np.ndarray:
        op = self.opacities.detach().numpy()
        return select_anchors(op, min(self.n_anchors, len(op)))

    def effective(self, tx_position=None) -> dict:
        tx = self.tx_position if tx_position is None else torch.as_tensor(tx_position, dtype=torch.float64)
        enc = self.tokenizer(self.positions, tx, self.anchors(), self.opacities, self.log_scales)
        out = self.mapping(enc.e_tx, enc.e_x, enc.cls)
        r = out.residuals
        q = self.rotations + r["d_rotation"]
        return {
            "positions": self.positions,
            "rotations": q / q.norm(dim=-1, keepdim=True),
            "log_scales": self.log_scales + r["d_scaling"],
            "opacities": torch.clamp(self.opacities + r["d_attn"], 0.0, 1.0),
            "sh": self.sh + out.xi + r["d_signal"],
            "deltas": out.delta,
            "d_attn": r["d_attn"],
        }

    def render(self, rx_position, plane: PerceptionPlane, eff: dict | None = None, rx_rotation=None) -> torch.Tensor:
        eff = self.effective() if eff is None else eff
        proj = project_torch(
            eff["positions"], eff["rotations"], eff["log_scales"], eff["opacities"], eff["sh"], eff["deltas"],
            rx_position, rx_rotation, self.projection,
        )  # fmt: skip
        return render_torch(proj, plane)

    def rssi(self, rx_position, plane: PerceptionPlane, eff: dict | None = None, tau=0.1, eps=0.05, p0=1.0):
        return rssi_from_map_torch(self.render(rx_position, plane, eff), tau, eps, p0)

    @torch.no_grad()
    def project_(self):
        """Keep raw parameters in their valid sets after an optimizer step."""
        self.opacities.clamp_(0.0, 1.0)
        self.rotations.div_(self.rotations.norm(dim=-1, keepdim=True))

    def scene(self) -> Scene:
        """Current raw (pre-residual) parameters as an immutable :class:`Scene`."""
        return Scene(
            positions=self.positions.detach().numpy(),
            rotations=(self.rotations / self.rotations.norm(dim=-1, keepdim=True)).detach().numpy(),
            log_scales=self.log_scales.detach().numpy(),
            opacities=np.clip(self.opacities.detach().numpy(), 0.0, 1.0),
            sh=self.sh.detach().numpy(),
            tx_position=self.tx_position.numpy(),
            n_anchors=self.n_anchors,
        )

    @torch.no_grad()
    def effective_scene(self, tx_position=None) -> tuple[Scene, np.ndarray]:
        """Effective scene via :func:`apply_residuals` plus the per-primitive attenuations."""
        eff = self.effective(tx_position)
        base = self.scene()
        # residuals expressed against the exported base, so the quaternion
        # step lands exactly on the effective rotation before renormalizing
        r = ResidualUpdate(
            d_rotation=eff["rotations"].numpy() - base.rotations,
            d_scaling=eff["log_scales"].numpy() - base.log_scales,
            d_signal=eff["sh"].numpy() - base.sh,
            d_attn=eff["opacities"].numpy() - base.opacities,
        )
        return apply_residuals(base, r), eff["deltas"].numpy()

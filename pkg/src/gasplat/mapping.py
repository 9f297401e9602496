"""Dual-branch scene mapping network: attenuation field, signal field and residual heads.

Inputs per primitive are the transmitter embedding ``e_tx``, the
primitive embedding ``e_x`` and the broadcast CLS feature.  The
attenuation branch yields ``delta`` in (0, 1) and an intermediate feature
``f``; the signal branch maps ``[f, e_tx, e_x, cls]`` to SH-shaped
coefficients ``xi``; the heads read ``[f, xi]`` and emit residual updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

__all__ = [
    "MLP",
    "AttenuationNet",
    "SignalNet",
    "ResidualHeads",
    "MappingNet",
    "FieldOutputs",
    "UnrecordedGraphError",
    "gradients",
]


class UnrecordedGraphError(RuntimeError):
    """Raised when gradients are requested for a value with no recorded forward pass."""


def _linear(n_in: int, n_out: int, zero: bool = False) -> nn.Linear:
    layer = nn.Linear(n_in, n_out)
    bound = 1.0 / math.sqrt(n_in)
    with torch.no_grad():
        if zero:
            layer.weight.zero_()
            layer.bias.zero_()
        else:
            layer.weight.uniform_(-bound, bound)
            layer.bias.uniform_(-bound, bound)
    return layer


def _check_dim(x: torch.Tensor, n: int, name: str):
    if x.shape[-1] != n:
        raise ValueError(f"{name} has feature dimension {x.shape[-1]}, expected {n}")


class MLP(nn.Module):
    """tanh MLP; ``skips`` lists hidden layers whose input is concatenated with the network input."""

    def __init__(self, n_in: int, hidden: list[int], n_out: int, skips=(), zero_out: bool = False):
        super().__init__()
        self.n_in, self.skips = n_in, tuple(skips)
        dims = [n_in] + list(hidden)
        self.hidden = nn.ModuleList(
            _linear(dims[i] + (n_in if i in self.skips and i > 0 else 0), dims[i + 1]) for i in range(len(hidden))
        )
        self.out = _linear(dims[-1], n_out, zero=zero_out)

    def features(self, x):
        _check_dim(x, self.n_in, "MLP input")
        h = x
        for i, layer in enumerate(self.hidden):
            if i in self.skips and i > 0:
                h = torch.cat([h, x], dim=-1)
            h = torch.tanh(layer(h))
        return h

    def forward(self, x):
        return self.out(self.features(x))


class AttenuationNet(nn.Module):
    """``(e_tx, e_x, cls) -> (delta, f)``; skip from the input into the third hidden layer."""

    def __init__(self, embed_dim: int, cls_dim: int, width: int = 128, depth: int = 4, skip_layer: int = 2):
        super().__init__()
        self.embed_dim, self.cls_dim = embed_dim, cls_dim
        self.mlp = MLP(2 * embed_dim + cls_dim, [width] * depth, 1, skips=(skip_layer,))

    @property
    def feature_dim(self) -> int:
        return self.mlp.hidden[-1].out_features

    def inputs(self, e_tx, e_x, cls):
        _check_dim(e_tx, self.embed_dim, "e_tx")
        _check_dim(e_x, self.embed_dim, "e_x")
        _check_dim(cls, self.cls_dim, "cls")
        n = e_x.shape[0]
        return torch.cat([e_tx.expand(n, -1), e_x, cls.expand(n, -1)], dim=-1)

    def forward(self, e_tx, e_x, cls):
        f = self.mlp.features(self.inputs(e_tx, e_x, cls))
        return torch.sigmoid(self.mlp.out(f))[:, 0], f


class SignalNet(nn.Module):
    """``[f, e_tx, e_x, cls] -> xi`` with shape ``(N, n_coeffs, 2)``."""

    def __init__(self, feature_dim: int, embed_dim: int, cls_dim: int, n_coeffs: int = 9, width: int = 128, depth: int = 3):
        super().__init__()
        self.n_coeffs = n_coeffs
        self.feature_dim, self.embed_dim, self.cls_dim = feature_dim, embed_dim, cls_dim
        self.mlp = MLP(feature_dim + 2 * embed_dim + cls_dim, [width] * depth, 2 * n_coeffs)

    def forward(self, f, e_tx, e_x, cls):
        _check_dim(f, self.feature_dim, "f")
        _check_dim(e_tx, self.embed_dim, "e_tx")
        _check_dim(e_x, self.embed_dim, "e_x")
        _check_dim(cls, self.cls_dim, "cls")
        n = f.shape[0]
        x = torch.cat([f, e_tx.expand(n, -1), e_x, cls.expand(n, -1)], dim=-1)
        return self.mlp(x).reshape(n, self.n_coeffs, 2)


class ResidualHeads(nn.Module):
    """Rotation, scaling and signal heads on ``[f, xi]``; a linear opacity head on ``f`` alone."""

    def __init__(self, feature_dim: int, n_coeffs: int = 9, width: int = 64):
        super().__init__()
        self.feature_dim, self.n_coeffs = feature_dim, n_coeffs
        n_in = feature_dim + 2 * n_coeffs
        self.rotation = MLP(n_in, [width], 4, zero_out=True)
        self.scaling = MLP(n_in, [width], 3, zero_out=True)
        self.signal = MLP(n_in, [width], 2 * n_coeffs, zero_out=True)
        self.attn = _linear(feature_dim, 1, zero=True)

    def forward(self, f, xi):
        _check_dim(f, self.feature_dim, "f")
        n = f.shape[0]
        if xi.shape[1:] != (self.n_coeffs, 2):
            raise ValueError(f"xi has shape {tuple(xi.shape)}, expected (n, {self.n_coeffs}, 2)")
        h = torch.cat([f, xi.reshape(n, -1)], dim=-1)
        return {
            "d_rotation": self.rotation(h),
            "d_scaling": self.scaling(h),
            "d_signal": self.signal(h).reshape(n, self.n_coeffs, 2),
            "d_attn": self.attn(f)[:, 0],
        }


@dataclass(frozen=True, eq=False)
class FieldOutputs:
    delta: torch.Tensor
    xi: torch.Tensor
    f: torch.Tensor
    residuals: dict


class MappingNet(nn.Module):
    def __init__(self, embed_dim: int, cls_dim: int, n_coeffs: int = 9, width: int = 128, head_width: int = 64):
        super().__init__()
        self.attenuation = AttenuationNet(embed_dim, cls_dim, width)
        self.signal = SignalNet(self.attenuation.feature_dim, embed_dim, cls_dim, n_coeffs, width)
        self.heads = ResidualHeads(self.attenuation.feature_dim, n_coeffs, head_width)

    def forward(self, e_tx, e_x, cls) -> FieldOutputs:
        delta, f = self.attenuation(e_tx, e_x, cls)
        xi = self.signal(f, e_tx, e_x, cls)
        return FieldOutputs(delta, xi, f, self.heads(f, xi))


def gradients(loss, params, grad_output=None):
    """Reverse-mode gradients of a scalar ``loss`` w.r.t. ``params``.

    ``params`` is a dict of name -> tensor or an iterable of
    ``(name, tensor)`` pairs (e.g. ``module.named_parameters()``).  Returns
    a dict with a gradient for every entry; parameters the loss does not
    depend on get zeros.
    """
    items = list(params.items() if isinstance(params, dict) else params)
    if not isinstance(loss, torch.Tensor) or loss.grad_fn is None:
        raise UnrecordedGraphError("loss was not computed through a recorded forward pass")
    if loss.numel() != 1:
        raise ValueError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    tensors = [t for _, t in items]
    grads = torch.autograd.grad(loss, tensors, grad_outputs=grad_output, allow_unused=True, retain_graph=True)
    return {name: torch.zeros_like(t) if g is None else g for (name, t), g in zip(items, grads)}

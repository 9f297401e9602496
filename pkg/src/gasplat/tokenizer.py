"""Multi-view tokenizer: Euclidean embeddings plus equivariant GA attention over anchors.

Token layout (before the learned input map lifts it to ``n_channels``):

* multivector channel 0 holds the token position as a grade-1 spatial
  vector ``x e1 + y e2 + z e3``;
* multivector channel 1 holds the offset to the transmitter (anchors
  only);
* scalar features are ``[is_anchor, is_tx, opacity, mean log-scale]``.

The CLS slot is a learned constant restricted to invariant content
(scalar grade and auxiliary scalars), so the whole encoder commutes with
spatial rotations and reflections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .algebra import GRADES, N_BLADES, NONDEGENERATE_BLADES, SPATIAL_VECTOR, Algebra

__all__ = [
    "Token",
    "MultiViewOutput",
    "embed_euclidean",
    "tokenize_anchors",
    "token_arrays",
    "ga_attention",
    "invariant_inner",
    "EquiLinear",
    "GABlock",
    "GATokenizer",
    "N_RAW_CHANNELS",
    "N_RAW_SCALARS",
]

N_RAW_CHANNELS = 2
N_RAW_SCALARS = 4


@dataclass(frozen=True, eq=False)
class Token:
    mv_channels: np.ndarray  # (n_c, 16)
    aux_scalars: np.ndarray  # (n_s,)


@dataclass(frozen=True, eq=False)
class MultiViewOutput:
    cls: torch.Tensor  # invariant CLS features, shared by all primitives
    cls_mv: torch.Tensor  # (n_c, 16)
    cls_scalars: torch.Tensor  # (n_s,)
    e_x: torch.Tensor  # (N, 6F)
    e_tx: torch.Tensor  # (6F,)

    def broadcast(self, n: int) -> torch.Tensor:
        return self.cls.expand(n, -1)


def embed_euclidean(p, n_freqs: int = 6, scale: float = 10.0):
    """Sinusoidal features ``[sin(2^f pi p_i/scale), cos(...)]`` per coordinate.

    Output layout for a point is ``[sin f0 x, sin f0 y, sin f0 z, ...,
    cos f0 x, ...]``: all sines (frequency-major), then all cosines.
    Accepts ``(..., 3)`` numpy arrays or torch tensors.
    """
    freqs = (2.0 ** np.arange(n_freqs)) * math.pi / scale
    if isinstance(p, torch.Tensor):
        arg = (p[..., None, :] * torch.as_tensor(freqs, dtype=p.dtype)[:, None]).flatten(-2)
        return torch.cat([torch.sin(arg), torch.cos(arg)], dim=-1)
    p = np.asarray(p, dtype=float)
    arg = (p[..., None, :] * freqs[:, None]).reshape(p.shape[:-1] + (3 * n_freqs,))
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=-1)


def token_arrays(positions, tx_position, anchors, opacities=None, log_scales=None, cls_mv=None, cls_scalars=None):
    """Raw token arrays ``(mv, scalars)`` ordered ``[CLS, anchors..., TX]``.

    Returns ``mv`` of shape ``(M + 2, 2, 16)`` and ``scalars`` of shape
    ``(M + 2, 4)``, as torch tensors when ``positions`` is a tensor and as
    numpy arrays otherwise.
    """
    anchors = np.asarray(anchors, dtype=int)
    if anchors.size == 0:
        raise ValueError("anchor set is empty")
    is_torch = isinstance(positions, torch.Tensor)
    dt = positions.dtype if is_torch else torch.float64

    def t(x):
        if x is None:
            return None
        return torch.as_tensor(x if isinstance(x, torch.Tensor) else np.array(x, dtype=float), dtype=dt)

    pos, tx = t(positions), t(tx_position)
    idx = torch.as_tensor(anchors)
    m = len(anchors)
    p = pos[idx]
    op = t(opacities)[idx] if opacities is not None else torch.zeros(m, dtype=dt)
    ls = t(log_scales)[idx].mean(-1) if log_scales is not None else torch.zeros(m, dtype=dt)

    def vec(x):
        out = torch.zeros(x.shape[:-1] + (N_BLADES,), dtype=dt)
        return out.index_copy(-1, torch.as_tensor(SPATIAL_VECTOR), x)

    anchor_mv = torch.stack([vec(p), vec(p - tx)], 1)
    tx_vec = vec(tx[None])
    tx_mv = torch.stack([tx_vec, torch.zeros_like(tx_vec)], 1)
    if cls_mv is None:
        cls_mv = torch.zeros(1, N_RAW_CHANNELS, N_BLADES, dtype=dt)
        cls_mv[0, 0, 0] = 1.0
    cls_s = torch.zeros(1, N_RAW_SCALARS, dtype=dt) if cls_scalars is None else t(cls_scalars)
    one, zero = torch.ones(m, dtype=dt), torch.zeros(m, dtype=dt)
    anchor_s = torch.stack([one, zero, op, ls], -1)
    tx_s = torch.tensor([[0.0, 1.0, 0.0, 0.0]], dtype=dt)
    mv = torch.cat([t(cls_mv).reshape(1, N_RAW_CHANNELS, N_BLADES), anchor_mv, tx_mv], 0)
    s = torch.cat([cls_s.reshape(1, N_RAW_SCALARS), anchor_s, tx_s], 0)
    return (mv, s) if is_torch else (mv.numpy(), s.numpy())


def tokenize_anchors(scene, anchors, tx_position=None) -> list[Token]:
    """Token list ``[CLS, anchor_1..anchor_M, TX]`` for a :class:`~gasplat.scene.Scene`.

    The CLS entry carries the untrained initial value (scalar grade 1).
    """
    tx = scene.tx_position if tx_position is None else np.asarray(tx_position, dtype=float)
    mv, s = token_arrays(scene.positions, tx, anchors, scene.opacities, scene.log_scales)
    return [Token(m, a) for m, a in zip(mv, s)]


def invariant_inner(a, b):
    """Sum over channels and non-degenerate blades of ``a * b``; shapes (..., n_c, 16)."""
    idx = NONDEGENERATE_BLADES
    if isinstance(a, torch.Tensor):
        idx = torch.as_tensor(idx)
        return (a[..., idx] * b[..., idx]).sum(dim=(-1, -2))
    return (a[..., idx] * b[..., idx]).sum(axis=(-1, -2))


def ga_attention(q, k, v, v_scalars=None):
    """Single-head GA dot-product attention.

    ``q``, ``k``, ``v`` have shape ``(T, n_c, 16)`` (the key/value length
    may differ from the query length only if ``q`` is broadcast by the
    caller).  Logits are the invariant inner products scaled by
    ``1/sqrt(8 n_c)``; softmax runs over the key index.  Returns the
    attended multivectors, the attended scalars (if given) and the weights.
    """
    if k.shape[0] != v.shape[0] or q.shape[1:] != k.shape[1:] or k.shape[1] != v.shape[1]:
        raise ValueError(f"attention shapes do not match: q {tuple(q.shape)}, k {tuple(k.shape)}, v {tuple(v.shape)}")
    n_c = q.shape[1]
    is_torch = isinstance(q, torch.Tensor)
    logits = invariant_inner(q[:, None], k[None, :]) / math.sqrt(8 * n_c)
    if is_torch:
        w = torch.softmax(logits, dim=1)
        out = torch.einsum("ij,jcb->icb", w, v)
        out_s = None if v_scalars is None else w @ v_scalars
    else:
        z = logits - logits.max(axis=1, keepdims=True)
        w = np.exp(z)
        w = w / w.sum(axis=1, keepdims=True)
        out = np.einsum("ij,jcb->icb", w, v)
        out_s = None if v_scalars is None else w @ v_scalars
    return out, out_s, w


class EquiLinear(nn.Module):
    """Grade-wise channel mixing with a bias on the scalar grade only."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        bound = 1 / math.sqrt(c_in)
        self.weight = nn.Parameter(torch.empty(5, c_out, c_in).uniform_(-bound, bound))
        self.bias = nn.Parameter(torch.zeros(c_out))
        self.register_buffer("grade_of_blade", torch.as_tensor(GRADES), persistent=False)

    def forward(self, x):
        w = self.weight[self.grade_of_blade]  # (16, out, in)
        y = torch.einsum("boi,...ib->...ob", w, x)
        return torch.cat([y[..., :1] + self.bias[:, None], y[..., 1:]], dim=-1)


def _mv_norm(x, eps=1e-6):
    sq = invariant_inner(x, x) / x.shape[-2]
    return x / torch.sqrt(sq + eps)[..., None, None]


def _scalar_norm(s, eps=1e-6):
    s = s - s.mean(-1, keepdim=True)
    return s / torch.sqrt((s * s).mean(-1, keepdim=True) + eps)


def grade_invariants(x):
    """Per channel: scalar coefficient and squared norms of non-degenerate grades 1..3."""
    nd = torch.as_tensor(NONDEGENERATE_BLADES)
    g = torch.as_tensor(GRADES)[nd]
    parts = [x[..., 0]]
    for grade in (1, 2, 3):
        sel = nd[g == grade]
        parts.append((x[..., sel] ** 2).sum(-1))
    return torch.stack(parts, -1).flatten(-2)


class GABlock(nn.Module):
    """Pre-norm attention block followed by a gated geometric-product MLP."""

    def __init__(self, n_channels: int, n_scalars: int, algebra: Algebra):
        super().__init__()
        self.algebra = algebra
        c, s = n_channels, n_scalars
        self.q, self.k, self.v, self.o = (EquiLinear(c, c) for _ in range(4))
        self.vs = nn.Linear(s, s)
        self.os = nn.Linear(s, s)
        self.left, self.right, self.lin = EquiLinear(c, c), EquiLinear(c, c), EquiLinear(c, c)
        self.out = EquiLinear(2 * c, c)
        self.s_to_mv = nn.Linear(s, c)
        self.s_mlp = nn.Sequential(nn.Linear(s + 4 * c, s), nn.Tanh(), nn.Linear(s, s))

    def forward(self, x, s):
        h, hs = _mv_norm(x), _scalar_norm(s)
        att, att_s, _ = ga_attention(self.q(h), self.k(h), self.v(h), self.vs(hs))
        x = x + self.o(att)
        s = s + self.os(att_s)
        h, hs = _mv_norm(x), _scalar_norm(s)
        prod = self.algebra.gp(self.left(h), self.right(h))
        lin = self.lin(h)
        lin = torch.cat([lin[..., :1] + self.s_to_mv(hs)[..., None], lin[..., 1:]], dim=-1)
        z = torch.cat([lin, prod], dim=-2)
        z = z * torch.sigmoid(z[..., :1])
        x = x + self.out(z)
        s = s + self.s_mlp(torch.cat([hs, grade_invariants(h)], -1))
        return x, s


class GATokenizer(nn.Module):
    """Anchor tokens -> GA attention blocks -> CLS features, plus Euclidean embeddings."""

    def __init__(
        self,
        n_channels: int = 8,
        n_scalars: int = 16,
        n_blocks: int = 2,
        n_freqs: int = 6,
        embed_scale: float = 10.0,
        signature=(3, 0, 1),
    ):
        super().__init__()
        self.algebra = Algebra.get(signature)
        self.n_channels, self.n_scalars, self.n_freqs, self.embed_scale = n_channels, n_scalars, n_freqs, embed_scale
        self.cls_scalar = nn.Parameter(torch.tensor([1.0, 0.0]))
        self.cls_aux = nn.Parameter(torch.zeros(N_RAW_SCALARS))
        self.lift = EquiLinear(N_RAW_CHANNELS, n_channels)
        self.lift_s = nn.Linear(N_RAW_SCALARS, n_scalars)
        self.blocks = nn.ModuleList(GABlock(n_channels, n_scalars, self.algebra) for _ in range(n_blocks))

    @property
    def cls_dim(self) -> int:
        return 4 * self.n_channels + self.n_scalars

    @property
    def embed_dim(self) -> int:
        return 6 * self.n_freqs

    def tokens(self, positions, tx_position, anchors, opacities=None, log_scales=None):
        cls_mv = torch.zeros(N_RAW_CHANNELS, N_BLADES, dtype=self.cls_scalar.dtype)
        cls_mv = torch.cat([self.cls_scalar[:, None], cls_mv[:, 1:]], dim=-1)
        return token_arrays(positions, tx_position, anchors, opacities, log_scales, cls_mv, self.cls_aux)

    def forward(self, positions, tx_position, anchors, opacities=None, log_scales=None) -> MultiViewOutput:
        mv, s = self.tokens(positions, tx_position, anchors, opacities, log_scales)
        x, s = self.lift(mv), self.lift_s(s)
        for block in self.blocks:
            x, s = block(x, s)
        cls_mv, cls_s = x[0], s[0]
        feats = torch.cat([grade_invariants(cls_mv), cls_s])
        return MultiViewOutput(
            cls=feats,
            cls_mv=cls_mv,
            cls_scalars=cls_s,
            e_x=embed_euclidean(positions, self.n_freqs, self.embed_scale),
            e_tx=embed_euclidean(tx_position, self.n_freqs, self.embed_scale),
        )

    def encode(self, scene, tx_position=None, anchors=None) -> MultiViewOutput:
        """Encode a :class:`~gasplat.scene.Scene` (numpy parameters) for one transmitter."""
        dt = self.cls_scalar.dtype
        tx = scene.tx_position if tx_position is None else tx_position
        anchors = scene.anchors() if anchors is None else anchors
        as_t = lambda a: torch.as_tensor(np.array(a, dtype=float), dtype=dt)
        return self(as_t(scene.positions), as_t(tx), anchors, as_t(scene.opacities), as_t(scene.log_scales))

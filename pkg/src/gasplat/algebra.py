"""Dense 4D geometric algebra.

Multivectors carry 16 coefficients in a fixed blade order::

    index  0      1   2   3   4    5    6    7    8    9    10
    blade  1      e1  e2  e3  e4   e12  e13  e14  e23  e24  e34

    index  11     12    13    14    15
    blade  e123   e124  e134  e234  e1234

Blades are ordered by grade, then lexicographically by basis index.  The
metric is set by a :class:`Signature` ``(p, q, r)``; basis vectors are
assigned ``+1`` first, then ``-1``, then ``0``, so under the default
``(3, 0, 1)`` the fourth vector ``e4`` is null and under ``(3, 1, 0)`` it
squares to ``-1``.

Products are driven by a precomputed 16x16x16 Cayley tensor, which makes
every product a single ``einsum`` that works on numpy arrays and torch
tensors alike.  The tokenizer relies on that to push batched multivector
channels through autograd.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Signature",
    "Algebra",
    "Multivector",
    "Versor",
    "SingularVersorError",
    "BLADE_NAMES",
    "GRADES",
    "geometric_product",
    "wedge",
    "inner",
    "reverse",
    "grade_project",
    "sandwich",
    "compose",
]

DIM = 4
N_BLADES = 16


def _blade_masks() -> list[int]:
    masks = [0]
    for grade in range(1, DIM + 1):
        for idx in combinations(range(DIM), grade):
            masks.append(sum(1 << i for i in idx))
    return masks


BLADE_MASKS: tuple[int, ...] = tuple(_blade_masks())
BLADE_NAMES: tuple[str, ...] = tuple(
    "1" if m == 0 else "e" + "".join(str(i + 1) for i in range(DIM) if m >> i & 1)
    for m in BLADE_MASKS
)
GRADES: np.ndarray = np.array([bin(m).count("1") for m in BLADE_MASKS])
_INDEX_OF_MASK = {m: i for i, m in enumerate(BLADE_MASKS)}

# Blade slices of interest; all are index arrays into the 16 coefficients.
SPATIAL_VECTOR = np.array([1, 2, 3])
DEGENERATE_AXIS = 3  # zero-based basis index of e4
NONDEGENERATE_BLADES = np.array([i for i, m in enumerate(BLADE_MASKS) if not m >> DEGENERATE_AXIS & 1])


class SingularVersorError(ArithmeticError):
    """Raised when a versor has no inverse."""


@dataclass(frozen=True)
class Signature:
    """Counts of basis vectors squaring to +1, -1 and 0."""

    p: int = 3
    q: int = 0
    r: int = 1

    def __post_init__(self):
        if min(self.p, self.q, self.r) < 0 or self.p + self.q + self.r != DIM:
            raise ValueError(f"signature must satisfy p+q+r=4 with non-negative counts, got {self.astuple()}")

    def astuple(self) -> tuple[int, int, int]:
        return (self.p, self.q, self.r)

    @property
    def metric(self) -> tuple[int, ...]:
        return (1,) * self.p + (-1,) * self.q + (0,) * self.r

    @classmethod
    def coerce(cls, value: "Signature | Sequence[int] | None") -> "Signature":
        if value is None:
            return cls()
        if isinstance(value, Signature):
            return value
        return cls(*value)


def _reorder_sign(a: int, b: int) -> int:
    # number of transpositions needed to bring blade a*b into canonical order
    a >>= 1
    swaps = 0
    while a:
        swaps += bin(a & b).count("1")
        a >>= 1
    return -1 if swaps & 1 else 1


def _blade_product(a: int, b: int, metric: Sequence[int]) -> tuple[int, int]:
    sign = _reorder_sign(a, b)
    common = a & b
    for i in range(DIM):
        if common >> i & 1:
            sign *= metric[i]
    return sign, a ^ b


class Algebra:
    """Cayley tables for one signature.

    Use :func:`Algebra.get` to share instances; tables are built once per
    signature.
    """

    def __init__(self, signature: Signature | Sequence[int] | None = None):
        self.signature = Signature.coerce(signature)
        metric = self.signature.metric
        gp = np.zeros((N_BLADES, N_BLADES, N_BLADES))
        outer = np.zeros_like(gp)
        inner = np.zeros_like(gp)
        for i, a in enumerate(BLADE_MASKS):
            for j, b in enumerate(BLADE_MASKS):
                sign, mask = _blade_product(a, b, metric)
                k = _INDEX_OF_MASK[mask]
                gp[i, j, k] = sign
                if a & b == 0:
                    outer[i, j, k] = _reorder_sign(a, b)
                if sign != 0 and GRADES[k] == abs(GRADES[i] - GRADES[j]) and GRADES[i] and GRADES[j]:
                    inner[i, j, k] = sign
        for t in (gp, outer, inner):
            t.setflags(write=False)
        self.gp_table = gp
        self.outer_table = outer
        self.inner_table = inner
        self.reverse_signs = np.array([(-1) ** (g * (g - 1) // 2) for g in GRADES], dtype=float)
        self.involution_signs = np.array([(-1) ** g for g in GRADES], dtype=float)
        self._torch_cache: dict = {}

    @staticmethod
    @lru_cache(maxsize=None)
    def _cached(sig: tuple[int, int, int]) -> "Algebra":
        return Algebra(sig)

    @classmethod
    def get(cls, signature: Signature | Sequence[int] | None = None) -> "Algebra":
        return cls._cached(Signature.coerce(signature).astuple())

    def __repr__(self):
        return f"Algebra{self.signature.astuple()}"

    # -- array-level kernels (numpy or torch, batched over leading axes) -----

    def table(self, name: str, like=None):
        t = getattr(self, f"{name}_table")
        if like is None or isinstance(like, np.ndarray):
            return t
        key = (name, like.dtype, like.device)
        if key not in self._torch_cache:
            import torch

            self._torch_cache[key] = torch.tensor(np.array(t), dtype=like.dtype, device=like.device)
        return self._torch_cache[key]

    def _einsum(self, a, b, name):
        if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
            return np.einsum("...i,ijk,...j->...k", a, self.table(name), b)
        import torch

        return torch.einsum("...i,ijk,...j->...k", a, self.table(name, a), b)

    def gp(self, a, b):
        return self._einsum(a, b, "gp")

    def outer(self, a, b):
        return self._einsum(a, b, "outer")

    def inner(self, a, b):
        return self._einsum(a, b, "inner")

    def reverse(self, a):
        return a * self._signs("reverse_signs", a)

    def involute(self, a):
        return a * self._signs("involution_signs", a)

    def _signs(self, name, like):
        s = getattr(self, name)
        if isinstance(like, np.ndarray):
            return s
        import torch

        return torch.tensor(np.array(s), dtype=like.dtype, device=like.device)

    def sandwich_array(self, versor, x, *, odd: bool = False):
        """``I x I^-1`` on raw coefficient arrays; ``odd`` involutes ``x`` first."""
        inv = self.reverse(versor) / self.gp(versor, self.reverse(versor))[..., :1]
        if odd:
            x = self.involute(x)
        return self.gp(self.gp(versor, x), inv)

    # -- constructors --------------------------------------------------------

    def mv(self, coeffs: Iterable[float]) -> "Multivector":
        return Multivector(np.asarray(coeffs, dtype=float), self)

    def scalar(self, value: float) -> "Multivector":
        c = np.zeros(N_BLADES)
        c[0] = value
        return Multivector(c, self)

    def vector(self, xs: Sequence[float]) -> "Multivector":
        xs = np.asarray(xs, dtype=float)
        if xs.shape not in ((3,), (4,)):
            raise ValueError(f"vector needs 3 or 4 components, got shape {xs.shape}")
        c = np.zeros(N_BLADES)
        c[1 : 1 + len(xs)] = xs
        return Multivector(c, self)

    def blade(self, name: str, value: float = 1.0) -> "Multivector":
        try:
            k = BLADE_NAMES.index(name)
        except ValueError:
            raise ValueError(f"unknown blade {name!r}; expected one of {BLADE_NAMES}") from None
        c = np.zeros(N_BLADES)
        c[k] = value
        return Multivector(c, self)

    def rotor(self, plane: str | Sequence[float], angle: float) -> "Versor":
        """Rotor exp(-angle/2 B) for a unit spatial bivector B.

        ``plane`` is a blade name (``"e12"``) or the 3 coefficients on
        (e12, e13, e23).  With ``B = e12`` the rotor turns e1 towards e2 by
        ``angle``.
        """
        if isinstance(plane, str):
            b = self.blade(plane).coeffs
        else:
            w = np.asarray(plane, dtype=float)
            b = np.zeros(N_BLADES)
            b[[5, 6, 8]] = w / np.linalg.norm(w)
        c = -np.sin(angle / 2) * b
        c[0] = np.cos(angle / 2)
        return Versor(Multivector(c, self), normalized=True)

    def reflector(self, normal: Sequence[float]) -> "Versor":
        n = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(n[:3])
        if norm == 0:
            raise ValueError("reflector normal must have a nonzero spatial part")
        return Versor(self.vector(n / norm), normalized=True)


@dataclass(frozen=True, eq=False)
class Multivector:
    """Immutable 16-coefficient multivector."""

    coeffs: np.ndarray
    algebra: Algebra = field(default_factory=Algebra.get)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (N_BLADES,):
            raise ValueError(f"multivector needs 16 coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def signature(self) -> Signature:
        return self.algebra.signature

    def _check(self, other: "Multivector") -> None:
        if self.signature != other.signature:
            raise ValueError(
                f"signature mismatch: {self.signature.astuple()} vs {other.signature.astuple()}"
            )

    def _coerce(self, other) -> "Multivector":
        if isinstance(other, Multivector):
            self._check(other)
            return other
        if np.isscalar(other):
            return self.algebra.scalar(float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Multivector(self.coeffs + other.coeffs, self.algebra)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Multivector(self.coeffs - other.coeffs, self.algebra)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Multivector(-self.coeffs, self.algebra)

    def __mul__(self, other):
        if np.isscalar(other):
            return Multivector(self.coeffs * float(other), self.algebra)
        return geometric_product(self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return Multivector(self.coeffs * float(other), self.algebra)
        return NotImplemented

    def __truediv__(self, other):
        if np.isscalar(other):
            return Multivector(self.coeffs / float(other), self.algebra)
        return NotImplemented

    def __xor__(self, other):
        return wedge(self, other)

    def __or__(self, other):
        return inner(self, other)

    def __invert__(self):
        return reverse(self)

    def __eq__(self, other):
        if not isinstance(other, Multivector):
            return NotImplemented
        return self.signature == other.signature and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.signature, self.coeffs.tobytes()))

    def isclose(self, other: "Multivector", atol: float = 1e-10) -> bool:
        self._check(other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))

    def grade(self, k: int) -> "Multivector":
        return grade_project(self, k)

    def grades(self, tol: float = 0.0) -> set[int]:
        return {int(g) for g in GRADES[np.abs(self.coeffs) > tol]}

    @property
    def scalar(self) -> float:
        return float(self.coeffs[0])

    def __repr__(self):
        terms = [
            f"{c:+.6g}" + ("" if n == "1" else n) for c, n in zip(self.coeffs, BLADE_NAMES) if c != 0
        ]
        return "Multivector(" + (" ".join(terms) if terms else "0") + ")"


def geometric_product(a: Multivector, b: Multivector) -> Multivector:
    a._check(b)
    return Multivector(a.algebra.gp(a.coeffs, b.coeffs), a.algebra)


def wedge(a: Multivector, b: Multivector) -> Multivector:
    a._check(b)
    return Multivector(a.algebra.outer(a.coeffs, b.coeffs), a.algebra)


def inner(a: Multivector, b: Multivector) -> Multivector:
    """Grade |r-s| part of the product of the grade-r and grade-s parts (scalars excluded)."""
    a._check(b)
    return Multivector(a.algebra.inner(a.coeffs, b.coeffs), a.algebra)


def reverse(a: Multivector) -> Multivector:
    return Multivector(a.algebra.reverse(a.coeffs), a.algebra)


def grade_project(a: Multivector, k: int) -> Multivector:
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= DIM:
        raise ValueError(f"grade must be an integer in 0..4, got {k!r}")
    return Multivector(np.where(GRADES == k, a.coeffs, 0.0), a.algebra)


@dataclass(frozen=True)
class Versor:
    """An invertible product of vectors acting through the sandwich product.

    ``parity`` is 0 for even versors (rotors) and 1 for odd ones
    (reflections).  Mixed-parity multivectors are rejected.
    """

    mv: Multivector
    normalized: bool = False

    def __post_init__(self):
        present = self.mv.grades(tol=0.0)
        if present and len({g % 2 for g in present}) > 1:
            raise ValueError(f"versor must have pure parity, got grades {sorted(present)}")

    @property
    def parity(self) -> int:
        present = self.mv.grades()
        return next(iter(present)) % 2 if present else 0

    @property
    def algebra(self) -> Algebra:
        return self.mv.algebra

    def norm_squared(self) -> float:
        """Scalar part of ``I ~I`` (the non-degenerate norm)."""
        return float(self.mv.algebra.gp(self.mv.coeffs, self.mv.algebra.reverse(self.mv.coeffs))[0])

    def inverse(self) -> Multivector:
        n2 = self.norm_squared()
        if abs(n2) < 1e-300 or not np.isfinite(n2):
            raise SingularVersorError(f"versor {self.mv!r} is not invertible (I~I = {n2})")
        return reverse(self.mv) / n2

    def normalize(self) -> "Versor":
        n2 = self.norm_squared()
        if abs(n2) < 1e-300:
            raise SingularVersorError("cannot normalize a null versor")
        return Versor(self.mv / np.sqrt(abs(n2)), normalized=True)

    @classmethod
    def identity(cls, algebra: Algebra | None = None) -> "Versor":
        return cls((algebra or Algebra.get()).scalar(1.0), normalized=True)


def sandwich(versor: Versor | Multivector, v: Multivector, *, reflection_sign: bool = True) -> Multivector:
    """Apply ``I v I^-1``.

    With ``reflection_sign`` (the default) odd versors act on the grade
    involution of ``v``: a vector picks up the minus sign of a reflection,
    ``-n x n^-1``, scalars stay fixed and the action composes as a group
    homomorphism.  Pass ``False`` for the plain conjugation.
    """
    if isinstance(versor, Multivector):
        versor = Versor(versor)
    versor.mv._check(v)
    if reflection_sign and versor.parity == 1:
        v = Multivector(v.algebra.involute(v.coeffs), v.algebra)
    return versor.mv * v * versor.inverse()


def compose(ops: Sequence[Versor]) -> Versor:
    """Aggregate operator ``I1 I2 ... In``; the rightmost acts first."""
    ops = list(ops)
    if not ops:
        raise ValueError("compose needs at least one versor")
    out = ops[0].mv
    for op in ops[1:]:
        out = out * op.mv
    return Versor(out, normalized=all(op.normalized for op in ops))

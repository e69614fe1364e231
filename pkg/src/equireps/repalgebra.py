"""Tensor-type algebra over a base group representation.

A feature of order m lives in the m-fold Kronecker power of the base space
R^d and transforms by rho(g) kron ... kron rho(g).  Order 0 is an invariant
scalar.  A :class:`TensorType` is a formal sum of such orders with channel
multiplicities; a :class:`TypedFeature` carries the numeric payload.

All tensor blocks are flattened row-major, fixed once so Kronecker index
arithmetic is stable everywhere else in the library.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

# Guard against accidental d^m blow-up; the deepest feature used anywhere
# in the library is order 3.
MAX_ORDER = 4

NORM_EPS = 1e-12


@dataclass(frozen=True)
class TensorType:
    """A formal sum of tensor orders: ``terms`` is ((multiplicity, order), ...)."""

    terms: tuple[tuple[int, int], ...]

    def __post_init__(self):
        orders = [m for _, m in self.terms]
        if len(set(orders)) != len(orders):
            raise ValueError(f"orders must be distinct within a type: {orders}")
        for c, m in self.terms:
            if c < 1 or m < 0:
                raise ValueError(f"bad term ({c}, {m})")

    @classmethod
    def of(cls, *terms: tuple[int, int]) -> "TensorType":
        return cls(tuple((int(c), int(m)) for c, m in terms))

    @classmethod
    def parse(cls, text: str) -> "TensorType":
        """Parse strings like "2T1", "5T0+5T1", "T1+T2+T3"."""
        terms = []
        for part in text.replace(" ", "").split("+"):
            m = re.fullmatch(r"(\d*)T(\d+)", part)
            if m is None:
                raise ValueError(f"cannot parse tensor type term {part!r}")
            mult = int(m.group(1)) if m.group(1) else 1
            terms.append((mult, int(m.group(2))))
        return cls.of(*terms)

    def multiplicity(self, order: int) -> int:
        for c, m in self.terms:
            if m == order:
                return c
        return 0

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(m for _, m in self.terms)

    def payload_length(self, d: int) -> int:
        return sum(c * d**m for c, m in self.terms)

    def __str__(self) -> str:
        return "+".join(
            (f"{c}T{m}" if c != 1 else f"T{m}") for c, m in self.terms
        )


@dataclass
class TypedFeature:
    """Numeric payload of a TensorType: one (channels, d^m) block per term."""

    type: TensorType
    d: int
    blocks: dict[int, np.ndarray]

    def __post_init__(self):
        for c, m in self.type.terms:
            b = self.blocks[m]
            if b.shape != (c, self.d**m):
                raise ValueError(
                    f"block of order {m} has shape {b.shape}, expected {(c, self.d**m)}"
                )
            if not np.all(np.isfinite(b)):
                raise ValueError(f"non-finite entries in order-{m} block")

    def block(self, order: int) -> np.ndarray:
        return self.blocks[order]

    def ravel(self) -> np.ndarray:
        return np.concatenate([self.blocks[m].ravel() for _, m in self.type.terms])

    @classmethod
    def from_ravel(cls, type: TensorType, d: int, flat: np.ndarray) -> "TypedFeature":
        blocks, at = {}, 0
        for c, m in type.terms:
            size = c * d**m
            blocks[m] = flat[at : at + size].reshape(c, d**m).copy()
            at += size
        return cls(type, d, blocks)

    def transform(self, g: np.ndarray) -> "TypedFeature":
        """Apply a group element to every block (order m acts by rho(g)^{kron m})."""
        out = {m: self.blocks[m] @ rep_matrix(g, m).T for _, m in self.type.terms}
        return TypedFeature(self.type, self.d, out)


@dataclass
class RegularFeature:
    """Order-i feature of a finite group: payload (|G|^i, batch, features).

    The group acts by permuting the leading axis; no matrices are needed.
    """

    group_size: int
    order: int
    payload: np.ndarray

    def __post_init__(self):
        if self.payload.shape[0] != self.group_size**self.order:
            raise ValueError(
                f"leading dim {self.payload.shape[0]} != |G|^i = "
                f"{self.group_size ** self.order}"
            )

    def shifted(self, s: int) -> "RegularFeature":
        """The regular action of the cyclic generator's s-th power."""
        if self.order == 1:
            return RegularFeature(
                self.group_size, 1, np.roll(self.payload, s, axis=0)
            )
        if self.order == 2:
            n = self.group_size
            grid = self.payload.reshape(n, n, *self.payload.shape[1:])
            grid = np.roll(np.roll(grid, s, axis=0), s, axis=1)
            return RegularFeature(n, 2, grid.reshape(self.payload.shape))
        raise ValueError("regular shifts implemented for orders 1 and 2 only")


def rep_matrix(g: np.ndarray, m: int) -> np.ndarray:
    """The m-fold Kronecker power of g; order 0 is the 1x1 identity."""
    if m < 0:
        raise ValueError("order must be non-negative")
    if m > MAX_ORDER:
        raise ValueError(f"order {m} exceeds ceiling {MAX_ORDER}")
    out = np.eye(1)
    for _ in range(m):
        out = np.kron(out, g)
    return out


def kron(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Kronecker product on trailing payload axes: orders add.

    ``x`` has trailing length d^m and ``y`` d^n; leading axes must agree.
    """
    prod = x[..., :, None] * y[..., None, :]
    return prod.reshape(*x.shape[:-1], x.shape[-1] * y.shape[-1])


def convert_up(x: np.ndarray, i: int, j: int, aux: np.ndarray | None = None) -> np.ndarray:
    """Raise an order-j block to order i as x^{kron k} kron aux^{kron r}.

    i = k*j + r with k = floor(i/j); ``aux`` must be an order-1 block and is
    required whenever r > 0.
    """
    if not i > j > 0:
        raise ValueError(f"need i > j > 0, got i={i}, j={j}")
    k, r = divmod(i, j)
    if r > 0 and aux is None:
        raise ValueError(f"converting T{j} -> T{i} needs an order-1 aux block (r={r})")
    out = x
    for _ in range(k - 1):
        out = kron(out, x)
    for _ in range(r):
        out = kron(out, aux)
    return out


def metric_kron_signs(signs: np.ndarray, m: int) -> np.ndarray:
    """Diagonal of eta^{kron m} for a diagonal metric with the given signs."""
    out = np.ones(1)
    for _ in range(m):
        out = np.kron(out, signs)
    return out


def invariant_norm(x: np.ndarray, signs: np.ndarray, order: int) -> np.ndarray:
    """Group-invariant norm sqrt(|x^T eta^{kron m} x| + eps) over the last axis.

    For the identity metric this is the Euclidean norm up to eps.  The
    absolute value keeps the Minkowski case well defined on negative and
    null quadratic forms without losing invariance.
    """
    w = metric_kron_signs(signs, order)
    q = np.sum(x * x * w, axis=-1)
    return np.sqrt(np.abs(q) + NORM_EPS)


def group_average(x: RegularFeature) -> np.ndarray:
    """Mean over the group dimension of an order-1 regular feature."""
    if x.order != 1:
        raise ValueError("group_average expects an order-1 regular feature")
    return x.payload.mean(axis=0)


def regular_lift(x: RegularFeature) -> RegularFeature:
    """Lift order 1 to order 2: slice (a, b) is the product of slices a and b.

    A simultaneous permutation sigma of the input slices permutes the output
    slices by (sigma, sigma).
    """
    if x.order != 1:
        raise ValueError("regular_lift expects an order-1 regular feature")
    n = x.group_size
    prod = x.payload[:, None] * x.payload[None, :]
    return RegularFeature(n, 2, prod.reshape(n * n, *x.payload.shape[1:]))

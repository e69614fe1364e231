"""Constructive universal models over pairwise invariant scalar products.

Any invariant scalar function of vectors is a function of the pairwise
inner products alone, and any equivariant vector function is a linear
combination of the inputs with invariant coefficients.  Both models below
realize this with a fixed-weight frontend: a vector layer emitting X_i + X_j
for all pairs (and each X_i), squared invariant norms, and the linear
combination recovering <X_i, X_j> = (|X_i + X_j|^2 - |X_i|^2 - |X_j|^2) / 2.
Squared norms are required for that identity to hold exactly.

Only the scalar network on top of the frontend is trainable, so the whole
model stays invariant (scalar case) or equivariant (vector case) by
construction.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .groups import GroupSpec, metric_signs
from .layers import ModelSpec, ScalarMLP
from .repalgebra import NORM_EPS, TensorType


def pair_matrix(n: int) -> np.ndarray:
    """Fixed first-layer weights: rows e_i + e_j for all (i, j), then e_i."""
    rows = []
    for i in range(n):
        for j in range(n):
            r = np.zeros(n)
            r[i] += 1.0
            r[j] += 1.0
            rows.append(r)
    rows.extend(np.eye(n))
    return np.array(rows)


def recovery_matrix(n: int) -> np.ndarray:
    """Fixed linear combination mapping squared norms to inner products."""
    m = np.zeros((n * n, n * n + n))
    for i in range(n):
        for j in range(n):
            k = i * n + j
            m[k, k] = 0.5
            m[k, n * n + i] -= 0.5
            m[k, n * n + j] -= 0.5
    return m


def inner_product_frontend(x: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """All n*n invariant products <X_i, X_j> of a block x of shape (..., d, n).

    Built exactly as the fixed-weight network computes them: combine vectors,
    take squared invariant norms, recombine.
    """
    n = x.shape[-1]
    h = x @ pair_matrix(n).T                     # (..., d, n*n + n)
    sq = np.einsum("...dk,...dk,d->...k", h, h, signs)
    return sq @ recovery_matrix(n).T


def direct_inner_products(x: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Oracle: the same n*n products straight from the bilinear form."""
    gram = np.einsum("...di,d,...dj->...ij", x, signs, x)
    return gram.reshape(*x.shape[:-2], -1)


class ScalarInvariantModel:
    """Invariant scalar regressor: fixed frontend + trainable scalar MLP."""

    def __init__(self, group: GroupSpec, n: int, hidden: int = 64,
                 depth: int = 2, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.group = group
        self.n = n
        self.signs = metric_signs(group)
        self.out_order = 0
        dims = [n * n] + [hidden] * depth + [1]
        self.mlp = ScalarMLP(dims, rng)
        self.spec = ModelSpec("universal_scalar", "o5" if group.d == 5 else "scattering",
                              group, TensorType.of((n, 1)), TensorType.of((hidden, 0)),
                              TensorType.parse("T0"), hidden, depth + 1)

    @property
    def params(self) -> list[Value]:
        return self.mlp.params

    def invariants(self, blocks: dict[int, np.ndarray]) -> np.ndarray:
        return inner_product_frontend(blocks[1], self.signs)

    def forward(self, blocks: dict[int, np.ndarray]) -> Value:
        feats = self.invariants(blocks)[:, None, :]  # (B, 1, n*n)
        return self.mlp(Value(feats))


class VectorEquivariantModel:
    """Equivariant vector regressor: sum_t f_t(<X_i, X_j>) X_t.

    The trainable scalar MLP emits one coefficient per (output, input-vector)
    pair; coefficients multiply the unit inputs, so the MLP is free to learn
    the norm factor itself.  ``extra_scalars`` appends task invariants (for
    example charges) to the MLP input.
    """

    def __init__(self, group: GroupSpec, n: int, n_outputs: int = 1,
                 hidden: int = 64, depth: int = 2, n_extra: int = 0, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.group = group
        self.n = n
        self.n_outputs = n_outputs
        self.signs = metric_signs(group)
        self.out_order = 1
        dims = [n * n + n_extra] + [hidden] * depth + [n_outputs * n]
        self.mlp = ScalarMLP(dims, rng)
        self.spec = ModelSpec("universal_vector", "nbody" if n_extra else "vecfit",
                              group, TensorType.of((n, 1)), TensorType.of((hidden, 0)),
                              TensorType.of((n_outputs, 1)), hidden, depth + 1)

    @property
    def params(self) -> list[Value]:
        return self.mlp.params

    @staticmethod
    def combine(x: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """Frozen-coefficient readout: columns of ``x`` (..., d, n) weighted
        by rows of ``coeffs`` (k, n)."""
        return np.einsum("kt,...dt->...dk", coeffs, x)

    def forward(self, blocks: dict[int, np.ndarray],
                extra_scalars: np.ndarray | None = None) -> Value:
        x = blocks[1]                                        # (B, d, n)
        feats = inner_product_frontend(x, self.signs)
        if extra_scalars is not None:
            feats = np.concatenate([feats, extra_scalars], axis=-1)
        u = self.mlp(Value(feats[:, None, :]))               # (B, 1, n * n_outputs)
        u = ad.reshape(u, (x.shape[0], self.n, self.n_outputs))
        q = np.einsum("bdt,bdt,d->bt", x, x, self.signs)[:, None, :]
        unit = x / np.sqrt(np.abs(q) + NORM_EPS)
        return ad.batch_matmul(Value(unit), u)               # (B, d, n_outputs)

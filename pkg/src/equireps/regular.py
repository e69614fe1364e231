"""Regular-representation path for finite groups.

A regular feature carries a leading group axis; the group acts by permuting
it.  Wrapping any base network means applying it independently to every
slice of that axis (shared weights), so a permutation of input slices
permutes the outputs bitwise.  Averaging the wrapped outputs over the group
axis realizes symmetrization with group inverses: the inverse action of g
applied to the whole feature reads out slice g, so the average over inverses
is the average over slices, and the result is invariant under the regular
action.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .groups import Family, GroupSpec
from .layers import ScalarMLP
from .repalgebra import RegularFeature, group_average, regular_lift


def regular_wrap_forward(base, x: RegularFeature) -> RegularFeature:
    """Apply ``base`` to each slice of the group axis, exactly slice by slice."""
    slices = [np.asarray(base(x.payload[s])) for s in range(x.payload.shape[0])]
    return RegularFeature(x.group_size, x.order, np.stack(slices, axis=0))


def equitune_average(x: RegularFeature, group: GroupSpec) -> np.ndarray:
    """Symmetrize over the group: average with group inverses along the group axis.

    Slices must be plain feature vectors (the group acts only by permuting
    the axis), which makes the inverse action on each slice a read-out, and
    the symmetrized output the group-axis mean.
    """
    if group.family is not Family.CYCLIC or group.n != x.group_size:
        raise ValueError(f"expected C{x.group_size}, got {group}")
    if x.order != 1:
        raise ValueError("equitune_average expects an order-1 regular feature")
    return group_average(x)


def diagonal_orbit_average(x: RegularFeature) -> np.ndarray:
    """Equituning for order-2 features: average with inverses of the (g, g) action.

    The cyclic action on an order-2 regular feature shifts both pair indices
    together, so its orbits are the diagonals at fixed offset.  Averaging a
    slice grid over inverse shifts leaves one invariant value per offset:
    output[k] = mean_g x[g, g + k].
    """
    if x.order != 2:
        raise ValueError("diagonal_orbit_average expects an order-2 regular feature")
    n = x.group_size
    grid = x.payload.reshape(n, n, *x.payload.shape[1:])
    return np.stack([np.mean([grid[g, (g + k) % n] for g in range(n)], axis=0)
                     for k in range(n)])


def offset_rows(payload: np.ndarray) -> np.ndarray:
    """Rows of the lifted pair grid, columns aligned by cyclic offset.

    Row g concatenates x_g * x_{g+k} for k = 0..n-1, so a shift of the group
    axis permutes rows without touching their contents; the ordered offsets
    keep a necklace distinguishable from its reversal, which plain per-offset
    pooling cannot do (elementwise products commute).
    """
    batch, n, feats = payload.shape
    cols = [payload * np.roll(payload, -k, axis=1) for k in range(n)]
    return np.concatenate(cols, axis=2)


class WrappedClassifier:
    """Regular classifier: lift to pair products, wrap an MLP, equitune.

    A shared scalar MLP runs over the group axis of the offset-aligned lift
    rows (the group dimension is treated like a batch dimension) and the
    logits are averaged with group inverses, so cyclic shifts of the input
    change nothing while the cyclic order of the slices, which full shuffling
    destroys, stays visible.
    """

    def __init__(self, group_size: int, features: int, classes: int,
                 hidden: int = 32, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.group_size = group_size
        self.mlp = ScalarMLP([group_size * features, hidden, hidden, classes], rng)

    @property
    def params(self) -> list[Value]:
        return self.mlp.params

    def forward(self, payload: np.ndarray) -> Value:
        batch, n, feats = payload.shape
        if n != self.group_size:
            raise ValueError(f"expected group axis {self.group_size}, got {payload.shape}")
        rows = offset_rows(payload)
        logits = [self.mlp(Value(rows[:, g, None, :])) for g in range(n)]
        total = logits[0]
        for piece in logits[1:]:
            total = ad.add(total, piece)
        return total * (1.0 / n)


class FlatClassifier:
    """Baseline: one MLP over the flattened group axis, no weight sharing."""

    def __init__(self, group_size: int, features: int, classes: int,
                 hidden: int = 32, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.group_size = group_size
        self.features = features
        self.mlp = ScalarMLP([group_size * features, hidden, hidden, classes], rng)

    @property
    def params(self) -> list[Value]:
        return self.mlp.params

    def forward(self, payload: np.ndarray) -> Value:
        flat = payload.reshape(payload.shape[0], 1, -1)
        return self.mlp(Value(flat))

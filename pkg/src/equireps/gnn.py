"""Message-passing networks for the charged N-body task.

Nodes carry channels of 3-vectors (position, velocity); edges carry the
invariant charge product.  The equivariant variant keeps node features as
vector channels end to end: edge messages combine a bias-free vector stack
with an invariant scalar network through the usual mixing rule, node updates
are bias-free vector stacks, so rotating or reflecting every input vector
rotates every output.  The plain variant is the same message-passing layout
on flattened coordinates with ordinary MLPs everywhere.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .groups import parse_group
from .layers import ChannelLinear, ModelSpec, ScalarMLP, mix
from .repalgebra import TensorType


def complete_edges(n_nodes: int):
    """Ordered pairs (i, j), i != j, grouped by destination i."""
    dst, src = [], []
    for i in range(n_nodes):
        for j in range(n_nodes):
            if i != j:
                dst.append(i)
                src.append(j)
    return np.array(dst, dtype=np.int64), np.array(src, dtype=np.int64)


def _cm(weight, start: int, width: int, x):
    """Apply a column slice of a concat-weight matrix: weight[:, start:+width] @ x."""
    return ad.channel_matmul(ad.narrow(weight, 1, start, width), x)


_EDGE_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _edge_index(batch: int, n_nodes: int):
    """Edge metadata for a folded (batch * n_nodes) node axis.

    Destination-major ordering: dst rows are plain repeats and per-node
    aggregation is a contiguous group sum, so only the src side needs a
    gather.
    """
    key = (batch, n_nodes)
    if key not in _EDGE_CACHE:
        dst, src = complete_edges(n_nodes)
        offs = np.arange(batch)[:, None] * n_nodes
        _EDGE_CACHE[key] = (dst, src, (offs + src).ravel())
    return _EDGE_CACHE[key]


class EquivariantGNN:
    """T1 message passing: invariant edge scalars gate bias-free vector messages."""

    def __init__(self, channels: int = 16, n_layers: int = 4, seed: int = 0):
        rng = np.random.default_rng(seed)
        c = channels
        self.channels = c
        self.ones = np.ones(3)
        self.embed = ChannelLinear(c, 2, rng)
        self.layers = []
        for _ in range(n_layers):
            self.layers.append({
                "edge_t0": ScalarMLP([2 * c + 1, c, c], rng),
                "edge_t1": ChannelLinear(c, 2 * c, rng),
                "node": ChannelLinear(c, 2 * c, rng),
            })
        self.readout = ChannelLinear(1, c, rng)
        self.out_order = 1
        self.spec = ModelSpec("grepsgnn", "nbody", parse_group("O(3)"),
                              TensorType.parse("2T1"), TensorType.of((c, 1)),
                              TensorType.parse("T1"), c, n_layers)

    @property
    def params(self) -> list[Value]:
        out = list(self.embed.params)
        for layer in self.layers:
            out.extend(layer["edge_t0"].params)
            out.extend(layer["edge_t1"].params)
            out.extend(layer["node"].params)
        out.extend(self.readout.params)
        return out

    def forward(self, positions: np.ndarray, velocities: np.ndarray,
                charges: np.ndarray) -> Value:
        batch, n_nodes, _ = positions.shape
        x = np.stack([positions, velocities], axis=-1).reshape(batch * n_nodes, 3, 2)
        h = self.embed(Value(x))
        if n_nodes == 1:
            for layer in self.layers:
                agg = Value(np.zeros_like(h.data))
                h = layer["node"](ad.concat([h, agg], axis=2))
            return ad.reshape(self.readout(h), (batch, n_nodes, 3))

        dst, src, fsrc = _edge_index(batch, n_nodes)
        attrs = Value((charges[:, dst] * charges[:, src]).reshape(-1, 1, 1))
        c, k = self.channels, n_nodes - 1
        for layer in self.layers:
            # concat-weight maps evaluated per endpoint on node rows, then
            # lifted to edges: W [x_dst; x_src] == repeat(A x) + gather(B x)
            w_e = layer["edge_t1"].weight
            m1 = ad.add(ad.repeat_rows(_cm(w_e, 0, c, h), k),
                        ad.gather_rows(_cm(w_e, c, c, h), fsrc))
            norms = ad.metric_norm(h, self.ones)
            w_s = layer["edge_t0"].weights[0]
            t = ad.add(ad.repeat_rows(_cm(w_s, 0, c, norms), k),
                       ad.gather_rows(_cm(w_s, c, c, norms), fsrc))
            t = ad.add(t, _cm(w_s, 2 * c, 1, attrs))
            t = ad.relu(ad.bias_add(t, layer["edge_t0"].biases[0]))
            m0 = ad.bias_add(ad.channel_matmul(layer["edge_t0"].weights[1], t),
                             layer["edge_t0"].biases[1])
            m = mix(m1, m0, self.ones)
            agg = ad.group_sum_rows(m, k)
            w_n = layer["node"].weight
            h = ad.add(_cm(w_n, 0, c, h), _cm(w_n, c, c, agg))
        out = self.readout(h)
        return ad.reshape(out, (batch, n_nodes, 3))


class PlainMPNN:
    """Same message-passing layout on flattened features; not equivariant."""

    def __init__(self, width: int = 24, n_layers: int = 4, seed: int = 0):
        rng = np.random.default_rng(seed)
        w = width
        self.width = w
        self.embed = ScalarMLP([6, w], rng)
        self.layers = []
        for _ in range(n_layers):
            self.layers.append({
                "edge": ScalarMLP([2 * w + 1, w, w], rng),
                "node": ScalarMLP([2 * w, w, w], rng),
            })
        self.readout = ScalarMLP([w, 3], rng)
        self.out_order = 1
        self.spec = ModelSpec("mpnn", "nbody", parse_group("O(3)"),
                              TensorType.parse("2T1"), TensorType.of((w, 0)),
                              TensorType.parse("T1"), w, n_layers)

    @property
    def params(self) -> list[Value]:
        out = list(self.embed.params)
        for layer in self.layers:
            out.extend(layer["edge"].params)
            out.extend(layer["node"].params)
        out.extend(self.readout.params)
        return out

    def forward(self, positions: np.ndarray, velocities: np.ndarray,
                charges: np.ndarray) -> Value:
        batch, n_nodes, _ = positions.shape
        x = np.concatenate([positions, velocities], axis=2).reshape(batch * n_nodes, 1, 6)
        h = self.embed(Value(x))
        if n_nodes == 1:
            for layer in self.layers:
                agg = Value(np.zeros_like(h.data))
                h = layer["node"](ad.concat([h, agg], axis=2))
            return ad.reshape(self.readout(h), (batch, n_nodes, 3))

        dst, src, fsrc = _edge_index(batch, n_nodes)
        attrs = Value((charges[:, dst] * charges[:, src]).reshape(-1, 1, 1))
        w, k = self.width, n_nodes - 1
        for layer in self.layers:
            w_e = layer["edge"].weights[0]
            t = ad.add(ad.repeat_rows(_cm(w_e, 0, w, h), k),
                       ad.gather_rows(_cm(w_e, w, w, h), fsrc))
            t = ad.add(t, _cm(w_e, 2 * w, 1, attrs))
            t = ad.relu(ad.bias_add(t, layer["edge"].biases[0]))
            m = ad.bias_add(ad.channel_matmul(layer["edge"].weights[1], t),
                            layer["edge"].biases[1])
            agg = ad.group_sum_rows(m, k)
            w_n = layer["node"].weights[0]
            t = ad.relu(ad.bias_add(ad.add(_cm(w_n, 0, w, h), _cm(w_n, w, w, agg)),
                                    layer["node"].biases[0]))
            h = ad.bias_add(ad.channel_matmul(layer["node"].weights[1], t),
                            layer["node"].biases[1])
        out = self.readout(h)
        return ad.reshape(out, (batch, n_nodes, 3))


def mpnn_width_for_budget(budget: int, n_layers: int = 4) -> int:
    """Smallest width whose PlainMPNN matches or exceeds ``budget`` params."""
    w = 2
    while True:
        model = PlainMPNN(width=w, n_layers=n_layers, seed=0)
        if sum(p.data.size for p in model.params) >= budget:
            return w
        w += 1


def gnn_equivariance_violation(model, positions, velocities, charges,
                               g: np.ndarray) -> float:
    """Relative gap between rotate-then-forward and forward-then-rotate."""
    y = model.forward(positions, velocities, charges).data
    y_t = model.forward(positions @ g.T, velocities @ g.T, charges).data
    return float(np.linalg.norm(y_t - y @ g.T) / (1.0 + np.linalg.norm(y)))

"""Task models: equivariant nets for the regression tasks plus MLP baselines.

Every model here consumes a dict mapping tensor order -> numpy array of
shape (batch, d**order, channels) and returns a Value of the same layout in
the declared output type.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .groups import Family, GroupSpec, metric_signs, parse_group
from .layers import ChannelLinear, ModelSpec, ScalarMLP, mix, norm_remix
from .repalgebra import TensorType, metric_kron_signs, rep_matrix


def count_params(params) -> int:
    return int(sum(p.data.size for p in params))


def transform_blocks(blocks: dict[int, np.ndarray], g: np.ndarray) -> dict[int, np.ndarray]:
    """Apply a group element to every block (payload axis transforms by g^kron m)."""
    return {m: np.einsum("ij,bjc->bic", rep_matrix(g, m), x) for m, x in blocks.items()}


class VectorNormNet:
    """Invariant regressor on T1 channels: 5 bias-free linear layers.

    Three channel-mixing layers on vectors, each followed by multiplication
    with the channel's own invariant norm, then norms feed two scalar layers
    with a ReLU between.  The Lorentz variant only swaps the metric.
    """

    def __init__(self, spec: ModelSpec, seed: int = 0):
        rng = np.random.default_rng(seed)
        c = spec.channels
        in_c = spec.input_type.multiplicity(1)
        self.spec = spec
        self.out_order = 0
        self.signs = metric_signs(spec.group)
        self.w1 = ChannelLinear(c, in_c, rng)
        self.w2 = ChannelLinear(c, c, rng)
        self.w3 = ChannelLinear(c, c, rng)
        self.w4 = ChannelLinear(c, c, rng)
        self.w5 = ChannelLinear(1, c, rng)

    @property
    def params(self) -> list[Value]:
        return [self.w1.weight, self.w2.weight, self.w3.weight,
                self.w4.weight, self.w5.weight]

    def forward(self, blocks: dict[int, np.ndarray]) -> Value:
        h = Value(blocks[1])
        for w in (self.w1, self.w2, self.w3):
            h = norm_remix(w(h), self.signs)
        s = ad.metric_norm(h, self.signs)
        return self.w5(ad.relu(self.w4(s)))


class MixedOrderNet:
    """Equivariant T2 regressor with hidden orders 0..3.

    The first layer expands scalars and vectors into all four orders (scalar
    times identity for T2, outer powers of the vectors for T2/T3); two
    residual blocks re-enrich and mix; a bias-free T2 head reads out.
    """

    def __init__(self, spec: ModelSpec, seed: int = 0):
        rng = np.random.default_rng(seed)
        c = spec.channels
        d = spec.group.d
        n0 = spec.input_type.multiplicity(0)
        n1 = spec.input_type.multiplicity(1)
        self.spec = spec
        self.out_order = 2
        self.d = d
        base = metric_signs(spec.group)
        self.signs = {m: metric_kron_signs(base, m) for m in (1, 2, 3)}

        self.expand_t0 = ScalarMLP([n0 + n1, c, c], rng)
        self.expand_w1 = {1: ChannelLinear(c, n1, rng),
                          2: ChannelLinear(c, n0 + n1, rng),
                          3: ChannelLinear(c, n1, rng)}
        self.expand_w2 = {m: ChannelLinear(c, c, rng) for m in (1, 2, 3)}

        self.blocks = []
        for _ in range(2):
            blk = {
                "t0": ScalarMLP([4 * c, c, c], rng),
                "w1": {1: ChannelLinear(c, c, rng),
                       2: ChannelLinear(c, 3 * c, rng),
                       3: ChannelLinear(c, 2 * c, rng)},
                "w2": {m: ChannelLinear(c, c, rng) for m in (1, 2, 3)},
            }
            self.blocks.append(blk)
        self.head = ChannelLinear(1, c, rng)

    @property
    def params(self) -> list[Value]:
        out = list(self.expand_t0.params)
        for m in (1, 2, 3):
            out.extend(self.expand_w1[m].params)
            out.extend(self.expand_w2[m].params)
        for blk in self.blocks:
            out.extend(blk["t0"].params)
            for m in (1, 2, 3):
                out.extend(blk["w1"][m].params)
                out.extend(blk["w2"][m].params)
        out.extend(self.head.params)
        return out

    def _mixed_path(self, w1, w2, raw: Value, y0: Value, order: int,
                    residual: Value | None = None) -> Value:
        y = w2(mix(w1(raw), y0, self.signs[order]))
        if residual is not None:
            y = ad.add(y, residual)
        return y

    def forward(self, blocks: dict[int, np.ndarray]) -> Value:
        x0 = Value(blocks[0])
        x1 = Value(blocks[1])

        # expanding layer: T0+T1 in, T0..T3 out
        y0 = self.expand_t0(ad.concat([x0, ad.metric_norm(x1, self.signs[1])], axis=2))
        sq = ad.outer_payload(x1, x1)
        raw2 = ad.concat([ad.embed_identity(x0, self.d), sq], axis=2)
        raw3 = ad.outer_payload(sq, x1)
        h = {
            0: y0,
            1: self._mixed_path(self.expand_w1[1], self.expand_w2[1], x1, y0, 1),
            2: self._mixed_path(self.expand_w1[2], self.expand_w2[2], raw2, y0, 2),
            3: self._mixed_path(self.expand_w1[3], self.expand_w2[3], raw3, y0, 3),
        }

        for blk in self.blocks:
            norms = [h[0]] + [ad.metric_norm(h[m], self.signs[m]) for m in (1, 2, 3)]
            y0 = blk["t0"](ad.concat(norms, axis=2))
            sq = ad.outer_payload(h[1], h[1])
            raw2 = ad.concat([ad.embed_identity(h[0], self.d), sq, h[2]], axis=2)
            raw3 = ad.concat([ad.outer_payload(sq, h[1]), h[3]], axis=2)
            h = {
                0: y0,
                1: self._mixed_path(blk["w1"][1], blk["w2"][1], h[1], y0, 1, residual=h[1]),
                2: self._mixed_path(blk["w1"][2], blk["w2"][2], raw2, y0, 2, residual=h[2]),
                3: self._mixed_path(blk["w1"][3], blk["w2"][3], raw3, y0, 3, residual=h[3]),
            }
        return self.head(h[2])


class MLP:
    """Plain baseline: flattens every block and runs dense layers with ReLU."""

    def __init__(self, spec: ModelSpec, seed: int = 0):
        rng = np.random.default_rng(seed)
        d = spec.group.d
        in_dim = spec.input_type.payload_length(d)
        out_dim = spec.output_type.payload_length(d)
        dims = [in_dim] + [spec.channels] * (spec.layers - 1) + [out_dim]
        self.spec = spec
        self.out_order = max(spec.output_type.orders)
        self._out_shape = (d**self.out_order, spec.output_type.multiplicity(self.out_order))
        self.weights = [ad.uniform_param(rng, (dims[i], dims[i + 1]), dims[i])
                        for i in range(len(dims) - 1)]
        self.biases = [ad.uniform_param(rng, (dims[i + 1],), dims[i])
                       for i in range(len(dims) - 1)]

    @property
    def params(self) -> list[Value]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def forward(self, blocks: dict[int, np.ndarray]) -> Value:
        flat = np.concatenate(
            [blocks[m].reshape(blocks[m].shape[0], -1) for m in sorted(blocks)], axis=1
        )
        x = Value(flat)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = ad.bias_add(ad.matmul(x, w), b)
            if i < len(self.weights) - 1:
                x = ad.relu(x)
        return ad.reshape(x, (flat.shape[0], *self._out_shape))


def mlp_width_for_budget(in_dim: int, out_dim: int, n_layers: int, budget: int) -> int:
    """Smallest hidden width whose biased MLP has at least ``budget`` params."""

    def params(w: int) -> int:
        dims = [in_dim] + [w] * (n_layers - 1) + [out_dim]
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))

    w = 1
    while params(w) < budget:
        w += 1
    return w


TASK_TYPES = {
    "o5": ("O(5)", "2T1", "T0"),
    "inertia": ("O(3)", "5T0+5T1", "T2"),
    "scattering": ("O(1,3)", "4T1", "T0"),
}


def build_o5_model(channels: int = 100, seed: int = 0) -> VectorNormNet:
    spec = ModelSpec("grepsnet", "o5", parse_group("O(5)"), TensorType.parse("2T1"),
                     TensorType.of((channels, 1)), TensorType.parse("T0"), channels, 5)
    return VectorNormNet(spec, seed)


def build_o13_model(channels: int = 100, seed: int = 0) -> VectorNormNet:
    spec = ModelSpec("grepsnet", "scattering", parse_group("O(1,3)"),
                     TensorType.parse("4T1"), TensorType.of((channels, 1)),
                     TensorType.parse("T0"), channels, 5)
    return VectorNormNet(spec, seed)


def build_o3_model(channels: int = 32, seed: int = 0) -> MixedOrderNet:
    spec = ModelSpec("grepsnet", "inertia", parse_group("O(3)"),
                     TensorType.parse("5T0+5T1"),
                     TensorType.of((channels, 0), (channels, 1), (channels, 2), (channels, 3)),
                     TensorType.parse("T2"), channels, 4)
    return MixedOrderNet(spec, seed)


def build_task_mlp(task: str, width: int, seed: int = 0, n_layers: int = 5) -> MLP:
    group, in_t, out_t = TASK_TYPES[task]
    spec = ModelSpec("mlp", task, parse_group(group), TensorType.parse(in_t),
                     TensorType.of((width, 0)), TensorType.parse(out_t), width, n_layers)
    return MLP(spec, seed)


def equivariance_violation(model, blocks: dict[int, np.ndarray], g: np.ndarray) -> float:
    """Relative gap between transform-then-apply and apply-then-transform."""
    y = model.forward(blocks).data
    y_t = model.forward(transform_blocks(blocks, g)).data
    expected = np.einsum("ij,bjc->bic", rep_matrix(g, model.out_order), y)
    return float(np.linalg.norm(y_t - expected) / (1.0 + np.linalg.norm(y)))

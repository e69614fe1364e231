"""Layer primitives for typed-tensor networks.

Features move through a model as dicts mapping tensor order -> Value of
shape (batch, d**order, channels); order-0 blocks keep a payload axis of 1.
Order-0 paths may use any network (inputs are invariant), higher orders only
channel-mixing linear maps without bias or pointwise nonlinearity, plus the
mixing rule that scales an equivariant block by an invariant scalar over the
block's own invariant norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .groups import GroupSpec, parse_group
from .repalgebra import TensorType, metric_kron_signs


@dataclass
class ModelSpec:
    """Declarative description of a model, canonical enough to rebuild it."""

    kind: str
    task: str
    group: GroupSpec
    input_type: TensorType
    hidden_type: TensorType
    output_type: TensorType
    channels: int
    layers: int

    def to_string(self) -> str:
        return (
            f"kind={self.kind} task={self.task} group={self.group} "
            f"in={self.input_type} hidden={self.hidden_type} "
            f"out={self.output_type} channels={self.channels} layers={self.layers}"
        )

    @classmethod
    def from_string(cls, text: str) -> "ModelSpec":
        kv = dict(item.split("=", 1) for item in text.split())
        return cls(
            kind=kv["kind"],
            task=kv["task"],
            group=parse_group(kv["group"]),
            input_type=TensorType.parse(kv["in"]),
            hidden_type=TensorType.parse(kv["hidden"]),
            output_type=TensorType.parse(kv["out"]),
            channels=int(kv["channels"]),
            layers=int(kv["layers"]),
        )


class ChannelLinear:
    """Bias-free channel mixing of an order-i block stack.

    The only learnable map allowed on orders >= 1: no bias and no pointwise
    nonlinearity are representable here.
    """

    def __init__(self, out_channels: int, in_channels: int, rng: np.random.Generator):
        self.weight = ad.uniform_param(rng, (out_channels, in_channels), in_channels)

    @property
    def params(self) -> list[Value]:
        return [self.weight]

    def __call__(self, x: Value) -> Value:
        return ad.channel_matmul(self.weight, x)


class ScalarMLP:
    """Order-0 network: linear layers with bias and ReLU between them."""

    def __init__(self, dims: list[int], rng: np.random.Generator, bias: bool = True):
        self.weights = []
        self.biases = []
        for i in range(len(dims) - 1):
            self.weights.append(ad.uniform_param(rng, (dims[i + 1], dims[i]), dims[i]))
            self.biases.append(
                ad.uniform_param(rng, (1, dims[i + 1]), dims[i]) if bias else None
            )

    @property
    def params(self) -> list[Value]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            if b is not None:
                out.append(b)
        return out

    def __call__(self, x: Value) -> Value:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = ad.channel_matmul(w, x)
            if b is not None:
                x = ad.bias_add(x, b)
            if i < len(self.weights) - 1:
                x = ad.relu(x)
        return x


def mix(h: Value, y0: Value, signs: np.ndarray) -> Value:
    """Scale each channel of ``h`` by the invariant y0 / invariant_norm(h).

    ``signs`` is the metric diagonal already raised to the block's order.
    Channel counts of ``h`` (B, D, c) and ``y0`` (B, 1, c) must be equal.
    """
    return ad.mix_scale(h, y0, signs)


def norm_remix(h: Value, signs: np.ndarray) -> Value:
    """Simplified mixing: gate each channel by its own invariant norm.

    The scale factor is n / (1 + n) rather than the bare norm: multiplying
    by the norm itself makes a stack of these layers high-degree homogeneous
    in the input scale, which both blows up in training and cannot represent
    non-homogeneous targets.  The bounded gate keeps the layer equivariant
    and parameter-free while breaking the scale degeneracy.
    """
    return ad.norm_gate(h, signs)


class TensorBlock:
    """General typed block: one T0 network plus a (W1, mix, W2) pair per order.

    The T0 path concatenates native scalars with the invariant norms of every
    higher order (ascending) and runs them through the scalar MLP; each
    order-i path is W2(mix(W1 x, Y0)).  Residuals are added per order when
    input and output channel counts match.
    """

    def __init__(self, in_channels: dict[int, int], out_channels: int,
                 metric_signs: np.ndarray, rng: np.random.Generator,
                 residual: bool = False):
        self.orders = sorted(m for m in in_channels if m > 0)
        self.in_channels = dict(in_channels)
        self.out_channels = out_channels
        self.residual = residual
        self.signs = {m: metric_kron_signs(metric_signs, m) for m in self.orders}
        t0_in = in_channels.get(0, 0) + sum(in_channels[m] for m in self.orders)
        self.t0 = ScalarMLP([t0_in, out_channels, out_channels], rng)
        self.w1 = {m: ChannelLinear(out_channels, in_channels[m], rng) for m in self.orders}
        self.w2 = {m: ChannelLinear(out_channels, out_channels, rng) for m in self.orders}

    @property
    def params(self) -> list[Value]:
        out = list(self.t0.params)
        for m in self.orders:
            out.extend(self.w1[m].params)
            out.extend(self.w2[m].params)
        return out

    def __call__(self, blocks: dict[int, Value]) -> dict[int, Value]:
        scalars = []
        if 0 in self.in_channels:
            scalars.append(blocks[0])
        for m in self.orders:
            scalars.append(ad.metric_norm(blocks[m], self.signs[m]))
        y0 = self.t0(ad.concat(scalars, axis=2) if len(scalars) > 1 else scalars[0])

        out: dict[int, Value] = {}
        for m in self.orders:
            h = self.w1[m](blocks[m])
            y = self.w2[m](mix(h, y0, self.signs[m]))
            if self.residual and self.in_channels[m] == self.out_channels:
                y = ad.add(y, blocks[m])
            out[m] = y
        if 0 in self.in_channels and self.residual and self.in_channels[0] == self.out_channels:
            y0 = ad.add(y0, blocks[0])
        out[0] = y0
        return out

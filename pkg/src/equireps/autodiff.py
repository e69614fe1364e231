"""Reverse-mode differentiation over float64 numpy arrays.

A Value wraps an array and records its producers; ``backward`` runs the
chain rule in reverse topological order.  Elementwise ops require equal
shapes or a python scalar; the only broadcasts are explicit fused ops
(bias_add, channel_scale, metric_norm, embed_identity) so shapes stay
auditable.  Repeated backward calls accumulate grads until zero_grad.
"""

from __future__ import annotations

import numpy as np


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Value:
    __slots__ = ("data", "grad", "op", "parents", "_backward")

    def __init__(self, data, parents=(), op="leaf"):
        self.data = _as_array(data)
        self.grad = None
        self.op = op
        self.parents = parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def _accum(self, g):
        # grads are never mutated in place, so adopting the array is safe
        if self.grad is None:
            self.grad = g if isinstance(g, np.ndarray) else _as_array(g)
        else:
            self.grad = self.grad + g

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
        topo, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Value(shape={self.shape}, op={self.op!r})"

    # -- elementwise arithmetic (equal shapes or python scalar) --

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self.shape), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)


def _lift(x, like_shape=None) -> Value:
    if isinstance(x, Value):
        return x
    arr = _as_array(x)
    if like_shape is not None and arr.ndim == 0:
        arr = np.full(like_shape, float(arr))
    return Value(arr)


def _check_elementwise(a: Value, b) -> Value:
    b = _lift(b)
    if b.data.ndim != 0 and a.data.ndim != 0 and b.shape != a.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return b


def add(a: Value, b) -> Value:
    a = _lift(a)
    b = _check_elementwise(a, b)
    out = Value(a.data + b.data, (a, b), "add")

    def _bw(g):
        a._accum(_sum_to(g, a.shape))
        b._accum(_sum_to(g, b.shape))

    out._backward = _bw
    return out


def sub(a: Value, b) -> Value:
    a = _lift(a)
    b = _check_elementwise(a, b)
    out = Value(a.data - b.data, (a, b), "sub")

    def _bw(g):
        a._accum(_sum_to(g, a.shape))
        b._accum(-_sum_to(g, b.shape))

    out._backward = _bw
    return out


def mul(a: Value, b) -> Value:
    a = _lift(a)
    b = _check_elementwise(a, b)
    out = Value(a.data * b.data, (a, b), "mul")

    def _bw(g):
        a._accum(_sum_to(g * b.data, a.shape))
        b._accum(_sum_to(g * a.data, b.shape))

    out._backward = _bw
    return out


def div(a: Value, b) -> Value:
    a = _lift(a)
    b = _check_elementwise(a, b)
    out = Value(a.data / b.data, (a, b), "div")

    def _bw(g):
        a._accum(_sum_to(g / b.data, a.shape))
        b._accum(_sum_to(-g * a.data / (b.data * b.data), b.shape))

    out._backward = _bw
    return out


def neg(a: Value) -> Value:
    out = Value(-a.data, (a,), "neg")
    out._backward = lambda g: a._accum(-g)
    return out


def _sum_to(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient produced under scalar broadcast back to ``shape``."""
    g = _as_array(g)
    if g.shape == tuple(shape):
        return g
    if shape == ():
        return g.sum()
    # only scalar-vs-array broadcasting is ever allowed
    raise AssertionError(f"unexpected broadcast {g.shape} -> {shape}")


# -- unary maps --


def relu(a: Value) -> Value:
    out = Value(np.maximum(a.data, 0.0), (a,), "relu")
    out._backward = lambda g: a._accum(g * (a.data > 0))
    return out


def sin(a: Value) -> Value:
    out = Value(np.sin(a.data), (a,), "sin")
    out._backward = lambda g: a._accum(g * np.cos(a.data))
    return out


def sqrt(a: Value) -> Value:
    out = Value(np.sqrt(a.data), (a,), "sqrt")
    out._backward = lambda g: a._accum(g * 0.5 / out.data)
    return out


def square(a: Value) -> Value:
    out = Value(a.data * a.data, (a,), "square")
    out._backward = lambda g: a._accum(g * 2.0 * a.data)
    return out


def absolute(a: Value) -> Value:
    out = Value(np.abs(a.data), (a,), "abs")
    out._backward = lambda g: a._accum(g * np.sign(a.data))
    return out


# -- reductions --


def vsum(a: Value, axis=None, keepdims=False) -> Value:
    out = Value(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum")

    def _bw(g):
        if axis is None:
            a._accum(np.broadcast_to(g, a.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            a._accum(np.broadcast_to(ge, a.shape).copy())

    out._backward = _bw
    return out


def vmean(a: Value, axis=None, keepdims=False) -> Value:
    count = a.data.size if axis is None else a.data.shape[axis]
    out = Value(a.data.mean(axis=axis, keepdims=keepdims), (a,), "mean")

    def _bw(g):
        if axis is None:
            a._accum(np.broadcast_to(g / count, a.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            a._accum(np.broadcast_to(ge / count, a.shape).copy())

    out._backward = _bw
    return out


# -- linear algebra --


def matmul(a: Value, b: Value) -> Value:
    """Plain 2-d matrix product (B, n) @ (n, m)."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-d operands")
    out = Value(a.data @ b.data, (a, b), "matmul")

    def _bw(g):
        a._accum(g @ b.data.T)
        b._accum(a.data.T @ g)

    out._backward = _bw
    return out


def channel_matmul(w: Value, h: Value) -> Value:
    """Mix channels of a block stack: (c_out, c_in) x (B, D, c_in) -> (B, D, c_out).

    Blocks keep channels last so this is a single reshaped matrix product
    with no transposes on either pass.
    """
    if w.data.ndim != 2 or h.data.ndim != 3:
        raise ValueError("channel_matmul expects (c_out, c_in) and (B, D, c_in)")
    b, d, c = h.shape
    o = w.shape[0]
    out = Value((h.data.reshape(b * d, c) @ w.data.T).reshape(b, d, o),
                (w, h), "channel_matmul")

    def _bw(g):
        gf = g.reshape(b * d, o)
        hf = h.data.reshape(b * d, c)
        w._accum(gf.T @ hf)
        h._accum((gf @ w.data).reshape(b, d, c))

    out._backward = _bw
    return out


def batch_matmul(a: Value, b: Value) -> Value:
    """Batched matrix product (B, m, k) @ (B, k, n) -> (B, m, n)."""
    if a.data.ndim != 3 or b.data.ndim != 3 or a.shape[0] != b.shape[0]:
        raise ValueError(f"batch_matmul shapes {a.shape} vs {b.shape}")
    out = Value(np.matmul(a.data, b.data), (a, b), "batch_matmul")

    def _bw(g):
        a._accum(np.matmul(g, b.data.transpose(0, 2, 1)))
        b._accum(np.matmul(a.data.transpose(0, 2, 1), g))

    out._backward = _bw
    return out


def gather_rows(a: Value, idx: np.ndarray) -> Value:
    """Select rows along axis 0; backward scatter-adds."""
    out = Value(a.data[idx], (a,), "gather")

    def _bw(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        a._accum(buf)

    out._backward = _bw
    return out


def scatter_sum_rows(a: Value, idx: np.ndarray, n_rows: int) -> Value:
    """Sum rows of ``a`` into ``n_rows`` bins given by ``idx`` (axis 0)."""
    buf = np.zeros((n_rows, *a.shape[1:]))
    np.add.at(buf, idx, a.data)
    out = Value(buf, (a,), "scatter_sum")
    out._backward = lambda g: a._accum(g[idx])
    return out


def repeat_rows(a: Value, k: int) -> Value:
    """Repeat each row k times along axis 0 (contiguous groups)."""
    out = Value(np.repeat(a.data, k, axis=0), (a,), "repeat_rows")
    out._backward = lambda g: a._accum(
        g.reshape(a.shape[0], k, *a.shape[1:]).sum(axis=1))
    return out


def group_sum_rows(a: Value, k: int) -> Value:
    """Sum each contiguous group of k rows along axis 0."""
    if a.shape[0] % k:
        raise ValueError(f"{a.shape[0]} rows not divisible by group size {k}")
    n = a.shape[0] // k
    out = Value(a.data.reshape(n, k, *a.shape[1:]).sum(axis=1), (a,), "group_sum")
    out._backward = lambda g: a._accum(np.repeat(g, k, axis=0))
    return out


def bias_add(a: Value, b: Value) -> Value:
    """Add a parameter of shape a.shape[1:], broadcast over the batch axis."""
    if b.shape != a.shape[1:]:
        raise ValueError(f"bias shape {b.shape} != feature shape {a.shape[1:]}")
    out = Value(a.data + b.data, (a, b), "bias_add")

    def _bw(g):
        a._accum(g)
        b._accum(g.sum(axis=0))

    out._backward = _bw
    return out


def outer_payload(a: Value, b: Value) -> Value:
    """Kronecker product of payload axes: (B, m, c), (B, n, c) -> (B, m*n, c)."""
    if a.data.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ValueError(f"incompatible block shapes: {a.shape} vs {b.shape}")
    bs, m, c = a.shape
    n = b.shape[1]
    out_data = (a.data[:, :, None, :] * b.data[:, None, :, :]).reshape(bs, m * n, c)
    out = Value(out_data, (a, b), "outer")

    def _bw(g):
        gg = g.reshape(bs, m, n, c)
        a._accum(np.einsum("bmnc,bnc->bmc", gg, b.data))
        b._accum(np.einsum("bmnc,bmc->bnc", gg, a.data))

    out._backward = _bw
    return out


def concat(parts: list[Value], axis: int) -> Value:
    out = Value(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), "concat")
    sizes = [p.data.shape[axis] for p in parts]

    def _bw(g):
        at = 0
        for p, s in zip(parts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(at, at + s)
            p._accum(g[tuple(idx)])
            at += s

    out._backward = _bw
    return out


def narrow(a: Value, axis: int, start: int, length: int) -> Value:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Value(a.data[idx].copy(), (a,), "slice")

    def _bw(g):
        buf = np.zeros_like(a.data)
        buf[idx] = g
        a._accum(buf)

    out._backward = _bw
    return out


def swap_last2(a: Value) -> Value:
    """Transpose the trailing two axes of a 3-d Value."""
    out = Value(np.ascontiguousarray(a.data.transpose(0, 2, 1)), (a,), "swap")
    out._backward = lambda g: a._accum(np.ascontiguousarray(g.transpose(0, 2, 1)))
    return out


def reshape(a: Value, shape) -> Value:
    out = Value(a.data.reshape(shape), (a,), "reshape")
    out._backward = lambda g: a._accum(g.reshape(a.shape))
    return out


# -- fused block ops --


def channel_scale(h: Value, s: Value) -> Value:
    """Scale each channel's block by a scalar: (B, D, c) * (B, 1, c)."""
    if s.shape != (h.shape[0], 1, h.shape[2]):
        raise ValueError(f"scale shape {s.shape} != {(h.shape[0], 1, h.shape[2])}")
    out = Value(h.data * s.data, (h, s), "channel_scale")

    def _bw(g):
        h._accum(g * s.data)
        s._accum((g * h.data).sum(axis=1, keepdims=True))

    out._backward = _bw
    return out


def metric_norm(h: Value, signs: np.ndarray, eps: float = 1e-12) -> Value:
    """Invariant norm over the payload axis: sqrt(|sum_d w_d h_d^2| + eps).

    ``h`` is (B, D, c); ``signs`` is the diagonal of the (Kronecker-power)
    metric, a constant.  Output is (B, 1, c).
    """
    w = np.asarray(signs, dtype=np.float64)
    euclidean = np.all(w == 1.0)
    if euclidean:
        q = np.einsum("bdc,bdc->bc", h.data, h.data)[:, None, :]
    else:
        q = np.einsum("bdc,bdc,d->bc", h.data, h.data, w)[:, None, :]
    n = np.sqrt(np.abs(q) + eps)
    out = Value(n, (h,), "metric_norm")

    def _bw(g):
        # d n / d h = sign(q) * w * h / n
        factor = g * np.sign(q) / n
        grad = h.data * factor
        if not euclidean:
            grad *= w[:, None]
        h._accum(grad)

    out._backward = _bw
    return out


def mix_scale(h: Value, y0: Value, signs: np.ndarray, eps: float = 1e-12) -> Value:
    """Fused mixing rule: h * y0 / invariant_norm(h) in a single graph node.

    ``h`` is (B, D, c), ``y0`` is (B, 1, c); channel counts must match.
    """
    if y0.shape != (h.shape[0], 1, h.shape[2]):
        raise ValueError(f"mixing scalars {y0.shape} don't match blocks {h.shape}")
    w = np.asarray(signs, dtype=np.float64)
    euclidean = np.all(w == 1.0)
    if euclidean:
        q = np.einsum("bdc,bdc->bc", h.data, h.data)[:, None, :]
    else:
        q = np.einsum("bdc,bdc,d->bc", h.data, h.data, w)[:, None, :]
    n = np.sqrt(np.abs(q) + eps)
    s = y0.data / n
    out = Value(h.data * s, (h, y0), "mix")

    def _bw(g):
        dot = np.einsum("bdc,bdc->bc", g, h.data)[:, None, :]
        y0._accum(dot / n)
        grad = g * s - (dot * s * np.sign(q) / (n * n)) * (h.data if euclidean
                                                          else h.data * w[:, None])
        h._accum(grad)

    out._backward = _bw
    return out


def norm_gate(h: Value, signs: np.ndarray, eps: float = 1e-12) -> Value:
    """Fused self-gating: h * n / (1 + n) with n the invariant payload norm."""
    w = np.asarray(signs, dtype=np.float64)
    euclidean = np.all(w == 1.0)
    if euclidean:
        q = np.einsum("bdc,bdc->bc", h.data, h.data)[:, None, :]
    else:
        q = np.einsum("bdc,bdc,d->bc", h.data, h.data, w)[:, None, :]
    n = np.sqrt(np.abs(q) + eps)
    s = n / (1.0 + n)
    out = Value(h.data * s, (h,), "norm_gate")

    def _bw(g):
        dot = np.einsum("bdc,bdc->bc", g, h.data)[:, None, :]
        # d s / d n = 1 / (1 + n)^2, d n / d h = sign(q) w h / n
        factor = dot * np.sign(q) / ((1.0 + n) ** 2 * n)
        grad = g * s + factor * (h.data if euclidean else h.data * w[:, None])
        h._accum(grad)

    out._backward = _bw
    return out


def embed_identity(s: Value, d: int) -> Value:
    """Lift scalars to order-2 blocks: (B, 1, c) -> (B, d*d, c) as s * vec(I)."""
    if s.data.ndim != 3 or s.shape[1] != 1:
        raise ValueError("embed_identity expects (B, 1, c) scalars")
    eye = np.eye(d).reshape(d * d, 1)
    out = Value(s.data * eye, (s,), "embed_identity")
    out._backward = lambda g: s._accum((g * eye).sum(axis=1, keepdims=True))
    return out


def mse(pred: Value, target: np.ndarray) -> Value:
    diff = sub(pred, Value(target))
    return vmean(square(diff))


# -- parameters and optimizers --


def uniform_param(rng: np.random.Generator, shape, fan_in: int) -> Value:
    bound = 1.0 / np.sqrt(fan_in)
    return Value(rng.uniform(-bound, bound, size=shape))


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


class StepLR:
    """Multiply the learning rate by gamma every ``step_size`` epochs."""

    def __init__(self, step_size: int, gamma: float = 0.1):
        self.step_size = step_size
        self.gamma = gamma

    def lr_at(self, base_lr: float, epoch: int) -> float:
        return base_lr * self.gamma ** (epoch // self.step_size)


class SGD:
    def __init__(self, params, lr: float, momentum: float = 0.0,
                 scheduler: StepLR | None = None):
        self.params = list(params)
        self.base_lr = lr
        self.lr = lr
        self.momentum = momentum
        self.scheduler = scheduler
        self._vel = [np.zeros_like(p.data) for p in self.params]

    def set_epoch(self, epoch: int) -> None:
        if self.scheduler is not None:
            self.lr = self.scheduler.lr_at(self.base_lr, epoch)

    def step(self) -> None:
        for p, v in zip(self.params, self._vel):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data = p.data - self.lr * v


class Adam:
    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, scheduler: StepLR | None = None):
        self.params = list(params)
        self.base_lr = lr
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.scheduler = scheduler
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self._t = 0

    def set_epoch(self, epoch: int) -> None:
        if self.scheduler is not None:
            self.lr = self.scheduler.lr_at(self.base_lr, epoch)

    def step(self) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self._t
        bc2 = 1.0 - b2**self._t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad * p.grad
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def first_nonfinite_op(root: Value) -> str | None:
    """Provenance tag of the earliest non-finite node reachable from ``root``."""
    topo, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    for node in topo:  # topo lists leaves first
        if not np.all(np.isfinite(node.data)):
            return node.op
    return None


def finite_difference_grad(loss_fn, params, h: float = 1e-5):
    """Central-difference gradients of a scalar loss over Value parameters."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            dn = loss_fn()
            flat[i] = orig
            gflat[i] = (up - dn) / (2 * h)
        grads.append(g)
    return grads

"""Dense float64 tensors with taped reverse-mode automatic differentiation.

Every differentiable operation appends one node to a module-level tape in
execution order, so inputs always precede their consumers. ``backward``
replays the tape exactly once in reverse and then marks it consumed; the
contract is one backward per recorded tape, with :func:`clear_tape` between
training steps (a second backward raises :class:`GraphError`). Forward passes
that never need gradients should run under :func:`no_grad`, which skips
recording entirely.

There is no implicit broadcasting: elementwise operations demand identical
shapes and every shape adaptation (``repeat``, ``pad_tail``, ``stack``,
``slice_axis``) is an explicit operation with its own backward rule.

Set ``TPRNN_DEBUG=1`` to assert that every forward result is finite.
"""

from __future__ import annotations

import contextlib
import os
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, GraphError

Array = np.ndarray

_CHECK_FINITE = os.environ.get("TPRNN_DEBUG", "") == "1"


class Tensor:
    """A dense float64 array plus reverse-mode bookkeeping.

    ``grad`` is populated by :func:`backward` and holds an array of the same
    shape as ``data``. Tensors whose values are set and that are not part of
    a pending tape are immutable by convention and safe to share.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            # ascontiguousarray would promote 0-d to 1-d; 0-d is always contiguous
            arr = np.ascontiguousarray(arr)
        self.data: Array = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)


class _Node:
    __slots__ = ("out", "inputs", "backward_fn")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


_nodes: list[_Node] = []
_consumed = False
_recording = True


def clear_tape() -> None:
    """Forget all recorded operations and re-arm backward."""
    global _consumed
    _nodes.clear()
    _consumed = False


def tape_size() -> int:
    return len(_nodes)


@contextlib.contextmanager
def no_grad():
    """Context manager that disables tape recording."""
    global _recording
    prev = _recording
    _recording = False
    try:
        yield
    finally:
        _recording = prev


def record_op(data: Array, inputs: Sequence[Tensor],
              backward_fn: Callable[[Array], tuple]) -> Tensor:
    """Wrap an op result, recording a tape node when gradients are needed.

    ``backward_fn`` maps the output gradient to one gradient (or None) per
    input. Returned gradient arrays must be freshly allocated or equal to the
    incoming gradient; accumulation never mutates them in place.
    """
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError("forward operation produced non-finite values")
    out = Tensor(data)
    if _recording and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _nodes.append(_Node(out, tuple(inputs), backward_fn))
    return out


def backward(loss: Tensor, params: Sequence[Tensor] | None = None) -> None:
    """Populate ``.grad`` on every tensor the scalar ``loss`` depends on.

    Gradients accumulate into existing ``.grad`` values, so callers zero them
    between steps. Tensors listed in ``params`` that the loss never touched
    receive an all-zero gradient. The tape is consumed afterwards; a second
    call without :func:`clear_tape` raises.
    """
    global _consumed
    if loss.data.ndim != 0:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if _consumed:
        raise GraphError("tape already consumed by a previous backward; call clear_tape() first")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any recorded operation")
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(_nodes):
        g = node.out.grad
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward_fn(g)):
            if gi is None or not t.requires_grad:
                continue
            t.grad = gi if t.grad is None else t.grad + gi
    _consumed = True
    if params is not None:
        for p in params:
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros_like(p.data)


def zero_grads(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard 2-d matrix product."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-d operands, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return record_op(ad @ bd, (a, b), bwd)


def ewise(op: str, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add/sub/mul on identically shaped tensors."""
    if op not in ("add", "sub", "mul"):
        raise ConfigError(f"unknown elementwise op '{op}'")
    if a.shape != b.shape:
        raise DimensionError(f"ewise {op} shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    if op == "add":
        return record_op(ad + bd, (a, b), lambda g: (g, g))
    if op == "sub":
        return record_op(ad - bd, (a, b), lambda g: (g, -g))
    return record_op(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def add(a: Tensor, b: Tensor) -> Tensor:
    return ewise("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return ewise("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return ewise("mul", a, b)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a plain Python constant (not differentiated through)."""
    c = float(c)
    return record_op(x.data * c, (x,), lambda g: (g * c,))


def _stable_sigmoid(x: Array) -> Array:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))


def activation(kind: str, x: Tensor) -> Tensor:
    """Elementwise sigmoid or tanh; saturation is legal and overflow-safe."""
    if kind == "sigmoid":
        y = _stable_sigmoid(x.data)
        return record_op(y, (x,), lambda g: (g * y * (1.0 - y),))
    if kind == "tanh":
        y = np.tanh(x.data)
        return record_op(y, (x,), lambda g: (g * (1.0 - y * y),))
    raise ConfigError(f"unknown activation '{kind}'")


def sigmoid(x: Tensor) -> Tensor:
    return activation("sigmoid", x)


def tanh(x: Tensor) -> Tensor:
    return activation("tanh", x)


def affine(x: Tensor, w: Tensor, b: Tensor | None = None, axis: str = "feature") -> Tensor:
    """Linear map along one axis of a (length, channels) tensor.

    axis="feature": ``y = x @ w (+ b)`` with w (D, D') and b (D',) added per
    row. axis="time": w (L, L') contracts the time axis, shared across
    channels, ``y = w.T @ x (+ b)`` with b (L',) added per channel.
    """
    if x.ndim != 2 or w.ndim != 2:
        raise DimensionError(f"affine needs 2-d x and w, got {x.shape} and {w.shape}")
    xd, wd = x.data, w.data
    if axis == "feature":
        if x.shape[1] != w.shape[0]:
            raise DimensionError(
                f"affine feature-axis mismatch: x {x.shape} vs w {w.shape}")
        y = xd @ wd
        if b is not None:
            if b.shape != (w.shape[1],):
                raise DimensionError(f"affine bias shape {b.shape}, expected ({w.shape[1]},)")
            y = y + b.data[None, :]

        def bwd(g):
            return (g @ wd.T if x.requires_grad else None,
                    xd.T @ g if w.requires_grad else None,
                    g.sum(axis=0) if b is not None and b.requires_grad else None)
    elif axis == "time":
        if x.shape[0] != w.shape[0]:
            raise DimensionError(
                f"affine time-axis mismatch: x {x.shape} vs w {w.shape}")
        y = wd.T @ xd
        if b is not None:
            if b.shape != (w.shape[1],):
                raise DimensionError(f"affine bias shape {b.shape}, expected ({w.shape[1]},)")
            y = y + b.data[:, None]

        def bwd(g):
            return (wd @ g if x.requires_grad else None,
                    xd @ g.T if w.requires_grad else None,
                    g.sum(axis=1) if b is not None and b.requires_grad else None)
    else:
        raise ConfigError(f"affine axis must be 'feature' or 'time', got '{axis}'")

    inputs = (x, w) if b is None else (x, w, b)
    return record_op(y, inputs, bwd)


def conv1d(x: Tensor, conv_kernels: Tensor, stride: int) -> Tensor:
    """Depthwise 1-d convolution: kernel column d slides over channel d only."""
    if stride < 1:
        raise ConfigError(f"conv1d stride must be positive, got {stride}")
    if x.ndim != 2 or conv_kernels.ndim != 2:
        raise DimensionError(
            f"conv1d needs 2-d x and kernels, got {x.shape} and {conv_kernels.shape}")
    if x.shape[1] != conv_kernels.shape[1]:
        raise DimensionError(
            f"conv1d channel mismatch: x {x.shape} vs kernels {conv_kernels.shape}")
    if x.shape[0] < conv_kernels.shape[0]:
        raise DimensionError(
            f"conv1d input length {x.shape[0]} shorter than kernel {conv_kernels.shape[0]}")
    xd, kd = x.data, conv_kernels.data
    y = kernels.conv1d_fwd(xd, kd, stride)

    def bwd(g):
        dx, dk = kernels.conv1d_bwd(np.ascontiguousarray(g), xd, kd, stride)
        return (dx if x.requires_grad else None,
                dk if conv_kernels.requires_grad else None)

    return record_op(y, (x, conv_kernels), bwd)


def pool1d(mode: str, x: Tensor, k: int, stride: int) -> Tensor:
    """Windowed per-channel reduction. Max/min route gradient to the first
    extremal position in each window; avg distributes 1/k."""
    if mode not in ("max", "min", "avg"):
        raise ConfigError(f"unknown pooling mode '{mode}'")
    if k < 1 or stride < 1:
        raise ConfigError(f"pool1d window/stride must be positive, got k={k} stride={stride}")
    if x.ndim != 2:
        raise DimensionError(f"pool1d needs a 2-d input, got {x.shape}")
    if x.shape[0] < k:
        raise DimensionError(f"pool1d input length {x.shape[0]} shorter than window {k}")
    xd = x.data
    length = xd.shape[0]
    if mode == "avg":
        y = kernels.pool_avg_fwd(xd, k, stride)

        def bwd(g):
            return (kernels.pool_avg_bwd(np.ascontiguousarray(g), length, k, stride),)
    else:
        fwd = kernels.pool_max_fwd if mode == "max" else kernels.pool_min_fwd
        y, arg = fwd(xd, k, stride)

        def bwd(g):
            return (kernels.pool_extreme_bwd(np.ascontiguousarray(g), arg, length),)

    return record_op(y, (x,), bwd)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Stack equally shaped tensors along a new axis."""
    if len(tensors) == 0:
        raise DimensionError("stack needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise DimensionError(f"stack shape mismatch: {shape} vs {t.shape}")
    if not 0 <= axis <= len(shape):
        raise DimensionError(f"stack axis {axis} out of range for shape {shape}")
    y = np.stack([t.data for t in tensors], axis=axis)

    def bwd(g):
        return tuple(np.take(g, i, axis=axis) if t.requires_grad else None
                     for i, t in enumerate(tensors))

    return record_op(y, tuple(tensors), bwd)


def slice_axis(x: Tensor, axis: int, index: int) -> Tensor:
    """Select one index along an axis, removing that axis."""
    if not 0 <= axis < x.ndim:
        raise DimensionError(f"slice axis {axis} out of range for shape {x.shape}")
    if not 0 <= index < x.shape[axis]:
        raise DimensionError(f"slice index {index} out of range for shape {x.shape}")
    sel = [slice(None)] * x.ndim
    sel[axis] = index
    sel = tuple(sel)
    xshape = x.shape

    def bwd(g):
        dx = np.zeros(xshape, dtype=np.float64)
        dx[sel] = g
        return (dx,)

    return record_op(x.data[sel], (x,), bwd)


def repeat(x: Tensor, count: int, axis: int = 0) -> Tensor:
    """Insert a new axis of extent ``count`` by replication (explicit broadcast)."""
    if count < 1:
        raise ConfigError(f"repeat count must be positive, got {count}")
    if not 0 <= axis <= x.ndim:
        raise DimensionError(f"repeat axis {axis} out of range for shape {x.shape}")
    y = np.repeat(np.expand_dims(x.data, axis), count, axis=axis)
    return record_op(y, (x,), lambda g: (g.sum(axis=axis),))


def pad_tail(x: Tensor, count: int) -> Tensor:
    """Replicate the last time row ``count`` times (right replicate-padding)."""
    if count < 0:
        raise ConfigError(f"pad_tail count must be non-negative, got {count}")
    if x.ndim != 2:
        raise DimensionError(f"pad_tail needs a 2-d input, got {x.shape}")
    if count == 0:
        return x
    length = x.shape[0]
    y = np.concatenate([x.data, np.repeat(x.data[-1:], count, axis=0)], axis=0)

    def bwd(g):
        dx = g[:length].copy()
        dx[-1] += g[length:].sum(axis=0)
        return (dx,)

    return record_op(y, (x,), bwd)


def axis_combine(stacked: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """Weighted sum over the leading axis: ``y = sum_k w[k] * stacked[k] (+ bias)``.

    ``w`` is 1-d with one weight per slice; ``bias``, when given, is a scalar
    added uniformly. This is the shared primitive behind branch mixing and
    scale fusion.
    """
    if w.ndim != 1:
        raise DimensionError(f"axis_combine weights must be 1-d, got {w.shape}")
    if stacked.ndim < 1 or stacked.shape[0] != w.shape[0]:
        raise DimensionError(
            f"axis_combine count mismatch: stacked {stacked.shape} vs weights {w.shape}")
    if bias is not None and bias.shape != ():
        raise DimensionError(f"axis_combine bias must be a scalar, got shape {bias.shape}")
    sd, wd = stacked.data, w.data
    y = np.tensordot(wd, sd, axes=(0, 0))
    if bias is not None:
        y = y + bias.data

    def bwd(g):
        ds = np.multiply.outer(wd, g) if stacked.requires_grad else None
        dw = sd.reshape(wd.shape[0], -1) @ g.ravel() if w.requires_grad else None
        db = (np.asarray(g.sum()) if bias is not None and bias.requires_grad else None)
        return (ds, dw, db)

    inputs = (stacked, w) if bias is None else (stacked, w, bias)
    return record_op(y, inputs, bwd)


def dropout(x: Tensor, p: float, training: bool,
            rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Identity (the same tensor object, no arithmetic) when not training or
    p == 0. The sampled mask is reused by the backward rule.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs a seeded generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return record_op(x.data * mask, (x,), lambda g: (g * mask,))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}")
    old = x.shape
    return record_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def sum_all(x: Tensor) -> Tensor:
    """Full reduction to a scalar tensor."""
    shape = x.shape
    return record_op(np.asarray(x.data.sum()), (x,),
                     lambda g: (np.full(shape, float(g)),))


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / x.size)


def abs_(x: Tensor) -> Tensor:
    """Elementwise absolute value with subgradient 0 at exact zeros."""
    xd = x.data
    return record_op(np.abs(xd), (x,), lambda g: (g * np.sign(xd),))


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------

def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor],
               eps: float = 1e-5, projection: str = "random", seed: int = 0) -> float:
    """Compare taped gradients of ``f`` against central finite differences.

    ``f`` must be deterministic (dropout off) and built from the ops in this
    module. Its output is reduced to a scalar by a fixed random projection
    (or plain sum with ``projection="sum"``); the numeric side re-runs the
    forward pass per coordinate, so it is independent of every backward rule.
    Returns ``max |analytic - numeric| / max(1, |numeric|)`` over all
    coordinates of all inputs.
    """
    if projection not in ("random", "sum"):
        raise ConfigError(f"unknown projection '{projection}'")
    rng = np.random.default_rng(seed)

    clear_tape()
    zero_grads(inputs)
    for t in inputs:
        t.requires_grad = True
    out = f(*inputs)
    weights = (rng.standard_normal(out.shape) if projection == "random"
               else np.ones(out.shape))

    def scalar_of(o: Tensor) -> float:
        return float((o.data * weights).sum())

    loss = sum_all(mul(out, Tensor(weights)))
    backward(loss, params=inputs)
    analytic = [np.array(t.grad) for t in inputs]
    clear_tape()

    worst = 0.0
    with no_grad():
        for t, ana in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                f_plus = scalar_of(f(*inputs))
                flat[j] = orig - eps
                f_minus = scalar_of(f(*inputs))
                flat[j] = orig
                numeric = (f_plus - f_minus) / (2.0 * eps)
                err = abs(ana.reshape(-1)[j] - numeric) / max(1.0, abs(numeric))
                worst = max(worst, err)
    return worst

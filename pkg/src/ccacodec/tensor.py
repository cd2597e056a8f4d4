"""Dense tensors with tape-based reverse-mode differentiation.

Every forward op goes through :func:`forward_op`, which looks the kind up in
the op registry, checks the result for NaN/Inf and, when any input is tracked,
attaches a node holding the backward closure.  :func:`backward` orders the
nodes reachable from a scalar loss into a :class:`ComputationTape` and replays
it in reverse.

Gradients never accumulate silently: calling :func:`backward` while a tracked
leaf still holds a gradient raises :class:`GradientStateError`.  Use
:func:`zero_grads` between steps.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from scipy import special

from . import kernels

DEFAULT_DTYPE = np.float64

_node_counter = itertools.count()


class ShapeError(ValueError):
    """Input shapes are invalid for the requested op."""


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf."""


class GradientStateError(RuntimeError):
    """backward() was called on a loss whose leaves already hold gradients."""


class _Node:
    __slots__ = ("kind", "inputs", "backward_fn", "seq")

    def __init__(self, kind, inputs, backward_fn):
        self.kind = kind
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.seq = next(_node_counter)


class Tensor:
    """An n-dimensional float array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "_node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        if dtype is None:
            floating = isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64)
            dtype = data.dtype if floating else DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: _Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))


# ---------------------------------------------------------------------------
# op registry and dispatch

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]
OpImpl = Callable[..., tuple[np.ndarray, BackwardFn]]

OPS: dict[str, OpImpl] = {}


def register_op(kind: str):
    """Register ``impl(*arrays, **attrs) -> (out, backward)`` under ``kind``.

    ``backward(grad_out)`` returns one gradient (or None) per input array.
    """

    def deco(fn: OpImpl) -> OpImpl:
        if kind in OPS:
            raise ValueError(f"op {kind!r} already registered")
        OPS[kind] = fn
        return fn

    return deco


def forward_op(kind: str, inputs: Sequence, **attrs) -> Tensor:
    try:
        impl = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    tensors = tuple(as_tensor(t) for t in inputs)
    out, bwd = impl(*(t.data for t in tensors), **attrs)
    if not np.all(np.isfinite(out)):
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise NonFiniteError(f"{kind}: non-finite output for inputs of shape {shapes}")
    res = Tensor(out, dtype=out.dtype)
    if any(t.requires_grad for t in tensors):
        res.requires_grad = True
        res._node = _Node(kind, tensors, bwd)
    return res


# ---------------------------------------------------------------------------
# tape and backward


@dataclass
class ComputationTape:
    """Nodes reachable from a loss, inputs always before consumers."""

    ops: list[Tensor] = field(default_factory=list)
    valid: bool = False

    @classmethod
    def from_loss(cls, loss: Tensor) -> "ComputationTape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(loss, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t._node is not None:
                for parent in t._node.inputs:
                    if parent.requires_grad and id(parent) not in seen:
                        stack.append((parent, False))
        tape = cls(order)
        tape.valid = tape.check()
        return tape

    def check(self) -> bool:
        pos = {id(t): i for i, t in enumerate(self.ops)}
        for i, t in enumerate(self.ops):
            if t._node is None:
                continue
            for p in t._node.inputs:
                if p.requires_grad and pos.get(id(p), len(self.ops)) >= i:
                    return False
        return len(pos) == len(self.ops)

    def leaves(self) -> list[Tensor]:
        return [t for t in self.ops if t._node is None]


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every tracked leaf reachable from ``loss``."""
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GradientStateError("backward: loss does not depend on any tracked tensor")
    tape = ComputationTape.from_loss(loss)
    if not tape.valid:
        raise RuntimeError("backward: tape is not topologically ordered")
    stale = [t for t in tape.leaves() if t.grad is not None]
    if stale:
        names = ", ".join(t.name or repr(t) for t in stale[:3])
        raise GradientStateError(
            f"backward: {len(stale)} leaf gradient(s) already populated ({names}); "
            "call zero_grads first")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(tape.ops):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t._node is None:
            t.grad = g if t.grad is None else t.grad + g
            continue
        in_grads = t._node.backward_fn(g)
        for parent, pg in zip(t._node.inputs, in_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ShapeError(f"{t._node.kind}: backward produced {pg.shape} "
                                 f"for input {parent.shape}")
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# helpers


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


@register_op("add")
def _add(a, b):
    _check_broadcast("add", a, b)
    return a + b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


@register_op("subtract")
def _sub(a, b):
    _check_broadcast("subtract", a, b)
    return a - b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))


@register_op("multiply")
def _mul(a, b):
    _check_broadcast("multiply", a, b)
    return a * b, lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))


@register_op("divide")
def _div(a, b):
    _check_broadcast("divide", a, b)
    out = a / b
    return out, lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * out / b, b.shape))


@register_op("negate")
def _neg(a):
    return -a, lambda g: (-g,)


@register_op("square")
def _square(a):
    return a * a, lambda g: (2.0 * a * g,)


@register_op("exp")
def _exp(a):
    out = np.exp(a)
    return out, lambda g: (g * out,)


@register_op("log")
def _log(a):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a)
    return out, lambda g: (g / a,)


@register_op("abs")
def _abs(a):
    return np.abs(a), lambda g: (g * np.sign(a),)


@register_op("tanh")
def _tanh(a):
    out = np.tanh(a)
    return out, lambda g: (g * (1.0 - out * out),)


@register_op("sigmoid")
def _sigmoid(a):
    out = special.expit(a)
    return out, lambda g: (g * out * (1.0 - out),)


@register_op("softplus")
def _softplus(a):
    out = np.logaddexp(0.0, a)
    return out, lambda g: (g * special.expit(a),)


@register_op("gelu")
def _gelu(a):
    cdf = special.ndtr(a)
    out = a * cdf
    return out, lambda g: (g * (cdf + a * np.exp(-0.5 * a * a) / np.sqrt(2.0 * np.pi)),)


@register_op("leaky_relu")
def _leaky_relu(a, slope=0.01):
    pos = a > 0
    return np.where(pos, a, slope * a), lambda g: (np.where(pos, g, slope * g),)


@register_op("lower_bound")
def _lower_bound(a, bound):
    out = np.maximum(a, bound)

    def bwd(g):
        # let gradients through when they push a clamped value back up
        return (np.where((a >= bound) | (g < 0), g, 0.0),)

    return out, bwd


@register_op("round_ste")
def _round_ste(a):
    return np.round(a), lambda g: (g,)


@register_op("add_uniform_noise")
def _add_noise(a, seed, index):
    return a + uniform_noise(a.shape, seed, index, a.dtype), lambda g: (g,)


@register_op("detach")
def _detach(a):
    return a.copy(), lambda g: (None,)


# ---------------------------------------------------------------------------
# reductions and shape ops


@register_op("sum")
def _sum(a, axis=None, keepdims=False):
    out = np.sum(a, axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return np.asarray(out), bwd


@register_op("mean")
def _mean(a, axis=None, keepdims=False):
    out = np.mean(a, axis=axis, keepdims=keepdims)
    count = a.size // max(np.size(out), 1)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return np.asarray(out), bwd


@register_op("global_avg_pool")
def _gap(a):
    if a.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected NCHW input, got {a.shape}")
    hw = a.shape[2] * a.shape[3]
    return a.mean(axis=(2, 3), keepdims=True), \
        lambda g: (np.broadcast_to(g / hw, a.shape).copy(),)


@register_op("reshape")
def _reshape(a, shape):
    return a.reshape(shape), lambda g: (g.reshape(a.shape),)


@register_op("concat")
def _concat(*arrays, axis=1):
    if not arrays:
        raise ShapeError("concat: no inputs")
    ref = arrays[0].shape
    for arr in arrays[1:]:
        if arr.ndim != len(ref) or any(arr.shape[i] != ref[i]
                                       for i in range(len(ref)) if i != axis % len(ref)):
            raise ShapeError(f"concat: incompatible shapes {[x.shape for x in arrays]}")
    out = np.concatenate(arrays, axis=axis)
    bounds = np.cumsum([x.shape[axis] for x in arrays])[:-1]
    return out, lambda g: tuple(np.split(g, bounds, axis=axis))


@register_op("slice_channels")
def _slice_channels(a, start, stop):
    if not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"slice_channels: [{start}:{stop}] outside {a.shape[1]} channels")

    def bwd(g):
        full = np.zeros_like(a)
        full[:, start:stop] = g
        return (full,)

    return a[:, start:stop].copy(), bwd


# ---------------------------------------------------------------------------
# linear algebra and convolutions


@register_op("matmul")
def _matmul(a, b):
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = np.matmul(a, b)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b, -1, -2))
        gb = np.matmul(np.swapaxes(a, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return out, bwd


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_output_size(size: int, kernel: int, stride: int, padding: int,
                               output_padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel + output_padding


def _im2col(xp, kh, kw, stride, ho, wo):
    return kernels.im2col(np.ascontiguousarray(xp, dtype=np.float64), kh, kw, stride, ho, wo)


def _col2im(cols, shape, kh, kw, stride, ho, wo):
    """Scatter-add (n*ho*wo, c*kh*kw) columns into a zero array of ``shape``."""
    return kernels.col2im(np.ascontiguousarray(cols, dtype=np.float64), tuple(shape), kh, kw,
                          stride, ho, wo)


@register_op("conv2d")
def _conv2d(x, w, b=None, stride=1, padding=0):
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias {b.shape} does not match {w.shape[0]} outputs")
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(wd, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: input {x.shape} too small for kernel {w.shape}")
    w2 = w.reshape(o, -1)
    if kh == kw == 1 and stride == 1 and padding == 0:
        cols = x.transpose(0, 2, 3, 1).reshape(-1, c)
        xp_shape = None
    else:
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        xp_shape = xp.shape
        cols = _im2col(xp, kh, kw, stride, ho, wo)
    out = cols @ w2.T
    if b is not None:
        out += b
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))

    def bwd(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (g2.T @ cols).reshape(w.shape)
        gcols = g2 @ w2
        if xp_shape is None:
            gx = np.ascontiguousarray(gcols.reshape(n, h, wd, c).transpose(0, 3, 1, 2))
        else:
            gxp = _col2im(gcols, xp_shape, kh, kw, stride, ho, wo)
            gx = gxp[:, :, padding:padding + h, padding:padding + wd] if padding else gxp
            gx = np.ascontiguousarray(gx)
        gb = g2.sum(axis=0) if b is not None else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    return out, bwd


@register_op("conv_transpose2d")
def _conv_transpose2d(x, w, b=None, stride=1, padding=0, output_padding=0):
    # weight layout: (in_channels, out_channels, kh, kw)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"conv_transpose2d: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"conv_transpose2d: bias {b.shape} does not match {w.shape[1]} outputs")
    if not 0 <= output_padding < max(stride, 1) + (1 if stride == 1 else 0):
        raise ShapeError(f"conv_transpose2d: output_padding {output_padding} invalid for stride {stride}")
    n, c, h, wd = x.shape
    _, o, kh, kw = w.shape
    ho = conv_transpose_output_size(h, kh, stride, padding, output_padding)
    wo = conv_transpose_output_size(wd, kw, stride, padding, output_padding)
    full_h = max((h - 1) * stride + kh, padding + ho)
    full_w = max((wd - 1) * stride + kw, padding + wo)
    w2 = w.reshape(c, -1)
    xr = x.transpose(0, 2, 3, 1).reshape(-1, c)
    full = _col2im(xr @ w2, (n, o, full_h, full_w), kh, kw, stride, h, wd)
    out = np.ascontiguousarray(full[:, :, padding:padding + ho, padding:padding + wo])
    if b is not None:
        out += b[None, :, None, None]

    def bwd(g):
        gfull = np.zeros((n, o, full_h, full_w), dtype=g.dtype)
        gfull[:, :, padding:padding + ho, padding:padding + wo] = g
        gcols = _im2col(gfull, kh, kw, stride, h, wd)
        gx = np.ascontiguousarray((gcols @ w2.T).reshape(n, h, wd, c).transpose(0, 3, 1, 2))
        gw = (xr.T @ gcols).reshape(w.shape)
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return out, bwd


@register_op("depthwise_conv2d")
def _depthwise_conv2d(x, w, b=None, padding=0):
    # weight layout: (channels, kh, kw); stride 1
    if x.ndim != 4 or w.ndim != 3 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"depthwise_conv2d: input {x.shape} incompatible with weight {w.shape}")
    n, c, h, wd = x.shape
    _, kh, kw = w.shape
    ho = conv_output_size(h, kh, 1, padding)
    wo = conv_output_size(wd, kw, 1, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[:, :, i:i + ho, j:j + wo] * w[None, :, i, j, None, None]
    if b is not None:
        out += b[None, :, None, None]

    def bwd(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(w)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + ho, j:j + wo] += g * w[None, :, i, j, None, None]
                gw[:, i, j] = np.einsum("nchw,nchw->c", g, xp[:, :, i:i + ho, j:j + wo])
        gx = np.ascontiguousarray(gxp[:, :, padding:padding + h, padding:padding + wd]) \
            if padding else gxp
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return out, bwd


@register_op("channel_layer_norm")
def _channel_layer_norm(x, gamma, beta, eps=1e-6):
    if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"channel_layer_norm: input {x.shape}, gamma {gamma.shape}, "
                         f"beta {beta.shape}")
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma[None, :, None, None] + beta[None, :, None, None]

    def bwd(g):
        gxhat = g * gamma[None, :, None, None]
        gx = inv * (gxhat - gxhat.mean(axis=1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=1, keepdims=True))
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return out, bwd


# ---------------------------------------------------------------------------
# counter-based noise


def uniform_noise(shape, seed: int, index: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """U(-1/2, 1/2) samples keyed by ``(seed, index)``; open interval, no global state."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, index & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    k = gen.integers(0, 1 << 53, size=shape, dtype=np.int64)
    return ((k.astype(np.float64) + 0.5) * 2.0 ** -53 - 0.5).astype(dtype)


# ---------------------------------------------------------------------------
# public functional API


def add(a, b): return forward_op("add", (a, b))
def sub(a, b): return forward_op("subtract", (a, b))
def mul(a, b): return forward_op("multiply", (a, b))
def div(a, b): return forward_op("divide", (a, b))
def neg(a): return forward_op("negate", (a,))
def square(a): return forward_op("square", (a,))
def exp(a): return forward_op("exp", (a,))
def log(a): return forward_op("log", (a,))
def absolute(a): return forward_op("abs", (a,))
def tanh(a): return forward_op("tanh", (a,))
def sigmoid(a): return forward_op("sigmoid", (a,))
def softplus(a): return forward_op("softplus", (a,))
def gelu(a): return forward_op("gelu", (a,))
def leaky_relu(a, slope=0.01): return forward_op("leaky_relu", (a,), slope=slope)
def lower_bound(a, bound): return forward_op("lower_bound", (a,), bound=bound)
def round_ste(a): return forward_op("round_ste", (a,))
def detach(a): return forward_op("detach", (a,))
def matmul(a, b): return forward_op("matmul", (a, b))
def global_avg_pool(a): return forward_op("global_avg_pool", (a,))
def reshape(a, shape): return forward_op("reshape", (a,), shape=tuple(shape))


def add_uniform_noise(a, seed: int, index: int) -> Tensor:
    return forward_op("add_uniform_noise", (a,), seed=seed, index=index)


def sum_(a, axis=None, keepdims=False) -> Tensor:
    return forward_op("sum", (a,), axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims=False) -> Tensor:
    return forward_op("mean", (a,), axis=axis, keepdims=keepdims)


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    tensors = list(tensors)
    if len(tensors) == 1:
        return as_tensor(tensors[0])
    return forward_op("concat", tensors, axis=axis)


def split_channels(a, sizes: Sequence[int]) -> list[Tensor]:
    a = as_tensor(a)
    if sum(sizes) != a.shape[1]:
        raise ShapeError(f"split_channels: sizes {list(sizes)} do not sum to {a.shape[1]}")
    out, start = [], 0
    for s in sizes:
        out.append(forward_op("slice_channels", (a,), start=start, stop=start + s))
        start += s
    return out


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    inputs = (x, w) if b is None else (x, w, b)
    return forward_op("conv2d", inputs, stride=stride, padding=padding)


def conv_transpose2d(x, w, b=None, stride: int = 1, padding: int = 0,
                     output_padding: int = 0) -> Tensor:
    inputs = (x, w) if b is None else (x, w, b)
    return forward_op("conv_transpose2d", inputs, stride=stride, padding=padding,
                      output_padding=output_padding)


def depthwise_conv2d(x, w, b=None, padding: int = 0) -> Tensor:
    inputs = (x, w) if b is None else (x, w, b)
    return forward_op("depthwise_conv2d", inputs, padding=padding)


def channel_layer_norm(x, gamma, beta, eps: float = 1e-6) -> Tensor:
    return forward_op("channel_layer_norm", (x, gamma, beta), eps=eps)


# ---------------------------------------------------------------------------
# gradient oracle


def finite_diff_check(f: Callable[[Tensor], Tensor], point, eps: float = 1e-6) -> float:
    """Max relative error between the analytic and central-difference gradient.

    ``f`` maps a tracked tensor to a scalar tensor.  The error per coordinate
    is ``|a - c| / max(|a|, |c|, 1e-12)``.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    base = np.array(as_tensor(point).data, dtype=np.float64)
    x = Tensor(base.copy(), requires_grad=True)
    loss = f(x)
    backward(loss)
    analytic = x.grad.reshape(-1)

    def evaluate(arr):
        val = f(Tensor(arr)).data
        if not np.all(np.isfinite(val)):
            raise NonFiniteError("finite_diff_check: non-finite evaluation")
        return float(val.reshape(-1)[0])

    flat = base.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += eps
        minus[i] -= eps
        central = (evaluate(plus.reshape(base.shape)) - evaluate(minus.reshape(base.shape))) / (2 * eps)
        a = analytic[i]
        err = abs(a - central) / max(abs(a), abs(central), 1e-12)
        worst = max(worst, err)
    return worst

"""Dense tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array. Results of registered ops that depend on
a grad-tracked input record their parents and the op name; node ids come from
one increasing counter, so every parent has a smaller id than its children and
:func:`backward` can walk the graph in strictly decreasing id order.

Backward rules live in :data:`BACKWARD_RULES`, keyed by op name. Modules that
add their own differentiable ops (bilinear sampling, for instance) register a
rule there the same way the ops in this file do.
"""

from __future__ import annotations

import contextlib
import itertools
import os
import threading
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor", "ValidationError", "NonFiniteError", "BACKWARD_RULES",
    "tensor", "make_result", "backward", "debug_mode", "benchmark_mode", "debug_enabled",
    "add", "sub", "mul", "scale", "matmul", "softmax_rows", "conv2d", "leaky_relu", "tanh",
    "concat", "reshape", "transpose2d", "mean", "sum", "sum_abs", "mean_abs",
    "resample", "broadcast_channels", "getitem",
]

DTYPES = {"f32": np.float32, "f64": np.float64}


class ValidationError(ValueError):
    """Raised when an op receives arguments that violate its shape/value contract."""


class NonFiniteError(ArithmeticError):
    """An op produced NaN or Inf while debug checks were enabled."""

    def __init__(self, op: str, message: str | None = None) -> None:
        self.op = op
        super().__init__(message or f"non-finite value produced by op '{op}'")


_ids = itertools.count(1)
_local = threading.local()   # per-thread override of the WARPATTN_DEBUG setting


def debug_enabled() -> bool:
    override = getattr(_local, "debug", None)
    if override is not None:
        return override
    return os.environ.get("WARPATTN_DEBUG", "") == "1"


@contextlib.contextmanager
def debug_mode(enabled: bool = True):
    """Scan every op output for NaN/Inf while active (in the calling thread)."""
    previous = getattr(_local, "debug", None)
    _local.debug = enabled
    try:
        yield
    finally:
        _local.debug = previous


def benchmark_mode():
    return debug_mode(False)


def _as_dtype(dtype) -> np.dtype:
    if dtype is None:
        return np.dtype(np.float64)
    if isinstance(dtype, str) and dtype in DTYPES:
        return np.dtype(DTYPES[dtype])
    dt = np.dtype(dtype)
    if dt not in (np.float32, np.float64):
        raise ValidationError(f"unsupported dtype {dtype!r}; expected f32 or f64")
    return dt


class Tensor:
    __slots__ = ("data", "requires_grad", "node_id", "op", "parents", "saved")

    def __init__(self, data, dtype=None, requires_grad: bool = False) -> None:
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None and isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            dt = data.dtype
        else:
            dt = _as_dtype(dtype)
        arr = np.array(data, dtype=dt)
        if arr.ndim and 0 in arr.shape:
            raise ValidationError(f"dimension sizes must be positive, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("tensor data contains NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_ids) if requires_grad else None
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self.saved: dict = {}

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return make_result(self.data, "detach", ())

    def __repr__(self) -> str:
        tracked = f", node_id={self.node_id}" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, op={self.op}{tracked})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose2d(self)


def tensor(data, dtype=None, requires_grad: bool = False) -> Tensor:
    return Tensor(data, dtype=dtype, requires_grad=requires_grad)


def make_result(data: np.ndarray, op: str, parents: Sequence[Tensor], **saved) -> Tensor:
    """Wrap an op output, linking it into the graph when any parent is tracked."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    tracked = any(p.requires_grad for p in parents)
    out.requires_grad = tracked
    if tracked:
        out.node_id = next(_ids)
        out.parents = tuple(parents)
        out.saved = saved
    else:
        out.node_id = None
        out.parents = ()
        out.saved = {}
    if debug_enabled() and not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    return out


BACKWARD_RULES: dict[str, Callable[[Tensor, np.ndarray], Sequence[np.ndarray | None]]] = {}


def _rule(name: str):
    def register(fn):
        BACKWARD_RULES[name] = fn
        return fn
    return register


def backward(loss: Tensor) -> dict[int, Tensor]:
    """Gradients of a scalar ``loss`` for every tracked ancestor, keyed by node id."""
    if loss.size != 1:
        raise ValidationError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValidationError("backward needs a grad-tracked loss")

    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node.node_id in nodes:
            continue
        nodes[node.node_id] = node
        stack.extend(p for p in node.parents if p.requires_grad and p.node_id not in nodes)

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for nid in sorted(nodes, reverse=True):
        node = nodes[nid]
        g = grads.get(nid)
        if g is None or not node.parents:
            continue
        parent_grads = BACKWARD_RULES[node.op](node, g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ValidationError(
                    f"backward rule for '{node.op}' returned shape {pg.shape}, expected {parent.shape}")
            if parent.node_id in grads:
                grads[parent.node_id] = grads[parent.node_id] + pg
            else:
                grads[parent.node_id] = pg
    return {nid: make_result(g, "grad", ()) for nid, g in grads.items()}


# ---------------------------------------------------------------- elementwise

def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ValidationError(f"{op}: dtype mismatch {a.dtype} vs {b.dtype}")


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        return make_result(a.data + a.dtype.type(b), "add_scalar", (a,))
    _check_same(a, b, "add")
    return make_result(a.data + b.data, "add", (a, b))


@_rule("add")
def _add_back(node, g):
    return g, g


@_rule("add_scalar")
def _add_scalar_back(node, g):
    return (g,)


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        return add(a, -b)
    _check_same(a, b, "sub")
    return make_result(a.data - b.data, "sub", (a, b))


@_rule("sub")
def _sub_back(node, g):
    return g, -g


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    return make_result(a.data * b.data, "mul", (a, b))


@_rule("mul")
def _mul_back(node, g):
    a, b = node.parents
    return (g * b.data if a.requires_grad else None,
            g * a.data if b.requires_grad else None)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return make_result(a.data * a.dtype.type(factor), "scale", (a,), factor=factor)


@_rule("scale")
def _scale_back(node, g):
    return (g * g.dtype.type(node.saved["factor"]),)


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    # x == 0 takes the negative-slope branch
    pos = a.data > 0
    out = np.where(pos, a.data, a.data * a.dtype.type(slope))
    return make_result(out, "leaky_relu", (a,), pos=pos, slope=slope)


@_rule("leaky_relu")
def _leaky_relu_back(node, g):
    return (np.where(node.saved["pos"], g, g * g.dtype.type(node.saved["slope"])),)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_result(out, "tanh", (a,), out=out)


@_rule("tanh")
def _tanh_back(node, g):
    t = node.saved["out"]
    return (g * (1 - t * t),)


def broadcast_channels(a: Tensor, channels: int) -> Tensor:
    """Repeat a 1xHxW tensor into channels x H x W."""
    if a.ndim != 3 or a.shape[0] != 1:
        raise ValidationError(f"broadcast_channels expects shape (1, H, W), got {a.shape}")
    return make_result(np.broadcast_to(a.data, (channels,) + a.shape[1:]).copy(),
                       "broadcast_channels", (a,))


@_rule("broadcast_channels")
def _broadcast_channels_back(node, g):
    return (g.sum(axis=0, keepdims=True),)


# ------------------------------------------------------------------- shaping

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ValidationError(f"reshape: cannot view {a.shape} as {shape}")
    return make_result(a.data.reshape(shape), "reshape", (a,))


@_rule("reshape")
def _reshape_back(node, g):
    return (g.reshape(node.parents[0].shape),)


def transpose2d(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValidationError(f"transpose2d expects a matrix, got shape {a.shape}")
    return make_result(np.ascontiguousarray(a.data.T), "transpose2d", (a,))


@_rule("transpose2d")
def _transpose_back(node, g):
    return (np.ascontiguousarray(g.T),)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValidationError("concat needs at least one tensor")
    ref = tensors[0]
    for t in tensors[1:]:
        if t.data.ndim != ref.data.ndim or any(
                s != r for i, (s, r) in enumerate(zip(t.shape, ref.shape)) if i != axis % ref.data.ndim):
            raise ValidationError(f"concat axis {axis}: incompatible shapes {ref.shape} and {t.shape}")
        if t.dtype != ref.dtype:
            raise ValidationError(f"concat: dtype mismatch {ref.dtype} vs {t.dtype}")
    sizes = [t.shape[axis] for t in tensors]
    return make_result(np.concatenate([t.data for t in tensors], axis=axis), "concat",
                       tensors, axis=axis, sizes=sizes)


@_rule("concat")
def _concat_back(node, g):
    cuts = np.cumsum(node.saved["sizes"])[:-1]
    return np.split(g, cuts, axis=node.saved["axis"])


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]
    if not isinstance(out, np.ndarray) or out.size == 0:
        raise ValidationError(f"index {index!r} must select a non-empty sub-array of {a.shape}")
    return make_result(np.ascontiguousarray(out), "getitem", (a,), index=index)


@_rule("getitem")
def _getitem_back(node, g):
    parent = node.parents[0]
    full = np.zeros(parent.shape, dtype=g.dtype)
    index = node.saved["index"]
    if _has_advanced(index):
        np.add.at(full, index, g)
    else:
        full[index] = g
    return (full,)


def _has_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


# ---------------------------------------------------------------- reductions

def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return make_result(np.array(a.data.sum(), dtype=a.dtype), "sum", (a,))


@_rule("sum")
def _sum_back(node, g):
    return (np.full(node.parents[0].shape, g.reshape(()), dtype=g.dtype),)


def mean(a: Tensor) -> Tensor:
    return make_result(np.array(a.data.mean(), dtype=a.dtype), "mean", (a,))


@_rule("mean")
def _mean_back(node, g):
    p = node.parents[0]
    return (np.full(p.shape, g.reshape(()) / p.size, dtype=g.dtype),)


def sum_abs(a: Tensor) -> Tensor:
    return make_result(np.array(np.abs(a.data).sum(), dtype=a.dtype), "sum_abs", (a,))


@_rule("sum_abs")
def _sum_abs_back(node, g):
    return (np.sign(node.parents[0].data) * g.reshape(()),)


def mean_abs(a: Tensor) -> Tensor:
    return scale(sum_abs(a), 1.0 / a.size)


# ------------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValidationError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if a.dtype != b.dtype:
        raise ValidationError(f"matmul: dtype mismatch {a.dtype} vs {b.dtype}")
    return make_result(a.data @ b.data, "matmul", (a, b))


@_rule("matmul")
def _matmul_back(node, g):
    a, b = node.parents
    return (g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None)


def softmax_rows(x: Tensor, temperature_divisor: float = 1.0) -> Tensor:
    """Row-wise softmax of ``x / temperature_divisor`` with max subtraction."""
    if not temperature_divisor > 0:
        raise ValidationError(f"softmax_rows: temperature divisor must be positive, got {temperature_divisor}")
    if x.data.ndim != 2:
        raise ValidationError(f"softmax_rows expects a matrix, got shape {x.shape}")
    z = x.data / x.dtype.type(temperature_divisor)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    return make_result(s, "softmax_rows", (x,), out=s, divisor=float(temperature_divisor))


@_rule("softmax_rows")
def _softmax_back(node, g):
    s = node.saved["out"]
    dz = s * (g - (g * s).sum(axis=1, keepdims=True))
    return (dz / dz.dtype.type(node.saved["divisor"]),)


def resample(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Separable linear resampling: ``out[c] = rows @ x[c] @ cols.T``.

    ``rows`` (Ho x H) and ``cols`` (Wo x W) are constant matrices; bilinear
    upsampling and area averaging are both expressed this way.
    """
    if x.data.ndim != 3 or rows.shape[1] != x.shape[1] or cols.shape[1] != x.shape[2]:
        raise ValidationError(
            f"resample: matrices {rows.shape}, {cols.shape} do not fit input {x.shape}")
    rows = rows.astype(x.dtype, copy=False)
    cols = cols.astype(x.dtype, copy=False)
    out = np.matmul(np.matmul(rows, x.data), cols.T)
    return make_result(out, "resample", (x,), rows=rows, cols=cols)


@_rule("resample")
def _resample_back(node, g):
    rows, cols = node.saved["rows"], node.saved["cols"]
    return (np.matmul(np.matmul(rows.T, g), cols),)


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Bias-free 2D cross-correlation of a C x H x W input."""
    if x.data.ndim != 3 or kernel.data.ndim != 4:
        raise ValidationError(f"conv2d expects (C,H,W) input and (Co,Ci,k,k) kernel, got {x.shape}, {kernel.shape}")
    c, h, w = x.shape
    co, ci, kh, kw = kernel.shape
    if ci != c:
        raise ValidationError(f"conv2d: kernel expects {ci} input channels, input has {c}")
    if kh != kw or kh % 2 == 0:
        raise ValidationError(f"conv2d: kernel must be square with odd size, got {kh}x{kw}")
    if stride < 1 or pad < 0:
        raise ValidationError(f"conv2d: stride must be >= 1 and pad >= 0, got {stride}, {pad}")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ValidationError(f"conv2d: output would be {ho}x{wo} for input {h}x{w}, kernel {kh}, pad {pad}")
    if x.dtype != kernel.dtype:
        raise ValidationError(f"conv2d: dtype mismatch {x.dtype} vs {kernel.dtype}")
    k = kh
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    if k == 1:
        cols = xp[:, ::stride, ::stride][:, :ho, :wo].reshape(c, ho * wo)
    else:
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
        cols = win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, ho * wo)
    out = (kernel.data.reshape(co, -1) @ cols).reshape(co, ho, wo)
    return make_result(out, "conv2d", (x, kernel), cols=cols if kernel.requires_grad else None,
                       stride=stride, pad=pad, out_hw=(ho, wo))


@_rule("conv2d")
def _conv2d_back(node, g):
    x, kernel = node.parents
    stride, pad = node.saved["stride"], node.saved["pad"]
    ho, wo = node.saved["out_hw"]
    co, ci, k, _ = kernel.shape
    g2 = g.reshape(co, ho * wo)
    dk = (g2 @ node.saved["cols"].T).reshape(kernel.shape) if kernel.requires_grad else None
    dx = None
    if x.requires_grad:
        c, h, w = x.shape
        dcols = (kernel.data.reshape(co, -1).T @ g2).reshape(ci, k, k, ho, wo)
        dxp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += dcols[:, i, j]
        dx = dxp[:, pad:pad + h, pad:pad + w]
        dx = np.ascontiguousarray(dx)
    return dx, dk

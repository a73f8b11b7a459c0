"""Minimal dense-tensor engine with reverse-mode differentiation.

Tensors wrap row-major numpy arrays (float32 for training/inference, float64
for gradient checking). Every differentiable op records its parents and a
vector-Jacobian product closure; `Tensor.backward` replays those closures in
reverse topological order. Tensors are treated as immutable once built.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, UnsupportedOpError
from .flops import counter

SIGMOID_CLAMP = 30.0

_grad_enabled = True


class no_grad:
    """Context manager disabling graph recording (inference fast path)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "op")

    def __init__(self, data, requires_grad=False, dtype=None):
        if dtype is not None:
            data = np.asarray(data, dtype=dtype)
        else:
            data = np.asarray(data)
            if data.dtype not in (np.float32, np.float64):
                data = data.astype(np.float32)
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._vjp = None
        self.op = "leaf"

    # -- metadata ---------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape}, dtype={self.dtype})"

    def item(self):
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    # -- graph ------------------------------------------------------------
    def backward(self, cotangent=None):
        """Accumulate gradients into `.grad` of every tensor that requires one."""
        if cotangent is None:
            if self.size != 1:
                raise ShapeError(
                    f"backward() without cotangent needs a scalar, got shape {self.shape}"
                )
            cotangent = np.ones_like(self.data)
        else:
            cotangent = np.asarray(cotangent, dtype=self.data.dtype)
            if cotangent.shape != self.data.shape:
                raise ShapeError(
                    f"cotangent shape {cotangent.shape} != output shape {self.shape}"
                )

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): cotangent}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._parents and node._vjp is not None:
                for parent, pg in zip(node._parents, node._vjp(g)):
                    if pg is None:
                        continue
                    acc = grads.get(id(parent))
                    grads[id(parent)] = pg if acc is None else acc + pg
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self.dtype)))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _wrap(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def make_op(data, parents, vjp, op_name):
    """Build a graph node; records the VJP only while grads are enabled."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._vjp = vjp
        out.op = op_name
    else:
        out.op = op_name
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise ----------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return make_op(data, (a, b), vjp, "add")


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return make_op(data, (a, b), vjp, "mul")


def absval(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return make_op(np.abs(a.data), (a,), lambda g: (g * sign,), "abs")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_op(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def sigmoid(a: Tensor) -> Tensor:
    """Logistic function; pre-activation clamped to +-30 to avoid overflow."""
    x = np.clip(a.data, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    y = 1.0 / (1.0 + np.exp(-x))
    return make_op(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return make_op(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def exp(a: Tensor) -> Tensor:
    y = np.exp(np.clip(a.data, -SIGMOID_CLAMP, SIGMOID_CLAMP))
    return make_op(y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor) -> Tensor:
    return make_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


# -- shape ----------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return make_op(
        a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape"
    )


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return make_op(
        a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose"
    )


def concat(tensors, axis=0) -> Tensor:
    datas = [t.data for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_op(np.concatenate(datas, axis=axis), tuple(tensors), vjp, "concat")


def crop2d(a: Tensor, r0: int, r1: int, c0: int, c1: int) -> Tensor:
    """Spatial crop of a C x H x W tensor; backward zero-pads."""
    data = a.data[:, r0:r1, c0:c1]
    shape = a.data.shape

    def vjp(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, r0:r1, c0:c1] = g
        return (full,)

    return make_op(data, (a,), vjp, "crop2d")


# -- reductions -----------------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return make_op(data, (a,), vjp, "sum")


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[i] for i in ax]))
    s = tsum(a, axis=axis, keepdims=keepdims)
    return s * (1.0 / n)


# -- linear algebra -------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not agree")
    m, k = a.shape
    n = b.shape[1]
    counter.add("matmul", 2 * m * k * n)
    data = a.data @ b.data

    def vjp(g):
        counter.add("matmul", 2 * m * k * n + 2 * m * k * n)
        return g @ b.data.T, a.data.T @ g

    return make_op(data, (a, b), vjp, "matmul")


def softmax_axis(a: Tensor, axis: int) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtraction)."""
    if axis >= a.ndim or axis < -a.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for rank {a.ndim}")
    x = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(x)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return make_op(y, (a,), vjp, "softmax")


# -- verification ---------------------------------------------------------

def finite_difference_check(fn, inputs, eps=1e-5, rng=None, max_coords=None):
    """Compare analytic VJP against central differences.

    `fn` maps the input tensors to an output tensor. A unit-scale cotangent
    (standard normal from `rng`, all ones otherwise) projects the output;
    each input coordinate is then perturbed by +-eps and the
    directional derivative compared with the analytic gradient. Requires f64
    inputs. `max_coords` subsamples the checked coordinates per input for
    large problems. Returns the max relative error, with denominator
    max(|analytic|, |numeric|, 1e-8).
    """
    if not (1e-7 <= eps <= 1e-4):
        raise ValueError(f"eps {eps} outside [1e-7, 1e-4]")
    for t in inputs:
        if t.dtype != np.float64:
            raise UnsupportedOpError("finite_difference_check requires f64 inputs")

    probes = [Tensor(t.data.copy(), requires_grad=True, dtype=np.float64) for t in inputs]
    out = fn(*probes)
    if rng is None:
        cot = np.ones_like(out.data)
    else:
        cot = rng.standard_normal(out.data.shape)
    out.backward(cot)
    analytic = [
        p.grad if p.grad is not None else np.zeros_like(p.data) for p in probes
    ]

    max_err = 0.0
    with no_grad():
        for idx, probe in enumerate(probes):
            flat = probe.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                sel_rng = rng if rng is not None else np.random.default_rng(0)
                coords = sel_rng.choice(flat.size, size=max_coords, replace=False)
            for c in coords:
                orig = flat[c]
                flat[c] = orig + eps
                hi = float((cot * fn(*probes).data).sum())
                flat[c] = orig - eps
                lo = float((cot * fn(*probes).data).sum())
                flat[c] = orig
                numeric = (hi - lo) / (2.0 * eps)
                a = analytic[idx].reshape(-1)[c]
                denom = max(abs(a), abs(numeric), 1e-8)
                max_err = max(max_err, abs(a - numeric) / denom)
    return max_err

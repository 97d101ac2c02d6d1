"""Reverse-mode automatic differentiation over dense numpy arrays.

Every differentiable operation appends a record to a process-global tape.
Because records are appended in execution order, the tape is already a
topological order of the computation graph, and ``backward`` simply walks
it in reverse, accumulating adjoints into ``Variable.grad``.

Values are plain numpy arrays in row-major layout.  float32 is the training
precision; float64 is used when checking gradients against finite
differences.  Operations preserve the dtype of their inputs and never
reduce in a data-dependent order, so repeated runs over identical inputs
produce bit-identical results.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Variable",
    "Tape",
    "DimensionError",
    "DegenerateBatchError",
    "no_grad",
    "active_tape",
    "backward",
    "zero_grad",
    "as_variable",
    "conv2d",
    "pool2d",
    "global_pool",
    "matmul",
    "linear",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "sigmoid",
    "softmax",
    "batchnorm_train",
    "batchnorm_eval",
    "cross_entropy",
    "channel_mean",
    "channel_max",
    "concat",
    "reshape",
    "sum_all",
    "grad_check",
]


class DimensionError(ValueError):
    """Raised when an operand's rank or shape does not fit the operation."""


class DegenerateBatchError(ValueError):
    """Raised by train-mode batch norm when a batch has fewer than two
    values per channel, which leaves the variance undefined."""


class Variable:
    """A node in the computation graph: a value plus an adjoint slot.

    ``grad`` stays ``None`` until ``backward`` reaches the node, so unused
    gradients cost nothing.  ``requires_grad`` marks leaves the caller wants
    gradients for; outputs of tracked operations inherit it so adjoints can
    flow through.  ``tape_index`` is the position of the producing record on
    the active tape, or -1 for leaves.
    """

    __slots__ = ("value", "grad", "requires_grad", "tape_index")

    def __init__(self, value, requires_grad: bool = False, dtype=None):
        arr = np.asarray(value)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.value: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.tape_index = -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def sum(self) -> "Variable":
        return sum_all(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Variable(shape={self.value.shape}, dtype={self.value.dtype}{flag})"


class _Record:
    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op: str, inputs: tuple, output: Variable, backward: Callable):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered log of operation records for one forward pass."""

    def __init__(self):
        self.records: list[_Record] = []

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: _Record) -> int:
        self.records.append(record)
        return len(self.records) - 1

    def clear(self) -> None:
        self.records.clear()


_TAPE = Tape()
_GRAD_ENABLED = True


def active_tape() -> Tape:
    return _TAPE


class no_grad:
    """Context manager that suspends tape recording (e.g. for evaluation)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def as_variable(x, dtype=None) -> Variable:
    if isinstance(x, Variable):
        return x
    return Variable(x, dtype=dtype)


def _track(op: str, out_value: np.ndarray, inputs: tuple[Variable, ...],
           backward_fn: Callable[[np.ndarray], tuple]) -> Variable:
    """Wrap ``out_value`` and record the op if any input needs gradients."""
    track = _GRAD_ENABLED and any(v.requires_grad for v in inputs)
    out = Variable(out_value, requires_grad=track)
    if track:
        out.tape_index = _TAPE.append(_Record(op, inputs, out, backward_fn))
    return out


def backward(loss: Variable) -> None:
    """Accumulate d(loss)/d(leaf) into ``grad`` for every tracked leaf.

    ``loss`` must be a scalar.  The tape is consumed: records are replayed
    in exact reverse construction order and then discarded, so each forward
    pass supports one backward pass.  Gradients add across fan-out and
    across successive backward calls; clear them with ``zero_grad``.
    """
    if loss.value.size != 1:
        raise DimensionError("backward expects a scalar loss, got shape "
                             f"{loss.value.shape}")
    if loss.grad is None:
        loss.grad = np.ones_like(loss.value)
    records = _TAPE.records
    try:
        for rec in reversed(records):
            g = rec.output.grad
            if g is None:
                continue
            grads = rec.backward(g)
            for var, gi in zip(rec.inputs, grads):
                if gi is None or not var.requires_grad:
                    continue
                if gi.shape != var.value.shape:
                    raise DimensionError(
                        f"{rec.op}: adjoint shape {gi.shape} does not match "
                        f"input shape {var.value.shape}")
                if var.grad is None:
                    var.grad = gi
                else:
                    # Rebinding (not +=) keeps aliased adjoints safe.
                    var.grad = var.grad + gi
    finally:
        _TAPE.clear()


def zero_grad(params: Iterable[Variable]) -> None:
    for p in params:
        p.grad = None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# convolution and pooling


def _pair_out(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _im2col(a: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Lower (N,C,H,W) to patch columns (N, C*kh*kw, out_h*out_w).

    The kh*kw gather loop keeps memory bounded and the summation order
    fixed; the heavy lifting stays in one matmul at the call site.
    """
    n, c, h, w = a.shape
    if padding:
        a = np.pad(a, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out_h = _pair_out(h, kh, stride, padding)
    out_w = _pair_out(w, kw, stride, padding)
    cols = np.empty((n, c, kh, kw, out_h, out_w), dtype=a.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = a[:, :, i:i + stride * out_h:stride,
                                 j:j + stride * out_w:stride]
    return cols.reshape(n, c * kh * kw, out_h * out_w)


def _col2im(cols: np.ndarray, shape: tuple[int, ...], kh: int, kw: int,
            stride: int, padding: int) -> np.ndarray:
    """Scatter-add patch columns back to an (N,C,H,W) image (im2col adjoint)."""
    n, c, h, w = shape
    hp, wp = h + 2 * padding, w + 2 * padding
    out_h = (hp - kh) // stride + 1
    out_w = (wp - kw) // stride + 1
    img = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, out_h, out_w)
    for i in range(kh):
        for j in range(kw):
            img[:, :, i:i + stride * out_h:stride,
                j:j + stride * out_w:stride] += cols[:, :, i, j]
    if padding:
        img = img[:, :, padding:padding + h, padding:padding + w]
    return img


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> Variable:
    """2-D cross-correlation of (N,C,H,W) with (C_out,C,kh,kw), zero padded."""
    xv, kv = as_variable(x), as_variable(kernel)
    a, w = xv.value, kv.value
    if a.ndim != 4 or w.ndim != 4:
        raise DimensionError(
            f"conv2d expects 4-D input and kernel, got {a.ndim}-D and {w.ndim}-D")
    n, c, h, wid = a.shape
    c_out, c_in, kh, kw = w.shape
    if c != c_in:
        raise DimensionError(
            f"conv2d channel mismatch: input has {c}, kernel expects {c_in}")
    if stride < 1:
        raise ValueError(f"conv2d stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"conv2d padding must be >= 0, got {padding}")
    if kh > h + 2 * padding or kw > wid + 2 * padding:
        raise DimensionError(
            f"conv2d kernel {kh}x{kw} exceeds padded input "
            f"{h + 2 * padding}x{wid + 2 * padding}")
    out_h = _pair_out(h, kh, stride, padding)
    out_w = _pair_out(wid, kw, stride, padding)
    cols = _im2col(a, kh, kw, stride, padding)
    wmat = w.reshape(c_out, c_in * kh * kw)
    out = np.matmul(wmat, cols).reshape(n, c_out, out_h, out_w)

    def backward_fn(g: np.ndarray):
        gm = g.reshape(n, c_out, out_h * out_w)
        gk = None
        if kv.requires_grad:
            gk = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        gx = None
        if xv.requires_grad:
            dcols = np.matmul(wmat.T, gm)
            gx = _col2im(dcols, a.shape, kh, kw, stride, padding)
        return gx, gk

    return _track("conv2d", out, (xv, kv), backward_fn)


def _pool_windows(a: np.ndarray, k: int, stride: int, padding: int,
                  pad_value: float) -> np.ndarray:
    n, c, h, w = a.shape
    if padding:
        a = np.pad(a, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                   constant_values=pad_value)
    out_h = _pair_out(h, k, stride, padding)
    out_w = _pair_out(w, k, stride, padding)
    win = np.empty((n, c, k, k, out_h, out_w), dtype=a.dtype)
    for i in range(k):
        for j in range(k):
            win[:, :, i, j] = a[:, :, i:i + stride * out_h:stride,
                                j:j + stride * out_w:stride]
    return win


def pool2d(x, kind: str, k: int, stride: int | None = None,
           padding: int = 0) -> Variable:
    """Max or average pooling over k x k windows.

    Average pooling divides by the full window area k*k, counting padded
    zeros.  Max pooling pads with -inf so padding never wins a window; it
    requires padding < k so no window is all padding.  Ties take the first
    maximum in row-major window order.
    """
    if kind not in ("max", "avg"):
        raise ValueError(f"pool kind must be 'max' or 'avg', got {kind!r}")
    if k < 1:
        raise ValueError(f"pool window must be >= 1, got {k}")
    stride = k if stride is None else stride
    if stride < 1:
        raise ValueError(f"pool stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"pool padding must be >= 0, got {padding}")
    if kind == "max" and padding >= k:
        raise ValueError("max pool padding must be < window size")
    xv = as_variable(x)
    a = xv.value
    if a.ndim != 4:
        raise DimensionError(f"pool2d expects 4-D input, got {a.ndim}-D")
    n, c, h, w = a.shape
    if k > h + 2 * padding or k > w + 2 * padding:
        raise DimensionError(
            f"pool window {k} exceeds padded input {h + 2 * padding}x{w + 2 * padding}")
    out_h = _pair_out(h, k, stride, padding)
    out_w = _pair_out(w, k, stride, padding)

    if kind == "avg":
        win = _pool_windows(a, k, stride, padding, 0.0)
        out = win.mean(axis=(2, 3))

        def backward_avg(g: np.ndarray):
            dcols = np.broadcast_to(
                g[:, :, None, :, :] / (k * k),
                (n, c, k * k, out_h, out_w)).reshape(n, c * k * k, out_h * out_w)
            return (_col2im(np.ascontiguousarray(dcols), a.shape, k, k, stride,
                            padding),)

        return _track("pool2d_avg", out, (xv,), backward_avg)

    win = _pool_windows(a, k, stride, padding, -np.inf)
    flat = win.reshape(n, c, k * k, out_h, out_w)
    idx = flat.argmax(axis=2)
    out = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]

    def backward_max(g: np.ndarray):
        dcols = np.zeros((n, c, k * k, out_h, out_w), dtype=g.dtype)
        np.put_along_axis(dcols, idx[:, :, None], g[:, :, None], axis=2)
        return (_col2im(dcols.reshape(n, c * k * k, out_h * out_w),
                        a.shape, k, k, stride, padding),)

    return _track("pool2d_max", out, (xv,), backward_max)


def global_pool(x, kind: str) -> Variable:
    """Pool all spatial positions of (N,C,H,W) down to (N,C,1,1)."""
    if kind not in ("max", "avg"):
        raise ValueError(f"pool kind must be 'max' or 'avg', got {kind!r}")
    xv = as_variable(x)
    a = xv.value
    if a.ndim != 4:
        raise DimensionError(f"global_pool expects 4-D input, got {a.ndim}-D")
    n, c, h, w = a.shape
    if kind == "avg":
        out = a.mean(axis=(2, 3), keepdims=True)

        def backward_avg(g: np.ndarray):
            return (np.broadcast_to(g / (h * w), a.shape).copy(),)

        return _track("global_avg", out, (xv,), backward_avg)

    flat = a.reshape(n, c, h * w)
    idx = flat.argmax(axis=2)
    out = np.take_along_axis(flat, idx[:, :, None], axis=2).reshape(n, c, 1, 1)

    def backward_max(g: np.ndarray):
        gx = np.zeros_like(flat)
        np.put_along_axis(gx, idx[:, :, None], g.reshape(n, c, 1), axis=2)
        return (gx.reshape(a.shape),)

    return _track("global_max", out, (xv,), backward_max)


# ---------------------------------------------------------------------------
# dense algebra and elementwise ops


def matmul(a, b) -> Variable:
    """Strict 2-D matrix product."""
    av, bv = as_variable(a), as_variable(b)
    x, y = av.value, bv.value
    if x.ndim != 2 or y.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-D operands, got {x.ndim}-D and {y.ndim}-D")
    if x.shape[1] != y.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions differ: {x.shape} vs {y.shape}")
    out = x @ y

    def backward_fn(g: np.ndarray):
        ga = g @ y.T if av.requires_grad else None
        gb = x.T @ g if bv.requires_grad else None
        return ga, gb

    return _track("matmul", out, (av, bv), backward_fn)


def linear(x, weight, bias=None) -> Variable:
    """Affine map x @ weight.T + bias for (N,F) inputs."""
    xv, wv = as_variable(x), as_variable(weight)
    a, w = xv.value, wv.value
    if a.ndim != 2 or w.ndim != 2:
        raise DimensionError(
            f"linear expects 2-D input and weight, got {a.ndim}-D and {w.ndim}-D")
    if a.shape[1] != w.shape[1]:
        raise DimensionError(
            f"linear feature mismatch: input {a.shape} vs weight {w.shape}")
    out = a @ w.T
    if bias is None:
        def backward_nobias(g: np.ndarray):
            gx = g @ w if xv.requires_grad else None
            gw = g.T @ a if wv.requires_grad else None
            return gx, gw

        return _track("linear", out, (xv, wv), backward_nobias)

    bv = as_variable(bias)
    if bv.value.shape != (w.shape[0],):
        raise DimensionError(
            f"linear bias shape {bv.value.shape} does not match ({w.shape[0]},)")
    out = out + bv.value

    def backward_fn(g: np.ndarray):
        gx = g @ w if xv.requires_grad else None
        gw = g.T @ a if wv.requires_grad else None
        gb = g.sum(axis=0) if bv.requires_grad else None
        return gx, gw, gb

    return _track("linear", out, (xv, wv, bv), backward_fn)


def _binary(op: str, a, b, fwd, bwd) -> Variable:
    av, bv = as_variable(a), as_variable(b)
    try:
        out = fwd(av.value, bv.value)
    except ValueError as exc:
        raise DimensionError(
            f"{op}: shapes {av.value.shape} and {bv.value.shape} "
            f"do not broadcast") from exc

    def backward_fn(g: np.ndarray):
        ga, gb = bwd(g, av.value, bv.value)
        ga = _unbroadcast(ga, av.value.shape) if av.requires_grad else None
        gb = _unbroadcast(gb, bv.value.shape) if bv.requires_grad else None
        return ga, gb

    return _track(op, out, (av, bv), backward_fn)


def add(a, b) -> Variable:
    return _binary("add", a, b, lambda x, y: x + y, lambda g, x, y: (g, g))


def sub(a, b) -> Variable:
    return _binary("sub", a, b, lambda x, y: x - y, lambda g, x, y: (g, -g))


def mul(a, b) -> Variable:
    return _binary("mul", a, b, lambda x, y: x * y,
                   lambda g, x, y: (g * y, g * x))


def scale(x, s: float) -> Variable:
    xv = as_variable(x)
    s = float(s)
    out = xv.value * s

    def backward_fn(g: np.ndarray):
        return (g * s,)

    return _track("scale", out, (xv,), backward_fn)


def relu(x) -> Variable:
    xv = as_variable(x)
    mask = xv.value > 0
    out = np.where(mask, xv.value, 0)

    def backward_fn(g: np.ndarray):
        return (np.where(mask, g, 0),)

    return _track("relu", out, (xv,), backward_fn)


def _sigmoid_stable(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Variable:
    xv = as_variable(x)
    out = _sigmoid_stable(xv.value)

    def backward_fn(g: np.ndarray):
        return (g * out * (1.0 - out),)

    return _track("sigmoid", out, (xv,), backward_fn)


def softmax(x) -> Variable:
    """Row-wise softmax of (N,K) logits with max subtraction."""
    xv = as_variable(x)
    a = xv.value
    if a.ndim != 2:
        raise DimensionError(f"softmax expects 2-D logits, got {a.ndim}-D")
    z = a - a.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def backward_fn(g: np.ndarray):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _track("softmax", out, (xv,), backward_fn)


# ---------------------------------------------------------------------------
# normalization and loss


def batchnorm_train(x, gamma, beta, eps: float = 1e-5):
    """Batch norm over (N,H,W) per channel using the current batch's stats.

    Returns (out, batch_mean, batch_var) so the caller can maintain running
    statistics; the variance is the biased (population) estimate used for
    normalization.  Gradients flow through the batch statistics.
    """
    xv, gv, bv = as_variable(x), as_variable(gamma), as_variable(beta)
    a = xv.value
    if a.ndim != 4:
        raise DimensionError(f"batchnorm expects 4-D input, got {a.ndim}-D")
    n, c, h, w = a.shape
    if gv.value.shape != (c,) or bv.value.shape != (c,):
        raise DimensionError(
            f"batchnorm gamma/beta must have shape ({c},), got "
            f"{gv.value.shape} and {bv.value.shape}")
    m = n * h * w
    if m < 2:
        raise DegenerateBatchError(
            f"batchnorm needs at least 2 values per channel, got {m}")
    mu = a.mean(axis=(0, 2, 3))
    var = a.var(axis=(0, 2, 3))
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (a - mu[None, :, None, None]) * ivar[None, :, None, None]
    out = xhat * gv.value[None, :, None, None] + bv.value[None, :, None, None]

    def backward_fn(g: np.ndarray):
        gg = (g * xhat).sum(axis=(0, 2, 3)) if gv.requires_grad or xv.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bv.requires_grad or xv.requires_grad else None
        gx = None
        if xv.requires_grad:
            gsum = g.sum(axis=(0, 2, 3))
            gxhat_sum = (g * xhat).sum(axis=(0, 2, 3))
            coef = (gv.value * ivar)[None, :, None, None]
            gx = coef * (g - (gsum / m)[None, :, None, None]
                         - xhat * (gxhat_sum / m)[None, :, None, None])
        return (gx,
                gg if gv.requires_grad else None,
                gb if bv.requires_grad else None)

    out_var = _track("batchnorm_train", out, (xv, gv, bv), backward_fn)
    return out_var, mu, var


def batchnorm_eval(x, gamma, beta, running_mean, running_var,
                   eps: float = 1e-5) -> Variable:
    """Batch norm using frozen running statistics (a per-channel affine map)."""
    xv, gv, bv = as_variable(x), as_variable(gamma), as_variable(beta)
    a = xv.value
    if a.ndim != 4:
        raise DimensionError(f"batchnorm expects 4-D input, got {a.ndim}-D")
    c = a.shape[1]
    rm = np.asarray(running_mean, dtype=a.dtype)
    rv = np.asarray(running_var, dtype=a.dtype)
    if rm.shape != (c,) or rv.shape != (c,):
        raise DimensionError(
            f"batchnorm running stats must have shape ({c},)")
    ivar = 1.0 / np.sqrt(rv + eps)
    xhat = (a - rm[None, :, None, None]) * ivar[None, :, None, None]
    out = xhat * gv.value[None, :, None, None] + bv.value[None, :, None, None]

    def backward_fn(g: np.ndarray):
        gx = None
        if xv.requires_grad:
            gx = g * (gv.value * ivar)[None, :, None, None]
        gg = (g * xhat).sum(axis=(0, 2, 3)) if gv.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bv.requires_grad else None
        return gx, gg, gb

    return _track("batchnorm_eval", out, (xv, gv, bv), backward_fn)


def cross_entropy(logits, labels) -> Variable:
    """Mean cross-entropy of (N,K) logits against integer labels.

    Fused with log-sum-exp for stability; the adjoint is the familiar
    (softmax - one_hot) / N.
    """
    lv = as_variable(logits)
    a = lv.value
    if a.ndim != 2:
        raise DimensionError(f"cross_entropy expects 2-D logits, got {a.ndim}-D")
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != a.shape[0]:
        raise DimensionError(
            f"cross_entropy labels must be ({a.shape[0]},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError("cross_entropy labels must be integers")
    k = a.shape[1]
    if y.size and (y.min() < 0 or y.max() >= k):
        raise ValueError(f"cross_entropy labels must lie in [0, {k})")
    n = a.shape[0]
    m = a.max(axis=1, keepdims=True)
    z = a - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    out = np.asarray(-logp[np.arange(n), y].mean(), dtype=a.dtype)

    def backward_fn(g: np.ndarray):
        p = np.exp(logp)
        p[np.arange(n), y] -= 1.0
        return (p * (g / n),)

    return _track("cross_entropy", out, (lv,), backward_fn)


# ---------------------------------------------------------------------------
# shape and reduction ops


def channel_mean(x) -> Variable:
    """Mean over the channel axis of (N,C,H,W), keeping a singleton channel."""
    xv = as_variable(x)
    a = xv.value
    if a.ndim != 4:
        raise DimensionError(f"channel_mean expects 4-D input, got {a.ndim}-D")
    c = a.shape[1]
    out = a.mean(axis=1, keepdims=True)

    def backward_fn(g: np.ndarray):
        return (np.broadcast_to(g / c, a.shape).copy(),)

    return _track("channel_mean", out, (xv,), backward_fn)


def channel_max(x) -> Variable:
    """Max over the channel axis of (N,C,H,W); ties route to the first max."""
    xv = as_variable(x)
    a = xv.value
    if a.ndim != 4:
        raise DimensionError(f"channel_max expects 4-D input, got {a.ndim}-D")
    idx = a.argmax(axis=1)
    out = np.take_along_axis(a, idx[:, None], axis=1)

    def backward_fn(g: np.ndarray):
        gx = np.zeros_like(a)
        np.put_along_axis(gx, idx[:, None], g, axis=1)
        return (gx,)

    return _track("channel_max", out, (xv,), backward_fn)


def concat(parts: Sequence, axis: int = 0) -> Variable:
    vars_ = tuple(as_variable(p) for p in parts)
    if not vars_:
        raise ValueError("concat needs at least one input")
    try:
        out = np.concatenate([v.value for v in vars_], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from exc
    sizes = [v.value.shape[axis] for v in vars_]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g: np.ndarray):
        pieces = np.split(g, splits, axis=axis)
        return tuple(p if v.requires_grad else None
                     for p, v in zip(pieces, vars_))

    return _track("concat", out, vars_, backward_fn)


def reshape(x, shape: tuple[int, ...]) -> Variable:
    xv = as_variable(x)
    out = xv.value.reshape(shape)

    def backward_fn(g: np.ndarray):
        return (g.reshape(xv.value.shape),)

    return _track("reshape", out, (xv,), backward_fn)


def sum_all(x) -> Variable:
    xv = as_variable(x)
    out = np.asarray(xv.value.sum(), dtype=xv.value.dtype)

    def backward_fn(g: np.ndarray):
        return (np.broadcast_to(g, xv.value.shape).copy(),)

    return _track("sum_all", out, (xv,), backward_fn)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(fn: Callable[[Variable], Variable], x: Variable,
               eps: float | Sequence[float] = 1e-5, sample: int | None = None,
               rng: np.random.Generator | None = None,
               early_stop: float = 1e-6,
               indices: Sequence[int] | None = None) -> float:
    """Compare reverse-mode gradients of ``fn`` against central differences.

    ``fn`` must map ``x`` to a scalar Variable and be deterministic across
    calls.  Returns the worst elementwise relative error
    |analytic - numeric| / (|analytic| + |numeric| + 1e-12).  With
    ``sample`` set, only that many randomly chosen elements are probed,
    which keeps large tensors affordable.  ``indices`` instead pins the
    probed flat positions exactly; "largest analytic gradient" is a good
    pick for deep models, since central differences on a near-zero element
    measure float64 cancellation noise rather than gradient correctness.

    ``eps`` may be a sequence of step sizes; each element then scores the
    best agreement across them (moving to the next step only while the
    error stays above ``early_stop``).  Deep compositions need this: a
    correct gradient converges under some step while truncation error at a
    single fixed step can dwarf the tolerance being certified, and a wrong
    gradient agrees with no step.
    """
    if x.value.dtype != np.float64:
        raise ValueError("grad_check requires a float64 Variable")
    if not x.requires_grad:
        raise ValueError("grad_check requires requires_grad=True on x")
    # reshape(-1) below must alias x.value for the nudges to be visible
    x.value = np.ascontiguousarray(x.value)
    x.grad = None
    loss = fn(x)
    backward(loss)
    if x.grad is None:
        raise ValueError("fn produced no gradient for x")
    analytic = x.grad.reshape(-1).copy()
    x.grad = None

    flat = x.value.reshape(-1)
    n = flat.size
    if indices is not None:
        indices = np.asarray(indices, dtype=np.intp)
        if indices.size == 0 or indices.min() < 0 or indices.max() >= n:
            raise ValueError(f"indices must be non-empty positions in [0, {n})")
    elif sample is not None and sample < n:
        gen = rng if rng is not None else np.random.default_rng(0)
        indices = gen.choice(n, size=sample, replace=False)
    else:
        indices = np.arange(n)

    eps_list = (float(eps),) if np.isscalar(eps) else tuple(float(e) for e in eps)
    worst = 0.0
    with no_grad():
        for i in indices:
            orig = flat[i]
            a = float(analytic[i])
            best = np.inf
            for e in eps_list:
                flat[i] = orig + e
                up = float(fn(x).value)
                flat[i] = orig - e
                down = float(fn(x).value)
                flat[i] = orig
                numeric = (up - down) / (2.0 * e)
                rel = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
                if rel < best:
                    best = rel
                if best < early_stop:
                    break
            if best > worst:
                worst = best
    return worst

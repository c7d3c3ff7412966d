"""Dense float tensors with reverse-mode automatic differentiation.

Every operation appends a node to the currently active :class:`Tape`
(when one is open and an input requires gradients). ``backward`` walks
the tape once in reverse, accumulating gradients into the ``grad``
field of the leaf tensors. Tensors are treated as immutable once they
have been recorded on a tape; parameter updates happen between tapes.

Float32 is the working precision; the same graph can be built in
float64 for gradient checking (see :func:`gradcheck`).
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf as _erf

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(RuntimeError):
    """An API precondition was violated (misuse, not bad data)."""


# ---------------------------------------------------------------------------
# Tape


class _Node:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of primitive operations, in execution order.

    Use as a context manager around the forward pass that should be
    differentiated. Ops executed while no tape is open are not recorded
    (cheap inference / detached passes).
    """

    def __init__(self):
        self.ops: list[_Node] = []
        self.consumed = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


class no_grad:
    """Suspend recording (e.g. the detached first forward pass)."""

    def __enter__(self):
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def grad_enabled() -> bool:
    return _active_tape() is not None


# ---------------------------------------------------------------------------
# Tensor


class Tensor:
    """N-d float array, optionally participating in the gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_tensor(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _record(inputs: tuple, out_data: np.ndarray, backward_fn) -> Tensor:
    tape = _active_tape()
    track = tape is not None and any(
        isinstance(t, Tensor) and (t.requires_grad or t._tape is not None) for t in inputs
    )
    out = Tensor(out_data)
    if track:
        out.requires_grad = True
        out._tape = tape
        tape.ops.append(_Node(inputs, out, backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] > 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# backward


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    The tape the loss was recorded on is consumed; a second backward on
    the same tape raises :class:`ContractError`.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor loss")
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
    tape = loss._tape
    if tape is None:
        raise ContractError("loss is not recorded on a tape (build it inside `with Tape():`)")
    if tape.consumed:
        raise ContractError("tape already consumed by a previous backward; build a new tape")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.ops):
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue
        in_grads = node.backward_fn(g_out)
        for t, g in zip(node.inputs, in_grads):
            if g is None or not isinstance(t, Tensor):
                continue
            if not (t.requires_grad or t._tape is not None):
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
        # keep leaf references alive until the end of the walk
    by_id = {id(loss): loss}
    for node in tape.ops:
        for t in node.inputs:
            if isinstance(t, Tensor):
                by_id[id(t)] = t
        by_id[id(node.output)] = node.output
    for key, g in grads.items():
        t = by_id.get(key)
        if t is None or not t.requires_grad or t._tape is not None:
            continue  # interior value, gradient not retained
        t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record((a, b), out, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record((a, b), out, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _record((a, b), out, bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data

    def bwd(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _record((a, b), out, bwd)


def neg(a: Tensor) -> Tensor:
    return _record((a,), -a.data, lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes must match."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[-2] or ad.shape[:-2] != bd.shape[:-2]:
        raise ShapeError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def bwd(g):
        return g @ bd.swapaxes(-1, -2), ad.swapaxes(-1, -2) @ g

    return _record((a, b), out, bwd)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.data.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _record((a,), a.data.transpose(axes), lambda g: (g.transpose(inv),))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    orig = a.data.shape
    return _record((a,), a.data.reshape(shape), lambda g: (g.reshape(orig),))


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows along axis 0. Backward scatter-adds into the source."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows wants a flat index vector, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise ShapeError(f"gather_rows index out of range for {a.data.shape[0]} rows")
    out = a.data[idx]

    def bwd(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        return (acc,)

    return _record((a,), out, bwd)


def tsum(a: Tensor) -> Tensor:
    out = a.data.sum()

    def bwd(g):
        return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=False),)

    return _record((a,), np.asarray(out), bwd)


def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).astype(a.data.dtype, copy=False),)

    return _record((a,), out, bwd)


def mean_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    n = a.data.shape[axis]
    return sum_axis(a, axis, keepdims) * (1.0 / n)


def tmean(a: Tensor) -> Tensor:
    return tsum(a) * (1.0 / a.data.size)


def texp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record((a,), out, lambda g: (g * out,))


def tlog(a: Tensor) -> Tensor:
    return _record((a,), np.log(a.data), lambda g: (g / a.data,))


def tsqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def bwd(g):
        # subgradient 0 at exactly 0 keeps training finite
        denom = np.where(out > 0, 2.0 * out, 1.0)
        return (np.where(out > 0, g / denom, 0.0).astype(a.data.dtype, copy=False),)

    return _record((a,), out, bwd)


def pow_const(a: Tensor, p: float) -> Tensor:
    """a ** p for non-negative a (used for focal modulation terms)."""
    out = np.power(a.data, p)

    def bwd(g):
        base = np.where(a.data > 0, a.data, 1.0)
        d = p * np.power(base, p - 1.0)
        d = np.where(a.data > 0, d, 0.0 if p > 1 else p)
        return (g * d.astype(a.data.dtype, copy=False),)

    return _record((a,), out, bwd)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    out = np.maximum(a.data, floor)
    mask = (a.data > floor).astype(a.data.dtype)
    return _record((a,), out, lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = out.astype(x.dtype, copy=False)
    return _record((a,), out, lambda g: (g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), overflow-safe."""
    x = a.data
    out = np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))
    sig = 1.0 / (1.0 + np.exp(-np.minimum(np.abs(x), 60.0)))
    sig = np.where(x >= 0, sig, 1.0 - sig).astype(x.dtype, copy=False)
    return _record((a,), out.astype(x.dtype, copy=False), lambda g: (g * sig,))


def gelu(a: Tensor) -> Tensor:
    x = a.data
    cdf = 0.5 * (1.0 + _erf(x / math.sqrt(2.0)))
    out = (x * cdf).astype(x.dtype, copy=False)

    def bwd(g):
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        return ((g * (cdf + x * pdf)).astype(x.dtype, copy=False),)

    return _record((a,), out, bwd)


def softmax_rows(a: Tensor, scale: float = 1.0) -> Tensor:
    """Row-wise softmax over the last axis of ``scale * a``, max-stabilized."""
    z = scale * a.data
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = (e / e.sum(axis=-1, keepdims=True)).astype(a.data.dtype, copy=False)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((scale * out * (g - dot)).astype(a.data.dtype, copy=False),)

    return _record((a,), out, bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    var = xd.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    out = (xhat * gamma.data + beta.data).astype(xd.dtype, copy=False)
    n = xd.shape[-1]

    def bwd(g):
        dgamma = _unbroadcast(g * xhat, gamma.data.shape)
        dbeta = _unbroadcast(g, beta.data.shape)
        dxhat = g * gamma.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx.astype(xd.dtype, copy=False), dgamma, dbeta

    return _record((x, gamma, beta), out, bwd)


# ---------------------------------------------------------------------------
# composites


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def cosine_rows(a: Tensor, b: Tensor, eps: float = 1e-12) -> Tensor:
    """Cosine similarity between a single vector and each row of ``b``.

    ``a`` is [1, C] (or [C]), ``b`` is [L, C]; returns [L]. A zero vector
    on either side yields 0 (the numerator vanishes, the denominator is
    floored at ``eps``).
    """
    if a.data.ndim == 1:
        a = reshape(a, (1, a.data.shape[0]))
    if a.data.shape[1] != b.data.shape[1]:
        raise ShapeError(f"cosine_rows width mismatch: {a.data.shape} vs {b.data.shape}")
    num = reshape(matmul(b, transpose(a)), (b.data.shape[0],))
    na = tsqrt(tsum(mul(a, a)))
    nb = tsqrt(sum_axis(mul(b, b), axis=1))
    return div(num, clamp_min(mul(nb, na), eps))


def l2_distance(a: Tensor, b: Tensor) -> Tensor:
    """Euclidean distance between two same-shape tensors (scalar)."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"l2_distance shape mismatch: {a.data.shape} vs {b.data.shape}")
    d = sub(a, b)
    return tsqrt(tsum(mul(d, d)))


def extract_patches(x: Tensor, p: int) -> Tensor:
    """Split [C, H, W] into non-overlapping p x p patches -> [L, C*p*p].

    Patch vectors are ordered row-major over the grid; within a patch the
    layout is (channel, dy, dx), matching a kernel reshaped the same way.
    """
    c, h, w = x.data.shape
    if h % p or w % p:
        raise ShapeError(f"image {h}x{w} not divisible by patch size {p}")
    gh, gw = h // p, w // p
    t = reshape(x, (c, gh, p, gw, p))
    t = transpose(t, (1, 3, 0, 2, 4))
    return reshape(t, (gh * gw, c * p * p))


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack same-shape [C]-vectors or [1, C] rows into [N, C]."""
    rows = [t.data.reshape(1, -1) for t in tensors]
    out = np.concatenate(rows, axis=0)
    shapes = [t.data.shape for t in tensors]

    def bwd(g):
        return tuple(g[i].reshape(shapes[i]) for i in range(len(tensors)))

    return _record(tuple(tensors), out, bwd)


# ---------------------------------------------------------------------------
# gradient checking


def finite_difference(fn: Callable[[], float], tensor: Tensor, index, eps: float = 1e-5) -> float:
    """Central difference of ``fn`` w.r.t. one coordinate of ``tensor``."""
    flat = tensor.data.reshape(-1)
    old = flat[index]
    flat[index] = old + eps
    f_plus = fn()
    flat[index] = old - eps
    f_minus = fn()
    flat[index] = old
    return (f_plus - f_minus) / (2.0 * eps)


def gradcheck(
    fn: Callable[[], Tensor],
    tensors: Iterable[Tensor],
    eps: float = 1e-5,
    n_samples: int = 10,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare tape gradients of ``fn()`` against central differences.

    ``fn`` must rebuild the scalar loss from scratch on each call (it is
    re-evaluated for the finite differences). Returns the worst relative
    error over the sampled coordinates. Tensors should be float64.
    """
    rng = rng or np.random.default_rng(0)
    tensors = list(tensors)
    for t in tensors:
        if t.data.dtype != np.float64:
            raise ContractError("gradcheck requires float64 tensors")
        t.zero_grad()
    with Tape():
        loss = fn()
        backward(loss)

    def value():
        return float(fn().data)

    worst = 0.0
    for t in tensors:
        if t.grad is None:
            raise ContractError("gradcheck: a tensor did not receive a gradient")
        n = min(n_samples, t.data.size)
        idxs = rng.choice(t.data.size, size=n, replace=False)
        for i in idxs:
            num = finite_difference(value, t, int(i), eps)
            ana = float(t.grad.reshape(-1)[int(i)])
            rel = abs(num - ana) / max(1.0, abs(num), abs(ana))
            worst = max(worst, rel)
    return worst

"""Dense tensors with reverse-mode gradients.

Tensors store float32 row-major data (float64 is accepted for oracle work
such as finite differences). Every operation that participates in a
differentiable expression records its parents and a backward closure, so the
gradient of any scalar output can be evaluated with respect to any leaf that
has ``requires_grad`` set. Reductions accumulate in float64 before casting
back to the storage dtype.

Randomness is organized around one root seed: `seed_stream` derives named,
independent generator streams so an entire experiment is reproducible from a
single integer.
"""

from __future__ import annotations

import zlib
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation, NumericError

Array = np.ndarray


def _check_finite(arr: Array, op: str) -> Array:
    if not np.all(np.isfinite(arr)):
        raise NumericError(op)
    return arr


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum `grad` back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """N-dimensional float array, optionally tracking gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], None] | None = None
        self.op = "leaf"

    @staticmethod
    def _from_op(data: Array, parents: tuple["Tensor", ...], op: str,
                 backward: Callable[[Array], tuple] | None) -> "Tensor":
        _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.op = op
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- basic introspection ------------------------------------------------

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
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op})"

    # -- arithmetic ----------------------------------------------------------

    def _ensure(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other, dtype=self.dtype)

    def __add__(self, other):
        other = self._ensure(other)
        data = self.data + other.data

        def backward(g):
            return _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)

        return Tensor._from_op(data, (self, other), "add", backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._ensure(other)
        data = self.data - other.data

        def backward(g):
            return _unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)

        return Tensor._from_op(data, (self, other), "sub", backward)

    def __rsub__(self, other):
        return self._ensure(other).__sub__(self)

    def __mul__(self, other):
        other = self._ensure(other)
        data = self.data * other.data
        a, b = self, other

        def backward(g):
            return (_unbroadcast(g * b.data, a.shape),
                    _unbroadcast(g * a.data, b.shape))

        return Tensor._from_op(data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __neg__(self):
        def backward(g):
            return (-g,)

        return Tensor._from_op(-self.data, (self,), "neg", backward)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- elementwise ----------------------------------------------------------

    def silu(self) -> "Tensor":
        x = self.data
        with np.errstate(over="ignore"):
            sig = 1.0 / (1.0 + np.exp(-x))
        data = x * sig

        def backward(g):
            return (g * (sig * (1.0 + x * (1.0 - sig))),)

        return Tensor._from_op(data, (self,), "silu", backward)

    def exp(self) -> "Tensor":
        data = np.exp(self.data)

        def backward(g):
            return (g * data,)

        return Tensor._from_op(data, (self,), "exp", backward)

    def log(self) -> "Tensor":
        with np.errstate(invalid="ignore", divide="ignore"):
            data = np.log(self.data)

        def backward(g):
            return (g / self.data,)

        return Tensor._from_op(data, (self,), "log", backward)

    def square(self) -> "Tensor":
        data = np.square(self.data)

        def backward(g):
            return (g * (2.0 * self.data),)

        return Tensor._from_op(data, (self,), "square", backward)

    # -- reductions (float64 accumulation) ------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64)
        data = np.asarray(data, dtype=self.dtype)
        shape = self.shape

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, shape).astype(g.dtype, copy=False),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, shape),)

        return Tensor._from_op(data, (self,), "sum", backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.size
        else:
            n = int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        s = self.sum(axis=axis, keepdims=keepdims)
        return s * (1.0 / n)

    def logsumexp(self, axis: int = -1) -> "Tensor":
        """log(sum(exp(x))) along `axis`, max-shifted so finite inputs never overflow."""
        x = self.data
        m = np.max(x, axis=axis, keepdims=True)
        shifted = np.exp(x - m)
        total = shifted.sum(axis=axis, keepdims=True, dtype=np.float64)
        data = np.asarray(m + np.log(total), dtype=self.dtype)
        soft = np.asarray(shifted / total, dtype=self.dtype)
        data_sq = np.squeeze(data, axis=axis)

        def backward(g):
            return (np.expand_dims(g, axis) * soft,)

        return Tensor._from_op(data_sq, (self,), "logsumexp", backward)

    def softmax(self, axis: int = -1) -> "Tensor":
        x = self.data
        m = np.max(x, axis=axis, keepdims=True)
        e = np.exp(x - m)
        s = np.asarray(e / e.sum(axis=axis, keepdims=True, dtype=np.float64),
                       dtype=self.dtype)

        def backward(g):
            inner = (g * s).sum(axis=axis, keepdims=True)
            return (s * (g - inner),)

        return Tensor._from_op(s, (self,), "softmax", backward)

    # -- shape ops -------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        data = self.data.reshape(shape)

        def backward(g):
            return (g.reshape(old),)

        return Tensor._from_op(data, (self,), "reshape", backward)

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
        data = np.ascontiguousarray(self.data.transpose(axes))

        def backward(g):
            return (g.transpose(inv),)

        return Tensor._from_op(data, (self,), "transpose", backward)

    # -- autodiff --------------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode gradient of this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ContractViolation(
                f"backward() requires a scalar output, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            for parent, pg in zip(node._parents, node._backward(node.grad)):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.asarray(pg, dtype=parent.dtype).reshape(parent.shape)
                else:
                    parent.grad = parent.grad + np.asarray(pg, dtype=parent.dtype).reshape(parent.shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy stacking rules (leading dims broadcast)."""
    data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, b.data.swapaxes(-1, -2))
        gb = np.matmul(a.data.swapaxes(-1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._from_op(data, (a, b), "matmul", backward)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return matmul(x, w) + b


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ContractViolation("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(data, tuple(tensors), "concat", backward)


# -- module-level contracts ------------------------------------------------


def logsumexp(v) -> float:
    """log(sum(exp(v_i))) of a non-empty vector, overflow-safe for any finite input."""
    arr = v.data if isinstance(v, Tensor) else np.asarray(v)
    if arr.size == 0:
        raise ContractViolation("logsumexp of empty vector")
    if arr.ndim != 1:
        raise ContractViolation(f"logsumexp expects a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("logsumexp", "non-finite input")
    x = arr.astype(np.float64)
    m = float(np.max(x))
    return m + float(np.log(np.sum(np.exp(x - m))))


def gaussian_sample(shape, mean: float, std: float, rng: np.random.Generator,
                    dtype=np.float32) -> Tensor:
    """I.i.d. normal draws; identical (seed, shape) gives bit-identical output."""
    if std < 0:
        raise ContractViolation(f"negative std {std}")
    draws = rng.standard_normal(size=shape, dtype=np.float64) * std + mean
    return Tensor(draws, dtype=dtype)


def value_and_grad(f: Callable[..., Tensor], inputs: Sequence[Tensor]):
    """Evaluate scalar expression `f` and its gradient w.r.t. each input.

    Returns (value, grads) where grads[i] is a Tensor shaped like inputs[i].
    """
    inputs = list(inputs)
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    out = f(*inputs)
    if not isinstance(out, Tensor):
        raise ContractViolation("expression must return a Tensor")
    if out.data.size != 1:
        raise ContractViolation(
            f"expression must be scalar-valued, got shape {out.shape}")
    out.backward()
    grads = []
    for t in inputs:
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        grads.append(Tensor(g, dtype=t.dtype))
    return out.item(), grads


def check_gradients(f: Callable[..., Tensor], inputs: Sequence[Tensor],
                    fd_step: float = 1e-3) -> float:
    """Max relative error between analytic gradients and central differences.

    Both routes are evaluated at float64 so the comparison verifies the
    backward formulas rather than float32 storage noise; production paths
    keep their own dtype. The oracle is a fourth-order central stencil,
    accurate enough that near-zero gradient coordinates stay within
    tolerance. Relative error uses max(|a|, |b|, 1e-8) as denominator.
    """
    if fd_step <= 0:
        raise ContractViolation(f"fd_step must be positive, got {fd_step}")
    base = [t.data.astype(np.float64) for t in inputs]
    _, grads = value_and_grad(f, [Tensor(b, dtype=np.float64) for b in base])

    def eval_at(i, j, delta):
        probe = [b.copy() for b in base]
        probe[i].flat[j] += delta
        return f(*[Tensor(p, dtype=np.float64) for p in probe]).item()

    max_rel = 0.0
    for i, x in enumerate(base):
        fd = np.zeros(x.size, dtype=np.float64)
        for j in range(x.size):
            f1 = eval_at(i, j, fd_step)
            f_1 = eval_at(i, j, -fd_step)
            f2 = eval_at(i, j, 2.0 * fd_step)
            f_2 = eval_at(i, j, -2.0 * fd_step)
            fd[j] = (-f2 + 8.0 * f1 - 8.0 * f_1 + f_2) / (12.0 * fd_step)
        a = grads[i].data.astype(np.float64).reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-8)
        max_rel = max(max_rel, float(np.max(np.abs(a - fd) / denom)))
    return max_rel


# -- seeded stream derivation ------------------------------------------------


def seed_stream(root_seed: int, *labels) -> np.random.Generator:
    """Derive an independent, reproducible generator for a named purpose."""
    keys = [int(root_seed) & 0xFFFFFFFFFFFFFFFF]
    for lab in labels:
        if isinstance(lab, (int, np.integer)):
            keys.append(int(lab) & 0xFFFFFFFF)
        else:
            keys.append(zlib.crc32(str(lab).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(keys))

"""Minimal reverse-mode automatic differentiation on dense float64 arrays.

The operator set is exactly what the attention policy needs: matmul,
elementwise arithmetic, tanh/relu/log, masked softmax over the last axis,
batch normalization, concatenation, reductions, and a couple of gather /
scatter primitives for sequence decoding.  Values are numpy arrays; every
operation records a backward closure on an implicit tape unless gradient
recording is disabled via ``no_grad()``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

MASK_NEG = -1e30  # additive stand-in for -inf; keeps softmax NaN-free

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (pure inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class NumericError(RuntimeError):
    """A non-finite value appeared in the computation graph."""


class ShapeError(ValueError):
    """Operands of an operation have incompatible shapes."""


class Var:
    """One node of the computation graph: a float64 array plus tape links."""

    __slots__ = ("value", "grad", "parents", "_backward", "name")

    def __init__(self, value, parents=(), backward=None, name=""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents if _GRAD_ENABLED else ()
        self._backward = backward if _GRAD_ENABLED else None
        self.name = name
        if not np.all(np.isfinite(self.value)):
            raise NumericError(f"non-finite value at node '{name or 'leaf'}'")

    @property
    def shape(self):
        return self.value.shape

    def backward(self) -> None:
        """Accumulate gradients of this scalar node into the whole graph."""
        if self.value.size != 1:
            raise ShapeError("backward() requires a scalar node")
        order = _toposort(self)
        self.grad = np.ones_like(self.value)
        for node in order:
            if node._backward is None or node.grad is None:
                continue
            node._backward(node.grad)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, name={self.name!r})"


def _toposort(root: Var) -> list[Var]:
    seen: set[int] = set()
    order: list[Var] = []
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return list(reversed(order))


def _accum(node: Var, g: np.ndarray) -> None:
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x, name="const")


# ---------------------------------------------------------------------------
# primitives


def add(a: Var, b: Var, name="add") -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.value + b.value, (a, b), None, name)

    def backward(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(g, b.value.shape))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def sub(a: Var, b: Var, name="sub") -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.value - b.value, (a, b), None, name)

    def backward(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(-g, b.value.shape))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def mul(a: Var, b: Var, name="mul") -> Var:
    a, b = as_var(a), as_var(b)
    out = Var(a.value * b.value, (a, b), None, name)

    def backward(g):
        _accum(a, _unbroadcast(g * b.value, a.value.shape))
        _accum(b, _unbroadcast(g * a.value, b.value.shape))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def scalar_mul(a: Var, c: float, name="scalar_mul") -> Var:
    a = as_var(a)
    out = Var(a.value * c, (a,), None, name)

    def backward(g):
        _accum(a, g * c)

    out._backward = backward if _GRAD_ENABLED else None
    return out


def matmul(a: Var, b: Var, name="matmul") -> Var:
    a, b = as_var(a), as_var(b)
    if a.value.ndim < 1 or b.value.ndim < 2:
        raise ShapeError(f"matmul operands too small at node '{name}'")
    if a.value.shape[-1] != b.value.shape[-2]:
        raise ShapeError(
            f"matmul shape mismatch at node '{name}': "
            f"{a.value.shape} @ {b.value.shape}"
        )
    out = Var(np.matmul(a.value, b.value), (a, b), None, name)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
        _accum(a, _unbroadcast(ga, a.value.shape))
        _accum(b, _unbroadcast(gb, b.value.shape))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def tanh(a: Var, name="tanh") -> Var:
    a = as_var(a)
    y = np.tanh(a.value)
    out = Var(y, (a,), None, name)

    def backward(g):
        _accum(a, g * (1.0 - y * y))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def relu(a: Var, name="relu") -> Var:
    a = as_var(a)
    out = Var(np.maximum(a.value, 0.0), (a,), None, name)

    def backward(g):
        _accum(a, g * (a.value > 0.0))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def log(a: Var, name="log") -> Var:
    a = as_var(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.log(a.value)
    out = Var(value, (a,), None, name)  # non-finite rejected by Var itself

    def backward(g):
        _accum(a, g / a.value)

    out._backward = backward if _GRAD_ENABLED else None
    return out


def softmax(a: Var, mask: np.ndarray | None = None, name="softmax") -> Var:
    """Softmax over the last axis; `mask` (boolean, True = excluded) is
    applied as an additive ``MASK_NEG`` before normalization."""
    a = as_var(a)
    z = a.value
    if mask is not None:
        if mask.shape != z.shape:
            raise ShapeError(
                f"softmax mask shape {mask.shape} != logits {z.shape} "
                f"at node '{name}'"
            )
        z = np.where(mask, MASK_NEG, z)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Var(y, (a,), None, name)

    def backward(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        _accum(a, y * (g - inner))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def batch_norm(x: Var, gamma: Var, beta: Var, eps: float = 1e-5,
               name="batch_norm") -> Var:
    """Normalize each feature (last axis) by the statistics of the current
    batch, i.e. over all leading axes.  No running averages are kept."""
    x, gamma, beta = as_var(x), as_var(gamma), as_var(beta)
    d = x.value.shape[-1]
    flat = x.value.reshape(-1, d)
    n = flat.shape[0]
    mu = flat.mean(axis=0)
    var = flat.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat_flat = (flat - mu) * inv
    xhat = xhat_flat.reshape(x.value.shape)
    out = Var(gamma.value * xhat + beta.value, (x, gamma, beta), None, name)

    def backward(g):
        gf = g.reshape(-1, d)
        _accum(gamma, (gf * xhat_flat).sum(axis=0))
        _accum(beta, gf.sum(axis=0))
        dxhat = gf * gamma.value
        dx = inv / n * (
            n * dxhat
            - dxhat.sum(axis=0)
            - xhat_flat * (dxhat * xhat_flat).sum(axis=0)
        )
        _accum(x, dx.reshape(x.value.shape))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def concat(parts: Sequence[Var], axis: int = -1, name="concat") -> Var:
    parts = [as_var(p) for p in parts]
    out = Var(np.concatenate([p.value for p in parts], axis=axis),
              tuple(parts), None, name)
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(p, g[tuple(idx)])

    out._backward = backward if _GRAD_ENABLED else None
    return out


def mean(a: Var, axis=None, name="mean") -> Var:
    a = as_var(a)
    out = Var(a.value.mean(axis=axis), (a,), None, name)
    count = a.value.size if axis is None else a.value.shape[axis]

    def backward(g):
        if axis is None:
            _accum(a, np.full_like(a.value, g / count))
        else:
            _accum(a, np.broadcast_to(
                np.expand_dims(g, axis) / count, a.value.shape).copy())

    out._backward = backward if _GRAD_ENABLED else None
    return out


def sum_(a: Var, axis=None, name="sum") -> Var:
    a = as_var(a)
    out = Var(a.value.sum(axis=axis), (a,), None, name)

    def backward(g):
        if axis is None:
            _accum(a, np.full_like(a.value, g))
        else:
            _accum(a, np.broadcast_to(
                np.expand_dims(g, axis), a.value.shape).copy())

    out._backward = backward if _GRAD_ENABLED else None
    return out


def reshape(a: Var, shape, name="reshape") -> Var:
    a = as_var(a)
    out = Var(a.value.reshape(shape), (a,), None, name)

    def backward(g):
        _accum(a, g.reshape(a.value.shape))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def transpose(a: Var, axes, name="transpose") -> Var:
    a = as_var(a)
    out = Var(a.value.transpose(axes), (a,), None, name)
    inverse = np.argsort(axes)

    def backward(g):
        _accum(a, g.transpose(inverse))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def take_rows(a: Var, idx: np.ndarray, name="take_rows") -> Var:
    """out[k] = a[idx[k]] along the first axis (idx may repeat)."""
    a = as_var(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = Var(a.value[idx], (a,), None, name)

    def backward(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, idx, g)
        _accum(a, ga)

    out._backward = backward if _GRAD_ENABLED else None
    return out


def take_along_batch(a: Var, idx: np.ndarray, name="take_along_batch") -> Var:
    """out[k] = a[k, idx[k]]; `a` has shape (K, n) or (K, n, ...)."""
    a = as_var(a)
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(a.value.shape[0])
    out = Var(a.value[rows, idx], (a,), None, name)

    def backward(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, (rows, idx), g)
        _accum(a, ga)

    out._backward = backward if _GRAD_ENABLED else None
    return out


def scatter_rows(a: Var, idx: np.ndarray, size: int, name="scatter_rows") -> Var:
    """Place rows of `a` (shape (K, ...)) at positions `idx` of a zero array
    with leading dimension `size`."""
    a = as_var(a)
    idx = np.asarray(idx, dtype=np.intp)
    value = np.zeros((size,) + a.value.shape[1:], dtype=np.float64)
    value[idx] = a.value
    out = Var(value, (a,), None, name)

    def backward(g):
        _accum(a, g[idx])

    out._backward = backward if _GRAD_ENABLED else None
    return out


# ---------------------------------------------------------------------------
# parameter store and gradient extraction


class ParamStore:
    """Named float64 parameter arrays partitioned into 'body' and 'head'."""

    def __init__(self):
        self.tensors: dict[str, np.ndarray] = {}
        self.partition: dict[str, str] = {}

    def add(self, path: str, value: np.ndarray, partition: str = "body"):
        if path in self.tensors:
            raise ValueError(f"duplicate parameter path {path!r}")
        if partition not in ("body", "head"):
            raise ValueError(f"unknown partition {partition!r}")
        self.tensors[path] = np.asarray(value, dtype=np.float64)
        self.partition[path] = partition

    def paths(self, partition: str | None = None) -> list[str]:
        if partition is None:
            return list(self.tensors)
        return [p for p, part in self.partition.items() if part == partition]

    def as_vars(self) -> dict[str, Var]:
        return {p: Var(v, name=p) for p, v in self.tensors.items()}

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for p, v in self.tensors.items():
            other.add(p, v.copy(), self.partition[p])
        return other

    def n_params(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def allclose(self, other: "ParamStore", tol: float = 0.0) -> bool:
        if set(self.tensors) != set(other.tensors):
            return False
        if tol == 0.0:
            return all(np.array_equal(self.tensors[p], other.tensors[p])
                       for p in self.tensors)
        return all(np.allclose(self.tensors[p], other.tensors[p], atol=tol)
                   for p in self.tensors)


def gradients(loss: Var, leaves: Mapping[str, Var]) -> dict[str, np.ndarray]:
    """Run the reverse pass from a scalar loss and collect dLoss/dParam for
    every leaf; leaves unreachable from the loss get zero arrays."""
    loss.backward()
    out = {}
    for path, var in leaves.items():
        out[path] = var.grad if var.grad is not None else np.zeros_like(var.value)
    return out


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def finite_difference(fn: Callable[[Mapping[str, np.ndarray]], float],
                      tensors: Mapping[str, np.ndarray],
                      h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences of a scalar function of named arrays."""
    grads = {}
    work = {p: v.copy() for p, v in tensors.items()}
    for path, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn(work)
            flat[i] = orig - h
            fm = fn(work)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads[path] = g
    return grads


def check_gradients(fn: Callable[[Mapping[str, Var]], Var],
                    tensors: Mapping[str, np.ndarray],
                    tolerance: float = 1e-4,
                    h: float = 1e-5) -> dict:
    """Compare analytic gradients of ``fn`` against central finite
    differences.  ``fn`` maps named leaf Vars to a scalar Var.  Returns a
    report with per-parameter max relative error and a pass flag; never
    raises on mismatch."""
    total = sum(v.size for v in tensors.values())
    if total > 10_000:
        raise ValueError(f"graph too large to finite-difference ({total} params)")
    leaves = {p: Var(v, name=p) for p, v in tensors.items()}
    loss = fn(leaves)
    analytic = gradients(loss, leaves)

    def value_fn(arrs):
        with no_grad():
            return float(fn({p: Var(a, name=p) for p, a in arrs.items()}).value)

    numeric = finite_difference(value_fn, tensors, h=h)
    report = {"per_parameter": {}, "max_relative_error": 0.0}
    for path in tensors:
        a, n = analytic[path], numeric[path]
        # floor keeps finite-difference roundoff on (near-)zero gradients,
        # e.g. biases cancelled by batch norm, from dominating the ratio
        scale = np.maximum(np.abs(a) + np.abs(n), 1e-6)
        rel = np.abs(a - n) / scale
        err = float(rel.max()) if rel.size else 0.0
        report["per_parameter"][path] = err
        report["max_relative_error"] = max(report["max_relative_error"], err)
    report["passed"] = report["max_relative_error"] < tolerance
    report["tolerance"] = tolerance
    return report

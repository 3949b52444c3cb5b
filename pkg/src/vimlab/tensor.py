"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation returns a new :class:`Tensor` that remembers its inputs and a
closure computing the vector-Jacobian product.  Graphs are built on the fly
(define-by-run); :func:`backward` replays the recorded operations in exact
reverse creation order.

Only tensors with ``requires_grad`` set participate in the graph.  Results of
operations on constants are themselves constants and keep no history, so
evaluation code pays nothing for the bookkeeping.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError

_node_ids = itertools.count()


class Tensor:
    """A float64 array with an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.op = "leaf"
        self._parents = ()
        self._backward = None
        self._id = next(_node_ids)

    @property
    def node_id(self):
        return self._id

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{label})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t, g, fresh=False):
    """Add ``g`` into ``t.grad``; ``fresh`` marks an unshared array it may adopt."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g if fresh else np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _result(data, parents, op, backward_fn):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    out._id = next(_node_ids)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _is_bias_pair(big, small):
    return big.ndim == 2 and small.ndim == 1 and small.shape[0] == big.shape[1]


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b):
    """Elementwise sum; ``b`` may be a Python scalar or a bias row vector."""
    a = as_tensor(a)
    if np.isscalar(b):
        c = float(b)

        def bw(g):
            _accumulate(a, g)

        return _result(a.data + c, (a,), "add_scalar", bw)
    b = as_tensor(b)
    if a.shape == b.shape:

        def bw(g):
            _accumulate(a, g)
            _accumulate(b, g)

        return _result(a.data + b.data, (a, b), "add", bw)
    if _is_bias_pair(a, b):

        def bw(g):
            _accumulate(a, g)
            _accumulate(b, g.sum(axis=0))

        return _result(a.data + b.data, (a, b), "add_bias", bw)
    if _is_bias_pair(b, a):
        return add(b, a)
    raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}")


def neg(a):
    return scale(a, -1.0)


def sub(a, b):
    if np.isscalar(b):
        return add(a, -float(b))
    return add(a, neg(as_tensor(b)))


def scale(a, alpha):
    """Multiply by a constant scalar."""
    a = as_tensor(a)
    alpha = float(alpha)

    def bw(g):
        _accumulate(a, alpha * g)

    return _result(alpha * a.data, (a,), "scale", bw)


def mul(a, b):
    """Elementwise product of equal shapes (or by a scalar constant)."""
    if np.isscalar(b):
        return scale(a, b)
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        _accumulate(a, g * bd)
        _accumulate(b, g * ad)

    return _result(ad * bd, (a, b), "mul", bw)


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.data)

    def bw(g):
        _accumulate(a, g * y)

    return _result(y, (a,), "exp", bw)


def square(a):
    a = as_tensor(a)
    x = a.data

    def bw(g):
        _accumulate(a, 2.0 * x * g)

    return _result(x * x, (a,), "square", bw)


def reciprocal(a):
    a = as_tensor(a)
    y = 1.0 / a.data

    def bw(g):
        _accumulate(a, -g * y * y)

    return _result(y, (a,), "reciprocal", bw)


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)

    def bw(g):
        _accumulate(a, g * (1.0 - y * y))

    return _result(y, (a,), "tanh", bw)


def relu(a):
    """max(0, x); the subgradient at exactly 0 is 0."""
    a = as_tensor(a)
    mask = a.data > 0

    def bw(g):
        _accumulate(a, g * mask)

    return _result(np.where(mask, a.data, 0.0), (a,), "relu", bw)


def clamp(a, lo, hi):
    """Clip into [lo, hi]; gradient passes only where the input was inside."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)

    def bw(g):
        _accumulate(a, g * inside)

    return _result(np.clip(a.data, lo, hi), (a,), "clamp", bw)


# ---------------------------------------------------------------------------
# reductions and structural ops
# ---------------------------------------------------------------------------


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        if axis is None:
            _accumulate(a, np.full(shape, float(g)))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), shape))

    return _result(np.asarray(a.data.sum(axis=axis)), (a,), "sum", bw)


def mean(a, axis=None):
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / n)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        if a.requires_grad:
            _accumulate(a, g @ bd.T, fresh=True)
        if b.requires_grad:
            _accumulate(b, ad.T @ g, fresh=True)

    return _result(ad @ bd, (a, b), "matmul", bw)


def transpose(a):
    a = as_tensor(a)

    def bw(g):
        _accumulate(a, g.T)

    return _result(a.data.T.copy(), (a,), "transpose", bw)


def slice_cols(a, start, stop):
    """Columns ``start:stop`` of a 2-D tensor."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"slice_cols expects a matrix, got shape {a.shape}")

    def bw(g):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        _accumulate(a, full)

    return _result(a.data[:, start:stop].copy(), (a,), "slice_cols", bw)


def pick(a, index):
    """Row-wise gather ``a[i, index[i]]`` producing a vector."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(a.shape[0])

    def bw(g):
        full = np.zeros(a.shape)
        full[rows, index] = g
        _accumulate(a, full)

    return _result(a.data[rows, index].copy(), (a,), "pick", bw)


def max_rows(a):
    """Row-wise maximum; the gradient goes to the first maximising column."""
    a = as_tensor(a)
    arg = np.argmax(a.data, axis=1)
    rows = np.arange(a.shape[0])

    def bw(g):
        full = np.zeros(a.shape)
        full[rows, arg] = g
        _accumulate(a, full)

    return _result(a.data[rows, arg].copy(), (a,), "max_rows", bw)


# ---------------------------------------------------------------------------
# fused ops
# ---------------------------------------------------------------------------


def log_softmax_np(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_np(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"logits must be a matrix, got shape {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise IndexError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    logp = log_softmax_np(logits.data)
    rows = np.arange(b)
    loss = -logp[rows, labels].mean()

    def bw(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        _accumulate(logits, grad * (float(g) / b))

    return _result(np.asarray(loss), (logits,), "softmax_cross_entropy", bw)


def pairwise_sqdist(a, b):
    """Matrix of squared Euclidean distances between the rows of ``a`` and ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"pairwise_sqdist shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    d = (ad * ad).sum(1)[:, None] + (bd * bd).sum(1)[None, :] - 2.0 * ad @ bd.T
    np.maximum(d, 0.0, out=d)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, 2.0 * (g.sum(1)[:, None] * ad - g @ bd))
        if b.requires_grad:
            _accumulate(b, 2.0 * (g.sum(0)[:, None] * bd - g.T @ ad))

    return _result(d, (a, b), "pairwise_sqdist", bw)


# ---------------------------------------------------------------------------
# graph traversal
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OpRecord:
    op: str
    inputs: tuple
    output: int


class Graph:
    """The operations reachable from an output, in forward (creation) order."""

    def __init__(self, output):
        seen = {}
        stack = [output]
        while stack:
            t = stack.pop()
            if t._id in seen:
                continue
            seen[t._id] = t
            stack.extend(t._parents)
        self.output = output
        self.nodes = [seen[k] for k in sorted(seen)]

    @property
    def records(self):
        return [
            OpRecord(t.op, tuple(p._id for p in t._parents), t._id)
            for t in self.nodes
            if t._backward is not None
        ]

    def backward(self):
        out = self.output
        if out.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {out.shape}")
        _accumulate(out, np.ones(out.shape))
        for t in reversed(self.nodes):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    Graph(loss).backward()


def zero_grad(tensors):
    for t in tensors:
        t.grad = None

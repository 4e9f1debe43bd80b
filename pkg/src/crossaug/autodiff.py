"""Reverse-mode automatic differentiation over dense float64 arrays.

Values are C-order numpy float64 arrays wrapped in graph nodes. Each
operation records its inputs and a closure that routes the output gradient
back to them; `backward` walks the graph once in reverse topological order,
accumulating gradients additively so shared subexpressions are handled
correctly. Only the primitives the sequence models need are provided; shape
handling beyond numpy-style broadcasting on the elementwise ops is out of
scope.

The module also owns the checkpoint container format. A checkpoint is a flat
file of named arrays:

    magic    8 bytes   b"XAUGF64\\x00"
    version  u32 LE    currently 1
    count    u32 LE    number of entries
    entry*   count times, sorted by name:
        name_len u32 LE, name utf-8
        ndim     u32 LE, dims u64 LE * ndim
        data     float64 LE, C order, prod(dims) values
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from pathlib import Path

import numpy as np

LOG_FLOOR = 1e-12

_MAGIC = b"XAUGF64\x00"
_VERSION = 1

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (pure forward evaluation)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Node:
    """One value in the computation graph.

    grad is lazily allocated: it stays None until a child propagates into it,
    and accumulates additively afterwards.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the module-level functions are the primitives.
    def __add__(self, other):
        return add(self, other) if isinstance(other, Node) else affine(self, 1.0, float(other))

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Node) else affine(self, 1.0, -float(other))

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Node) else affine(self, float(other), 0.0)

    def __rmul__(self, other):
        return affine(self, float(other), 0.0)

    def __neg__(self):
        return affine(self, -1.0, 0.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_array(x) -> np.ndarray:
    # np.ascontiguousarray would promote 0-d inputs to shape (1,); losses
    # must stay true scalars for backward(), so preserve dimensionality.
    out = np.asarray(x, dtype=np.float64)
    return out if out.flags["C_CONTIGUOUS"] else np.array(out, order="C")


def constant(x) -> Node:
    """Wrap an array as a graph leaf that never receives gradient."""
    return Node(as_array(x))


def parameter(x) -> Node:
    """Wrap an array as a trainable leaf."""
    return Node(as_array(x), requires_grad=True)


def _out(value, parents) -> Node:
    if _grad_enabled and any(p.requires_grad for p in parents):
        node = Node(value, requires_grad=True)
        node._parents = tuple(parents)
        return node
    return Node(value)


def _accum(node: Node, g):
    if node.grad is None:
        node.grad = np.array(g, dtype=np.float64)
    else:
        node.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a: Node, b: Node) -> Node:
    out = _out(a.value + b.value, (a, b))
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accum(a, _unbroadcast(g, a.value.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g, b.value.shape))
        out._backward = backward
    return out


def sub(a: Node, b: Node) -> Node:
    out = _out(a.value - b.value, (a, b))
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accum(a, _unbroadcast(g, a.value.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(-g, b.value.shape))
        out._backward = backward
    return out


def mul(a: Node, b: Node) -> Node:
    out = _out(a.value * b.value, (a, b))
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accum(a, _unbroadcast(g * b.value, a.value.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g * a.value, b.value.shape))
        out._backward = backward
    return out


def affine(a: Node, scale: float, shift: float = 0.0) -> Node:
    """scale * a + shift, elementwise with python scalars."""
    out = _out(a.value * scale + shift, (a,))
    if out.requires_grad:
        def backward(g):
            _accum(a, g * scale)
        out._backward = backward
    return out


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    out = _out(y, (a,))
    if out.requires_grad:
        def backward(g):
            _accum(a, g * (1.0 - y * y))
        out._backward = backward
    return out


def sigmoid(a: Node) -> Node:
    x = a.value
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = _out(y, (a,))
    if out.requires_grad:
        def backward(g):
            _accum(a, g * y * (1.0 - y))
        out._backward = backward
    return out


def log(a: Node) -> Node:
    """Natural log with the argument floored at 1e-12 for stability."""
    clamped = np.maximum(a.value, LOG_FLOOR)
    out = _out(np.log(clamped), (a,))
    if out.requires_grad:
        active = a.value > LOG_FLOOR
        def backward(g):
            _accum(a, np.where(active, g / clamped, 0.0))
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Node, b: Node) -> Node:
    """a @ b where b is a matrix and a has the contraction axis last."""
    av, bv = a.value, b.value
    if bv.ndim != 2:
        raise ValueError(f"matmul right operand must be 2-d, got {bv.shape}")
    out = _out(av @ bv, (a, b))
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accum(a, g @ bv.T)
            if b.requires_grad:
                flat_a = av.reshape(-1, av.shape[-1])
                flat_g = g.reshape(-1, g.shape[-1])
                _accum(b, flat_a.T @ flat_g)
        out._backward = backward
    return out


def softmax(a: Node) -> Node:
    """Softmax over the last axis, stabilized by max subtraction."""
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _out(y, (a,))
    if out.requires_grad:
        def backward(g):
            inner = (g * y).sum(axis=-1, keepdims=True)
            _accum(a, y * (g - inner))
        out._backward = backward
    return out


def log_softmax(a: Node) -> Node:
    """Log of softmax over the last axis, computed without an explicit divide."""
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - logsum
    out = _out(y, (a,))
    if out.requires_grad:
        p = np.exp(y)
        def backward(g):
            _accum(a, g - p * g.sum(axis=-1, keepdims=True))
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# shape plumbing


def concat(nodes, axis: int = 0) -> Node:
    nodes = list(nodes)
    out = _out(np.concatenate([n.value for n in nodes], axis=axis), tuple(nodes))
    if out.requires_grad:
        sizes = [n.value.shape[axis] for n in nodes]
        def backward(g):
            offset = 0
            for node, size in zip(nodes, sizes):
                if node.requires_grad:
                    index = [slice(None)] * g.ndim
                    index[axis] = slice(offset, offset + size)
                    _accum(node, g[tuple(index)])
                offset += size
        out._backward = backward
    return out


def slice_cols(a: Node, lo: int, hi: int) -> Node:
    """Columns [lo, hi) of a matrix."""
    out = _out(a.value[:, lo:hi], (a,))
    if out.requires_grad:
        def backward(g):
            z = np.zeros_like(a.value)
            z[:, lo:hi] = g
            _accum(a, z)
        out._backward = backward
    return out


def expand_dims(a: Node, axis: int) -> Node:
    out = _out(np.expand_dims(a.value, axis), (a,))
    if out.requires_grad:
        def backward(g):
            _accum(a, np.squeeze(g, axis=axis))
        out._backward = backward
    return out


def reshape(a: Node, shape) -> Node:
    out = _out(a.value.reshape(shape), (a,))
    if out.requires_grad:
        def backward(g):
            _accum(a, g.reshape(a.value.shape))
        out._backward = backward
    return out


def stack_steps(nodes) -> Node:
    """Stack T nodes of shape (B, K) into (B, T, K)."""
    nodes = list(nodes)
    out = _out(np.stack([n.value for n in nodes], axis=1), tuple(nodes))
    if out.requires_grad:
        def backward(g):
            for t, node in enumerate(nodes):
                if node.requires_grad:
                    _accum(node, g[:, t, :])
        out._backward = backward
    return out


def slice_step(a: Node, t: int) -> Node:
    """Step t of a (B, T, K) stack, as (B, K)."""
    out = _out(a.value[:, t, :], (a,))
    if out.requires_grad:
        def backward(g):
            z = np.zeros_like(a.value)
            z[:, t, :] = g
            _accum(a, z)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# attention and lookup


def dot_last(a: Node, v: Node) -> Node:
    """Contract the last axis of `a` with vector `v`: (..., A) x (A,) -> (...)."""
    if v.value.ndim != 1:
        raise ValueError(f"dot_last expects a vector, got {v.value.shape}")
    out = _out(a.value @ v.value, (a, v))
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                _accum(a, g[..., None] * v.value)
            if v.requires_grad:
                flat = a.value.reshape(-1, a.value.shape[-1])
                _accum(v, flat.T @ g.reshape(-1))
        out._backward = backward
    return out


def attend(weights: Node, states: Node) -> Node:
    """Blend (B, T, K) states with (B, T) weights into (B, K) contexts."""
    w, h = weights.value, states.value
    out = _out((w[:, None, :] @ h)[:, 0, :], (weights, states))
    if out.requires_grad:
        def backward(g):
            if weights.requires_grad:
                _accum(weights, (h @ g[:, :, None])[:, :, 0])
            if states.requires_grad:
                _accum(states, w[:, :, None] * g[:, None, :])
        out._backward = backward
    return out


def gather_rows(table: Node, ids) -> Node:
    """Rows of an embedding table: (V, E)[ids] -> (len(ids), E)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError(f"gather_rows expects flat ids, got shape {ids.shape}")
    out = _out(table.value[ids], (table,))
    if out.requires_grad:
        def backward(g):
            z = np.zeros_like(table.value)
            np.add.at(z, ids, g)
            _accum(table, z)
        out._backward = backward
    return out


def pick(a: Node, ids) -> Node:
    """Select one column per row: (N, V), ids (N,) -> (N,)."""
    ids = np.asarray(ids, dtype=np.int64)
    rows = np.arange(a.value.shape[0])
    out = _out(a.value[rows, ids], (a,))
    if out.requires_grad:
        def backward(g):
            z = np.zeros_like(a.value)
            z[rows, ids] = g
            _accum(a, z)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# reductions


def sum_all(a: Node) -> Node:
    out = _out(np.asarray(a.value.sum()), (a,))
    if out.requires_grad:
        def backward(g):
            _accum(a, np.full(a.value.shape, float(g)))
        out._backward = backward
    return out


def mean_all(a: Node) -> Node:
    size = a.value.size
    out = _out(np.asarray(a.value.mean()), (a,))
    if out.requires_grad:
        def backward(g):
            _accum(a, np.full(a.value.shape, float(g) / size))
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Node):
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Node) -> None:
    """Populate .grad on every node the scalar `loss` depends on."""
    if loss.value.ndim != 0:
        raise ValueError(f"backward requires a scalar, got shape {loss.value.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# gradient verification


def grad_check(f, params, h: float = 1e-5) -> float:
    """Compare backward() gradients of f() against central finite differences.

    Args:
        f: nullary callable returning a scalar Node built from `params`.
        params: parameter nodes perturbed in place, one coordinate at a time.
        h: finite-difference step.

    Returns:
        The worst relative error |analytic - numeric| / max(1e-8,
        |analytic| + |numeric|) over every coordinate.

    Raises:
        ArithmeticError: some evaluation or gradient is not finite.
    """
    for p in params:
        p.grad = None
    out = f()
    backward(out)
    analytic = []
    for p in params:
        g = np.zeros_like(p.value) if p.grad is None else np.array(p.grad)
        if not np.all(np.isfinite(g)):
            raise ArithmeticError("non-finite analytic gradient")
        analytic.append(g)

    worst = 0.0
    with no_grad():
        for p, ga in zip(params, analytic):
            flat_value = p.value.reshape(-1)
            flat_grad = ga.reshape(-1)
            for i in range(flat_value.size):
                original = flat_value[i]
                flat_value[i] = original + h
                f_plus = float(f().value)
                flat_value[i] = original - h
                f_minus = float(f().value)
                flat_value[i] = original
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    raise ArithmeticError("non-finite objective during finite differencing")
                numeric = (f_plus - f_minus) / (2.0 * h)
                a = float(flat_grad[i])
                err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
                if err > worst:
                    worst = err
    return worst


# ---------------------------------------------------------------------------
# checkpoint container


def save_arrays(path, arrays: dict) -> None:
    """Write named float64 arrays in the documented flat container format."""
    path = Path(path)
    names = sorted(arrays)
    chunks = [_MAGIC, struct.pack("<II", _VERSION, len(names))]
    for name in names:
        value = np.ascontiguousarray(np.asarray(arrays[name], dtype=np.float64))
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}Q", *value.shape))
        chunks.append(value.astype("<f8").tobytes())
    path.write_bytes(b"".join(chunks))


def load_arrays(path) -> dict:
    """Read a container written by save_arrays."""
    blob = Path(path).read_bytes()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint container")
    offset = len(_MAGIC)
    version, count = struct.unpack_from("<II", blob, offset)
    offset += 8
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}Q", blob, offset)
        offset += 8 * ndim
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        offset += 8 * size
        arrays[name] = data.reshape(shape).astype(np.float64)
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint container")
    return arrays

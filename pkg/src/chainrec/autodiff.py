"""Minimal reverse-mode tape over numpy arrays.

Every op in this module accepts plain ndarrays or :class:`Var` nodes and
returns the matching kind: pure-ndarray calls evaluate eagerly with no
recording, Var calls build a graph node holding a vector-Jacobian closure.
The forward math is therefore written once and reused verbatim for
inference (ndarray path) and training (Var path).

Gradients are exact; the test suite verifies every op and the full training
objective against central finite differences.
"""

import numpy as np

from . import backend


class Var:
    """A tape node: an ndarray value plus the closure that backpropagates it."""

    __slots__ = ("value", "_parents", "_vjp", "grad")
    __array_priority__ = 100  # keep numpy from hijacking ndarray (op) Var

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value)
        self._parents = parents
        self._vjp = vjp
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return mul(self, 1.0 / scalar)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def val(x):
    """Underlying ndarray of a Var, or the input unchanged."""
    return x.value if isinstance(x, Var) else x


def _is_var(*xs):
    return any(isinstance(x, Var) for x in xs)


def backward(out: Var):
    """Backpropagate d(out)/d(leaf) through the tape; seeds with ones.

    Sets ``.grad`` on every Var reachable from ``out``. ``out`` is normally
    a scalar loss.
    """
    order = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if isinstance(p, Var) and id(p) not in seen:
                stack.append((p, False))

    grads = {id(out): np.ones_like(out.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        node.grad = g
        if g is None or node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if not isinstance(p, Var) or pg is None:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg


def _unbroadcast(g, shape):
    """Sum gradient g down to the given (possibly broadcast) operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] > 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / linear algebra
# ---------------------------------------------------------------------------

def add(a, b):
    if not _is_var(a, b):
        return np.add(a, b)
    av, bv = val(a), val(b)
    out = av + bv
    parents = tuple(x for x in (a, b) if isinstance(x, Var))

    def vjp(g):
        grads = []
        if isinstance(a, Var):
            grads.append(_unbroadcast(g, np.shape(av)))
        if isinstance(b, Var):
            grads.append(_unbroadcast(g, np.shape(bv)))
        return tuple(grads)

    return Var(out, parents, vjp)


def mul(a, b):
    if not _is_var(a, b):
        return np.multiply(a, b)
    av, bv = val(a), val(b)
    out = av * bv
    parents = tuple(x for x in (a, b) if isinstance(x, Var))

    def vjp(g):
        grads = []
        if isinstance(a, Var):
            grads.append(_unbroadcast(g * bv, np.shape(av)))
        if isinstance(b, Var):
            grads.append(_unbroadcast(g * av, np.shape(bv)))
        return tuple(grads)

    return Var(out, parents, vjp)


def matmul(a, b):
    if not _is_var(a, b):
        return np.matmul(a, b)
    av, bv = val(a), val(b)
    out = av @ bv
    parents = tuple(x for x in (a, b) if isinstance(x, Var))

    def vjp(g):
        grads = []
        if isinstance(a, Var):
            if av.ndim == 2 and bv.ndim == 2:
                grads.append(g @ bv.T)
            elif av.ndim == 2 and bv.ndim == 1:
                grads.append(np.outer(g, bv))
            else:  # 1-D @ 2-D
                grads.append(bv @ g)
        if isinstance(b, Var):
            if av.ndim == 2 and bv.ndim == 2:
                grads.append(av.T @ g)
            elif av.ndim == 2 and bv.ndim == 1:
                grads.append(av.T @ g)
            else:
                grads.append(np.outer(av, g))
        return tuple(grads)

    return Var(out, parents, vjp)


def transpose(a):
    if not _is_var(a):
        return np.transpose(a)
    return Var(val(a).T, (a,), lambda g: (g.T,))


def asum(a, axis=None):
    """Sum over all entries or along one axis."""
    if not _is_var(a):
        return np.sum(a, axis=axis)
    av = val(a)
    out = np.sum(av, axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, av.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), av.shape).copy(),)

    return Var(out, (a,), vjp)


def amean(a):
    n = val(a).size
    return mul(asum(a), 1.0 / n)


def sumsq(a):
    """Sum of squared entries (L2 regularization term)."""
    if not _is_var(a):
        return float(np.sum(np.square(a)))
    av = val(a)
    return Var(np.sum(av * av), (a,), lambda g: (g * 2.0 * av,))


def rowdot(a, b):
    """Paired row dot products of two equal-shape matrices -> vector."""
    if not _is_var(a, b):
        return np.einsum("ij,ij->i", a, b)
    av, bv = val(a), val(b)
    out = np.einsum("ij,ij->i", av, bv)
    parents = tuple(x for x in (a, b) if isinstance(x, Var))

    def vjp(g):
        grads = []
        if isinstance(a, Var):
            grads.append(g[:, None] * bv)
        if isinstance(b, Var):
            grads.append(g[:, None] * av)
        return tuple(grads)

    return Var(out, parents, vjp)


# ---------------------------------------------------------------------------
# indexing / shaping
# ---------------------------------------------------------------------------

def gather(a, idx):
    """Rows (2-D) or entries (1-D) of a at integer indices; repeats allowed."""
    idx = np.asarray(idx)
    if not _is_var(a):
        return a[idx]
    av = val(a)
    out = av[idx]
    n = av.shape[0]

    def vjp(g):
        if av.ndim == 1:
            return (backend.segment_sum(idx, np.ascontiguousarray(g), n),)
        return (backend.scatter_add_rows(idx, np.ascontiguousarray(g), n),)

    return Var(out, (a,), vjp)


def segsum(vals, idx, n):
    """out[idx[k]] += vals[k] into a length-n vector (weighted node degrees)."""
    idx = np.asarray(idx)
    if not _is_var(vals):
        return backend.segment_sum(idx, vals, n)
    out = backend.segment_sum(idx, val(vals), n)
    return Var(out, (vals,), lambda g: (g[idx],))


def reshape(a, shape):
    if not _is_var(a):
        return np.reshape(a, shape)
    av = val(a)
    return Var(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def concat(items, axis):
    if not _is_var(*items):
        return np.concatenate([np.asarray(x) for x in items], axis=axis)
    vals = [val(x) for x in items]
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]
    parents = tuple(x for x in items if isinstance(x, Var))

    def vjp(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(p for x, p in zip(items, pieces) if isinstance(x, Var))

    return Var(out, parents, vjp)


def stack_scalars(items):
    """Stack 0-d values into a 1-D vector."""
    if not _is_var(*items):
        return np.asarray([float(x) for x in items])
    out = np.asarray([float(val(x)) for x in items])
    parents = tuple(x for x in items if isinstance(x, Var))

    def vjp(g):
        return tuple(np.asarray(g[i]) for i, x in enumerate(items) if isinstance(x, Var))

    return Var(out, parents, vjp)


def fill(scalar, shape):
    """Broadcast a 0-d value to a constant-filled array of the given shape."""
    if not _is_var(scalar):
        return np.full(shape, float(scalar))
    out = np.full(shape, float(val(scalar)))
    return Var(out, (scalar,), lambda g: (np.asarray(g.sum()),))


# ---------------------------------------------------------------------------
# nonlinear
# ---------------------------------------------------------------------------

def softmax(a):
    """Softmax of a 1-D vector."""
    av = val(a)
    m = np.max(av)
    e = np.exp(av - m)
    y = e / e.sum()
    if not _is_var(a):
        return y

    def vjp(g):
        return (y * (g - np.dot(g, y)),)

    return Var(y, (a,), vjp)


def softplus(a):
    av = val(a)
    out = np.logaddexp(0.0, av)
    if not _is_var(a):
        return out

    def vjp(g):
        return (g / (1.0 + np.exp(-av)),)

    return Var(out, (a,), vjp)


def leaky_relu(a, slope):
    av = val(a)
    out = np.where(av > 0, av, slope * av)
    if not _is_var(a):
        return out

    def vjp(g):
        return (g * np.where(av > 0, 1.0, slope),)

    return Var(out, (a,), vjp)


def rsqrt_safe(a):
    """1/sqrt(x) where x > 0, exactly 0 elsewhere (zero-degree guard)."""
    av = val(a)
    pos = av > 0
    out = np.zeros_like(av)
    out[pos] = 1.0 / np.sqrt(av[pos])
    if not _is_var(a):
        return out

    def vjp(g):
        return (g * np.where(pos, -0.5 * out**3, 0.0),)

    return Var(out, (a,), vjp)


def reciprocal_safe(a):
    """1/x where x != 0, exactly 0 elsewhere (zero-row guard)."""
    av = val(a)
    nz = av != 0
    out = np.zeros_like(av)
    out[nz] = 1.0 / av[nz]
    if not _is_var(a):
        return out

    def vjp(g):
        return (g * np.where(nz, -(out**2), 0.0),)

    return Var(out, (a,), vjp)


def row_normalize(a):
    """Rows scaled to unit L2 norm; all-zero rows stay zero."""
    av = val(a)
    norms = np.sqrt(np.einsum("ij,ij->i", av, av))
    inv = np.zeros_like(norms)
    nz = norms > 0
    inv[nz] = 1.0 / norms[nz]
    y = av * inv[:, None]
    if not _is_var(a):
        return y

    def vjp(g):
        # d/dx (x/|x|) = (g - y (g.y)) / |x| on nonzero rows
        proj = np.einsum("ij,ij->i", g, y)
        return ((g - y * proj[:, None]) * inv[:, None],)

    return Var(y, (a,), vjp)


def logsumexp_rows(a):
    """Row-wise log-sum-exp of a 2-D matrix -> vector."""
    av = val(a)
    m = np.max(av, axis=1, keepdims=True)
    e = np.exp(av - m)
    s = e.sum(axis=1, keepdims=True)
    out = (m + np.log(s)).ravel()
    if not _is_var(a):
        return out

    def vjp(g):
        return (g[:, None] * (e / s),)

    return Var(out, (a,), vjp)


def take_diag(a):
    av = val(a)
    out = np.diagonal(av).copy()
    if not _is_var(a):
        return out

    def vjp(g):
        full = np.zeros_like(av)
        np.fill_diagonal(full, g)
        return (full,)

    return Var(out, (a,), vjp)


# ---------------------------------------------------------------------------
# sparse
# ---------------------------------------------------------------------------

def spmm(struct, vals, x):
    """Sparse (CSR struct + per-edge vals) times dense x.

    ``struct`` carries constant arrays (indptr, cols, rows, rev) where
    ``rev`` maps each edge to its reverse edge, so the adjoint w.r.t. x is
    a second spmm with permuted values. Differentiable in vals and x.
    """
    if not _is_var(vals, x):
        return backend.spmm(struct.indptr, struct.cols, vals, x)
    vv, xv = val(vals), val(x)
    out = backend.spmm(struct.indptr, struct.cols, vv, xv)
    parents = tuple(p for p in (vals, x) if isinstance(p, Var))

    def vjp(g):
        g = np.ascontiguousarray(g)
        grads = []
        if isinstance(vals, Var):
            grads.append(backend.spmm_grad_vals(struct.rows, struct.cols, g, xv))
        if isinstance(x, Var):
            grads.append(backend.spmm(struct.indptr, struct.cols, vv[struct.rev], g))
        return tuple(grads)

    return Var(out, parents, vjp)

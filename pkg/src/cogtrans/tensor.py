"""Dense float64 tensors with taped reverse-mode differentiation.

A ``Graph`` records every differentiable op in construction order (an eager
tape); ``backward`` walks the tape in reverse and accumulates gradients into
leaf tensors that were created with ``requires_grad=True``.  Everything is
64-bit so finite-difference checks have enough headroom.
"""

import numpy as np

from .errors import InvalidShape

EPS_LOG = 1e-12  # floor inside cross-entropy so confident misses stay finite
LN_EPS = 1e-6    # layer-norm variance epsilon


class Graph:
    """Ordered tape of op output tensors; reverse order is a valid topo order."""

    current = None

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        self._prev = Graph.current
        Graph.current = self
        return self

    def __exit__(self, *exc):
        Graph.current = self._prev
        return False


class no_grad:
    """Context that disables tape recording (inference mode)."""

    def __enter__(self):
        self._prev = Graph.current
        Graph.current = None
        return self

    def __exit__(self, *exc):
        Graph.current = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return getitem(self, key)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    rg = Graph.current is not None and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=rg)
    if rg:
        out._parents = parents
        out._backward = backward_fn
        Graph.current.nodes.append(out)
    return out


def _unbroadcast(g, shape):
    """Sum gradient over axes that were broadcast in the forward op."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise ops

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bwd)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bwd)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bwd)


def neg(a):
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def tanh(a):
    a = _as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    a = _as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500, 500)))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a):
    a = _as_tensor(a)
    y = np.maximum(a.data, 0.0)
    return _make(y, (a,), lambda g: (g * (a.data > 0.0),))


def exp(a):
    a = _as_tensor(a)
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a):
    a = _as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = _as_tensor(a)
    y = np.sqrt(a.data)
    return _make(y, (a,), lambda g: (g * 0.5 / y,))


# ---------------------------------------------------------------------------
# linear algebra / structural ops

def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise InvalidShape("matmul requires tensors of rank >= 2")
    y = np.matmul(a.data, b.data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(y, (a, b), bwd)


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    y = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return _make(y, tuple(tensors), bwd)


def stack(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    y = np.stack([t.data for t in tensors], axis=axis)

    def bwd(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(y, tuple(tensors), bwd)


def getitem(a, key):
    a = _as_tensor(a)
    y = a.data[key]

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[key] += g
        return (ga,)

    return _make(np.array(y, copy=True), (a,), bwd)


def transpose(a, axes):
    a = _as_tensor(a)
    inv = np.argsort(axes)

    def bwd(g):
        return (np.transpose(g, inv),)

    return _make(np.transpose(a.data, axes), (a,), bwd)


def reshape(a, shape):
    a = _as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def tsum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _make(y, (a,), bwd)


def tmean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def gather_rows(a, idx):
    """a: (B, T, d), idx: (B,) -> (B, d), picking one row per batch item."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(a.shape[0])
    y = a.data[rows, idx]

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[rows, idx] += g
        return (ga,)

    return _make(y.copy(), (a,), bwd)


def embedding(table, ids):
    """Row lookup: table (V, d), ids int array of any shape -> ids.shape + (d,)."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)
    y = table.data[ids]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (gt,)

    return _make(y.copy(), (table,), bwd)


# ---------------------------------------------------------------------------
# normalization / probability ops

def softmax(a, axis=-1, mask=None):
    """Stable softmax along ``axis``; ``mask`` is an additive constant applied
    to the logits before normalization (use large negatives to exclude slots).
    """
    a = _as_tensor(a)
    if a.data.size == 0 or a.data.shape[axis] == 0:
        raise InvalidShape("softmax over an empty axis")
    z = a.data if mask is None else a.data + mask
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _make(y, (a,), bwd)


def layer_norm(x, gain, bias, eps=LN_EPS):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    if x.shape[-1] != gain.shape[-1] or x.shape[-1] != bias.shape[-1]:
        raise InvalidShape("layer_norm dims mismatch")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = xhat * gain.data + bias.data

    def bwd(g):
        d = x.shape[-1]
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        axes = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=axes) if axes else g * xhat
        dbias = g.sum(axis=axes) if axes else g.copy()
        return dx, dgain, dbias

    return _make(y, (x, gain, bias), bwd)


def cross_entropy(probs, target):
    """-ln(probs[target] + floor) for a single probability vector."""
    probs = _as_tensor(probs)
    if probs.ndim != 1:
        raise InvalidShape("cross_entropy expects a probability vector")
    target = int(target)
    if target < 0 or target >= probs.shape[0]:
        raise IndexError(f"target {target} out of range for {probs.shape[0]} classes")
    p = probs.data[target]
    y = -np.log(p + EPS_LOG)

    def bwd(g):
        gp = np.zeros_like(probs.data)
        gp[target] = -g / (p + EPS_LOG)
        return (gp,)

    return _make(y, (probs,), bwd)


def cross_entropy_rows(probs, targets, weights):
    """Weighted sum of per-row cross-entropies.

    probs: (N, V) rows on the simplex; targets: (N,) ids; weights: (N,)
    constants (use them to fold in per-word and per-batch averaging).
    """
    probs = _as_tensor(probs)
    targets = np.asarray(targets, dtype=np.intp)
    weights = np.asarray(weights, dtype=np.float64)
    rows = np.arange(probs.shape[0])
    p = probs.data[rows, targets]
    y = -(weights * np.log(p + EPS_LOG)).sum()

    def bwd(g):
        gp = np.zeros_like(probs.data)
        gp[rows, targets] = -g * weights / (p + EPS_LOG)
        return (gp,)

    return _make(y, (probs,), bwd)


# ---------------------------------------------------------------------------
# backward pass and the finite-difference oracle

def backward(graph, loss):
    """Propagate d(loss)/d(leaf) into every requires_grad leaf tensor.

    Interior gradients live only for the duration of the call, so calling
    twice without zeroing doubles the leaf gradients (additive contract).
    """
    if loss.data.size != 1:
        raise InvalidShape("loss must be scalar")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            if p._backward is not None:
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
            else:
                p.accumulate(pg)


def finite_diff_check(f, params, eps=1e-5):
    """Max relative error between taped gradients and central differences.

    ``f`` must be a deterministic closure over ``params`` (a name -> Tensor
    mapping) returning a scalar loss Tensor.  Non-determinism is detected by
    comparing two forward passes and fails loudly.
    """
    with no_grad():
        v1 = f().item()
        v2 = f().item()
    if v1 != v2:
        raise RuntimeError("finite_diff_check: f is not deterministic")

    for t in params.values():
        t.zero_grad()
    with Graph() as g:
        loss = f()
        backward(g, loss)

    worst = 0.0
    for t in params.values():
        flat = t.data.reshape(-1)
        gflat = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                up = f().item()
            flat[i] = orig - eps
            with no_grad():
                dn = f().item()
            flat[i] = orig
            gfd = (up - dn) / (2.0 * eps)
            gad = gflat[i]
            # the 1e-6 floor keeps central-difference roundoff (~ulp(loss)/eps)
            # from dominating when the true gradient component is near zero
            err = abs(gad - gfd) / max(abs(gad), abs(gfd), 1e-6)
            worst = max(worst, err)
    return worst

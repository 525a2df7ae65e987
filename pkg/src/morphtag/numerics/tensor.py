"""Dense float64 tensors with a reverse-mode gradient tape.

Operations are recorded on the innermost active :class:`Tape` whenever one of
their inputs is a trainable leaf or was itself recorded on that tape.  Outside
a tape every op is a plain numpy computation, which is what inference uses.

    with Tape() as tape:
        loss = (W @ x).sum()
    tape.backward(loss)
    W.grad  # same shape as W
"""

import threading

import numpy as np

from ..errors import NotScalar, ShapeMismatch

_local = threading.local()


def _stack():
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def active_tape():
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of differentiable operations.

    Recording order is a topological order of the graph, so the backward pass
    simply walks the records in reverse.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out, parents, backward):
        out._tape = self
        out._index = len(self.nodes)
        self.nodes.append((out, parents, backward))

    def backward(self, loss, params=None):
        """Populate ``.grad`` on every trainable leaf reachable from ``loss``.

        Gradients accumulate into existing ``.grad`` arrays.  Tensors listed in
        ``params`` that have no path to the loss get a zero gradient.
        """
        if loss.data.size != 1:
            raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
        if params is not None:
            for p in params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
        if loss._tape is not self:
            if loss.requires_grad:
                loss.grad = _accumulate(loss.grad, np.ones_like(loss.data))
                return
            if loss._tape is None:
                return
            raise ValueError("loss was recorded on a different tape")

        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        for out, parents, backward_fn in reversed(self.nodes[: loss._index + 1]):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for parent, pg in zip(parents, backward_fn(g)):
                if pg is None:
                    continue
                if parent._tape is self:
                    key = id(parent)
                    grads[key] = pg if key not in grads else grads[key] + pg
                elif parent.requires_grad:
                    key = id(parent)
                    if key in leaves:
                        leaves[key][1] = leaves[key][1] + pg
                    else:
                        leaves[key] = [parent, pg]
        for leaf, g in leaves.values():
            leaf.grad = _accumulate(leaf.grad, g)


def _accumulate(existing, g):
    g = np.asarray(g, dtype=np.float64)
    if existing is None:
        return g.copy()
    return existing + g


class no_grad:
    """Suspend recording on every tape for the current thread."""

    def __enter__(self):
        stack = _stack()
        self._saved = stack[:]
        stack.clear()
        return self

    def __exit__(self, *exc):
        _stack()[:] = self._saved
        return False


def backward(loss, params=None):
    """Backpropagate from ``loss`` on the tape it was recorded on."""
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        tape = Tape()
    tape.backward(loss, params)


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) or data.dtype != np.float64 else data
        self.requires_grad = requires_grad
        self.name = name
        self.grad = None
        self._tape = None
        self._index = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    out = Tensor(data)
    tape = active_tape()
    if tape is not None:
        for p in parents:
            if p.requires_grad or p._tape is tape:
                tape.record(out, parents, backward_fn)
                break
    return out


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)))


def neg(a):
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat: no inputs")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = " and ".join(str(t.shape) for t in tensors)
        raise ShapeMismatch(f"concat along axis {axis}: incompatible shapes {shapes}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(data, tuple(tensors), backward_fn)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: cannot reshape {old} into {tuple(shape)}") from None
    return _make(data, (a,), lambda g: (g.reshape(old),))


def _is_basic(key):
    if not isinstance(key, tuple):
        key = (key,)
    return all(k is None or k is Ellipsis or isinstance(k, (int, np.integer, slice)) for k in key)


def index(a, key):
    """Basic or advanced indexing; advanced keys may repeat positions."""
    a = as_tensor(a)
    shape = a.shape
    basic = _is_basic(key)

    def backward_fn(g):
        out = np.zeros(shape)
        if basic:
            out[key] = g
        else:
            np.add.at(out, key, g)
        return (out,)

    return _make(a.data[key], (a,), backward_fn)


def gather(table, ids):
    """Embedding lookup: rows of a 2-D ``table`` selected by integer ``ids``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeMismatch(f"gather: table must be 2-D, got shape {table.shape}")
    shape = table.shape

    def backward_fn(g):
        out = np.zeros(shape)
        np.add.at(out, ids, g)
        return (out,)

    return _make(table.data[ids], (table,), backward_fn)


def where(cond, a, b):
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    try:
        np.broadcast_shapes(cond.shape, a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"where: incompatible shapes {cond.shape}, {a.shape} and {b.shape}") from None
    sa, sb = a.shape, b.shape

    def backward_fn(g):
        return unbroadcast(np.where(cond, g, 0.0), sa), unbroadcast(np.where(cond, 0.0, g), sb)

    return _make(np.where(cond, a.data, b.data), (a, b), backward_fn)


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward_fn)


def dropout(a, p, train, rng=None, mask=None):
    """Inverted dropout: kept units are scaled by ``1/(1-p)`` at train time.

    ``mask`` (a 0/1 array) overrides sampling, which makes the op testable.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    a = as_tensor(a)
    if not train or p == 0.0:
        return a
    if mask is None:
        if rng is None:
            raise ValueError("dropout in train mode needs an rng or an explicit mask")
        mask = rng.random(a.shape) >= p
    scale = np.asarray(mask, dtype=np.float64) / (1.0 - p)
    return _make(a.data * scale, (a,), lambda g: (g * scale,))


def _lse(x, axis, keepdims):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if not keepdims:
        out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    return out


def logsumexp(a, axis=None, keepdims=False):
    a = as_tensor(a)
    x = a.data
    full = _lse(x, axis, keepdims=True)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axis) if axis is not None else np.reshape(g, (1,) * x.ndim)
        return (g * np.exp(x - full),)

    out = full if keepdims else (np.squeeze(full, axis=axis) if axis is not None else full.reshape(()))
    return _make(out, (a,), backward_fn)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    out = a.data - _lse(a.data, axis, keepdims=True)

    def backward_fn(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), backward_fn)

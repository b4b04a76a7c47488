"""Reverse-mode differentiation over dense float64 arrays.

Each operation returns a new :class:`Tensor` holding its parents and a
closure that pushes the output gradient back to them. :func:`backward`
orders the reachable graph topologically (the tape) and replays the
closures in reverse.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "Tape",
    "tensor",
    "parameter",
    "backward",
    "matmul",
    "conv1d",
    "add",
    "sub",
    "mul",
    "neg",
    "relu",
    "mean",
    "sum",
    "log",
    "exp",
    "clip",
    "sigmoid",
    "softplus",
    "softmax",
    "softmax_cross_entropy",
    "concat",
    "reshape",
]


class Tensor:
    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, values, requires_grad=False, _parents=(), op=""):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def item(self):
        if self.values.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(values):
    return values if isinstance(values, Tensor) else Tensor(values)


def parameter(values):
    return Tensor(np.array(values, dtype=np.float64), requires_grad=True)


def _result(values, parents, op, backward_fn):
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    out = Tensor(values, requires_grad=needs, _parents=parents if needs else (), op=op)
    if needs:
        out._backward = backward_fn
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True).reshape(t.shape)
    else:
        t.grad += g


class Tape:
    """Topologically ordered nodes reachable from a root tensor."""

    def __init__(self, root):
        self.nodes = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, t):
        return any(n is t for n in self.nodes)

    def replay(self, seed_grad):
        self.nodes[-1].grad = seed_grad
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        # drop closures so the graph can be collected
        for node in self.nodes:
            node._backward = None
            node._parents = ()


def backward(loss, params=None):
    """Populate ``.grad`` on every ``requires_grad`` tensor feeding ``loss``.

    ``params``, when given, must all be reachable from ``loss``; a parameter
    that is not on the tape raises ``ValueError``.
    """
    if loss.values.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any parameter")
    tape = Tape(loss)
    if params is not None:
        on_tape = {id(n) for n in tape.nodes}
        for p in params:
            if id(p) not in on_tape:
                raise ValueError("parameter is detached from the loss")
    tape.replay(np.ones_like(loss.values))
    return tape


def matmul(a, b):
    a, b = tensor(a), tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def _back(g):
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    return _result(a.values @ b.values, (a, b), "matmul", _back)


def conv1d(x, w, b=None, stride=1):
    """Valid 1D cross-correlation.

    x: (batch, in_channels, length); w: (out_channels, in_channels, kernel);
    b: (out_channels,). Output: (batch, out_channels, (length - kernel) // stride + 1).
    """
    x, w = tensor(x), tensor(w)
    if stride <= 0:
        raise ValueError("stride must be positive")
    if x.values.ndim != 3 or w.values.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv1d shape mismatch: input {x.shape}, kernel {w.shape}")
    batch, cin, length = x.shape
    cout, _, k = w.shape
    if length < k:
        raise ValueError(f"input length {length} shorter than kernel {k}")
    lout = (length - k) // stride + 1
    # (batch, cin, lout, k)
    win = sliding_window_view(x.values, k, axis=2)[:, :, ::stride][:, :, :lout]
    cols = win.transpose(0, 2, 1, 3).reshape(batch * lout, cin * k)
    wmat = w.values.reshape(cout, cin * k)
    out = (cols @ wmat.T).reshape(batch, lout, cout).transpose(0, 2, 1)
    parents = [x, w]
    if b is not None:
        b = tensor(b)
        if b.shape != (cout,):
            raise ValueError(f"conv1d bias shape {b.shape} != ({cout},)")
        out = out + b.values[None, :, None]
        parents.append(b)

    def _back(g):
        gm = g.transpose(0, 2, 1).reshape(batch * lout, cout)
        _accumulate(w, (gm.T @ cols).reshape(cout, cin, k))
        if b is not None:
            _accumulate(b, g.sum(axis=(0, 2)))
        if x.requires_grad:
            gcols = (gm @ wmat).reshape(batch, lout, cin, k)
            gx = np.zeros_like(x.values)
            if lout <= k:
                for o in range(lout):
                    gx[:, :, o * stride:o * stride + k] += gcols[:, o]
            else:
                span = stride * (lout - 1) + 1
                for j in range(k):
                    gx[:, :, j:j + span:stride] += gcols[:, :, :, j].transpose(0, 2, 1)
            _accumulate(x, gx)

    return _result(np.ascontiguousarray(out), parents, "conv1d", _back)


def add(a, b):
    """Elementwise sum; ``b`` may also be a bias broadcast along the last axis."""
    a, b = tensor(a), tensor(b)
    if a.shape == b.shape:
        bias = False
    elif b.values.ndim == 1 and a.values.ndim >= 1 and a.shape[-1] == b.shape[0]:
        bias = True
    else:
        raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}")

    def _back(g):
        _accumulate(a, g)
        _accumulate(b, g.reshape(-1, b.shape[0]).sum(axis=0) if bias else g)

    return _result(a.values + b.values, (a, b), "add", _back)


def sub(a, b):
    return add(a, neg(b))


def neg(a):
    a = tensor(a)
    return _result(-a.values, (a,), "neg", lambda g: _accumulate(a, -g))


def mul(a, b):
    """Elementwise product of same-shape tensors, or scaling by a Python number."""
    if np.isscalar(b):
        a = tensor(a)
        c = float(b)
        return _result(a.values * c, (a,), "scale", lambda g: _accumulate(a, g * c))
    if np.isscalar(a):
        return mul(b, a)
    a, b = tensor(a), tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} * {b.shape}")

    def _back(g):
        _accumulate(a, g * b.values)
        _accumulate(b, g * a.values)

    return _result(a.values * b.values, (a, b), "mul", _back)


def relu(a):
    a = tensor(a)
    mask = a.values > 0

    return _result(np.where(mask, a.values, 0.0), (a,), "relu", lambda g: _accumulate(a, g * mask))


def _reduce(a, axis, op):
    a = tensor(a)
    if axis is None:
        count = a.size
        val = a.values.sum()
    else:
        count = a.shape[axis]
        val = a.values.sum(axis=axis)
    scale = 1.0 / count if op == "mean" else 1.0

    def _back(g):
        g = np.asarray(g) * scale
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _result(val * scale, (a,), op, _back)


def mean(a, axis=None):
    return _reduce(a, axis, "mean")


def sum(a, axis=None):  # noqa: A001
    return _reduce(a, axis, "sum")


def log(a):
    a = tensor(a)
    if np.any(a.values <= 0):
        raise ValueError("log of non-positive value")
    return _result(np.log(a.values), (a,), "log", lambda g: _accumulate(a, g / a.values))


def exp(a):
    a = tensor(a)
    out = np.exp(a.values)
    return _result(out, (a,), "exp", lambda g: _accumulate(a, g * out))


def clip(a, lower, upper):
    """``max(min(v, upper), lower)``; zero gradient where the bound is active."""
    a = tensor(a)
    inside = (a.values >= lower) & (a.values <= upper)
    return _result(
        np.minimum(np.maximum(a.values, lower), upper),
        (a,),
        "clip",
        lambda g: _accumulate(a, g * inside),
    )


def _sigmoid_np(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(a):
    a = tensor(a)
    out = _sigmoid_np(a.values)
    return _result(out, (a,), "sigmoid", lambda g: _accumulate(a, g * out * (1.0 - out)))


def softplus(a):
    a = tensor(a)
    out = np.logaddexp(0.0, a.values)
    return _result(out, (a,), "softplus", lambda g: _accumulate(a, g * _sigmoid_np(a.values)))


def softmax(logits):
    """Row-wise softmax of a plain array (no gradient)."""
    z = np.asarray(logits.values if isinstance(logits, Tensor) else logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels, weights=None):
    """Weighted mean cross-entropy of integer ``labels`` under row-softmax ``logits``.

    With ``weights`` the loss is ``sum(w_i * ce_i) / sum(w_i)``.
    """
    logits = tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.values.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"cross-entropy shape mismatch: logits {logits.shape}, labels {labels.shape}")
    n = labels.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    wsum = w.sum()
    p = softmax(logits.values)
    rows = np.arange(n)
    ce = -np.log(np.maximum(p[rows, labels], np.finfo(float).tiny))
    loss = float((w * ce).sum() / wsum)

    def _back(g):
        d = p.copy()
        d[rows, labels] -= 1.0
        _accumulate(logits, g * d * (w / wsum)[:, None])

    return _result(np.array(loss), (logits,), "softmax_xent", _back)


def concat(tensors, axis=-1):
    ts = [tensor(t) for t in tensors]
    vals = [t.values for t in ts]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])

    def _back(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _result(out, ts, "concat", _back)


def reshape(a, shape):
    a = tensor(a)
    return _result(a.values.reshape(shape), (a,), "reshape", lambda g: _accumulate(a, g.reshape(a.shape)))

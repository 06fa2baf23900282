"""A small reverse-mode differentiation engine on float64 numpy arrays.

Every forward op returns a :class:`Tensor` that remembers its parents and a
closure that pushes its output gradient back to them. :func:`backward` walks
the graph in reverse topological order. Parameters live in a
:class:`ParamStore`, which also carries the Adam moments.
"""
import numpy as np

from . import kernels
from .errors import ConfigError, ContractError, DimensionError


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "parents", "op", "requires_grad", "_backward")

    def __init__(self, value, parents=(), op="const", requires_grad=False, backward=None):
        self.value = value
        self.parents = parents
        self.op = op
        self.requires_grad = requires_grad
        self._backward = backward
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self):
        return float(self.value)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def parameter(value):
    return Tensor(np.asarray(value, dtype=np.float64), op="param", requires_grad=True)


def _node(value, parents, op, backward):
    req = any(p.requires_grad for p in parents)
    if not req:
        return Tensor(value, op=op)
    return Tensor(value, parents, op, True, backward)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True).reshape(t.value.shape)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _node(a.value + b.value, (a, b), "add", back)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _node(a.value - b.value, (a, b), "sub", back)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.value, b.shape))

    return _node(a.value * b.value, (a, b), "mul", back)


def square(x):
    x = as_tensor(x)
    return _node(x.value * x.value, (x,), "square", lambda g: _accum(x, 2.0 * x.value * g))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.value)
    return _node(out, (x,), "exp", lambda g: _accum(x, g * out))


def log(x):
    x = as_tensor(x)
    return _node(np.log(x.value), (x,), "log", lambda g: _accum(x, g / x.value))


def sigmoid(x):
    x = as_tensor(x)
    v = x.value
    # split on sign so exp never overflows
    e = np.exp(-np.abs(v))
    out = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _node(out, (x,), "sigmoid", lambda g: _accum(x, g * out * (1.0 - out)))


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.value)
    return _node(out, (x,), "tanh", lambda g: _accum(x, g * (1.0 - out * out)))


class _ReluProbe:
    """Records the smallest |input| seen by relu() while active."""

    def __init__(self):
        self.margin = np.inf

    def __enter__(self):
        _PROBES.append(self)
        return self

    def __exit__(self, *exc):
        _PROBES.remove(self)


_PROBES = []


def relu_margin():
    """Context manager measuring how close any relu input comes to the kink at 0."""
    return _ReluProbe()


def relu(x):
    x = as_tensor(x)
    mask = x.value > 0
    for probe in _PROBES:
        if x.value.size:
            probe.margin = min(probe.margin, float(np.min(np.abs(x.value))))
    # np.maximum keeps NaN visible so divergence is reported, not masked
    return _node(np.maximum(x.value, 0.0), (x,), "relu", lambda g: _accum(x, g * mask))


def softplus(x):
    """log(1 + exp(x)), stable for large |x|."""
    x = as_tensor(x)
    v = x.value
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))

    def back(g):
        e = np.exp(-np.abs(v))
        sig = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        _accum(x, g * sig)

    return _node(out, (x,), "softplus", back)


def log_sigmoid(x):
    return -softplus(-as_tensor(x))


def clip(x, lo, hi):
    x = as_tensor(x)
    inside = (x.value >= lo) & (x.value <= hi)
    return _node(np.clip(x.value, lo, hi), (x,), "clip", lambda g: _accum(x, g * inside))


# ---------------------------------------------------------------------------
# reductions and normalizations

def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    out = np.sum(x.value, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape))

    return _node(np.asarray(out, dtype=np.float64), (x,), "sum", back)


def mean(x, axis=None):
    x = as_tensor(x)
    n = x.value.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def softmax(x, axis=-1):
    """Softmax along ``axis`` with max-subtraction."""
    x = as_tensor(x)
    z = x.value - np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def back(g):
        _accum(x, out * (g - np.sum(g * out, axis=axis, keepdims=True)))

    return _node(out, (x,), "softmax", back)


# ---------------------------------------------------------------------------
# linear algebra and shape ops

def matmul(a, b):
    """Matrix product with numpy broadcasting over leading batch dims.

    1-d operands are promoted the way ``np.matmul`` promotes them.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise DimensionError(f"matmul needs at least 1-d operands, got {a.shape} and {b.shape}")
    ka = a.shape[-1]
    kb = b.shape[-2] if b.ndim >= 2 else b.shape[0]
    if ka != kb:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = np.matmul(a.value, b.value)

    def back(g):
        av = a.value if a.ndim > 1 else a.value[None, :]
        bv = b.value if b.ndim > 1 else b.value[:, None]
        gg = g
        if a.ndim == 1:
            gg = np.expand_dims(gg, -2)
        if b.ndim == 1:
            gg = np.expand_dims(gg, -1)
        if a.requires_grad:
            ga = np.matmul(gg, np.swapaxes(bv, -1, -2))
            ga = _unbroadcast(ga, av.shape)
            _accum(a, ga.reshape(a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(av, -1, -2), gg)
            gb = _unbroadcast(gb, bv.shape)
            _accum(b, gb.reshape(b.shape))

    return _node(out, (a, b), "matmul", back)


def transpose(x):
    """Swap the last two axes."""
    x = as_tensor(x)
    return _node(np.swapaxes(x.value, -1, -2), (x,), "transpose",
                 lambda g: _accum(x, np.swapaxes(g, -1, -2)))


def reshape(x, shape):
    x = as_tensor(x)
    return _node(x.value.reshape(shape), (x,), "reshape", lambda g: _accum(x, g.reshape(x.shape)))


def concat(parts, axis=-1):
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.value for p in parts], axis=axis)
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def back(g):
        for p, piece in zip(parts, np.split(g, sizes, axis=axis)):
            _accum(p, piece)

    return _node(out, tuple(parts), "concat", back)


def take_rows(table, idx):
    """Gather rows of a 2-d table; output shape is ``idx.shape + (d,)``."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    out = table.value[idx]

    def back(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.value)
        flat = np.ascontiguousarray(g.reshape(-1, table.shape[1]))
        kernels.scatter_add_rows(table.grad, idx.reshape(-1), flat)

    return _node(out, (table,), "take_rows", back)


# ---------------------------------------------------------------------------
# backward pass

def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, params=None):
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node.

    When ``params`` is given their gradients are reset to zero first, so a
    parameter the loss does not reach ends with an all-zero gradient.
    """
    loss = as_tensor(loss)
    if loss.value.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if params is not None:
        params.zero_grad()
    if not loss.requires_grad:
        return
    order = _topo(loss)
    for node in order:
        if node.op != "param":
            node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# parameters

class ParamStore:
    """Named trainable tensors; iteration is sorted by name."""

    def __init__(self, seed=0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._params = {}
        self.moments = {}

    def add(self, name, value):
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = parameter(value)
        self._params[name] = t
        return t

    def uniform(self, name, shape, scale):
        return self.add(name, self.rng.uniform(-scale, scale, size=shape))

    def zeros(self, name, shape):
        return self.add(name, np.zeros(shape))

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def zero_grad(self):
        for t in self._params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.value)
            else:
                t.grad.fill(0.0)

    def state(self):
        return {n: t.value.copy() for n, t in self.items()}

    def load_state(self, state):
        for name, value in state.items():
            if name in self._params:
                if self._params[name].shape != value.shape:
                    raise DimensionError(
                        f"{name}: stored shape {value.shape} != parameter shape {self._params[name].shape}")
                self._params[name].value[...] = value
            else:
                self.add(name, value)

    def n_scalars(self):
        return int(np.sum([t.value.size for t in self._params.values()]))


def grad_check(loss_builder, params, eps=1e-5, names=None):
    """Largest relative error between analytic and central-difference gradients.

    ``loss_builder(params)`` must return a scalar Tensor and be deterministic.
    The relative error per entry is |a - n| / max(1e-8, |a| + |n|).
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    first = loss_builder(params)
    replay = loss_builder(params)
    if first.value.tobytes() != replay.value.tobytes():
        raise ContractError("loss builder is not deterministic: replayed value differs")
    backward(first, params)
    worst = 0.0
    for name, t in params.items():
        if names is not None and name not in names:
            continue
        analytic = t.grad.copy()
        flat = t.value.reshape(-1)
        agrad = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_builder(params).item()
            flat[i] = orig - eps
            down = loss_builder(params).item()
            flat[i] = orig
            num = (up - down) / (2.0 * eps)
            err = abs(agrad[i] - num) / max(1e-8, abs(agrad[i]) + abs(num))
            if err > worst:
                worst = err
    return worst


def adam_step(params, lr, l2=0.0, betas=(0.9, 0.999), eps=1e-8, t=1):
    """One Adam update; ``l2 * param`` is added to each gradient first."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    b1, b2 = betas
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.value)
        if l2:
            g = g + l2 * p.value
        if name not in params.moments:
            params.moments[name] = (np.zeros_like(p.value), np.zeros_like(p.value))
        m, v = params.moments[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

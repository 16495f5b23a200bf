"""A small reverse-mode automatic differentiation engine.

Tensors are double precision ``numpy`` arrays. A :class:`Value` wraps one
tensor together with the operation that produced it, the values it was
computed from, and a rule mapping the gradient of the output to gradients
of the inputs. Graphs are built on the fly, one per sentence, and are
thrown away after :func:`backward`.

Gradients are accumulated in a dictionary local to each :func:`backward`
call rather than on the values themselves, so several threads may
differentiate independent graphs that share the same parameters.

The optimizer utilities (global norm clipping, Adam) operate on plain
``{name: array}`` gradient mappings.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from collections.abc import Mapping

import numpy as np
from attrs import define, field
from scipy.special import expit
from scipy.special import logsumexp as _logsumexp

_GRAD_ENABLED = ContextVar("syntag_grad_enabled", default=True)


class ShapeError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@define(eq=False, repr=False)
class Value:
    """A node of the computation graph.

    Parameters
    ----------
    data : numpy.ndarray
        The float64 payload.
    op : str
        Name of the producing operation (``param`` and ``const`` for
        leaves).
    parents : tuple of Value
        Inputs of the operation.
    backward_fn : callable, optional
        Maps the output gradient to a tuple of input gradients (None for
        inputs not requiring gradients).
    requires_grad : bool
    name : str, optional
    """

    data = field()
    op = field(default="const")
    parents = field(default=())
    backward_fn = field(default=None)
    requires_grad = field(default=False)
    name = field(default=None)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Value({self.op}{label}, shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return hadamard(self, other)

    def __rmul__(self, other):
        return hadamard(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matvec(self, other)


def constant(data):
    return Value(np.asarray(data, dtype=np.float64))


def parameter(data, name=None):
    """A trainable leaf. The payload is copied into a fresh contiguous
    float64 array that optimizers update in place."""

    data = np.array(data, dtype=np.float64, order="C", copy=True)
    return Value(data, op="param", requires_grad=True, name=name)


def as_value(x):
    return x if isinstance(x, Value) else constant(x)


@contextmanager
def no_grad():
    """Within this context operations do not record the graph."""

    token = _GRAD_ENABLED.set(False)
    try:
        yield None
    finally:
        _GRAD_ENABLED.reset(token)


def is_grad_enabled():
    return _GRAD_ENABLED.get()


def _make(data, op, parents, backward_fn):
    if not _GRAD_ENABLED.get() or not any(p.requires_grad for p in parents):
        return Value(data, op)
    return Value(data, op, parents, backward_fn, True)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def matvec(M, v):
    """Matrix-vector product ``M @ v`` for a 2-d ``M`` and 1-d ``v``."""

    M, v = as_value(M), as_value(v)
    if M.data.ndim != 2 or v.data.ndim != 1 or M.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: incompatible shapes {M.shape} and {v.shape}")

    def backward(g):
        gM = np.outer(g, v.data) if M.requires_grad else None
        gv = M.data.T @ g if v.requires_grad else None
        return gM, gv

    return _make(M.data @ v.data, "matvec", (M, v), backward)


def add(a, b):
    a, b = as_value(a), as_value(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, "add", (a, b), backward)


def add_n(values):
    """Sum of several same-shaped values as a single node."""

    values = [as_value(v) for v in values]
    if not values:
        raise ShapeError("add_n: nothing to add")
    shape = values[0].shape
    for v in values[1:]:
        if v.shape != shape:
            raise ShapeError(
                f"add_n: incompatible shapes {shape} and {v.shape}"
            )
    if len(values) == 1:
        return values[0]

    out = values[0].data.copy()
    for v in values[1:]:
        out += v.data

    def backward(g):
        return (g,) * len(values)

    return _make(out, "add_n", tuple(values), backward)


def sub(a, b):
    a, b = as_value(a), as_value(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _make(a.data - b.data, "sub", (a, b), backward)


def concat(*values):
    """Concatenation of 1-d values."""

    values = [as_value(v) for v in values]
    for v in values:
        if v.data.ndim != 1:
            raise ShapeError(
                f"concat: expected 1-d inputs, got shapes "
                f"{[u.shape for u in values]}"
            )
    sizes = np.cumsum([v.size for v in values])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes))

    return _make(
        np.concatenate([v.data for v in values]), "concat", values, backward
    )


def hadamard(a, b):
    """Element-wise product."""

    a, b = as_value(a), as_value(b)
    _broadcast_shape("hadamard", a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, "hadamard", (a, b), backward)


def sigmoid(a):
    a = as_value(a)
    y = expit(a.data)

    def backward(g):
        return (g * y * (1.0 - y),)

    return _make(y, "sigmoid", (a,), backward)


def tanh_(a):
    a = as_value(a)
    y = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _make(y, "tanh", (a,), backward)


def dot(a, b):
    a, b = as_value(a), as_value(b)
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        return g * b.data, g * a.data

    return _make(np.asarray(a.data @ b.data), "dot", (a, b), backward)


def logsumexp(a, axis=None):
    """``log(sum(exp(a)))``, over all entries or along ``axis``."""

    a = as_value(a)
    y = np.asarray(_logsumexp(a.data, axis=axis))

    def backward(g):
        if axis is None:
            return (g * np.exp(a.data - y),)
        yk = np.expand_dims(y, axis)
        return (np.expand_dims(g, axis) * np.exp(a.data - yk),)

    return _make(y, "logsumexp", (a,), backward)


def scale(a, k):
    """Multiplication by a constant scalar ``k``."""

    a = as_value(a)
    k = float(k)

    def backward(g):
        return (g * k,)

    return _make(a.data * k, "scale", (a,), backward)


def _is_basic_index(index):
    if isinstance(index, (int, np.integer, slice)):
        return True
    if isinstance(index, tuple):
        return all(isinstance(i, (int, np.integer, slice)) for i in index)
    return False


def select(a, index):
    """``a[index]``: an entry, a row, or a slice."""

    a = as_value(a)
    try:
        out = np.array(a.data[index], dtype=np.float64)
    except IndexError as err:
        raise ShapeError(
            f"select: index {index} invalid for shape {a.shape}"
        ) from err
    basic = _is_basic_index(index)

    def backward(g):
        z = np.zeros_like(a.data)
        if basic:
            z[index] = g
        else:
            np.add.at(z, index, g)
        return (z,)

    return _make(out, "select", (a,), backward)


def reshape(a, shape):
    a = as_value(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}")

    def backward(g):
        return (g.reshape(a.shape),)

    return _make(out, "reshape", (a,), backward)


def sum_(a):
    a = as_value(a)

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(a.data.sum()), "sum", (a,), backward)


def sumsq(a):
    """Sum of squared entries, the building block of L2 penalties."""

    a = as_value(a)

    def backward(g):
        return (2.0 * g * a.data,)

    return _make(np.asarray(np.sum(a.data * a.data)), "sumsq", (a,), backward)


def dropout(a, rate, rng):
    """Inverted dropout: entries are zeroed with probability ``rate`` and
    survivors are scaled by ``1 / (1 - rate)``. Identity when ``rng`` is
    None (inference) or ``rate`` is 0."""

    if rng is None or rate == 0.0:
        return a
    a = as_value(a)
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return hadamard(a, constant(mask))


def _topological_order(root):
    """Post-order of the nodes reachable from ``root`` that require
    gradients: every node comes after all of its inputs."""

    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def backward(root, wrt, dense=True):
    """Reverse-mode differentiation of a scalar ``root``.

    Parameters
    ----------
    root : Value
        A value holding a single number.
    wrt : Mapping[str, Value] or Sequence[Value]
        The leaves to return gradients for.
    dense : bool, optional
        If False, leaves the root does not depend on are left out of a
        mapping result and are None in a sequence result instead of being
        filled with zeros.

    Returns
    -------
    dict or list of numpy.ndarray
        Gradients shaped like the leaves, in the container type of
        ``wrt``.
    """

    if root.data.size != 1:
        raise ShapeError(
            f"backward: root must be scalar, got shape {root.shape}"
        )

    grads = {}
    if root.requires_grad:
        grads[id(root)] = np.ones_like(root.data)
        for node in reversed(_topological_order(root)):
            g = grads.get(id(node))
            if g is None or node.backward_fn is None:
                continue
            parent_grads = node.backward_fn(g)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg
            del grads[id(node)]

    def lookup(p):
        g = grads.get(id(p))
        if g is None and dense:
            return np.zeros_like(p.data)
        return g

    if isinstance(wrt, Mapping):
        result = {name: lookup(p) for name, p in wrt.items()}
        if dense:
            return result
        return {name: g for name, g in result.items() if g is not None}
    return [lookup(p) for p in wrt]


def check_finite(value, what="value"):
    data = value.data if isinstance(value, Value) else np.asarray(value)
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite {what}")


@define(frozen=True)
class GradCheckEntry:
    max_error = field()
    worst_index = field()
    analytic = field()
    numeric = field()
    n_checked = field()


def grad_check_groups(loss_fn, params, eps=1e-4, coords_per_param=10, rng=None):
    """Compares analytic gradients with central finite differences.

    For each parameter, up to ``coords_per_param`` coordinates with a
    nonzero analytic gradient plus as many random coordinates are checked
    (all coordinates for small tensors). The error of a coordinate is
    ``|a - n| / max(1, |a|, |n|)``.

    Parameters
    ----------
    loss_fn : callable
        Builds and returns the scalar loss; must be deterministic.
    params : Mapping[str, Value]
    eps : float, optional
    coords_per_param : int, optional
    rng : numpy.random.Generator, optional

    Returns
    -------
    dict
        ``{name: GradCheckEntry}``.
    """

    rng = np.random.default_rng(0) if rng is None else rng
    analytic = backward(loss_fn(), params)

    report = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        if flat.size <= 2 * coords_per_param:
            coords = np.arange(flat.size)
        else:
            support = np.flatnonzero(a_flat)
            picked = rng.choice(
                support, size=min(coords_per_param, support.size), replace=False
            )
            extra = rng.choice(flat.size, size=coords_per_param, replace=False)
            coords = np.unique(np.concatenate([picked, extra]))

        worst = GradCheckEntry(0.0, None, 0.0, 0.0, len(coords))
        for idx in coords:
            original = flat[idx]
            with no_grad():
                flat[idx] = original + eps
                f_plus = loss_fn().item()
                flat[idx] = original - eps
                f_minus = loss_fn().item()
            flat[idx] = original
            a = float(a_flat[idx])
            n = (f_plus - f_minus) / (2.0 * eps)
            err = abs(a - n) / max(1.0, abs(a), abs(n))
            if worst.worst_index is None or err > worst.max_error:
                index = np.unravel_index(idx, p.data.shape)
                worst = GradCheckEntry(err, index, a, n, len(coords))
        report[name] = worst
    return report


def grad_check(loss_fn, params, eps=1e-4, coords_per_param=10, rng=None):
    """Maximum relative error over the checked coordinates; see
    :func:`grad_check_groups`."""

    report = grad_check_groups(loss_fn, params, eps, coords_per_param, rng)
    return max((e.max_error for e in report.values()), default=0.0)


def global_norm(grads):
    values = grads.values() if isinstance(grads, Mapping) else grads
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in values)))


def clip_global_norm(grads, max_norm):
    """Rescales all gradients by ``max_norm / g`` when their global L2 norm
    ``g`` exceeds ``max_norm``; otherwise returns them unchanged.

    Returns
    -------
    dict or list
        Same container type as ``grads``.
    """

    if max_norm <= 0:
        raise ValueError(f"max_norm must be > 0, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    factor = max_norm / norm
    if isinstance(grads, Mapping):
        return {k: g * factor for k, g in grads.items()}
    return [g * factor for g in grads]


@define(kw_only=True)
class AdamState:
    """First and second moment estimates per parameter name, and the step
    counter ``t``."""

    m = field(factory=dict)
    v = field(factory=dict)
    t = field(default=0)


def adam_step(
    params, grads, state, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8
):
    """One bias-corrected Adam update, applied in place to the parameter
    payloads.

    Parameters
    ----------
    params : Mapping[str, Value]
    grads : Mapping[str, numpy.ndarray]
    state : AdamState
        Updated in place; ``t`` is incremented.
    """

    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(
                f"adam_step: gradient {g.shape} for parameter {name} {p.shape}"
            )
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

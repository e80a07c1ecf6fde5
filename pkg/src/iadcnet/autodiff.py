"""Array-level reverse-mode differentiation.

A :class:`Tape` records every primitive applied to a :class:`Var` together
with a closure that maps the output cotangent to the input cotangents.
``backward`` walks the tape once, in reverse insertion order, which is a
valid reverse topological order because nodes are only ever appended after
their inputs.

Every primitive in this module also accepts plain numpy arrays; when no
argument is a :class:`Var` the primitive simply returns the numpy result, so
the model code can be shared between differentiable training and fast
evaluation.

Straight-through estimator (STE) rules:

* ``quantize_sign``: identity gradient on ``|v| <= 0.5``, zero outside.
* ``round_ste``: identity gradient everywhere.
* ``heaviside``: identity gradient on ``|v| <= 1``, zero outside.
* ``hardtanh``: exact derivative, 1 inside ``[-delta, delta]``, 0 outside.
"""

from __future__ import annotations

import builtins
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

SIGN_STE_BAND = 0.5
HEAVISIDE_STE_BAND = 1.0

_surrogate = [True]


def surrogate_enabled() -> bool:
    return _surrogate[-1]


@contextmanager
def exact_derivatives():
    """Within this block, backward uses the true derivative of STE primitives.

    The true derivative of sign, round and heaviside is 0 wherever it exists,
    which is what a finite-difference check observes away from the jumps.
    """
    _surrogate.append(False)
    try:
        yield
    finally:
        _surrogate.pop()


class NumericError(FloatingPointError):
    """A recorded value or an incoming gradient is not finite."""

    def __init__(self, message: str, node_index: int | None = None):
        super().__init__(message)
        self.node_index = node_index


class TapeError(RuntimeError):
    """The tape cannot be replayed (foreign variable, double backward...)."""


@dataclass
class Node:
    op: str
    value: np.ndarray
    parents: tuple[int, ...]
    vjp: Callable[[np.ndarray], tuple] | None
    rule: str = "exact"
    meta: object = None


@dataclass
class Tape:
    """Append-only list of recorded primitives."""

    nodes: list[Node] = field(default_factory=list)
    params: dict[str, int] = field(default_factory=dict)
    check_finite: bool = True

    def leaf(self, value, name: str | None = None) -> "Var":
        value = np.array(value, dtype=np.float64)
        idx = self._append(Node("leaf", value, (), None))
        if name is not None:
            if name in self.params:
                raise TapeError(f"duplicate parameter name {name!r}")
            self.params[name] = idx
        return Var(self, idx, value)

    def _append(self, node: Node) -> int:
        idx = len(self.nodes)
        if self.check_finite and not np.all(np.isfinite(node.value)):
            raise NumericError(f"non-finite value produced by {node.op!r} at node {idx}", idx)
        self.nodes.append(node)
        return idx

    def record(self, op, value, parents: Sequence["Var"], vjp, rule="exact", meta=None) -> "Var":
        value = np.asarray(value, dtype=np.float64)
        idx = self._append(Node(op, value, tuple(p.index for p in parents), vjp, rule, meta))
        return Var(self, idx, value)

    def count(self, op: str | None = None) -> int:
        if op is None:
            return builtins.sum(1 for n in self.nodes if n.op != "leaf")
        return builtins.sum(1 for n in self.nodes if n.op == op)


class Var:
    """A recorded array value."""

    __slots__ = ("tape", "index", "value")
    __array_ufunc__ = None  # let numpy defer to the reflected operators below

    def __init__(self, tape: Tape, index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var(node={self.index}, shape={self.value.shape})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(*args) -> Tape | None:
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise TapeError("variables from different tapes cannot be combined")
    return tape


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _vars(*args):
    return [a for a in args if isinstance(a, Var)]


def _binary(op, a, b, fwd, da, db):
    """Record a broadcasting binary primitive; ``da``/``db`` map g -> grad."""
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = fwd(av, bv)
    if tape is None:
        return out
    parents = _vars(a, b)

    def vjp(g):
        grads = []
        if isinstance(a, Var):
            grads.append(_unbroadcast(da(g, av, bv, out), av.shape))
        if isinstance(b, Var):
            grads.append(_unbroadcast(db(g, av, bv, out), bv.shape))
        return tuple(grads)

    return tape.record(op, out, parents, vjp)


def _unary(op, a, fwd, dfn, rule="exact"):
    av = value_of(a)
    out = fwd(av)
    if not isinstance(a, Var):
        return out
    return a.tape.record(op, out, (a,), lambda g: (dfn(g, av, out),), rule)


# --- smooth primitives -----------------------------------------------------


def add(a, b):
    return _binary("add", a, b, np.add, lambda g, *_: g, lambda g, *_: g)


def sub(a, b):
    return _binary("sub", a, b, np.subtract, lambda g, *_: g, lambda g, *_: -g)


def mul(a, b):
    return _binary("mul", a, b, np.multiply, lambda g, av, bv, o: g * bv, lambda g, av, bv, o: g * av)


def div(a, b):
    return _binary(
        "div",
        a,
        b,
        np.divide,
        lambda g, av, bv, o: g / bv,
        lambda g, av, bv, o: -g * av / (bv * bv),
    )


def neg(a):
    return _unary("neg", a, np.negative, lambda g, av, o: -g)


def exp(a):
    return _unary("exp", a, np.exp, lambda g, av, o: g * o)


def log(a):
    return _unary("log", a, np.log, lambda g, av, o: g / av)


def sqrt(a):
    """Square root; the gradient at exactly 0 is taken as 0."""

    def d(g, av, o):
        safe = np.where(o > 0, o, 1.0)
        return np.where(o > 0, g / (2.0 * safe), 0.0)

    return _unary("sqrt", a, np.sqrt, d)


def square(a):
    return _unary("square", a, np.square, lambda g, av, o: 2.0 * g * av)


def absolute(a):
    return _unary("abs", a, np.abs, lambda g, av, o: g * np.sign(av))


def clip(a, lo, hi):
    """Exact clip; the gradient is 1 on the closed interval, 0 outside."""
    lo_v, hi_v = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    return _unary(
        "clip",
        a,
        lambda v: np.clip(v, lo_v, hi_v),
        lambda g, av, o: g * ((av >= lo_v) & (av <= hi_v)),
    )


def relu(a):
    return _unary("relu", a, lambda v: np.maximum(v, 0.0), lambda g, av, o: g * (av > 0))


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    av = value_of(a)
    out = np.sum(av, axis=axis)
    if not isinstance(a, Var):
        return out

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, av.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), av.shape).copy(),)

    return a.tape.record("sum", out, (a,), vjp)


def matmul(a, b):
    """Matrix/inner product following ``numpy.matmul`` for 1-D and 2-D operands."""
    av, bv = value_of(a), value_of(b)
    if av.ndim > 2 or bv.ndim > 2:
        raise ValueError("matmul supports operands of rank <= 2")
    out = av @ bv
    tape = _tape_of(a, b)
    if tape is None:
        return out

    def vjp(g):
        grads = []
        if isinstance(a, Var):
            if av.ndim == 1 and bv.ndim == 1:
                ga = g * bv
            elif av.ndim == 1:
                ga = bv @ g
            elif bv.ndim == 1:
                ga = np.outer(g, bv)
            else:
                ga = g @ bv.T
            grads.append(ga)
        if isinstance(b, Var):
            if av.ndim == 1 and bv.ndim == 1:
                gb = g * av
            elif av.ndim == 1:
                gb = np.outer(av, g)
            elif bv.ndim == 1:
                gb = av.T @ g
            else:
                gb = av.T @ g
            grads.append(gb)
        return tuple(grads)

    return tape.record("matmul", out, _vars(a, b), vjp)


def transpose(a):
    return _unary("transpose", a, np.transpose, lambda g, av, o: np.transpose(g))


def reshape(a, shape):
    av = value_of(a)
    return _unary("reshape", a, lambda v: v.reshape(shape), lambda g, av_, o: g.reshape(av.shape))


def _is_basic_index(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return all(k is None or k is Ellipsis or isinstance(k, (int, np.integer, slice)) for k in keys)


def getitem(a, key):
    av = value_of(a)
    basic = _is_basic_index(key)

    def d(g, av_, o):
        full = np.zeros_like(av)
        if basic:
            full[key] = g
        else:
            np.add.at(full, key, g)
        return full

    return _unary("getitem", a, lambda v: v[key], d)


def stack(items, axis=0):
    vals = [value_of(i) for i in items]
    out = np.stack(vals, axis=axis)
    tape = _tape_of(*items)
    if tape is None:
        return out
    which = [i for i, it in enumerate(items) if isinstance(it, Var)]

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in which)

    return tape.record("stack", out, [items[i] for i in which], vjp)


def concatenate(items, axis=0):
    vals = [value_of(i) for i in items]
    out = np.concatenate(vals, axis=axis)
    tape = _tape_of(*items)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    which = [i for i, it in enumerate(items) if isinstance(it, Var)]

    def vjp(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in which
        )

    return tape.record("concatenate", out, [items[i] for i in which], vjp)


def cumsum(a, axis=-1):
    def d(g, av, o):
        return np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)

    return _unary("cumsum", a, lambda v: np.cumsum(v, axis=axis), d)


def logsumexp(a):
    """Max-shifted log-sum-exp over all entries."""
    av = value_of(a)
    shift = float(np.max(av))
    return log(sum(exp(a - shift))) + shift


# --- non-differentiable primitives with surrogate gradients ----------------


def hardtanh(a, delta):
    delta = np.asarray(delta, dtype=float)
    return _unary(
        "hardtanh",
        a,
        lambda v: np.clip(v, -delta, delta),
        lambda g, av, o: g * (np.abs(av) <= delta),
    )


def quantize_sign(a):
    """Binary quantizer returning +-0.5 with ``sign(0) = +1``."""
    return _unary(
        "quantize_sign",
        a,
        lambda v: np.where(v >= 0, 0.5, -0.5),
        lambda g, av, o: g * (np.abs(av) <= SIGN_STE_BAND) if surrogate_enabled() else np.zeros_like(g),
        rule="ste",
    )


def round_half_away(v):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def round_ste(a):
    return _unary(
        "round", a, round_half_away, lambda g, av, o: g if surrogate_enabled() else np.zeros_like(g), rule="ste"
    )


def heaviside(a):
    """Strict heaviside: 1 where ``v > 0``, else 0."""
    return _unary(
        "heaviside",
        a,
        lambda v: (v > 0).astype(float),
        lambda g, av, o: g * (np.abs(av) <= HEAVISIDE_STE_BAND) if surrogate_enabled() else np.zeros_like(g),
        rule="ste",
    )


def stop_gradient(a):
    return value_of(a)


# --- driver ----------------------------------------------------------------


def forward_record(model_eval: Callable[[dict[str, Var]], Var], params: dict, check_finite=True):
    """Evaluate ``model_eval`` on fresh leaves and return ``(loss, tape)``."""
    tape = Tape(check_finite=check_finite)
    leaves = {name: tape.leaf(v, name) for name, v in params.items()}
    out = model_eval(leaves)
    if not isinstance(out, Var) or out.tape is not tape:
        raise TapeError("model_eval must return a Var recorded on the supplied leaves")
    if out.value.size != 1:
        raise TapeError(f"loss must be scalar, got shape {out.value.shape}")
    tape.output = out.index
    return float(out.value), tape


def backward(tape: Tape, output: int | None = None) -> dict[str, np.ndarray]:
    """Reverse sweep; returns gradients keyed by parameter name."""
    if output is None:
        output = getattr(tape, "output", len(tape.nodes) - 1)
    nodes = tape.nodes
    grads: list = [None] * len(nodes)
    grads[output] = np.ones_like(nodes[output].value)
    for i in range(output, -1, -1):
        g = grads[i]
        if g is None:
            continue
        node = nodes[i]
        if node.vjp is None:
            continue
        pgrads = node.vjp(g)
        if len(pgrads) != len(node.parents):
            raise TapeError(f"node {i} ({node.op}) returned {len(pgrads)} grads for {len(node.parents)} inputs")
        for p, pg in zip(node.parents, pgrads):
            if p >= i:
                raise TapeError(f"node {i} references later node {p}")
            grads[p] = pg if grads[p] is None else grads[p] + pg
    out = {}
    for name, idx in tape.params.items():
        g = grads[idx]
        out[name] = np.zeros_like(nodes[idx].value) if g is None else np.asarray(g, dtype=float).reshape(nodes[idx].value.shape)
    return out


def value_and_grad(model_eval, params: dict, check_finite=True):
    loss, tape = forward_record(model_eval, params, check_finite=check_finite)
    return loss, backward(tape), tape

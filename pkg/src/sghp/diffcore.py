"""Reverse-mode differentiation over dense float64 arrays, and Adam.

A :class:`Tape` records every primitive as it is evaluated (eagerly), so the
forward value of any node is available immediately. :func:`evaluate` runs the
backward sweep; :func:`grad_check` replays the recorded graph with perturbed
parameter values to compare against central differences.

    tape = Tape()
    x = tape.param("x", 2.0)
    y = tape.param("y", 3.0)
    value, grads = evaluate(tape, x * y)   # 6.0, {"x": 3.0, "y": 2.0}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np


class DomainError(ArithmeticError):
    """A primitive was evaluated outside its domain."""

    def __init__(self, message: str, node: int):
        self.node = node
        super().__init__(f"node {node}: {message}")


# -- numerically safe scalar functions (also used outside the tape) ------------


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    m = x.max(axis=axis, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=axis, keepdims=True))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- primitives -----------------------------------------------------------------
# Each entry: forward(*values, **attrs) -> value
#             vjp(g, out, *values, **attrs) -> tuple of input gradients


def _check_log(x, node):
    if np.any(x <= 0):
        raise DomainError("log of nonpositive value", node)


def _check_div(x, node):
    if np.any(x == 0):
        raise DomainError("division by zero", node)


def _matmul_vjp(g, out, a, b):
    if a.ndim == 2 and b.ndim == 2:
        return g @ b.T, a.T @ g
    if a.ndim == 2 and b.ndim == 1:
        return np.outer(g, b), a.T @ g
    if a.ndim == 1 and b.ndim == 2:
        return b @ g, np.outer(a, g)
    return g * b, g * a


def _concat_vjp(g, out, *xs, axis):
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tuple(np.split(g, bounds, axis=axis))


def _take_vjp(g, out, x, *, indices):
    gx = np.zeros_like(x)
    np.add.at(gx, indices, g)
    return (gx,)


def _sum_vjp(g, out, x, *, axis):
    if axis is None:
        return (np.broadcast_to(g, x.shape).copy(),)
    return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)


def _mean_vjp(g, out, x, *, axis):
    n = x.size if axis is None else x.shape[axis]
    (gx,) = _sum_vjp(g, out, x, axis=axis)
    return (gx / n,)


def _softmax_vjp(g, out, x, *, axis):
    return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)


def _xent_fwd(logits, *, targets):
    lp = log_softmax(logits, axis=-1)
    return -np.take_along_axis(lp, targets[..., None], axis=-1).sum()


def _xent_vjp(g, out, logits, *, targets):
    p = softmax(logits, axis=-1)
    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
    return (g * (p - onehot),)


PRIMITIVES: dict[str, tuple[Callable, Callable]] = {
    "add": (np.add, lambda g, o, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))),
    "sub": (np.subtract, lambda g, o, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))),
    "mul": (np.multiply, lambda g, o, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))),
    "div": (np.divide, lambda g, o, a, b: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * o / b, b.shape))),
    "neg": (np.negative, lambda g, o, a: (-g,)),
    "pow": (lambda a, *, exponent: a ** exponent,
            lambda g, o, a, *, exponent: (g * exponent * a ** (exponent - 1),)),
    "exp": (np.exp, lambda g, o, a: (g * o,)),
    "log": (np.log, lambda g, o, a: (g / a,)),
    "log1p": (np.log1p, lambda g, o, a: (g / (1.0 + a),)),
    "sin": (np.sin, lambda g, o, a: (g * np.cos(a),)),
    "cos": (np.cos, lambda g, o, a: (-g * np.sin(a),)),
    "abs": (np.abs, lambda g, o, a: (g * np.sign(a),)),  # sign(0) = 0
    "softplus": (softplus, lambda g, o, a: (g * sigmoid(a),)),
    "sigmoid": (sigmoid, lambda g, o, a: (g * o * (1.0 - o),)),
    "matmul": (np.matmul, _matmul_vjp),
    "concat": (lambda *xs, axis: np.concatenate(xs, axis=axis), _concat_vjp),
    "take": (lambda x, *, indices: x[indices], _take_vjp),
    "reshape": (lambda x, *, shape: x.reshape(shape), lambda g, o, x, *, shape: (g.reshape(x.shape),)),
    "transpose": (lambda x: x.T, lambda g, o, x: (g.T,)),
    "sum": (lambda x, *, axis: np.sum(x, axis=axis), _sum_vjp),
    "mean": (lambda x, *, axis: np.mean(x, axis=axis), _mean_vjp),
    "softmax": (lambda x, *, axis: softmax(x, axis=axis), _softmax_vjp),
    "cross_entropy": (_xent_fwd, _xent_vjp),
}

_DOMAIN_CHECKS = {"log": lambda vals, n: _check_log(vals[0], n),
                  "div": lambda vals, n: _check_div(vals[1], n)}


@dataclass
class _Node:
    op: str | None  # None for leaves (parameters and constants)
    inputs: tuple[int, ...]
    attrs: dict
    value: np.ndarray


class Var:
    """Handle to a node on a tape; supports arithmetic operators."""

    __slots__ = ("tape", "index")
    __array_priority__ = 100

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def _lift(self, other) -> "Var":
        return other if isinstance(other, Var) else self.tape.const(other)

    def __add__(self, o): return self.tape.apply("add", self, self._lift(o))
    def __radd__(self, o): return self.tape.apply("add", self._lift(o), self)
    def __sub__(self, o): return self.tape.apply("sub", self, self._lift(o))
    def __rsub__(self, o): return self.tape.apply("sub", self._lift(o), self)
    def __mul__(self, o): return self.tape.apply("mul", self, self._lift(o))
    def __rmul__(self, o): return self.tape.apply("mul", self._lift(o), self)
    def __truediv__(self, o): return self.tape.apply("div", self, self._lift(o))
    def __rtruediv__(self, o): return self.tape.apply("div", self._lift(o), self)
    def __neg__(self): return self.tape.apply("neg", self)
    def __pow__(self, exponent: float): return self.tape.apply("pow", self, exponent=float(exponent))
    def __matmul__(self, o): return self.tape.apply("matmul", self, self._lift(o))
    def __rmatmul__(self, o): return self.tape.apply("matmul", self._lift(o), self)
    def __abs__(self): return self.tape.apply("abs", self)
    def __getitem__(self, idx): return self.tape.apply("take", self, indices=idx)

    @property
    def T(self): return self.tape.apply("transpose", self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self.tape.apply("reshape", self, shape=tuple(shape))

    def sum(self, axis=None): return self.tape.apply("sum", self, axis=axis)
    def mean(self, axis=None): return self.tape.apply("mean", self, axis=axis)

    def __repr__(self):
        return f"Var(#{self.index}, value={self.value!r})"


class Tape:
    """Append-only record of primitive applications with named parameter leaves."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.params: dict[str, int] = {}

    def _push(self, node: _Node) -> Var:
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def param(self, name: str, value) -> Var:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already registered")
        v = self._push(_Node(None, (), {}, np.array(value, dtype=np.float64)))
        self.params[name] = v.index
        return v

    def const(self, value) -> Var:
        return self._push(_Node(None, (), {}, np.asarray(value, dtype=np.float64)))

    def apply(self, op: str, *inputs: Var, **attrs) -> Var:
        idx = tuple(v.index for v in inputs)
        value = self._forward(op, idx, attrs, len(self.nodes))
        return self._push(_Node(op, idx, attrs, value))

    def _forward(self, op, idx, attrs, position) -> np.ndarray:
        vals = [self.nodes[i].value for i in idx]
        check = _DOMAIN_CHECKS.get(op)
        if check is not None:
            check(vals, position)
        with np.errstate(all="ignore"):
            out = np.asarray(PRIMITIVES[op][0](*vals, **attrs), dtype=np.float64)
        if not np.all(np.isfinite(out)):
            raise DomainError(f"non-finite result from {op}", position)
        return out

    def replay(self, overrides: Mapping[str, np.ndarray] | None = None) -> None:
        """Recompute every node in order, optionally replacing parameter values."""
        overrides = overrides or {}
        for name, value in overrides.items():
            self.nodes[self.params[name]].value = np.array(value, dtype=np.float64)
        for i, node in enumerate(self.nodes):
            if node.op is not None:
                node.value = self._forward(node.op, node.inputs, node.attrs, i)

    def backward(self, root: Var) -> dict[str, np.ndarray]:
        if root.tape is not self:
            raise ValueError("root belongs to a different tape")
        if root.value.size != 1:
            raise ValueError(f"root must be scalar, got shape {root.value.shape}")
        grads: dict[int, np.ndarray] = {root.index: np.ones_like(root.value)}
        for i in range(root.index, -1, -1):
            g = grads.pop(i, None)
            node = self.nodes[i]
            if g is None or node.op is None:
                if g is not None:
                    grads[i] = g  # leaf: keep for collection
                continue
            vals = [self.nodes[j].value for j in node.inputs]
            with np.errstate(all="ignore"):
                parts = PRIMITIVES[node.op][1](g, node.value, *vals, **node.attrs)
            for j, gj in zip(node.inputs, parts):
                gj = np.asarray(gj, dtype=np.float64)
                if j in grads:
                    grads[j] = grads[j] + gj
                else:
                    grads[j] = gj
        return {name: grads.get(i, np.zeros_like(self.nodes[i].value)).reshape(self.nodes[i].value.shape)
                for name, i in self.params.items()}

    # functional helpers, so callers can write ``tape.exp(x)``
    def exp(self, x): return self.apply("exp", x)
    def log(self, x): return self.apply("log", x)
    def log1p(self, x): return self.apply("log1p", x)
    def sin(self, x): return self.apply("sin", x)
    def cos(self, x): return self.apply("cos", x)
    def abs(self, x): return self.apply("abs", x)
    def softplus(self, x): return self.apply("softplus", x)
    def sigmoid(self, x): return self.apply("sigmoid", x)
    def softmax(self, x, axis=-1): return self.apply("softmax", x, axis=axis)

    def concat(self, xs, axis=0):
        return self.apply("concat", *xs, axis=axis)

    def take(self, x: Var, indices) -> Var:
        return self.apply("take", x, indices=indices)

    def cross_entropy(self, logits: Var, targets) -> Var:
        """Summed categorical cross-entropy of integer targets against logits."""
        return self.apply("cross_entropy", logits, targets=np.asarray(targets, dtype=np.int64))


def evaluate(tape: Tape, root: Var) -> tuple[float, dict[str, np.ndarray]]:
    """Forward value of a scalar ``root`` and its gradient w.r.t. every parameter."""
    grads = tape.backward(root)
    return float(root.value.reshape(())), grads


def grad_check(tape: Tape, root: Var, step: float = 1e-5) -> float:
    """Max over parameter entries of |analytic - numeric| / max(1, |numeric|)."""
    if step <= 0:
        raise ValueError("step must be positive")
    _, analytic = evaluate(tape, root)
    base = {name: tape.nodes[i].value.copy() for name, i in tape.params.items()}
    worst = 0.0
    try:
        for name, value in base.items():
            flat = value.reshape(-1)
            for k in range(flat.size):
                trial = flat.copy()
                trial[k] = flat[k] + step
                tape.replay({name: trial.reshape(value.shape)})
                up = float(root.value.reshape(()))
                trial[k] = flat[k] - step
                tape.replay({name: trial.reshape(value.shape)})
                down = float(root.value.reshape(()))
                tape.replay({name: value})
                numeric = (up - down) / (2.0 * step)
                err = abs(analytic[name].reshape(-1)[k] - numeric) / max(1.0, abs(numeric))
                worst = max(worst, err)
    finally:
        tape.replay(base)
    return worst


# -- optimisation -----------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.step,
                         {k: a.copy() for k, a in self.m.items()},
                         {k: a.copy() for k, a in self.v.items()})


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Inputs are not mutated."""
    new = state.copy()
    new.step += 1
    b1, b2 = new.beta1, new.beta2
    out = {}
    for name, p in params.items():
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {p.shape}")
        m = new.m.get(name, np.zeros_like(p))
        v = new.v.get(name, np.zeros_like(p))
        if m.shape != p.shape:
            raise ValueError(f"optimizer state shape mismatch for {name!r}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** new.step)
        v_hat = v / (1 - b2 ** new.step)
        out[name] = p - new.lr * m_hat / (np.sqrt(v_hat) + new.eps)
        new.m[name], new.v[name] = m, v
    return out, new


def clip_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return dict(grads), norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm

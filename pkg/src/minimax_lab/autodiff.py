"""Reverse-mode automatic differentiation and first-order optimizers.

Two graph flavours live here:

* :class:`Tape` is a define-then-run graph over scalars.  Every node records
  its value, gradient slot and ``(parent_id, local_partial)`` links, and the
  graph can be re-evaluated at new input bindings.  It is the reference
  engine used for gradient checking.
* :class:`BatchTape` is a define-by-run graph over float64 arrays.  The
  training loops use it because building one scalar node per multiply is far
  too slow for thousands of minimax steps.  Its gradients are tested against
  :class:`Tape` on the same networks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np


class AutodiffError(Exception):
    pass


class DomainError(AutodiffError):
    """Primitive evaluated outside its domain (log of a non-positive, ÷0)."""

    def __init__(self, node_id: int, message: str):
        super().__init__(f"node {node_id}: {message}")
        self.node_id = node_id


class StateError(AutodiffError):
    pass


class ShapeError(AutodiffError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Scalar tape
# ---------------------------------------------------------------------------


@dataclass
class ScalarNode:
    value: float = math.nan
    grad: float = 0.0
    parents: list[tuple[int, float]] = field(default_factory=list)


_UNARY = {"neg", "exp", "log", "tanh", "sigmoid", "relu", "pow"}
_BINARY = {"add", "sub", "mul", "div", "min", "max"}


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


class Var:
    """Handle to a node of a :class:`Tape`; supports arithmetic operators."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: "Tape", node_id: int):
        self.tape = tape
        self.id = node_id

    def _lift(self, other) -> "Var":
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise AutodiffError("operands belong to different tapes")
            return other
        return self.tape.constant(float(other))

    def __add__(self, o):
        return self.tape._op("add", self, self._lift(o))

    def __radd__(self, o):
        return self.tape._op("add", self._lift(o), self)

    def __sub__(self, o):
        return self.tape._op("sub", self, self._lift(o))

    def __rsub__(self, o):
        return self.tape._op("sub", self._lift(o), self)

    def __mul__(self, o):
        return self.tape._op("mul", self, self._lift(o))

    def __rmul__(self, o):
        return self.tape._op("mul", self._lift(o), self)

    def __truediv__(self, o):
        return self.tape._op("div", self, self._lift(o))

    def __rtruediv__(self, o):
        return self.tape._op("div", self._lift(o), self)

    def __neg__(self):
        return self.tape._op("neg", self)

    def __pow__(self, p):
        if isinstance(p, Var):
            raise AutodiffError("only constant exponents are supported")
        return self.tape._op("pow", self, const=float(p))

    def exp(self):
        return self.tape._op("exp", self)

    def log(self):
        return self.tape._op("log", self)

    def tanh(self):
        return self.tape._op("tanh", self)

    def sigmoid(self):
        return self.tape._op("sigmoid", self)

    def relu(self):
        return self.tape._op("relu", self)

    @property
    def value(self) -> float:
        return self.tape.nodes[self.id].value

    @property
    def grad(self) -> float:
        return self.tape.nodes[self.id].grad

    def __repr__(self):
        return f"Var(id={self.id}, value={self.value})"


def minimum(a: Var, b) -> Var:
    return a.tape._op("min", a, a._lift(b))


def maximum(a: Var, b) -> Var:
    return a.tape._op("max", a, a._lift(b))


class Tape:
    """Append-only scalar computation graph.

    Nodes are numbered in insertion order, which is also a topological order:
    every parent id is smaller than its child's id.  Inputs are named leaves
    bound at :meth:`forward` time; constants are leaves with fixed values.

    >>> t = Tape()
    >>> x, y = t.input("x"), t.input("y")
    >>> t.output("f", x * y)
    >>> t.forward({"x": 2.0, "y": 3.0})
    {'f': 6.0}
    >>> t.backward("f")["x"]
    3.0
    """

    def __init__(self):
        self.nodes: list[ScalarNode] = []
        self._kind: list[str] = []
        self._args: list[tuple[int, ...]] = []
        self._const: list[float] = []
        self.inputs: dict[str, int] = {}
        self.outputs: dict[str, int] = {}
        self._evaluated = False

    def __len__(self):
        return len(self.nodes)

    def _append(self, kind, args=(), const=math.nan) -> Var:
        self.nodes.append(ScalarNode())
        self._kind.append(kind)
        self._args.append(tuple(args))
        self._const.append(const)
        self._evaluated = False
        return Var(self, len(self.nodes) - 1)

    def input(self, name: str) -> Var:
        if name in self.inputs:
            return Var(self, self.inputs[name])
        v = self._append("input")
        self.inputs[name] = v.id
        return v

    def constant(self, c: float) -> Var:
        v = self._append("const", const=float(c))
        self.nodes[v.id].value = float(c)
        return v

    def _op(self, kind, *operands: Var, const=math.nan) -> Var:
        if kind not in _UNARY and kind not in _BINARY:
            raise AutodiffError(f"unsupported primitive {kind!r}")
        return self._append(kind, [o.id for o in operands], const)

    def output(self, name: str, var: Var) -> None:
        self.outputs[name] = var.id

    # -- evaluation -----------------------------------------------------

    def _eval_node(self, i: int) -> None:
        kind = self._kind[i]
        args = self._args[i]
        node = self.nodes[i]
        vals = [self.nodes[a].value for a in args]
        if kind == "add":
            v, parts = vals[0] + vals[1], (1.0, 1.0)
        elif kind == "sub":
            v, parts = vals[0] - vals[1], (1.0, -1.0)
        elif kind == "mul":
            v, parts = vals[0] * vals[1], (vals[1], vals[0])
        elif kind == "div":
            if vals[1] == 0.0:
                raise DomainError(i, "division by zero")
            v = vals[0] / vals[1]
            parts = (1.0 / vals[1], -vals[0] / (vals[1] * vals[1]))
        elif kind == "neg":
            v, parts = -vals[0], (-1.0,)
        elif kind == "exp":
            v = math.exp(vals[0])
            parts = (v,)
        elif kind == "log":
            if vals[0] <= 0.0:
                raise DomainError(i, f"log of non-positive value {vals[0]!r}")
            v, parts = math.log(vals[0]), (1.0 / vals[0],)
        elif kind == "tanh":
            v = math.tanh(vals[0])
            parts = (1.0 - v * v,)
        elif kind == "sigmoid":
            v = _sigmoid(vals[0])
            parts = (v * (1.0 - v),)
        elif kind == "relu":
            # subgradient 0 at the kink
            v = vals[0] if vals[0] > 0.0 else 0.0
            parts = (1.0 if vals[0] > 0.0 else 0.0,)
        elif kind == "pow":
            p = self._const[i]
            x = vals[0]
            if x < 0.0 and not float(p).is_integer():
                raise DomainError(i, "negative base with non-integer exponent")
            if x == 0.0 and p < 0:
                raise DomainError(i, "zero base with negative exponent")
            v = x**p
            parts = (p * x ** (p - 1) if p != 0 else 0.0,)
        elif kind == "min":
            # ties resolve to the first operand
            first = vals[0] <= vals[1]
            v = vals[0] if first else vals[1]
            parts = (1.0, 0.0) if first else (0.0, 1.0)
        elif kind == "max":
            first = vals[0] >= vals[1]
            v = vals[0] if first else vals[1]
            parts = (1.0, 0.0) if first else (0.0, 1.0)
        else:  # pragma: no cover - guarded by _op
            raise AutodiffError(kind)
        node.value = float(v)
        node.parents = list(zip(args, parts))

    def forward(self, inputs: Mapping[str, float]) -> dict[str, float]:
        for name in self.inputs:
            if name not in inputs:
                raise AutodiffError(f"unbound input {name!r}")
        for name, i in self.inputs.items():
            self.nodes[i].value = float(inputs[name])
            self.nodes[i].parents = []
        for i, kind in enumerate(self._kind):
            if kind not in ("input", "const"):
                self._eval_node(i)
        self._evaluated = True
        return {name: self.nodes[i].value for name, i in self.outputs.items()}

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.grad = 0.0

    def backward(self, output: str | Var) -> dict[str, float]:
        """Accumulate d(output)/d(node) into every node's ``grad`` slot.

        Slots are not cleared first; call :meth:`zero_grad` between passes.
        Returns the gradients of the named inputs.
        """
        if not self._evaluated:
            raise StateError("backward called before forward on this tape")
        out = self.outputs[output] if isinstance(output, str) else output.id
        self.nodes[out].grad += 1.0
        for i in range(out, -1, -1):
            node = self.nodes[i]
            g = node.grad
            if g == 0.0:
                continue
            for parent, partial in node.parents:
                self.nodes[parent].grad += g * partial
        return {name: self.nodes[i].grad for name, i in self.inputs.items()}


def forward(tape: Tape, inputs: Mapping[str, float]) -> dict[str, float]:
    return tape.forward(inputs)


def backward(tape: Tape, output: str | Var) -> dict[str, float]:
    return tape.backward(output)


@dataclass
class GradCheckResult:
    max_relative_error: float
    errors: dict[str, float]
    # inputs whose relative error was measured across a relu/min/max kink
    at_kink: list[str] = field(default_factory=list)

    def __float__(self):
        return self.max_relative_error


def _near_kink(tape: Tape, eps: float) -> bool:
    for i, kind in enumerate(tape._kind):
        if kind == "relu":
            if abs(tape.nodes[tape._args[i][0]].value) <= 4 * eps:
                return True
        elif kind in ("min", "max"):
            a, b = tape._args[i]
            if abs(tape.nodes[a].value - tape.nodes[b].value) <= 4 * eps:
                return True
    return False


def grad_check(
    tape: Tape,
    output: str,
    point: Mapping[str, float],
    epsilon: float = 1e-5,
    wrt: Sequence[str] | None = None,
) -> GradCheckResult:
    """Compare backward gradients against central differences.

    The relative error of input ``k`` is
    ``|analytic - fd| / (|fd| + 1e-12)``.  Inputs for which the base point
    sits within a few epsilon of a relu/min/max kink are reported in
    ``at_kink`` and left out of ``max_relative_error``.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2]")
    names = list(wrt) if wrt is not None else list(tape.inputs)
    base = dict(point)
    tape.forward(base)
    kinked = _near_kink(tape, epsilon)
    tape.zero_grad()
    analytic = dict(tape.backward(output))
    errors: dict[str, float] = {}
    at_kink: list[str] = []
    for name in names:
        x0 = base[name]
        base[name] = x0 + epsilon
        f_plus = tape.forward(base)[output]
        base[name] = x0 - epsilon
        f_minus = tape.forward(base)[output]
        base[name] = x0
        fd = (f_plus - f_minus) / (2.0 * epsilon)
        errors[name] = abs(analytic[name] - fd) / (abs(fd) + 1e-12)
        if kinked:
            at_kink.append(name)
    tape.forward(base)
    scored = [e for n, e in errors.items() if n not in at_kink]
    return GradCheckResult(max(scored, default=0.0), errors, at_kink)


# ---------------------------------------------------------------------------
# Batched array tape
# ---------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Node:
    __slots__ = ("tape", "id", "value", "grad", "parents", "vjp", "requires_grad")

    def __init__(self, tape, value, parents=(), vjp=None, requires_grad=False):
        self.tape = tape
        self.value = value
        self.grad = None
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.id = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def _lift(self, o) -> "Node":
        return o if isinstance(o, Node) else self.tape.constant(o)

    def __add__(self, o):
        return self.tape.add(self, self._lift(o))

    __radd__ = __add__

    def __sub__(self, o):
        return self.tape.sub(self, self._lift(o))

    def __rsub__(self, o):
        return self.tape.sub(self._lift(o), self)

    def __mul__(self, o):
        return self.tape.mul(self, self._lift(o))

    __rmul__ = __mul__

    def __truediv__(self, o):
        return self.tape.div(self, self._lift(o))

    def __neg__(self):
        return self.tape.neg(self)

    def __matmul__(self, o):
        return self.tape.matmul(self, o)

    def __getitem__(self, idx):
        return self.tape.index(self, idx)

    def __repr__(self):
        return f"Node(id={self.id}, shape={self.value.shape})"


class BatchTape:
    """Define-by-run reverse-mode graph over float64 arrays.

    Only the primitives the networks and losses need are provided.  Nodes that
    do not depend on a ``requires_grad`` leaf carry no backward closure, so
    e.g. a discriminator step never back-propagates into frozen generator
    weights.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value, requires_grad: bool = True) -> Node:
        return Node(self, np.array(value, dtype=np.float64), requires_grad=requires_grad)

    def constant(self, value) -> Node:
        return Node(self, np.asarray(value, dtype=np.float64))

    def _node(self, x) -> Node:
        return x if isinstance(x, Node) else self.constant(x)

    def _make(self, value, parents, vjp) -> Node:
        rg = any(p.requires_grad for p in parents)
        return Node(self, value, parents if rg else (), vjp if rg else None, rg)

    # elementwise binary
    def add(self, a, b):
        a, b = self._node(a), self._node(b)
        return self._make(
            a.value + b.value, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

    def sub(self, a, b):
        a, b = self._node(a), self._node(b)
        return self._make(
            a.value - b.value, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))

    def mul(self, a, b):
        a, b = self._node(a), self._node(b)
        return self._make(
            a.value * b.value, (a, b),
            lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))

    def div(self, a, b):
        a, b = self._node(a), self._node(b)
        if np.any(b.value == 0.0):
            raise DomainError(len(self.nodes), "division by zero")
        return self._make(
            a.value / b.value, (a, b),
            lambda g: (_unbroadcast(g / b.value, a.shape),
                       _unbroadcast(-g * a.value / (b.value * b.value), b.shape)))

    def neg(self, a):
        return self._make(-a.value, (a,), lambda g: (-g,))

    # elementwise unary
    def exp(self, a):
        v = np.exp(a.value)
        return self._make(v, (a,), lambda g: (g * v,))

    def log(self, a):
        if np.any(a.value <= 0.0):
            raise DomainError(len(self.nodes), "log of non-positive value")
        return self._make(np.log(a.value), (a,), lambda g: (g / a.value,))

    def tanh(self, a):
        v = np.tanh(a.value)
        return self._make(v, (a,), lambda g: (g * (1.0 - v * v),))

    def sigmoid(self, a):
        x = a.value
        # stable in both tails
        e = np.exp(-np.abs(x))
        v = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return self._make(v, (a,), lambda g: (g * v * (1.0 - v),))

    def relu(self, a):
        mask = a.value > 0.0
        return self._make(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))

    def square(self, a):
        return self._make(a.value * a.value, (a,), lambda g: (2.0 * a.value * g,))

    def pow(self, a, p: float):
        return self._make(a.value**p, (a,), lambda g: (g * p * a.value ** (p - 1),))

    def clip(self, a, lo: float, hi: float):
        inside = (a.value >= lo) & (a.value <= hi)
        return self._make(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))

    def minimum(self, a, b):
        a, b = self._node(a), self._node(b)
        first = a.value <= b.value
        return self._make(
            np.where(first, a.value, b.value), (a, b),
            lambda g: (_unbroadcast(g * first, a.shape), _unbroadcast(g * ~first, b.shape)))

    def maximum(self, a, b):
        a, b = self._node(a), self._node(b)
        first = a.value >= b.value
        return self._make(
            np.where(first, a.value, b.value), (a, b),
            lambda g: (_unbroadcast(g * first, a.shape), _unbroadcast(g * ~first, b.shape)))

    # structural
    def matmul(self, a, b):
        a, b = self._node(a), self._node(b)
        return self._make(
            a.value @ b.value, (a, b),
            lambda g: (g @ b.value.T, a.value.T @ g))

    def affine(self, h, params, w_offset: int, fan_in: int, fan_out: int):
        """``h @ W + b`` with W and b read from a flat parameter vector.

        ``W`` is stored row-major at ``params[w_offset:]``, immediately
        followed by ``b``.
        """
        b_offset = w_offset + fan_in * fan_out
        W = params.value[w_offset:b_offset].reshape(fan_in, fan_out)
        b = params.value[b_offset:b_offset + fan_out]
        n = params.value.size

        def vjp(g):
            gp = np.zeros(n)
            gp[w_offset:b_offset] = (h.value.T @ g).ravel()
            gp[b_offset:b_offset + fan_out] = g.sum(axis=0)
            return g @ W.T, gp

        return self._make(h.value @ W + b, (h, params), vjp)

    def sum(self, a, axis=None):
        shape = a.shape

        def vjp(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return self._make(np.sum(a.value, axis=axis), (a,), vjp)

    def mean(self, a, axis=None):
        n = a.value.size if axis is None else a.shape[axis]
        shape = a.shape

        def vjp(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g / n, shape).copy(),)

        return self._make(np.mean(a.value, axis=axis), (a,), vjp)

    def index(self, a, idx):
        shape = a.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return (out,)

        return self._make(a.value[idx], (a,), vjp)

    def reshape(self, a, shape):
        old = a.shape
        return self._make(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))

    def concat(self, parts: Sequence[Node], axis: int = -1):
        sizes = [p.shape[axis] for p in parts]
        cuts = np.cumsum(sizes)[:-1]
        return self._make(
            np.concatenate([p.value for p in parts], axis=axis), tuple(parts),
            lambda g: tuple(np.split(g, cuts, axis=axis)))

    def backward(self, out: Node) -> None:
        """Accumulate d(out)/d(node) into ``grad`` of every node that requires it.

        ``out`` must be a scalar.  Gradient slots accumulate; use
        :meth:`zero_grad` to reset them.
        """
        if out.value.size != 1:
            raise ShapeError("backward needs a scalar output")
        if not out.requires_grad:
            return
        grads: dict[int, np.ndarray] = {out.id: np.ones_like(out.value)}
        for node in reversed(self.nodes[: out.id + 1]):
            g = grads.pop(node.id, None)
            if g is None:
                continue
            if node.vjp is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if not parent.requires_grad:
                    continue
                prev = grads.get(parent.id)
                grads[parent.id] = pg if prev is None else prev + pg

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.grad = None


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


class Optimizer:
    """Plain or heavy-ball SGD over a flat parameter vector.

    ``momentum=0`` reproduces plain SGD bit for bit: the velocity is then
    ``0*v + g == g`` exactly.
    """

    def __init__(self, learning_rate: float, momentum: float = 0.0):
        if learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return "sgd" if self.momentum == 0.0 else "momentum"

    def step(self, params, grads, learning_rate: float | None = None) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        grads = np.asarray(grads, dtype=np.float64)
        if params.shape != grads.shape:
            raise ShapeError(f"params {params.shape} vs grads {grads.shape}")
        lr = self.learning_rate if learning_rate is None else learning_rate
        if self.momentum == 0.0:
            return params - lr * grads
        if self.velocity is None:
            self.velocity = np.zeros_like(params)
        self.velocity = self.momentum * self.velocity + grads
        return params - lr * self.velocity


def step(optimizer: Optimizer, params, grads) -> np.ndarray:
    return optimizer.step(params, grads)


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    for k in range(x.size):
        x0 = x[k]
        x[k] = x0 + eps
        fp = f(x)
        x[k] = x0 - eps
        fm = f(x)
        x[k] = x0
        out[k] = (fp - fm) / (2 * eps)
    return out

"""Two-player zero-sum gradient games.

Player A (the minimizer) descends a shared scalar objective while player B
(the maximizer) ascends it.  The objective is any callable
``objective(a, b, batch, wrt) -> Evaluation`` over flat parameter vectors;
``wrt`` names the players whose gradients the caller needs, so frozen
players can be skipped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .autodiff import BatchTape, Node, Optimizer
from .seeding import stream


class DivergedError(RuntimeError):
    """Objective or gradient became non-finite or exceeded the blow-up bound."""

    def __init__(self, message: str, trace: "GameTrace"):
        super().__init__(message)
        self.trace = trace


class ConfigError(ValueError):
    pass


class UnsupportedError(ValueError):
    """Operation is not defined for this kind of object."""


DIVERGENCE_BOUND = 1e12


@dataclass
class Evaluation:
    value: float
    grad_a: np.ndarray | None = None
    grad_b: np.ndarray | None = None
    aux: dict = field(default_factory=dict)


Objective = Callable[[np.ndarray, np.ndarray, object, tuple], Evaluation]


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule: constant, or ``lr / (1 + t / decay_steps)``."""

    lr: float
    kind: str = "constant"
    decay_steps: float = 1.0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("learning rate must be non-negative")
        if self.kind not in ("constant", "inverse"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "inverse" and self.decay_steps <= 0:
            raise ConfigError("decay_steps must be positive")

    def __call__(self, t: int) -> float:
        if self.kind == "constant":
            return self.lr
        return self.lr / (1.0 + t / self.decay_steps)


def _as_schedule(s) -> Schedule:
    return s if isinstance(s, Schedule) else Schedule(float(s))


@dataclass
class GameConfig:
    """A two-player game.

    ``schedule`` is ``"simultaneous"`` or ``("alternating", k_a, k_b)``.
    One step of :func:`play` is one round: a simultaneous update, or ``k_a``
    minimizer updates followed by ``k_b`` maximizer updates.  ``on_round(t)``,
    if given, runs before round ``t`` (for objectives with their own schedules).
    """

    objective: Objective
    lr_a: Schedule | float
    lr_b: Schedule | float
    schedule: str | tuple = ("alternating", 1, 1)
    max_steps: int = 1000
    stop_tol: float | None = None
    momentum_a: float = 0.0
    momentum_b: float = 0.0
    log_every: int = 1
    snapshot_every: int | None = None
    role_a: str = "minimizer"
    role_b: str = "maximizer"
    on_round: Callable[[int], None] | None = None

    def __post_init__(self):
        self.lr_a = _as_schedule(self.lr_a)
        self.lr_b = _as_schedule(self.lr_b)
        if (self.role_a, self.role_b) != ("minimizer", "maximizer"):
            raise ConfigError("player A must be the minimizer and player B the maximizer")
        if isinstance(self.schedule, str):
            if self.schedule == "alternating":
                self.schedule = ("alternating", 1, 1)
            elif self.schedule != "simultaneous":
                raise ConfigError(f"unknown schedule {self.schedule!r}")
        else:
            kind, k_a, k_b = self.schedule
            if kind != "alternating" or int(k_a) < 1 or int(k_b) < 1:
                raise ConfigError("alternating schedule needs k_a, k_b >= 1")
            self.schedule = ("alternating", int(k_a), int(k_b))
        if self.max_steps < 0 or self.log_every < 1:
            raise ConfigError("max_steps must be >= 0 and log_every >= 1")

    @property
    def simultaneous(self) -> bool:
        return self.schedule == "simultaneous"


@dataclass
class StepRecord:
    step: int
    objective: float
    grad_norm_min: float
    grad_norm_max: float
    aux: dict = field(default_factory=dict)

    @property
    def payoff_min(self) -> float:
        return -self.objective

    @property
    def payoff_max(self) -> float:
        return self.objective


@dataclass
class GameTrace:
    records: list[StepRecord] = field(default_factory=list)
    snapshots: list[tuple[int, np.ndarray, np.ndarray]] = field(default_factory=list)
    stopped_early: bool = False

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        if name in ("step", "objective", "grad_norm_min", "grad_norm_max"):
            return np.array([getattr(r, name) for r in self.records])
        return np.array([r.aux[name] for r in self.records])

    def zero_sum_violations(self) -> int:
        return sum(1 for r in self.records if r.payoff_min + r.payoff_max != 0.0)

    def rows(self) -> Iterable[list]:
        aux_keys = sorted(self.records[0].aux) if self.records else []
        yield ["step", "objective", "grad_norm_min", "grad_norm_max", *aux_keys]
        for r in self.records:
            yield [r.step, repr(r.objective), repr(r.grad_norm_min), repr(r.grad_norm_max),
                   *(repr(r.aux[k]) for k in aux_keys)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.rows())

    def equals(self, other: "GameTrace") -> bool:
        """Bitwise equality of every record, auxiliary metrics included."""
        return list(self.rows()) == list(other.rows())


def _finite(*xs) -> bool:
    for x in xs:
        if x is None:
            continue
        if not np.all(np.isfinite(x)):
            return False
    return True


def _check(ev: Evaluation, trace: GameTrace, step: int) -> None:
    if not _finite(ev.value, ev.grad_a, ev.grad_b) or abs(ev.value) > DIVERGENCE_BOUND:
        raise DivergedError(f"game diverged at step {step} (objective={ev.value!r})", trace)


def _norm(g) -> float:
    return float(np.sqrt(np.dot(g, g))) if g is not None else math.nan


def constant_stream(batch=None) -> Callable[[np.random.Generator], object]:
    return lambda rng: batch


def play(game: GameConfig, init_a, init_b, data_stream=None, seed: int = 0):
    """Run the game; returns ``(final_a, final_b, trace)``.

    ``data_stream(rng)`` supplies one minibatch per objective evaluation.  The
    minimizer and maximizer draw from separate named random streams, so a
    run with a frozen maximizer consumes exactly the minibatches plain
    gradient descent on A would.
    """
    stream_fn = data_stream or constant_stream()
    rng_a = stream(seed, "data/minimizer")
    rng_b = stream(seed, "data/maximizer")
    a = np.array(init_a, dtype=np.float64)
    b = np.array(init_b, dtype=np.float64)
    opt_a = Optimizer(game.lr_a.lr, game.momentum_a)
    opt_b = Optimizer(game.lr_b.lr, game.momentum_b)
    trace = GameTrace()
    f = game.objective

    for t in range(game.max_steps):
        if game.on_round is not None:
            game.on_round(t)
        a_prev, b_prev = a, b
        if game.simultaneous:
            ev = f(a, b, stream_fn(rng_a), ("a", "b"))
            _check(ev, trace, t)
            value, aux = ev.value, ev.aux
            gn_a, gn_b = _norm(ev.grad_a), _norm(ev.grad_b)
            a = opt_a.step(a, ev.grad_a, game.lr_a(t))
            # ascent: descend on the negated gradient
            b = opt_b.step(b, -ev.grad_b, game.lr_b(t))
        else:
            _, k_a, k_b = game.schedule
            value = aux = None
            for _ in range(k_a):
                ev = f(a, b, stream_fn(rng_a), ("a",))
                _check(ev, trace, t)
                if value is None:
                    value, aux = ev.value, ev.aux
                gn_a = _norm(ev.grad_a)
                a = opt_a.step(a, ev.grad_a, game.lr_a(t))
            for _ in range(k_b):
                ev = f(a, b, stream_fn(rng_b), ("b",))
                _check(ev, trace, t)
                gn_b = _norm(ev.grad_b)
                b = opt_b.step(b, -ev.grad_b, game.lr_b(t))
        if not _finite(a, b):
            raise DivergedError(f"parameters became non-finite at step {t}", trace)
        if t % game.log_every == 0 or t == game.max_steps - 1:
            trace.records.append(StepRecord(t, float(value), gn_a, gn_b, dict(aux)))
        if game.snapshot_every and t % game.snapshot_every == 0:
            trace.snapshots.append((t, a.copy(), b.copy()))
        if game.stop_tol is not None:
            moved = max(np.max(np.abs(a - a_prev), initial=0.0), np.max(np.abs(b - b_prev), initial=0.0))
            if moved < game.stop_tol:
                trace.stopped_early = True
                break
    return a, b, trace


def equilibrium_residual(game: GameConfig, point, batch=None) -> tuple[float, float]:
    a, b = point
    ev = game.objective(np.asarray(a, float), np.asarray(b, float), batch, ("a", "b"))
    return _norm(ev.grad_a), _norm(ev.grad_b)


def tape_objective(build: Callable[[BatchTape, Node, Node, object], Node]) -> Objective:
    """Turn ``build(tape, a_node, b_node, batch) -> scalar node`` into an objective.

    ``build`` may return ``(node, aux_dict)`` to log extra metrics.
    """

    def objective(a, b, batch, wrt=("a", "b")) -> Evaluation:
        t = BatchTape()
        a_node = t.leaf(a, requires_grad="a" in wrt)
        b_node = t.leaf(b, requires_grad="b" in wrt)
        out = build(t, a_node, b_node, batch)
        aux = {}
        if isinstance(out, tuple):
            out, aux = out
        t.backward(out)
        ga = (a_node.grad if a_node.grad is not None else np.zeros_like(a)) if "a" in wrt else None
        gb = (b_node.grad if b_node.grad is not None else np.zeros_like(b)) if "b" in wrt else None
        return Evaluation(float(out.value), ga, gb, aux)

    return objective


# -- analytic test games ----------------------------------------------------


def quadratic_game(c_aa: float = 1.0, c_bb: float = 1.0, c_ab: float = 0.0) -> Objective:
    """f(a, b) = c_aa*|a|^2 - c_bb*|b|^2 + c_ab * a.b (saddle at the origin)."""

    def build(t, a, b, _):
        return (t.sum(t.square(a)) * c_aa - t.sum(t.square(b)) * c_bb
                + t.sum(a * b) * c_ab)

    return tape_objective(build)


def bilinear_game() -> Objective:
    """f(a, b) = a.b; simultaneous equal-rate GDA spirals outwards."""
    return tape_objective(lambda t, a, b, _: t.sum(a * b))

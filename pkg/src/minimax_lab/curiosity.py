"""Curiosity-driven agents: a controller rewarded by its world model's errors.

A tabular softmax controller C acts in a small stochastic environment; a
world model M predicts the symbol observed after each move.  C's intrinsic
reward is one of M's raw prediction error, M's improvement on the
transition, or the information M gained from it.  The last section runs the
single-interaction special case in which C is a blind generator, the
environment answers whether C's output is a stored pattern, and C learns by
backpropagating M's errors.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import nets
from .autodiff import BatchTape, Node
from .engine import (ConfigError, Evaluation, GameConfig, GameTrace, Schedule, UnsupportedError,
                     play)
from .pm import PatternSet
from .seeding import stream


class RewardKind(str, Enum):
    ERROR = "error"
    IMPROVEMENT = "improvement"
    INFOGAIN = "infogain"


# -- environment --------------------------------------------------------------


@dataclass
class TabularEnv:
    """Deterministic moves, per-state observation symbols.

    ``observations[s]`` is a symbol (deterministic state) or a probability
    vector over the alphabet (noise state).
    """

    transitions: np.ndarray  # (S, A) next-state table
    observations: list
    alphabet: int
    episode_length: int
    start: int = 0

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=int)
        S, A = self.transitions.shape
        if S < 1 or A < 1:
            raise ValueError("need at least one state and one action")
        if np.any((self.transitions < 0) | (self.transitions >= S)):
            raise ValueError("transition table must map into the state set")
        if len(self.observations) != S:
            raise ValueError("one observation entry per state required")
        obs = []
        for o in self.observations:
            if np.ndim(o) == 0:
                if not 0 <= int(o) < self.alphabet:
                    raise ValueError("observation symbol outside the alphabet")
                obs.append(int(o))
            else:
                p = np.asarray(o, dtype=np.float64)
                if p.shape != (self.alphabet,) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
                    raise ValueError("observation distribution must cover the alphabet and sum to 1")
                obs.append(p)
        self.observations = obs
        if self.episode_length < 0 or not 0 <= self.start < S:
            raise ValueError("bad episode length or start state")
        self._cum = [None if isinstance(o, int) else np.cumsum(o) for o in obs]

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def is_noisy(self, s: int) -> bool:
        return not isinstance(self.observations[s], int)

    @property
    def noise_states(self) -> list[int]:
        return [s for s in range(self.n_states) if self.is_noisy(s)]

    def observe(self, s: int, rng: np.random.Generator) -> int:
        o = self.observations[s]
        if isinstance(o, int):
            return o
        return int(min(np.searchsorted(self._cum[s], rng.random(), side="right"), self.alphabet - 1))


def noisy_tv(n_states: int = 5, alphabet: int = 8, episode_length: int = 32,
             start: int | None = None) -> TabularEnv:
    """A chain with moves left and right (walls at both ends); the last state shows noise.

    Deterministic states show their own index as symbol.
    """
    if n_states < 2 or alphabet < n_states - 1:
        raise ValueError("need >= 2 states and a symbol per deterministic state")
    T = np.empty((n_states, 2), dtype=int)
    for s in range(n_states):
        T[s] = (max(s - 1, 0), min(s + 1, n_states - 1))
    obs: list = list(range(n_states - 1)) + [np.full(alphabet, 1.0 / alphabet)]
    return TabularEnv(T, obs, alphabet, episode_length, n_states // 2 if start is None else start)


# -- world model --------------------------------------------------------------


class Transition(NamedTuple):
    state: int
    action: int
    symbol: int


class WorldModel:
    """Count-based Dirichlet(alpha) predictor of the next symbol per (state, action)."""

    kind = "count"

    def __init__(self, n_states: int, n_actions: int, alphabet: int, alpha: float = 1.0):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)
        self.alphabet = alphabet
        self.counts = np.zeros((n_states, n_actions, alphabet))

    def predict(self, s: int, a: int) -> np.ndarray:
        c = self.counts[s, a]
        return (c + self.alpha) / (c.sum() + self.alpha * self.alphabet)

    def update(self, tr: Transition) -> None:
        self.counts[tr.state, tr.action, tr.symbol] += 1.0


class MLPWorldModel:
    """One-hot (state, action) -> softmax over symbols, trained by one SGD step per transition."""

    kind = "mlp"

    def __init__(self, n_states: int, n_actions: int, alphabet: int, hidden: int = 16,
                 lr: float = 0.5, seed: int = 0):
        self.n_states, self.n_actions, self.alphabet, self.lr = n_states, n_actions, alphabet, lr
        self.spec = nets.mlp((n_states * n_actions, hidden, alphabet), "tanh", "linear")
        self.params = nets.init(self.spec, stream(seed, "curiosity/model")).values

    def _input(self, s: int, a: int) -> np.ndarray:
        x = np.zeros((1, self.n_states * self.n_actions))
        x[0, s * self.n_actions + a] = 1.0
        return x

    def _graph(self, t: BatchTape, P: Node, s: int, a: int) -> Node:
        logits = nets.forward_graph(self.spec, t, P, self._input(s, a))
        e = t.exp(logits - float(logits.value.max()))
        return e / t.sum(e)

    def predict(self, s: int, a: int) -> np.ndarray:
        t = BatchTape()
        return self._graph(t, t.constant(self.params), s, a).value[0]

    def update(self, tr: Transition) -> None:
        t = BatchTape()
        P = t.leaf(self.params)
        p = self._graph(t, P, tr.state, tr.action)
        target = np.zeros((1, self.alphabet))
        target[0, tr.symbol] = 1.0
        t.backward(t.sum(t.square(p - t.constant(target))))
        self.params = self.params - self.lr * P.grad


def reward_error(prediction, observed: int) -> float:
    """Squared error between one-hot(observed) and the predicted distribution."""
    p = np.asarray(prediction, dtype=np.float64)
    return float(1.0 - 2.0 * p[observed] + np.dot(p, p))


def reward_improvement(model, tr: Transition) -> float:
    """Error on ``tr`` before the model learns from it minus the error after; updates the model."""
    before = reward_error(model.predict(tr.state, tr.action), tr.symbol)
    model.update(tr)
    return before - reward_error(model.predict(tr.state, tr.action), tr.symbol)


def kl_divergence(p, q) -> float:
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def reward_infogain(model, tr: Transition) -> float:
    """KL(after || before) of the model's prediction for the visited (state, action); updates the model."""
    if model.kind != "count":
        raise UnsupportedError("information gain needs closed-form count-based predictions")
    before = model.predict(tr.state, tr.action)
    model.update(tr)
    return kl_divergence(model.predict(tr.state, tr.action), before)


def intrinsic_reward(kind: RewardKind, model, tr: Transition) -> float:
    """Reward for ``tr`` under ``kind``; the model has learned from ``tr`` afterwards."""
    kind = RewardKind(kind)
    if kind is RewardKind.ERROR:
        r = reward_error(model.predict(tr.state, tr.action), tr.symbol)
        model.update(tr)
        return r
    if kind is RewardKind.IMPROVEMENT:
        return reward_improvement(model, tr)
    return reward_infogain(model, tr)


# -- controller ---------------------------------------------------------------


@dataclass
class Controller:
    """Tabular softmax policy trained by REINFORCE with an entropy bonus."""

    logits: np.ndarray
    learning_rate: float = 0.1
    entropy_weight: float = 0.0

    @classmethod
    def uniform(cls, n_states: int, n_actions: int, **kw) -> "Controller":
        return cls(np.zeros((n_states, n_actions)), **kw)

    def policy(self, s: int) -> np.ndarray:
        z = self.logits[s] - self.logits[s].max()
        e = np.exp(z)
        return e / e.sum()

    def act(self, s: int, rng: np.random.Generator) -> int:
        p = self.policy(s)
        return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), len(p) - 1))

    def entropy(self, s: int) -> float:
        p = self.policy(s)
        nz = p > 0
        return float(-np.sum(p[nz] * np.log(p[nz])))


class Step(NamedTuple):
    state: int
    action: int
    next_state: int
    symbol: int
    reward: float


def run_episode(env: TabularEnv, controller: Controller, model, kind: RewardKind,
                rng: np.random.Generator) -> list[Step]:
    """One episode of ``env.episode_length`` moves; the model learns within the episode."""
    steps = []
    s = env.start
    for _ in range(env.episode_length):
        a = controller.act(s, rng)
        nxt = int(env.transitions[s, a])
        sym = env.observe(nxt, rng)
        r = intrinsic_reward(kind, model, Transition(s, a, sym))
        steps.append(Step(s, a, nxt, sym, r))
        s = nxt
    return steps


@dataclass
class CuriosityConfig:
    episodes: int = 3000
    learning_rate: float = 0.1
    # pulls the policy back towards uniform once intrinsic rewards fade
    entropy_weight: float = 0.01
    discount: float = 0.9
    alpha: float = 1.0
    final_fraction: float = 0.2
    reward_scale: float = 1.0


def reinforce_update(controller: Controller, episode: list[Step], discount: float,
                     scale: float = 1.0) -> None:
    """Policy-gradient step on discounted reward-to-go, minus the episode's mean return."""
    if not episode:
        return
    G = np.empty(len(episode))
    acc = 0.0
    for t in range(len(episode) - 1, -1, -1):
        acc = scale * episode[t].reward + discount * acc
        G[t] = acc
    adv = G - G.mean()
    lr, beta = controller.learning_rate, controller.entropy_weight
    for st, g in zip(episode, adv):
        p = controller.policy(st.state)
        grad = -p * g
        grad[st.action] += g
        if beta:
            logp = np.log(np.maximum(p, 1e-300))
            h = -np.dot(p, logp)
            grad -= beta * p * (logp + h)
        controller.logits[st.state] += lr * grad


@dataclass
class VisitReport:
    """Fraction of late-phase observations made in each state."""

    fractions: dict[int, float]
    noise_states: list[int]
    episodes_counted: int

    @property
    def noise_fraction(self) -> float:
        return float(sum(self.fractions[s] for s in self.noise_states))

    def to_json(self) -> str:
        return json.dumps({str(s): f for s, f in sorted(self.fractions.items())}, sort_keys=True)


@dataclass
class CuriosityRun:
    controller: Controller
    model: object
    report: VisitReport
    episodes: list = field(default_factory=list)  # kept only when requested


def train_controller(env: TabularEnv, kind: RewardKind, episodes: int | None = None, seed: int = 0,
                     cfg: CuriosityConfig | None = None, model=None,
                     keep_episodes: bool = False) -> CuriosityRun:
    """REINFORCE on intrinsic rewards; reports where the last ``final_fraction`` of episodes looked."""
    cfg = cfg or CuriosityConfig()
    n_ep = cfg.episodes if episodes is None else episodes
    kind = RewardKind(kind)
    rng = stream(seed, f"curiosity/{kind.value}")
    controller = Controller.uniform(env.n_states, env.n_actions, learning_rate=cfg.learning_rate,
                                    entropy_weight=cfg.entropy_weight)
    if model is None:
        model = WorldModel(env.n_states, env.n_actions, env.alphabet, cfg.alpha)
    late_from = n_ep - int(round(cfg.final_fraction * n_ep))
    visits = np.zeros(env.n_states)
    kept = []
    for ep in range(n_ep):
        traj = run_episode(env, controller, model, kind, rng)
        reinforce_update(controller, traj, cfg.discount, cfg.reward_scale)
        if ep >= late_from:
            for st in traj:
                visits[st.next_state] += 1
        if keep_episodes:
            kept.append(traj)
    total = visits.sum()
    fractions = {s: (float(visits[s] / total) if total else 0.0) for s in range(env.n_states)}
    return CuriosityRun(controller, model, VisitReport(fractions, env.noise_states, n_ep - late_from), kept)


def write_trajectories_csv(path, episodes: list[list[Step]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "step", "state", "action", "symbol", "reward"])
        for e, traj in enumerate(episodes):
            for t, st in enumerate(traj):
                w.writerow([e, t, st.state, st.action, st.symbol, repr(st.reward)])


# -- single-interaction trials over a membership environment -----------------


@dataclass
class SingleTrialConfig:
    """Learning setup for the blind-generator trials.

    ``prewired_rate`` is the fraction of trials in which the environment
    shows a stored pattern in place of C's output.
    """

    steps: int = 20000
    lr_model: float = 0.05
    lr_controller: float = 0.05
    trials_per_step: int = 64
    prewired_rate: float = 0.5
    error_kind: str = "cross-entropy"
    noise: str = "uniform"
    momentum: float = 0.0
    schedule: tuple = ("alternating", 1, 1)
    log_every: int = 50


MEMBERSHIP_TOLERANCE = 1e-12  # set membership, up to float round-off


def _member_bits(x: np.ndarray, patterns: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(x[:, None, :] - patterns[None, :, :], axis=2).min(axis=1)
    return d <= MEMBERSHIP_TOLERANCE


def _blind_noise(kind: str, rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    if kind == "uniform":
        return rng.uniform(-1.0, 1.0, size=(count, dim))
    if kind == "bernoulli":
        return np.where(rng.random((count, dim)) < 0.5, -1.0, 1.0)
    raise ConfigError(f"unknown noise kind {kind!r}")


def _model_error(t: BatchTape, pred: Node, bits: np.ndarray, kind: str) -> tuple[Node, dict]:
    """M's error on the environment's bits, members and non-members averaged separately."""
    on, off = np.flatnonzero(bits), np.flatnonzero(~bits)
    aux = {"d_real": float(pred.value[on, 0].mean()) if on.size else float("nan"),
           "d_fake": float(pred.value[off, 0].mean()) if off.size else float("nan")}
    parts = []
    if kind == "cross-entropy":
        lo = 1e-7
        aux["clamped"] = int(np.sum((pred.value < lo) | (pred.value > 1.0 - lo)))
        q = t.clip(pred, lo, 1.0 - lo)
        if on.size:
            parts.append(-t.mean(t.log(t.index(q, (on, 0)))))
        if off.size:
            parts.append(-t.mean(t.log(1.0 - t.index(q, (off, 0)))))
    elif kind == "least-squares":
        if on.size:
            parts.append(t.mean(t.square(t.index(pred, (on, 0)) - 1.0)))
        if off.size:
            parts.append(t.mean(t.square(t.index(pred, (off, 0)))))
    else:
        raise ConfigError(f"unknown error kind {kind!r}")
    return (parts[0] if len(parts) == 1 else parts[0] + parts[1]), aux


def gan_as_ac_env(pattern_set: PatternSet, generator_spec: nets.NetworkSpec,
                  discriminator_spec: nets.NetworkSpec, cfg: SingleTrialConfig | None = None,
                  steps: int | None = None, seed: int = 0):
    """Blind C emits x; the environment answers 1 iff x is a stored pattern; M predicts that bit.

    M minimizes its prediction error and C maximizes it through M's
    gradient.  Returns ``(controller_params, model_params, trace)``.
    """
    cfg = cfg or SingleTrialConfig()
    X = pattern_set.patterns
    n = X.shape[1]
    if generator_spec.output_dim != n:
        raise ConfigError("controller output size differs from the pattern size")
    if discriminator_spec.input_dim != n or discriminator_spec.output_dim != 1:
        raise ConfigError("model must map one pattern to one bit prediction")
    if not 0.0 < cfg.prewired_rate < 1.0:
        raise ConfigError("pre-wired rate must lie in (0, 1)")
    z_dim = generator_spec.input_dim
    B, rate = cfg.trials_per_step, cfg.prewired_rate

    def trials(rng):
        z = _blind_noise(cfg.noise, rng, B, z_dim)
        prewired = rng.random(B) < rate
        shown = X[rng.choice(len(X), size=B, p=pattern_set.weights)]
        return z, prewired, shown

    def objective(m, c, batch, wrt=("a", "b")) -> Evaluation:
        z, prewired, shown = batch
        t = BatchTape()
        M = t.leaf(m, requires_grad="a" in wrt)
        C = t.leaf(c, requires_grad="b" in wrt)
        out = nets.forward_graph(generator_spec, t, C, z)
        x = out * t.constant((~prewired).astype(np.float64)[:, None]) + t.constant(shown * prewired[:, None])
        bits = _member_bits(x.value, X)
        err, aux = _model_error(t, nets.forward_graph(discriminator_spec, t, M, x), bits, cfg.error_kind)
        t.backward(err)
        gm = (M.grad if M.grad is not None else np.zeros_like(m)) if "a" in wrt else None
        gc = (C.grad if C.grad is not None else np.zeros_like(c)) if "b" in wrt else None
        return Evaluation(float(err.value), gm, gc, aux)

    game = GameConfig(objective, Schedule(cfg.lr_model), Schedule(cfg.lr_controller),
                      schedule=cfg.schedule, max_steps=cfg.steps if steps is None else steps,
                      momentum_a=cfg.momentum, momentum_b=cfg.momentum, log_every=cfg.log_every)
    m0 = nets.init(discriminator_spec, stream(seed, "init/minimizer")).values
    c0 = nets.init(generator_spec, stream(seed, "init/maximizer")).values
    m, c, trace = play(game, m0, c0, trials, seed)
    return c, m, trace

"""Generator versus discriminator on toy distributions.

The discriminator D is player A (it minimizes its classification loss L_D);
the generator G is player B and maximizes the same L_D.  With a real-pattern
substitution rate rho > 0 the discriminator sees a single stream of generator
outputs, each replaced with probability rho by a randomly chosen real
pattern, and labels every item by where it came from.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import nets
from .autodiff import BatchTape, Node, ShapeError, StateError
from .engine import (ConfigError, Evaluation, GameConfig, GameTrace, Schedule, UnsupportedError,
                     play, tape_objective)
from .pm import PatternSet, fit_regression
from .seeding import stream

LOSS_KINDS = ("cross-entropy", "least-squares")
PRIORS = ("uniform", "bernoulli")
CLAMP = 1e-7


# -- target distributions -----------------------------------------------------


def default_tolerance(patterns) -> float:
    """A quarter of the smallest distance between two stored patterns."""
    P = np.asarray(patterns, dtype=np.float64)
    P = P.reshape(len(P), -1)
    if len(P) < 2:
        raise ValueError("default tolerance needs at least two patterns")
    d = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    d[np.diag_indices(len(P))] = np.inf
    return 0.25 * float(d.min())


@dataclass
class ToyDistribution:
    """Finite pattern set with a membership ball, or an isotropic 2-D mixture.

    ``conditions`` optionally attaches one condition row to each pattern (or
    mixture center); samples then come with the condition of their source.
    """

    kind: str
    patterns: PatternSet | None = None
    tolerance: float | None = None
    centers: np.ndarray | None = None
    sigma: float | None = None
    conditions: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "finite":
            if self.patterns is None:
                raise ValueError("finite distribution needs a pattern set")
            if not isinstance(self.patterns, PatternSet):
                self.patterns = PatternSet(self.patterns)
            if self.tolerance is None:
                self.tolerance = default_tolerance(self.patterns.patterns)
            if not self.tolerance > 0:
                raise ValueError("membership tolerance must be positive")
            sources = len(self.patterns)
        elif self.kind == "mixture":
            if self.centers is None or len(self.centers) < 1:
                raise ValueError("mixture needs at least one center")
            self.centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("mixture sigma must be positive")
            sources = len(self.centers)
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.conditions is None:
            self.conditions = np.zeros((sources, 0))
        self.conditions = np.asarray(self.conditions, dtype=np.float64).reshape(sources, -1)

    @property
    def dim(self) -> int:
        return self.patterns.dim if self.kind == "finite" else self.centers.shape[1]

    @property
    def condition_dim(self) -> int:
        return self.conditions.shape[1]

    @property
    def modes(self) -> np.ndarray:
        return self.patterns.patterns if self.kind == "finite" else self.centers

    def sample(self, rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        """``count`` draws as ``(x, condition)`` rows."""
        if self.kind == "finite":
            idx = rng.choice(len(self.patterns), size=count, p=self.patterns.weights)
            return self.patterns.patterns[idx], self.conditions[idx]
        idx = rng.integers(len(self.centers), size=count)
        x = self.centers[idx] + self.sigma * rng.standard_normal((count, self.dim))
        return x, self.conditions[idx]


def finite_distribution(patterns, tolerance: float | None = None, conditions=None) -> ToyDistribution:
    ps = patterns if isinstance(patterns, PatternSet) else PatternSet(patterns)
    return ToyDistribution("finite", patterns=ps, tolerance=tolerance, conditions=conditions)


def gaussian_mixture(centers, sigma: float, conditions=None) -> ToyDistribution:
    return ToyDistribution("mixture", centers=centers, sigma=sigma, conditions=conditions)


def four_gaussians(radius: float = 1.0, sigma: float = 0.1) -> ToyDistribution:
    c = radius * np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    return gaussian_mixture(c, sigma)


def membership(env: ToyDistribution, x):
    """1 iff ``x`` lies in the closed tolerance ball of some stored pattern.

    A single point gives an int; a 2-D batch (one row per point) gives an
    int array.
    """
    if env.kind != "finite":
        raise UnsupportedError("membership is undefined for a density")
    x = np.asarray(x, dtype=np.float64)
    X = x.reshape(-1, env.dim)
    d = np.linalg.norm(X[:, None, :] - env.patterns.patterns[None, :, :], axis=2).min(axis=1)
    bits = (d <= env.tolerance).astype(int)
    return bits if x.ndim == 2 else int(bits[0])


def mode_counts(samples, env: ToyDistribution) -> np.ndarray:
    """Samples per mode: within tolerance for a finite set, nearest center for a mixture."""
    S = np.atleast_2d(np.asarray(samples, dtype=np.float64)).reshape(-1, env.dim)
    d = np.linalg.norm(S[:, None, :] - env.modes[None, :, :], axis=2)
    nearest = np.argmin(d, axis=1)
    if env.kind == "finite":
        nearest = nearest[d[np.arange(len(S)), nearest] <= env.tolerance]
    return np.bincount(nearest, minlength=len(env.modes))


# -- the system ---------------------------------------------------------------


@dataclass
class GanSystem:
    """Generator (z [+ condition] -> x) and discriminator (x [+ condition] -> (0,1)).

    With ``gating_threshold`` set, the generator has one extra output, the
    gate unit (squashed by a sigmoid), appended after the data dimensions.
    """

    generator_spec: nets.NetworkSpec
    generator: np.ndarray
    discriminator_spec: nets.NetworkSpec
    discriminator: np.ndarray
    loss_kind: str = "cross-entropy"
    condition_dim: int = 0
    real_substitution_rate: float = 0.0
    prior: str = "uniform"
    gating_threshold: float | None = None
    non_saturating: bool = False

    def __post_init__(self):
        self.generator = np.asarray(self.generator, dtype=np.float64)
        self.discriminator = np.asarray(self.discriminator, dtype=np.float64)
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")
        if self.prior not in PRIORS:
            raise ConfigError(f"unknown noise prior {self.prior!r}")
        if not 0.0 <= self.real_substitution_rate < 1.0:
            raise ConfigError("real substitution rate must lie in [0, 1)")
        if self.z_dim < 0:
            raise ConfigError("generator input is narrower than the condition")
        if self.discriminator_spec.output_dim != 1:
            raise ConfigError("discriminator must have one output")
        if self.discriminator_spec.input_dim != self.data_dim + self.condition_dim:
            raise ConfigError("discriminator input must be data plus condition")
        if self.generator.size != self.generator_spec.n_params:
            raise ConfigError("generator parameter count mismatch")
        if self.discriminator.size != self.discriminator_spec.n_params:
            raise ConfigError("discriminator parameter count mismatch")

    @property
    def conditional(self) -> bool:
        return self.condition_dim > 0

    @property
    def gated(self) -> bool:
        return self.gating_threshold is not None

    @property
    def z_dim(self) -> int:
        return self.generator_spec.input_dim - self.condition_dim

    @property
    def data_dim(self) -> int:
        return self.generator_spec.output_dim - (1 if self.gated else 0)

    def copy(self) -> "GanSystem":
        return replace(self, generator=self.generator.copy(), discriminator=self.discriminator.copy())


def make_gan(data_dim: int, z_dim: int, seed: int, generator_hidden=(16,),
             discriminator_hidden=(16,), loss_kind: str = "cross-entropy",
             condition_dim: int = 0, real_substitution_rate: float = 0.0,
             prior: str = "uniform", gating_threshold: float | None = None,
             non_saturating: bool = False, scheme: str = "uniform-fan-in",
             discriminator_init: str = "plain", data_range=(0.0, 1.0)) -> GanSystem:
    """A fresh system.

    ``discriminator_init="spread"`` gives D's first layer steep thresholds
    spread over ``data_range`` (see :func:`nets.spread_init`), so D can
    tell apart generated points that sit close together.
    """
    g_out = data_dim + (1 if gating_threshold is not None else 0)
    g_spec = nets.mlp((z_dim + condition_dim, *generator_hidden, g_out), "tanh", "linear")
    d_spec = nets.mlp((data_dim + condition_dim, *discriminator_hidden, 1), "tanh", "sigmoid")
    if discriminator_init == "spread":
        d_params = nets.spread_init(d_spec, stream(seed, "init/minimizer"), data_range)
    elif discriminator_init == "plain":
        d_params = init_player(d_spec, seed, "minimizer", scheme)
    else:
        raise ConfigError(f"unknown discriminator init {discriminator_init!r}")
    return GanSystem(
        g_spec, init_player(g_spec, seed, "maximizer", scheme),
        d_spec, d_params,
        loss_kind=loss_kind, condition_dim=condition_dim,
        real_substitution_rate=real_substitution_rate, prior=prior,
        gating_threshold=gating_threshold, non_saturating=non_saturating)


def init_player(spec: nets.NetworkSpec, seed: int, role: str, scheme: str = "uniform-fan-in") -> np.ndarray:
    """Initial parameters for the player in ``role``; shared by every adversarial pipeline."""
    return nets.init(spec, stream(seed, f"init/{role}"), scheme).values


def draw_prior(prior: str, rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Uniform[-1, 1] per dimension, or independent fair bits coded as +-1."""
    if prior == "uniform":
        return rng.uniform(-1.0, 1.0, size=(count, dim))
    if prior == "bernoulli":
        return np.where(rng.random((count, dim)) < 0.5, -1.0, 1.0)
    raise ConfigError(f"unknown noise prior {prior!r}")


# -- graphs -------------------------------------------------------------------


def _with_condition(t: BatchTape, x: Node, cond) -> Node:
    if cond is None or np.shape(cond)[-1] == 0:
        return x
    c = cond if isinstance(cond, Node) else t.constant(np.atleast_2d(cond))
    return t.concat([x, c], axis=1)


def generator_graph(system: GanSystem, t: BatchTape, g: Node, z, cond=None) -> Node:
    z = z if isinstance(z, Node) else t.constant(np.atleast_2d(z))
    out = nets.forward_graph(system.generator_spec, t, g, _with_condition(t, z, cond))
    if system.gated:
        out = t.index(out, (slice(None), slice(0, system.data_dim)))
    return out


def discriminator_graph(system: GanSystem, t: BatchTape, d: Node, x, cond=None) -> Node:
    x = x if isinstance(x, Node) else t.constant(np.atleast_2d(x))
    return nets.forward_graph(system.discriminator_spec, t, d, _with_condition(t, x, cond))


def balanced_error(t: BatchTape, d: Node, labels: np.ndarray, kind: str) -> tuple[Node, dict]:
    """Discriminator loss with each label class averaged separately.

    Label-1 items should score 1 and label-0 items 0.  Cross-entropy clamps
    outputs to [1e-7, 1 - 1e-7] first; an empty class contributes nothing.
    """
    labels = np.asarray(labels, dtype=bool)
    pos, neg = np.flatnonzero(labels), np.flatnonzero(~labels)
    if pos.size + neg.size == 0:
        raise ValueError("empty batch")
    aux = {"d_real": float(d.value[pos, 0].mean()) if pos.size else float("nan"),
           "d_fake": float(d.value[neg, 0].mean()) if neg.size else float("nan")}
    terms = []
    if kind == "cross-entropy":
        aux["clamped"] = int(np.sum((d.value < CLAMP) | (d.value > 1.0 - CLAMP)))
        c = t.clip(d, CLAMP, 1.0 - CLAMP)
        if pos.size:
            terms.append(-t.mean(t.log(t.index(c, (pos, 0)))))
        if neg.size:
            terms.append(-t.mean(t.log(1.0 - t.index(c, (neg, 0)))))
    elif kind == "least-squares":
        if pos.size:
            terms.append(t.mean(t.square(t.index(d, (pos, 0)) - 1.0)))
        if neg.size:
            terms.append(t.mean(t.square(t.index(d, (neg, 0)))))
    else:
        raise ConfigError(f"unknown loss kind {kind!r}")
    L = terms[0] if len(terms) == 1 else terms[0] + terms[1]
    return L, aux


def gan_losses(system: GanSystem, real_batch, fake_batch, condition_batch=None,
               fake_condition_batch=None) -> tuple[float, float]:
    """``(L_D, L_G)`` for given real and generated samples.

    In the minimax form L_G = -L_D.  With ``non_saturating`` the generator
    instead minimizes -mean log D(fake).
    """
    real = np.atleast_2d(np.asarray(real_batch, dtype=np.float64))
    fake = np.atleast_2d(np.asarray(fake_batch, dtype=np.float64))
    if real.size == 0 or fake.size == 0:
        raise ValueError("batches must be non-empty")
    if fake_condition_batch is None:
        fake_condition_batch = condition_batch
    t = BatchTape()
    d = t.constant(system.discriminator)
    dr = discriminator_graph(system, t, d, real, condition_batch)
    df = discriminator_graph(system, t, d, fake, fake_condition_batch)
    labels = np.r_[np.ones(len(real), bool), np.zeros(len(fake), bool)]
    L, _ = balanced_error(t, t.concat([dr, df], axis=0), labels, system.loss_kind)
    L_D = float(L.value)
    if system.non_saturating:
        return L_D, float(-np.mean(np.log(np.clip(df.value, CLAMP, 1.0 - CLAMP))))
    return L_D, -L_D


# -- training -----------------------------------------------------------------


@dataclass
class GanTrainConfig:
    steps: int = 20000
    lr_discriminator: float = 0.05
    lr_generator: float = 0.05
    batch_size: int = 64
    momentum: float = 0.0
    schedule: tuple = ("alternating", 1, 1)
    log_every: int = 50
    lr_decay_steps: float | None = None  # None: constant rates; else lr / (1 + t / decay)


def _rate(lr: float, decay_steps: float | None) -> Schedule:
    return Schedule(lr) if decay_steps is None else Schedule(lr, "inverse", decay_steps)


class GanBatch(NamedTuple):
    """One minibatch.  ``real`` is None in substitution mode."""

    z: np.ndarray
    cond: np.ndarray
    real: np.ndarray | None
    real_cond: np.ndarray | None
    mask: np.ndarray | None = None  # substituted positions
    substitutes: np.ndarray | None = None


def substitution_mode(system: GanSystem) -> bool:
    return system.real_substitution_rate > 0.0


def batch_stream(system: GanSystem, env: ToyDistribution, batch_size: int):
    if batch_size < 1:
        raise ConfigError("batch size must be positive")
    rho = system.real_substitution_rate

    def standard(rng):
        real, real_cond = env.sample(rng, batch_size)
        z = draw_prior(system.prior, rng, batch_size, system.z_dim)
        return GanBatch(z, real_cond, real, real_cond)

    def substituted(rng):
        z = draw_prior(system.prior, rng, batch_size, system.z_dim)
        mask = rng.random(batch_size) < rho
        subs, cond = env.sample(rng, batch_size)
        return GanBatch(z, cond, None, None, mask, subs)

    return substituted if rho > 0 else standard


def _d_inputs(system: GanSystem, t: BatchTape, g: Node, batch: GanBatch) -> tuple[Node, np.ndarray]:
    fake = generator_graph(system, t, g, batch.z, batch.cond)
    if batch.real is None:
        keep = t.constant((~batch.mask).astype(np.float64)[:, None])
        subs = t.constant(batch.substitutes * batch.mask[:, None])
        return fake * keep + subs, batch.mask
    x = t.concat([t.constant(batch.real), fake], axis=0)
    labels = np.r_[np.ones(len(batch.real), bool), np.zeros(len(batch.z), bool)]
    return x, labels


def _d_condition(batch: GanBatch):
    if batch.cond.shape[1] == 0:
        return None
    return batch.cond if batch.real is None else np.vstack([batch.real_cond, batch.cond])


def objective_graph(system: GanSystem, t: BatchTape, d: Node, g: Node, batch: GanBatch):
    x, labels = _d_inputs(system, t, g, batch)
    out = discriminator_graph(system, t, d, x, _d_condition(batch))
    return balanced_error(t, out, labels, system.loss_kind)


def gan_objective(system: GanSystem):
    minimax = tape_objective(lambda t, a, b, batch: objective_graph(system, t, a, b, batch))
    if not system.non_saturating:
        return minimax

    def objective(a, b, batch, wrt=("a", "b")) -> Evaluation:
        ev = minimax(a, b, batch, tuple(w for w in wrt if w == "a") or ("a",))
        if "b" in wrt:
            t = BatchTape()
            d = t.leaf(a, requires_grad=False)
            g = t.leaf(b)
            x, labels = _d_inputs(system, t, g, batch)
            out = discriminator_graph(system, t, d, x, _d_condition(batch))
            fake = np.flatnonzero(~labels)
            # ascent on mean log D(fake) is descent on the heuristic loss
            gain = t.mean(t.log(t.clip(t.index(out, (fake, 0)), CLAMP, 1.0 - CLAMP)))
            t.backward(gain)
            ev.grad_b = g.grad if g.grad is not None else np.zeros_like(b)
        if "a" not in wrt:
            ev.grad_a = None
        return ev

    return objective


def gan_game(system: GanSystem, cfg: GanTrainConfig) -> GameConfig:
    """Player A: the discriminator (minimizer); player B: the generator."""
    return GameConfig(
        objective=gan_objective(system),
        lr_a=_rate(cfg.lr_discriminator, cfg.lr_decay_steps),
        lr_b=_rate(cfg.lr_generator, cfg.lr_decay_steps),
        schedule=cfg.schedule,
        max_steps=cfg.steps,
        momentum_a=cfg.momentum,
        momentum_b=cfg.momentum,
        log_every=cfg.log_every,
    )


def gan_train(system: GanSystem, env: ToyDistribution, cfg: GanTrainConfig | None = None,
              seed: int = 0, game: GameConfig | None = None) -> tuple[GanSystem, GameTrace]:
    """Alternating minimax training; the trace logs L_D, mean D(real), mean D(fake)."""
    cfg = cfg or GanTrainConfig()
    if env.dim != system.data_dim:
        raise ConfigError("distribution and generator dimensions differ")
    if env.condition_dim != system.condition_dim:
        raise ConfigError("distribution and system condition sizes differ")
    if substitution_mode(system) and system.conditional:
        raise ConfigError("real-pattern substitution is only defined for unconditional systems")
    game = game or gan_game(system, cfg)
    a, b, trace = play(game, system.discriminator, system.generator,
                       batch_stream(system, env, cfg.batch_size), seed)
    out = system.copy()
    out.discriminator, out.generator = a, b
    return out, trace


# -- sampling -----------------------------------------------------------------


def conditional_forward(system: GanSystem, z, condition) -> np.ndarray:
    """Generator output for explicit noise and condition (no gating)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    c = np.asarray(condition, dtype=np.float64)
    c = c.reshape(len(z), -1) if c.size else np.zeros((len(z), 0))
    if c.shape[1] != system.condition_dim:
        raise ShapeError(f"condition has {c.shape[1]} entries, system expects {system.condition_dim}")
    if z.shape[1] != system.z_dim:
        raise ShapeError(f"noise has {z.shape[1]} entries, system expects {system.z_dim}")
    t = BatchTape()
    return generator_graph(system, t, t.constant(system.generator), z, c).value


def _raw_generator(system: GanSystem, z, c) -> np.ndarray:
    t = BatchTape()
    g = t.constant(system.generator)
    zc = _with_condition(t, t.constant(z), c)
    return nets.forward_graph(system.generator_spec, t, g, zc).value


def gating_substitution(system: GanSystem, x_hat, X, gate: float | None = None) -> np.ndarray:
    """Replace ``x_hat`` by its nearest stored pattern when the gate unit fires.

    ``gate`` defaults to the last entry of ``x_hat`` (the gate unit's
    activation); ties between equidistant patterns go to the lowest index.
    """
    if not system.gated:
        raise StateError("system has no gating unit")
    X = np.asarray(X.patterns if isinstance(X, PatternSet) else X, dtype=np.float64)
    if X.size == 0:
        raise StateError("no stored patterns to substitute")
    X = X.reshape(len(X), -1)
    x_hat = np.asarray(x_hat, dtype=np.float64).ravel()
    if gate is None:
        if x_hat.size != system.data_dim + 1:
            raise ShapeError("x_hat carries no gate activation")
        gate, x_hat = float(x_hat[-1]), x_hat[:-1]
    if gate > system.gating_threshold:
        # argmin returns the first minimum: lowest index wins ties
        return X[int(np.argmin(np.linalg.norm(X - x_hat, axis=1)))].copy()
    return x_hat.copy()


def generate(system: GanSystem, count: int, rng: np.random.Generator, conditions=None,
             patterns=None) -> np.ndarray:
    """Draw ``count`` samples; gated systems substitute from ``patterns`` when the gate fires."""
    z = draw_prior(system.prior, rng, count, system.z_dim)
    c = np.zeros((count, 0)) if conditions is None else np.asarray(conditions, float).reshape(count, -1)
    if c.shape[1] != system.condition_dim:
        raise ShapeError("condition size mismatch")
    raw = _raw_generator(system, z, c)
    if not system.gated:
        return raw
    if patterns is None:
        raise StateError("gated sampling needs the stored patterns")
    gate = 1.0 / (1.0 + np.exp(-raw[:, -1]))
    return np.array([gating_substitution(system, r[:-1], patterns, gate=g) for r, g in zip(raw, gate)])


def write_samples_csv(path, samples, conditions=None) -> None:
    """Rows ``sample_index,dim_0,...[,condition]``; a multi-column condition is ``;``-joined."""
    S = np.atleast_2d(samples)
    header = ["sample_index", *(f"dim_{i}" for i in range(S.shape[1]))]
    if conditions is not None:
        header.append("condition")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, row in enumerate(S):
            out = [i, *(repr(float(v)) for v in row)]
            if conditions is not None:
                out.append(";".join(repr(float(v)) for v in np.atleast_1d(conditions[i])))
            w.writerow(out)


# -- code recovery by an attached encoder -------------------------------------


@dataclass(frozen=True)
class CodePrior:
    """Generator input distribution with independent components."""

    kind: str  # "bernoulli" (+-1 bits) or "uniform" on [-1, 1]
    dim: int

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return draw_prior(self.kind, rng, count, self.dim)


@dataclass
class AttachedEncoder:
    spec: nets.NetworkSpec
    params: np.ndarray
    train_error: float

    def __call__(self, x) -> np.ndarray:
        return nets.forward_net(self.spec, self.params, np.atleast_2d(x))

    def code_activations(self, x) -> np.ndarray:
        """Outputs mapped from [-1, 1] to [0, 1], the PM code convention."""
        return np.clip((self(x) + 1.0) / 2.0, 0.0, 1.0)


def attach_encoder(system: GanSystem, code_prior: CodePrior, steps: int = 3000, seed: int = 0,
                   hidden=(16,), lr: float = 0.05, momentum: float = 0.9,
                   batch_size: int = 256, init: str = "plain") -> AttachedEncoder:
    """Fit enc so that enc(gen(z)) ~ z by plain gradient descent on prior draws.

    ``init="spread"`` spreads steep first-layer thresholds over the range of
    the generated data, which a 1-D input mapped to scrambled bit codes needs.
    """
    if code_prior.dim != system.z_dim:
        raise ConfigError("code prior and generator input sizes differ")
    if system.conditional:
        raise ConfigError("attach_encoder needs an unconditional generator")
    spec = nets.mlp((system.data_dim, *hidden, code_prior.dim), "tanh", "linear")
    rng = stream(seed, "gan/encoder-data")
    z = code_prior.sample(rng, batch_size)
    x = _raw_generator(system, z, np.zeros((batch_size, 0)))[:, : system.data_dim]
    if init == "spread" and hidden:
        lo, hi = float(x.min()), float(x.max())
        params = nets.spread_init(spec, stream(seed, "gan/encoder"), (lo, hi if hi > lo else lo + 1.0))
    elif init in ("plain", "spread"):
        params = nets.init(spec, stream(seed, "gan/encoder")).values
    else:
        raise ConfigError(f"unknown encoder init {init!r}")
    params = fit_regression(spec, params, x, z, steps, lr, momentum)
    err = float(np.mean(np.sum((nets.forward_net(spec, params, x) - z) ** 2, axis=1)))
    return AttachedEncoder(spec, params, err)


def encoder_error(system: GanSystem, encoder: AttachedEncoder, z) -> float:
    """Mean squared code reconstruction error on given prior draws."""
    z = np.atleast_2d(z)
    x = _raw_generator(system, z, np.zeros((len(z), 0)))[:, : system.data_dim]
    return float(np.mean(np.sum((encoder(x) - z) ** 2, axis=1)))

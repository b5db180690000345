"""Predictability Minimization.

An encoder maps patterns to ``m`` sigmoid code units.  A bank of ``m``
predictors tries to guess each code unit from the other ``m - 1``.  Both
sides share one objective, the mean squared prediction error: predictors
descend it, the encoder ascends it through the (frozen) predictors.  At the
equilibrium the code is binary and factorial.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import nets
from .autodiff import BatchTape, Node, Optimizer, StateError
from .engine import GameConfig, GameTrace, Schedule, play, tape_objective
from .seeding import stream

log = logging.getLogger(__name__)

BINARITY_THRESHOLD = 0.05
MARGINAL_TOLERANCE = 0.05
TC_THRESHOLD = 0.05
STANDARDIZE_EPS = 1e-8


class NotFactorialError(ValueError):
    pass


class NotFactorialWarning(UserWarning):
    pass


@dataclass
class PatternSet:
    patterns: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.patterns, dtype=np.float64)
        self.patterns = p.reshape(len(p), -1)
        if self.weights is None:
            self.weights = np.full(len(p), 1.0 / len(p))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (len(p),) or np.any(self.weights < 0):
            raise ValueError("one non-negative weight per pattern required")
        if not np.isclose(self.weights.sum(), 1.0, rtol=0, atol=1e-12):
            raise ValueError("pattern weights must sum to 1")

    def __len__(self):
        return len(self.patterns)

    @property
    def dim(self) -> int:
        return self.patterns.shape[1]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.patterns[rng.choice(len(self), size=count, p=self.weights)]


def eight_patterns() -> PatternSet:
    """Eight equiprobable scalars at the midpoints 1/16, 3/16, ..., 15/16."""
    return PatternSet(0.0625 * (2 * np.arange(8) + 1))


@dataclass
class PMSystem:
    """Encoder, predictor bank and optional decoder.

    With ``code_gain`` set, the encoder's last layer is linear and each code
    unit is ``sigmoid(gain * (a - center) / scale)``, where ``a`` is the
    unit's pre-activation and ``center``/``scale`` its mean and standard
    deviation over the batch.  After training those statistics are frozen
    in ``code_stats`` so single patterns can be encoded.
    """

    encoder_spec: nets.NetworkSpec
    encoder: np.ndarray
    predictor_spec: nets.NetworkSpec
    predictors: np.ndarray  # shape (m, predictor_spec.n_params)
    decoder_spec: nets.NetworkSpec | None = None
    decoder: np.ndarray | None = None
    variance_bonus: float = 0.0
    code_gain: float | None = None
    code_stats: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        self.encoder = np.asarray(self.encoder, dtype=np.float64)
        self.predictors = np.asarray(self.predictors, dtype=np.float64).reshape(
            self.m, self.predictor_spec.n_params)
        if self.predictor_spec.input_dim != self.m - 1 or self.predictor_spec.output_dim != 1:
            raise ValueError("each predictor must map m-1 code units to one prediction")
        if self.predictor_spec.activations[-1] != "sigmoid":
            raise ValueError("predictions must be sigmoid outputs")
        want = "linear" if self.standardized else "sigmoid"
        if self.encoder_spec.activations[-1] != want:
            raise ValueError(f"encoder output layer must be {want} for this code kind")

    @property
    def m(self) -> int:
        return self.encoder_spec.output_dim

    @property
    def standardized(self) -> bool:
        return self.code_gain is not None

    def copy(self) -> "PMSystem":
        return replace(self, encoder=self.encoder.copy(), predictors=self.predictors.copy(),
                       decoder=None if self.decoder is None else self.decoder.copy())


def make_system(n: int, m: int, seed: int, encoder_hidden=(32,), predictor_hidden=(8,),
                scheme: str = "uniform-fan-in", variance_bonus: float = 0.0,
                code: str = "standardized", encoder_init: str = "spread",
                input_range=(0.0, 1.0), first_layer_gain: float = 40.0) -> PMSystem:
    """A fresh PM system.

    ``code`` is ``"standardized"`` (gain-scheduled standardized code units)
    or ``"sigmoid"`` (plain sigmoid outputs).  ``encoder_init="spread"``
    applies :func:`nets.spread_init`; ``"plain"`` uses ``scheme`` throughout.
    """
    if code not in ("standardized", "sigmoid"):
        raise ValueError(f"unknown code kind {code!r}")
    enc = nets.mlp((n, *encoder_hidden, m), "tanh", "linear" if code == "standardized" else "sigmoid")
    # with one code unit the predictor sees nothing: it is a single learned constant
    pred = nets.mlp((m - 1, *(predictor_hidden if m > 1 else ()), 1), "tanh", "sigmoid")
    rng = stream(seed, "pm/encoder")
    if encoder_init == "spread" and encoder_hidden:
        enc_p = nets.spread_init(enc, rng, input_range, first_layer_gain)
    elif encoder_init in ("spread", "plain"):
        enc_p = nets.init(enc, rng, scheme).values
    else:
        raise ValueError(f"unknown encoder init {encoder_init!r}")
    rng = stream(seed, "pm/predictors")
    pred_p = np.stack([nets.init(pred, rng, scheme).values for _ in range(m)])
    return PMSystem(enc, enc_p, pred, pred_p, variance_bonus=variance_bonus,
                    code_gain=GainSchedule().end if code == "standardized" else None)


@dataclass(frozen=True)
class GainSchedule:
    """Code-unit gain: ``start`` for ``hold`` rounds, then linear to ``end`` over ``ramp`` rounds.

    The soft phase lets the code rotate towards a factorial solution before
    the rising gain drives the units to the corners.
    """

    start: float = 1.0
    end: float = 6.0
    hold: int = 8000
    ramp: int = 1000

    def __call__(self, t: int) -> float:
        if t < self.hold:
            return self.start
        if self.ramp <= 0:
            return self.end
        return self.start + (self.end - self.start) * min(1.0, (t - self.hold) / self.ramp)


# -- graph pieces -------------------------------------------------------------


def code_graph(system: PMSystem, t: BatchTape, enc: Node, X, gain: float | None = None,
               frozen: bool = False, weights=None) -> Node:
    """Code activations for the rows of ``X``.

    A standardized code uses the (``weights``-weighted) batch statistics of
    ``X`` unless ``frozen`` is set, in which case the stored ``code_stats``
    are used.
    """
    out = nets.forward_graph(system.encoder_spec, t, enc, X)
    if not system.standardized:
        return out
    g = system.code_gain if gain is None else gain
    if frozen:
        if system.code_stats is None:
            raise StateError("no frozen code statistics; train the system first")
        center, scale = system.code_stats
        return t.sigmoid((out - t.constant(center)) * t.constant(g / scale))
    if weights is None:
        c = out - t.mean(out, axis=0)
        scale = t.pow(t.mean(t.square(c), axis=0) + STANDARDIZE_EPS, 0.5)
    else:
        w = t.constant(np.asarray(weights, dtype=np.float64)[:, None] / np.sum(weights))
        c = out - t.sum(out * w, axis=0)
        scale = t.pow(t.sum(t.square(c) * w, axis=0) + STANDARDIZE_EPS, 0.5)
    return t.sigmoid(c / scale * g)


def batch_code_stats(system: PMSystem, X, weights=None) -> tuple[np.ndarray, np.ndarray]:
    """Centre and scale of each code pre-activation over ``X``."""
    out = nets.forward_net(system.encoder_spec, system.encoder, np.atleast_2d(X))
    w = np.full(len(out), 1.0 / len(out)) if weights is None else np.asarray(weights) / np.sum(weights)
    center = w @ out
    scale = np.sqrt(w @ (out - center) ** 2 + STANDARDIZE_EPS)
    return center, scale


def predict_graph(system: PMSystem, t: BatchTape, preds: Node, Y: Node) -> Node:
    """Column i of the result is predictor i applied to every unit except i."""
    m, k = system.m, system.predictor_spec.n_params
    cols = []
    for i in range(m):
        others = [j for j in range(m) if j != i]
        if others:
            inp = t.index(Y, (slice(None), others))
        else:
            inp = t.constant(np.zeros((Y.shape[0], 0)))
        cols.append(nets.forward_graph(system.predictor_spec, t, preds, inp, offset=i * k))
    return cols[0] if m == 1 else t.concat(cols, axis=1)


def _weighted_mean_rows(t: BatchTape, v: Node, w: np.ndarray) -> Node:
    return t.sum(v * t.constant(w))


def objective_graph(system: PMSystem, t: BatchTape, preds: Node, enc: Node, batch,
                    gain: float | None = None) -> tuple[Node, dict]:
    X, w = batch
    Y = code_graph(system, t, enc, X, gain, weights=w)
    P = predict_graph(system, t, preds, Y)
    err = t.square(Y - P)
    L = _weighted_mean_rows(t, t.mean(err, axis=1), w)
    aux = {}
    if system.variance_bonus:
        mu = t.sum(Y * t.constant(w[:, None]), axis=0)
        var = t.sum(t.square(Y - mu) * t.constant(w[:, None]), axis=0)
        L = L + t.mean(var) * system.variance_bonus
    return L, aux


def pm_objective(system: PMSystem, batch) -> float:
    """Mean over patterns and code units of (y_i - p_i)^2."""
    if isinstance(batch, PatternSet):
        batch = (batch.patterns, batch.weights)
    X, w = batch
    if len(X) == 0:
        raise ValueError("empty batch")
    t = BatchTape()
    L, _ = objective_graph(system, t, t.constant(system.predictors.ravel()),
                           t.constant(system.encoder), (np.atleast_2d(X), np.asarray(w)))
    return float(L.value)


def encode(system: PMSystem, X) -> np.ndarray:
    """Code activations; a standardized code uses its frozen statistics."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not system.standardized:
        return nets.forward_net(system.encoder_spec, system.encoder, X)
    t = BatchTape()
    return code_graph(system, t, t.constant(system.encoder), X, frozen=True).value


def predictions(system: PMSystem, Y) -> np.ndarray:
    t = BatchTape()
    return predict_graph(system, t, t.constant(system.predictors.ravel()),
                         t.constant(np.atleast_2d(Y))).value


# -- training ---------------------------------------------------------------


@dataclass
class PMTrainConfig:
    steps: int = 9500
    lr_encoder: float = 2.0
    lr_ratio: float = 2.5  # predictor lr = ratio * encoder lr
    momentum: float = 0.0
    batch_size: int | None = None  # None: whole pattern set every step
    schedule: tuple = ("alternating", 1, 1)
    log_every: int = 10
    gain: GainSchedule = field(default_factory=GainSchedule)


def data_stream(data: PatternSet, batch_size: int | None):
    if batch_size is None:
        batch = (data.patterns, data.weights)
        return lambda rng: batch

    def draw(rng):
        idx = rng.choice(len(data), size=batch_size, p=data.weights)
        return data.patterns[idx], np.full(batch_size, 1.0 / batch_size)

    return draw


def pm_game(system: PMSystem, cfg: PMTrainConfig) -> GameConfig:
    """Player A: the predictor bank (minimizer); player B: the encoder.

    For a standardized code the gain follows ``cfg.gain`` round by round.
    """
    gain = [cfg.gain(0)]

    def on_round(t):
        gain[0] = cfg.gain(t)

    def graph(t, a, b, batch):
        return objective_graph(system, t, a, b, batch, gain[0] if system.standardized else None)

    return GameConfig(
        objective=tape_objective(graph),
        lr_a=Schedule(cfg.lr_encoder * cfg.lr_ratio),
        lr_b=Schedule(cfg.lr_encoder),
        schedule=cfg.schedule,
        max_steps=cfg.steps,
        momentum_a=cfg.momentum,
        momentum_b=cfg.momentum,
        log_every=cfg.log_every,
        on_round=on_round if system.standardized else None,
    )


def pm_train(system: PMSystem, data: PatternSet, cfg: PMTrainConfig | None = None,
             seed: int = 0, game: GameConfig | None = None) -> tuple[PMSystem, GameTrace]:
    """Play the PM game; a standardized code gets its statistics frozen on ``data``."""
    cfg = cfg or PMTrainConfig()
    game = game or pm_game(system, cfg)
    a, b, trace = play(game, system.predictors.ravel(), system.encoder,
                       data_stream(data, cfg.batch_size), seed)
    out = system.copy()
    out.predictors = a.reshape(system.m, -1)
    out.encoder = b
    if out.standardized:
        out.code_gain = cfg.gain(max(cfg.steps - 1, 0))
        out.code_stats = batch_code_stats(out, data.patterns, data.weights)
    return out, trace


# -- statistics ---------------------------------------------------------------


def _entropy(probs) -> float:
    p = np.asarray([q for q in probs if q > 0], dtype=np.float64)
    return float(-np.sum(p * np.log(p)))


def codeword_distribution(bits: np.ndarray, weights: np.ndarray) -> dict[tuple[int, ...], float]:
    dist: dict[tuple[int, ...], float] = {}
    for row, w in zip(bits, weights):
        key = tuple(int(v) for v in row)
        dist[key] = dist.get(key, 0.0) + float(w)
    return dist


def total_correlation(bits: np.ndarray, weights: np.ndarray | None = None) -> float:
    """sum_i H(Y_i) - H(Y) in nats, from empirical (weighted) counts of binary codes."""
    bits = np.asarray(bits, dtype=int)
    if weights is None:
        weights = np.full(len(bits), 1.0 / len(bits))
    joint = _entropy(codeword_distribution(bits, weights).values())
    marg = 0.0
    for i in range(bits.shape[1]):
        p1 = float(np.sum(weights[bits[:, i] == 1]))
        marg += _entropy([p1, 1.0 - p1])
    tc = marg - joint
    # rounding residue of an exactly factorial code
    return 0.0 if abs(tc) < 1e-12 else tc


@dataclass
class CodeStatistics:
    binarity: float
    marginals: np.ndarray
    pairwise_cov: np.ndarray
    total_correlation: float
    distinct_codewords: int
    rounded_marginals: np.ndarray = field(default=None)

    def factorial(self, binarity=BINARITY_THRESHOLD, tc=TC_THRESHOLD) -> bool:
        return bool(self.binarity < binarity and self.total_correlation < tc)

    def to_dict(self) -> dict:
        return {
            "binarity": self.binarity,
            "marginals": self.marginals.tolist(),
            "rounded_marginals": self.rounded_marginals.tolist(),
            "pairwise_cov": self.pairwise_cov.tolist(),
            "total_correlation": self.total_correlation,
            "distinct_codewords": self.distinct_codewords,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def statistics_of_codes(Y: np.ndarray, weights: np.ndarray) -> CodeStatistics:
    Y = np.atleast_2d(Y)
    bits = np.rint(Y).astype(int)
    binarity = float(np.mean(np.abs(Y - bits)))
    marginals = weights @ Y
    rmarg = weights @ bits
    centered = bits - rmarg
    cov = (centered * weights[:, None]).T @ centered
    return CodeStatistics(
        binarity=binarity,
        marginals=marginals,
        pairwise_cov=cov,
        total_correlation=total_correlation(bits, weights),
        distinct_codewords=len(codeword_distribution(bits, weights)),
        rounded_marginals=rmarg,
    )


def code_statistics(system: PMSystem, data: PatternSet) -> CodeStatistics:
    return statistics_of_codes(encode(system, data.patterns), data.weights)


class UnitProbability(NamedTuple):
    value: float
    certified: bool


def unconditional_probability(system: PMSystem, unit_index: int, data: PatternSet,
                              force: bool = False, binarity_threshold: float = BINARITY_THRESHOLD,
                              tc_threshold: float = TC_THRESHOLD) -> UnitProbability:
    """Mean prediction for code unit ``unit_index`` over the data.

    For a binary factorial code this is the unit's probability of being on.
    If the code is not certified binary and independent, raises
    :class:`NotFactorialError` unless ``force`` is set, in which case the
    value is returned with ``certified=False``.
    """
    Y = encode(system, data.patterns)
    stats = statistics_of_codes(Y, data.weights)
    certified = stats.binarity < binarity_threshold and stats.total_correlation < tc_threshold
    if not certified:
        msg = (f"code is not a certified binary factorial code "
               f"(binarity={stats.binarity:.3g}, total correlation={stats.total_correlation:.3g})")
        if not force:
            raise NotFactorialError(msg)
        warnings.warn(msg, NotFactorialWarning, stacklevel=2)
    p = predictions(system, Y)[:, unit_index]
    return UnitProbability(float(data.weights @ p), certified)


# -- decoder and generative sampling ------------------------------------------


@dataclass
class DecoderConfig:
    steps: int = 4000
    lr: float = 0.1
    momentum: float = 0.9
    hidden: tuple = (16,)


def fit_regression(spec: nets.NetworkSpec, params: np.ndarray, inputs: np.ndarray,
                   targets: np.ndarray, steps: int, lr: float, momentum: float = 0.0,
                   weights: np.ndarray | None = None) -> np.ndarray:
    """Plain (non-adversarial) gradient descent on weighted mean squared error."""
    inputs, targets = np.atleast_2d(inputs), np.atleast_2d(targets)
    if weights is None:
        weights = np.full(len(inputs), 1.0 / len(inputs))
    opt = Optimizer(lr, momentum)
    for _ in range(steps):
        t = BatchTape()
        P = t.leaf(params)
        out = nets.forward_graph(spec, t, P, inputs)
        sq = t.sum(t.square(out - t.constant(targets)), axis=1)
        loss = t.sum(sq * t.constant(weights))
        t.backward(loss)
        params = opt.step(params, P.grad)
    return params


def train_decoder(system: PMSystem, data: PatternSet, cfg: DecoderConfig | None = None,
                  seed: int = 0, codes: np.ndarray | None = None) -> PMSystem:
    """Fit a decoder from the frozen encoder's codes back to the patterns.

    ``codes`` overrides the encoder output (used for shuffled-pair sanity checks).
    """
    cfg = cfg or DecoderConfig()
    spec = nets.mlp((system.m, *cfg.hidden, data.dim), "tanh", "linear")
    params = nets.init(spec, stream(seed, "pm/decoder")).values
    Y = encode(system, data.patterns) if codes is None else np.atleast_2d(codes)
    params = fit_regression(spec, params, Y, data.patterns, cfg.steps, cfg.lr, cfg.momentum,
                            data.weights)
    out = system.copy()
    out.decoder_spec, out.decoder = spec, params
    return out


def decode(system: PMSystem, Y) -> np.ndarray:
    if system.decoder is None:
        raise StateError("system has no trained decoder")
    return nets.forward_net(system.decoder_spec, system.decoder, np.atleast_2d(Y))


def reconstruction_errors(system: PMSystem, data: PatternSet) -> np.ndarray:
    """Euclidean distance between each pattern and its reconstruction."""
    rec = decode(system, encode(system, data.patterns))
    return np.linalg.norm(rec - data.patterns, axis=1)


def sample_generative(system: PMSystem, count: int, rng: np.random.Generator,
                      data: PatternSet | None = None, probabilities=None) -> np.ndarray:
    """Draw each code bit independently with its unit's probability, then decode.

    Unit probabilities come from :func:`unconditional_probability` on
    ``data`` unless given explicitly.
    """
    if system.decoder is None:
        raise StateError("system has no trained decoder")
    if probabilities is None:
        if data is None:
            raise ValueError("need data or explicit probabilities")
        probabilities = [unconditional_probability(system, i, data).value for i in range(system.m)]
    probs = np.asarray(probabilities, dtype=np.float64)
    if count == 0:
        return np.zeros((0, system.decoder_spec.output_dim))
    bits = (rng.random((count, system.m)) < probs).astype(np.float64)
    return decode(system, bits)


def nearest_pattern_histogram(samples: np.ndarray, data: PatternSet) -> np.ndarray:
    d = np.linalg.norm(np.atleast_2d(samples)[:, None, :] - data.patterns[None, :, :], axis=2)
    return np.bincount(np.argmin(d, axis=1), minlength=len(data)) / max(len(samples), 1)


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))

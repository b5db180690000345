"""The named experiments and their built-in acceptance thresholds.

Each runner takes a parameter dict (defaults merged in) and a base seed and
returns a :class:`Result`; :mod:`minimax_lab.cli` owns configs and files.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import curiosity, gan, nets, plotting, pm
from .engine import (ConfigError, GameConfig, GameTrace, Schedule, bilinear_game, equilibrium_residual,
                     play, quadratic_game)
from .seeding import stream

Figure = tuple[str, Callable]  # (file stem, draw(path))


@dataclass
class Verdict:
    passed: bool
    value: object
    threshold: str

    def to_dict(self) -> dict:
        return {"passed": bool(self.passed), "value": _plain(self.value), "threshold": self.threshold}


@dataclass
class Result:
    metrics: list[dict]
    verdicts: dict[str, Verdict] = field(default_factory=dict)
    trace: GameTrace | None = None
    samples: np.ndarray | None = None
    stats: dict | None = None
    figures: list[Figure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())


def _plain(v):
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _seeds(base: int, n: int) -> list[int]:
    if n < 1:
        raise ConfigError("n_seeds must be at least 1")
    return [base + k for k in range(n)]


# -- PM -----------------------------------------------------------------------

PM_DEFAULTS = {
    "m": 3,
    "steps": 9500,
    "lr_encoder": 2.0,
    "lr_ratio": 2.5,
    "gain_start": 1.0,
    "gain_end": 6.0,
    "gain_hold": 8000,
    "gain_ramp": 1000,
    "encoder_hidden": [32],
    "predictor_hidden": [8],
    "log_every": 10,
}


def pm_config(p: dict) -> pm.PMTrainConfig:
    return pm.PMTrainConfig(
        steps=p["steps"], lr_encoder=p["lr_encoder"], lr_ratio=p["lr_ratio"], log_every=p["log_every"],
        gain=pm.GainSchedule(p["gain_start"], p["gain_end"], p["gain_hold"], p["gain_ramp"]))


def factorial_checks(stats: pm.CodeStatistics, m: int) -> dict[str, Verdict]:
    """The factorial-code thresholds for the 8-pattern problem."""
    lo, hi = 0.5 - pm.MARGINAL_TOLERANCE, 0.5 + pm.MARGINAL_TOLERANCE
    return {
        "binarity": Verdict(stats.binarity < pm.BINARITY_THRESHOLD, stats.binarity, f"< {pm.BINARITY_THRESHOLD}"),
        "distinct_codewords": Verdict(stats.distinct_codewords == 2 ** m, stats.distinct_codewords, f"== {2 ** m}"),
        "marginals": Verdict(bool(np.all((stats.marginals >= lo) & (stats.marginals <= hi))),
                             stats.marginals, f"in [{lo}, {hi}]"),
        "total_correlation": Verdict(stats.total_correlation < pm.TC_THRESHOLD, stats.total_correlation,
                                     f"< {pm.TC_THRESHOLD}"),
    }


@dataclass
class PMRun:
    seed: int
    system: pm.PMSystem
    trace: GameTrace
    stats: pm.CodeStatistics

    @property
    def certified(self) -> bool:
        return all(v.passed for v in factorial_checks(self.stats, self.system.m).values())


def train_pm(p: dict, seed: int, snapshot_every: int | None = None) -> PMRun:
    data = pm.eight_patterns()
    system = pm.make_system(1, p["m"], seed, encoder_hidden=tuple(p["encoder_hidden"]),
                            predictor_hidden=tuple(p["predictor_hidden"]))
    cfg = pm_config(p)
    game = pm.pm_game(system, cfg)
    game.snapshot_every = snapshot_every
    trained, trace = pm.pm_train(system, data, cfg, seed, game=game)
    return PMRun(seed, trained, trace, pm.code_statistics(trained, data))


def _pm_row(run: PMRun) -> dict:
    s = run.stats
    row = {"seed": run.seed, "binarity": s.binarity, "distinct_codewords": s.distinct_codewords,
           "total_correlation": s.total_correlation, "final_objective": run.trace.records[-1].objective}
    row.update({f"marginal_{i}": float(v) for i, v in enumerate(s.marginals)})
    return row


def _pm_figures(run: PMRun) -> list[Figure]:
    data = pm.eight_patterns()
    codes = pm.encode(run.system, data.patterns)
    return [("objective", lambda path: plotting.trace_plot(run.trace, path, title="PM objective")),
            ("codes", lambda path: plotting.code_table_plot(data.patterns, codes, path))]


def run_pm_factorial(p: dict, seed: int) -> Result:
    run = train_pm(p, seed)
    verdicts = factorial_checks(run.stats, p["m"])
    verdicts["zero_sum"] = _zero_sum(run.trace)
    return Result([_pm_row(run)], verdicts, run.trace, stats=run.stats.to_dict(), figures=_pm_figures(run))


PM_GENERATIVE_DEFAULTS = {
    **PM_DEFAULTS,
    "decoder_steps": 4000,
    "decoder_lr": 0.1,
    "decoder_hidden": [16],
    "samples": 10000,
    "tv_threshold": 0.05,
    "reconstruction_threshold": 0.02,
}


@dataclass
class GenerativeOutcome:
    run: PMRun
    max_reconstruction: float
    probabilities: np.ndarray
    samples: np.ndarray
    histogram: np.ndarray
    tv: float


def pm_generative(p: dict, seed: int, run: PMRun | None = None) -> GenerativeOutcome:
    """Decoder on a trained PM code, then Bernoulli sampling through it."""
    data = pm.eight_patterns()
    run = run or train_pm(p, seed)
    dcfg = pm.DecoderConfig(steps=p["decoder_steps"], lr=p["decoder_lr"], hidden=tuple(p["decoder_hidden"]))
    system = pm.train_decoder(run.system, data, dcfg, seed)
    rec = pm.reconstruction_errors(system, data)
    probs = np.array([pm.unconditional_probability(system, i, data, force=True).value
                      for i in range(system.m)])
    samples = pm.sample_generative(system, p["samples"], stream(seed, "pm/sampling"), probabilities=probs)
    hist = pm.nearest_pattern_histogram(samples, data)
    tv = pm.total_variation(hist, data.weights) if len(samples) else float("nan")
    run = PMRun(run.seed, system, run.trace, run.stats)
    return GenerativeOutcome(run, float(np.max(rec)), probs, samples, hist, tv)


def run_pm_generative(p: dict, seed: int) -> Result:
    out = pm_generative(p, seed)
    verdicts = factorial_checks(out.run.stats, p["m"])
    verdicts["reconstruction"] = Verdict(out.max_reconstruction < p["reconstruction_threshold"],
                                         out.max_reconstruction, f"< {p['reconstruction_threshold']}")
    verdicts["unit_probabilities"] = Verdict(bool(np.all(np.abs(out.probabilities - 0.5) <= 0.05)),
                                             out.probabilities, "within 0.05 of 0.5")
    verdicts["sample_tv"] = Verdict(out.tv < p["tv_threshold"], out.tv, f"< {p['tv_threshold']}")
    row = _pm_row(out.run)
    row.update({"max_reconstruction": out.max_reconstruction, "sample_tv": out.tv})
    row.update({f"p_{i}": float(v) for i, v in enumerate(out.probabilities)})
    data = pm.eight_patterns()
    labels = [f"{x:.3f}" for x in data.patterns[:, 0]]
    figs = _pm_figures(out.run) + [
        ("samples", lambda path: plotting.histogram_plot(
            out.histogram, path, reference=data.weights, labels=labels, title="decoded samples"))]
    return Result([row], verdicts, out.run.trace, samples=out.samples,
                  stats={"code": out.run.stats.to_dict(), "histogram": out.histogram.tolist()}, figures=figs)


# -- GAN ------------------------------------------------------------------------

GAN_TOY_DEFAULTS = {
    "target": "eight-patterns",
    "steps": 20000,
    "lr_discriminator": 0.05,
    "lr_generator": 0.05,
    "batch_size": 64,
    "momentum": 0.0,
    "z_dim": 2,
    "generator_hidden": [16],
    "discriminator_hidden": [16],
    "loss_kind": "cross-entropy",
    "samples": 1000,
    "log_every": 50,
    "min_modes": 7,
    "min_mode_fraction": 0.05,
}

TARGETS = ("eight-patterns", "four-gaussians")


def toy_target(name: str) -> gan.ToyDistribution:
    if name == "eight-patterns":
        return gan.finite_distribution(pm.eight_patterns())
    if name == "four-gaussians":
        return gan.four_gaussians()
    raise ConfigError(f"unknown target {name!r}; choose one of {', '.join(TARGETS)}")


def gan_config(p: dict, steps: int | None = None) -> gan.GanTrainConfig:
    return gan.GanTrainConfig(steps=p["steps"] if steps is None else steps,
                              lr_discriminator=p["lr_discriminator"], lr_generator=p["lr_generator"],
                              batch_size=p["batch_size"], momentum=p["momentum"], log_every=p["log_every"])


@dataclass
class GanToyOutcome:
    seed: int
    system: gan.GanSystem
    trace: GameTrace
    samples: np.ndarray
    counts: np.ndarray
    mean_d: float
    covered: bool


def balanced_mean_d(system: gan.GanSystem, env: gan.ToyDistribution, count: int,
                    rng: np.random.Generator) -> float:
    """Mean D output over ``count`` real and ``count`` generated inputs."""
    real, _ = env.sample(rng, count)
    fake = gan.generate(system, count, rng)
    x = np.vstack([real, fake[:, : system.data_dim]])
    return float(np.mean(nets.forward_net(system.discriminator_spec, system.discriminator, x)))


def gan_toy(p: dict, seed: int) -> GanToyOutcome:
    env = toy_target(p["target"])
    system = gan.make_gan(env.dim, p["z_dim"], seed, tuple(p["generator_hidden"]),
                          tuple(p["discriminator_hidden"]), loss_kind=p["loss_kind"])
    trained, trace = gan.gan_train(system, env, gan_config(p), seed)
    rng = stream(seed, "gan/evaluation")
    samples = gan.generate(trained, p["samples"], rng)
    counts = gan.mode_counts(samples, env)
    mean_d = balanced_mean_d(trained, env, p["samples"], rng)
    if env.kind == "finite":
        covered = int(np.sum(counts > 0)) >= p["min_modes"] and 0.35 <= mean_d <= 0.65
    else:
        covered = bool(np.all(counts >= p["min_mode_fraction"] * p["samples"]))
    return GanToyOutcome(seed, trained, trace, samples, counts, mean_d, covered)


def run_gan_toy(p: dict, seed: int) -> Result:
    out = gan_toy(p, seed)
    env = toy_target(p["target"])
    verdicts = {"zero_sum": _zero_sum(out.trace)}
    if env.kind == "finite":
        n = int(np.sum(out.counts > 0))
        verdicts["mode_coverage"] = Verdict(n >= p["min_modes"], n, f">= {p['min_modes']} of {len(env.modes)}")
        verdicts["balanced_mean_d"] = Verdict(0.35 <= out.mean_d <= 0.65, out.mean_d, "in [0.35, 0.65]")
    else:
        frac = out.counts / p["samples"]
        verdicts["mode_fractions"] = Verdict(bool(np.all(frac >= p["min_mode_fraction"])), frac,
                                             f"each >= {p['min_mode_fraction']}")
    row = {"seed": seed, "modes_covered": int(np.sum(out.counts > 0)), "balanced_mean_d": out.mean_d}
    row.update({f"mode_{i}": int(c) for i, c in enumerate(out.counts)})
    figs = [("objective", lambda path: plotting.trace_plot(out.trace, path, ("objective",), "L_D")),
            ("discriminator", lambda path: plotting.trace_plot(out.trace, path, ("d_real", "d_fake"),
                                                               "mean D")),
            ("samples", lambda path: plotting.scatter_plot(out.samples, path, env.modes, "generated samples"))]
    return Result([row], verdicts, out.trace, samples=out.samples,
                  stats={"mode_counts": out.counts.tolist(), "balanced_mean_d": out.mean_d}, figures=figs)


GAN_AS_AC_DEFAULTS = {
    "steps": 2000,
    "substitution_rate": 0.5,
    "z_dim": 2,
    "generator_hidden": [16],
    "discriminator_hidden": [16],
    "lr_discriminator": 0.05,
    "lr_generator": 0.05,
    "batch_size": 64,
    "loss_kind": "cross-entropy",
    "log_every": 1,
}


@dataclass
class ReductionOutcome:
    gan_trace: GameTrace
    ac_trace: GameTrace
    traces_equal: bool
    generator_equal: bool
    discriminator_equal: bool


def gan_as_ac(p: dict, seed: int) -> ReductionOutcome:
    """The same game run twice: as a GAN with substitution and as curiosity over a membership environment."""
    data = pm.eight_patterns()
    env = gan.finite_distribution(data)
    system = gan.make_gan(1, p["z_dim"], seed, tuple(p["generator_hidden"]), tuple(p["discriminator_hidden"]),
                          loss_kind=p["loss_kind"], real_substitution_rate=p["substitution_rate"])
    cfg = gan.GanTrainConfig(steps=p["steps"], lr_discriminator=p["lr_discriminator"],
                             lr_generator=p["lr_generator"], batch_size=p["batch_size"], log_every=p["log_every"])
    trained, gan_trace = gan.gan_train(system, env, cfg, seed)
    ac_cfg = curiosity.SingleTrialConfig(
        steps=p["steps"], lr_model=p["lr_discriminator"], lr_controller=p["lr_generator"],
        trials_per_step=p["batch_size"], prewired_rate=p["substitution_rate"], error_kind=p["loss_kind"],
        log_every=p["log_every"])
    c, m, ac_trace = curiosity.gan_as_ac_env(data, system.generator_spec, system.discriminator_spec,
                                             ac_cfg, seed=seed)
    return ReductionOutcome(gan_trace, ac_trace, gan_trace.equals(ac_trace),
                            bool(np.array_equal(c, trained.generator)),
                            bool(np.array_equal(m, trained.discriminator)))


def run_gan_as_ac(p: dict, seed: int) -> Result:
    out = gan_as_ac(p, seed)
    verdicts = {
        "traces_bitwise_equal": Verdict(out.traces_equal, out.traces_equal, "exact"),
        "generator_bitwise_equal": Verdict(out.generator_equal, out.generator_equal, "exact"),
        "discriminator_bitwise_equal": Verdict(out.discriminator_equal, out.discriminator_equal, "exact"),
        "zero_sum": _zero_sum(out.gan_trace),
    }
    rows = [{"seed": seed, "route": name, "records": len(tr), "final_objective": tr.records[-1].objective}
            for name, tr in (("gan", out.gan_trace), ("curiosity", out.ac_trace))]
    figs = [("objective", lambda path: plotting.trace_plot(out.gan_trace, path, ("objective",), "shared loss"))]
    return Result(rows, verdicts, out.gan_trace, figures=figs)


GAN_PIPELINE_DEFAULTS = {
    "steps": 10500,
    "lr_discriminator": 0.1,
    "lr_generator": 0.1,
    "lr_decay_steps": 1000.0,
    "batch_size": 64,
    "momentum": 0.0,
    "generator_hidden": [16],
    "discriminator_hidden": [16],
    "discriminator_init": "spread",
    "data_range": [-1.0, 2.0],
    "code_dim": 3,
    "encoder_steps": 3000,
    "encoder_hidden": [16],
    "encoder_init": "spread",
    "log_every": 50,
}


@dataclass
class PipelineBRun:
    seed: int
    system: gan.GanSystem
    trace: GameTrace
    encoder: gan.AttachedEncoder
    stats: pm.CodeStatistics
    reconstruction: float


def _pipeline_system(p: dict, seed: int) -> gan.GanSystem:
    return gan.make_gan(1, p["code_dim"], seed, tuple(p["generator_hidden"]), tuple(p["discriminator_hidden"]),
                        prior="bernoulli", discriminator_init=p["discriminator_init"],
                        data_range=tuple(p["data_range"]))


def _pipeline_config(p: dict) -> gan.GanTrainConfig:
    return gan.GanTrainConfig(steps=p["steps"], lr_discriminator=p["lr_discriminator"],
                              lr_generator=p["lr_generator"], batch_size=p["batch_size"],
                              momentum=p["momentum"], log_every=p["log_every"],
                              lr_decay_steps=p["lr_decay_steps"])


def encode_pipeline(p: dict, seed: int, trained: gan.GanSystem) -> tuple[gan.AttachedEncoder, pm.CodeStatistics,
                                                                          float]:
    """Attach the traditional encoder; returns it, the code statistics on the data and the
    worst data -> code -> data Euclidean error through the rounded code."""
    data = pm.eight_patterns()
    enc = gan.attach_encoder(trained, gan.CodePrior("bernoulli", p["code_dim"]), p["encoder_steps"], seed,
                             hidden=tuple(p["encoder_hidden"]), init=p["encoder_init"])
    codes = enc.code_activations(data.patterns)
    stats = pm.statistics_of_codes(codes, data.weights)
    z = np.where(codes >= 0.5, 1.0, -1.0)
    rec = gan.conditional_forward(trained, z, np.zeros((len(z), 0)))
    return enc, stats, float(np.max(np.linalg.norm(rec - data.patterns, axis=1)))


def train_gan_pipeline(p: dict, seed: int, snapshot_every: int | None = None) -> PipelineBRun:
    """GAN on independent-bit codes, then a traditional encoder from data back to the codes."""
    env = gan.finite_distribution(pm.eight_patterns())
    system = _pipeline_system(p, seed)
    cfg = _pipeline_config(p)
    game = gan.gan_game(system, cfg)
    game.snapshot_every = snapshot_every
    trained, trace = gan.gan_train(system, env, cfg, seed, game=game)
    enc, stats, err = encode_pipeline(p, seed, trained)
    return PipelineBRun(seed, trained, trace, enc, stats, err)


def run_gan_pipeline(p: dict, seed: int) -> Result:
    run = train_gan_pipeline(p, seed)
    data = pm.eight_patterns()
    verdicts = factorial_checks(run.stats, p["code_dim"])
    del verdicts["binarity"]  # the attached encoder is a regression net, not a saturating code
    verdicts["zero_sum"] = _zero_sum(run.trace)
    row = {"seed": seed, "distinct_codewords": run.stats.distinct_codewords,
           "total_correlation": run.stats.total_correlation, "binarity": run.stats.binarity,
           "encoder_train_error": run.encoder.train_error, "max_reconstruction": run.reconstruction}
    row.update({f"marginal_{i}": float(v) for i, v in enumerate(run.stats.marginals)})
    codes = run.encoder.code_activations(data.patterns)
    figs = [("objective", lambda path: plotting.trace_plot(run.trace, path, title="L_D")),
            ("codes", lambda path: plotting.code_table_plot(data.patterns, codes, path))]
    return Result([row], verdicts, run.trace, stats=run.stats.to_dict(), figures=figs)


# -- curiosity ------------------------------------------------------------------

CURIOSITY_DEFAULTS = {
    "n_seeds": 10,
    "episodes": 3000,
    "n_states": 5,
    "alphabet": 8,
    "episode_length": 32,
    "learning_rate": 0.1,
    "entropy_weight": 0.01,
    "discount": 0.9,
    "alpha": 1.0,
    "final_fraction": 0.2,
    "error_above": 0.5,
    "progress_below": 0.3,
}

KINDS = ("error", "improvement", "infogain")


def noisy_tv_fractions(p: dict, seed: int) -> dict[str, list[float]]:
    """Late-phase noise-state visit fractions per reward kind, one entry per seed."""
    env = curiosity.noisy_tv(p["n_states"], p["alphabet"], p["episode_length"])
    cfg = curiosity.CuriosityConfig(p["episodes"], p["learning_rate"], p["entropy_weight"], p["discount"],
                                    p["alpha"], p["final_fraction"])
    out = {k: [] for k in KINDS}
    for s in _seeds(seed, p["n_seeds"]):
        for k in KINDS:
            out[k].append(curiosity.train_controller(env, k, seed=s, cfg=cfg).report.noise_fraction)
    return out


def run_curiosity(p: dict, seed: int) -> Result:
    fr = noisy_tv_fractions(p, seed)
    med = {k: float(np.median(v)) for k, v in fr.items()}
    verdicts = {
        "error_median": Verdict(med["error"] > p["error_above"], med["error"], f"> {p['error_above']}"),
        "improvement_median": Verdict(med["improvement"] < p["progress_below"], med["improvement"],
                                      f"< {p['progress_below']}"),
        "infogain_median": Verdict(med["infogain"] < p["progress_below"], med["infogain"],
                                   f"< {p['progress_below']}"),
    }
    seeds = _seeds(seed, p["n_seeds"])
    rows = [{"seed": s, "reward": k, "noise_fraction": fr[k][i]} for k in KINDS for i, s in enumerate(seeds)]
    figs = [("noise_fraction", lambda path: plotting.grouped_bar_plot(
        fr, path, "late noise-state fraction", "noisy TV"))]
    return Result(rows, verdicts, stats={"medians": med}, figures=figs)


# -- saddle games ---------------------------------------------------------------

SADDLE_DEFAULTS = {
    "quadratic_steps": 2000,
    "quadratic_lr": 0.05,
    "c_aa": 1.0,
    "c_bb": 1.0,
    "c_ab": 0.5,
    "bilinear_steps": 50,
    "bilinear_lr": 0.1,
    "start": [1.0, 1.0],
    "residual_threshold": 1e-3,
}


@dataclass
class SaddleOutcome:
    quadratic_point: tuple[np.ndarray, np.ndarray]
    quadratic_residual: float
    quadratic_trace: GameTrace
    bilinear_norms: np.ndarray
    bilinear_points: np.ndarray
    bilinear_trace: GameTrace

    @property
    def bilinear_increasing(self) -> bool:
        return bool(np.all(np.diff(self.bilinear_norms) > 0))


def saddle_games(p: dict, seed: int = 0) -> SaddleOutcome:
    a0 = np.array([p["start"][0]], float)
    b0 = np.array([p["start"][1]], float)
    quad = GameConfig(quadratic_game(p["c_aa"], p["c_bb"], p["c_ab"]), p["quadratic_lr"], p["quadratic_lr"],
                      "simultaneous", p["quadratic_steps"])
    qa, qb, qtrace = play(quad, a0, b0, seed=seed)
    residual = float(np.hypot(*equilibrium_residual(quad, (qa, qb))))
    lin = GameConfig(bilinear_game(), Schedule(p["bilinear_lr"]), Schedule(p["bilinear_lr"]), "simultaneous",
                     p["bilinear_steps"], snapshot_every=1)
    _, _, ltrace = play(lin, a0, b0, seed=seed)
    # snapshots are taken after every round; prepend the start
    pts = np.array([np.concatenate([a0, b0])] + [np.concatenate([sa, sb]) for _, sa, sb in ltrace.snapshots])
    norms = np.linalg.norm(pts, axis=1)
    return SaddleOutcome((qa, qb), residual, qtrace, norms, pts, ltrace)


def run_saddle(p: dict, seed: int) -> Result:
    out = saddle_games(p, seed)
    qa, qb = out.quadratic_point
    dist = float(np.hypot(np.linalg.norm(qa), np.linalg.norm(qb)))
    verdicts = {
        "quadratic_residual": Verdict(out.quadratic_residual < p["residual_threshold"], out.quadratic_residual,
                                      f"< {p['residual_threshold']}"),
        "quadratic_distance_to_saddle": Verdict(dist < p["residual_threshold"], dist,
                                                f"< {p['residual_threshold']}"),
        "bilinear_norm_increasing": Verdict(out.bilinear_increasing, int(len(out.bilinear_norms) - 1),
                                            "strictly increasing every step"),
        "zero_sum": _zero_sum(out.quadratic_trace, out.bilinear_trace),
    }
    rows = [{"step": k, "bilinear_norm": float(n)} for k, n in enumerate(out.bilinear_norms)]
    figs = [("bilinear", lambda path: plotting.trajectory_plot(out.bilinear_points, path, (0, 0),
                                                               "simultaneous GDA on a.b")),
            ("quadratic", lambda path: plotting.trace_plot(out.quadratic_trace, path,
                                                           ("grad_norm_min", "grad_norm_max"),
                                                           "quadratic game gradients"))]
    return Result(rows, verdicts, out.quadratic_trace,
                  stats={"quadratic_point": [float(qa[0]), float(qb[0])], "residual": out.quadratic_residual},
                  figures=figs)


# -- the pipeline duel ----------------------------------------------------------

DUEL_DEFAULTS = {
    **{f"pm_{k}": v for k, v in PM_DEFAULTS.items()},
    "decoder_steps": 4000,
    "decoder_lr": 0.1,
    "decoder_hidden": [16],
    **{f"gan_{k}": v for k, v in GAN_PIPELINE_DEFAULTS.items() if k != "encoder_steps"},
    "encoder_steps": 3000,
    "n_seeds": 10,
    "checkpoints": 4,
    "min_b_rate": 0.6,
    "min_a_rate": 0.8,
}
# matched budgets: PM rounds + decoder steps == GAN rounds + encoder steps
DUEL_DEFAULTS["gan_steps"] = DUEL_DEFAULTS["pm_steps"] + DUEL_DEFAULTS["decoder_steps"] - DUEL_DEFAULTS[
    "encoder_steps"]


def duel_budgets(p: dict) -> tuple[int, int]:
    a = p["pm_steps"] + p["decoder_steps"]
    b = p["gan_steps"] + p["encoder_steps"]
    if a != b:
        raise ConfigError(f"budget mismatch: pipeline A uses {a} gradient steps, pipeline B {b}")
    return a, b


def _sub(p: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in p.items() if k.startswith(prefix)}


def _pm_checkpoint_stats(run: PMRun, p: dict) -> list[tuple[int, bool]]:
    """Factorial certification of the PM code at each snapshot, gain as at that round."""
    data = pm.eight_patterns()
    sched = pm_config(p).gain
    out = []
    for step, _, enc in run.trace.snapshots:
        snap = run.system.copy()
        snap.encoder = enc
        snap.code_gain = sched(step)
        snap.code_stats = pm.batch_code_stats(snap, data.patterns, data.weights)
        stats = pm.code_statistics(snap, data)
        out.append((step, all(v.passed for v in factorial_checks(stats, p["m"]).values())))
    return out


def duel_pipeline_a(p: dict, seed: int, run: PMRun | None = None) -> dict:
    pp = _sub(p, "pm_")
    every = max(1, pp["steps"] // p["checkpoints"])
    if run is None or not run.trace.snapshots:
        run = train_pm(pp, seed, snapshot_every=every)
    gen = pm_generative({**pp, "decoder_steps": p["decoder_steps"], "decoder_lr": p["decoder_lr"],
                         "decoder_hidden": p["decoder_hidden"], "samples": 0}, seed, run)
    data = pm.eight_patterns()
    rec = float(np.max(pm.reconstruction_errors(gen.run.system, data)))
    reached = [s for s, ok in _pm_checkpoint_stats(run, pp) if ok]
    steps_to = (reached[0] + 1) if reached else (pp["steps"] if run.certified else None)
    return {"pipeline": "A", "seed": seed, "certified": run.certified,
            "distinct_codewords": run.stats.distinct_codewords, "total_correlation": run.stats.total_correlation,
            "reconstruction_error": rec, "steps_to_criterion": steps_to}


def _code_ok(stats: pm.CodeStatistics, m: int) -> bool:
    return all(v.passed for k, v in factorial_checks(stats, m).items() if k != "binarity")


def duel_pipeline_b(p: dict, seed: int) -> dict:
    gp = _sub(p, "gan_")
    gp["encoder_steps"] = p["encoder_steps"]
    every = max(1, gp["steps"] // p["checkpoints"])
    run = train_gan_pipeline(gp, seed, snapshot_every=every)
    certified = _code_ok(run.stats, gp["code_dim"])
    # checkpoints: a fresh encoder on each generator snapshot
    steps_to = None
    for step, d, g in run.trace.snapshots:
        _, stats, _ = encode_pipeline(gp, seed, replace(run.system, generator=g, discriminator=d))
        if _code_ok(stats, gp["code_dim"]):
            steps_to = step + 1 + gp["encoder_steps"]
            break
    if steps_to is None and certified:
        steps_to = gp["steps"] + gp["encoder_steps"]
    return {"pipeline": "B", "seed": seed, "certified": certified,
            "distinct_codewords": run.stats.distinct_codewords, "total_correlation": run.stats.total_correlation,
            "reconstruction_error": run.reconstruction, "steps_to_criterion": steps_to}


def pipeline_duel(p: dict, seed: int, pm_runs: dict[int, PMRun] | None = None) -> list[dict]:
    """Both pipelines on the 8-pattern set under a matched gradient-step budget.  Reported, not judged."""
    duel_budgets(p)
    rows = []
    for s in _seeds(seed, p["n_seeds"]):
        rows.append(duel_pipeline_a(p, s, (pm_runs or {}).get(s)))
        rows.append(duel_pipeline_b(p, s))
    return rows


def run_duel(p: dict, seed: int) -> Result:
    rows = pipeline_duel(p, seed)
    a = [r for r in rows if r["pipeline"] == "A"]
    b = [r for r in rows if r["pipeline"] == "B"]
    rate_a = float(np.mean([r["certified"] for r in a]))
    rate_b8 = float(np.mean([r["distinct_codewords"] == 8 for r in b]))
    summary = {
        name: {"certification_rate": float(np.mean([r["certified"] for r in rs])),
               "median_total_correlation": float(np.median([r["total_correlation"] for r in rs])),
               "median_reconstruction_error": float(np.median([r["reconstruction_error"] for r in rs])),
               "distinct_8_rate": float(np.mean([r["distinct_codewords"] == 8 for r in rs]))}
        for name, rs in (("A", a), ("B", b))}
    # the comparison itself is reported only; these two checks carry over module oracles
    verdicts = {
        "pipeline_a_factorial_rate": Verdict(rate_a >= p["min_a_rate"], rate_a, f">= {p['min_a_rate']}"),
        "pipeline_b_distinct_rate": Verdict(rate_b8 >= p["min_b_rate"], rate_b8, f">= {p['min_b_rate']}"),
    }
    figs = [("total_correlation", lambda path: plotting.grouped_bar_plot(
                {"A": [r["total_correlation"] for r in a], "B": [r["total_correlation"] for r in b]},
                path, "total correlation (nats)", "pipeline duel")),
            ("reconstruction", lambda path: plotting.grouped_bar_plot(
                {"A": [r["reconstruction_error"] for r in a], "B": [r["reconstruction_error"] for r in b]},
                path, "max reconstruction error", "pipeline duel"))]
    return Result(rows, verdicts, stats=summary, figures=figs)


# -- registry -------------------------------------------------------------------


def _zero_sum(*traces: GameTrace) -> Verdict:
    bad = sum(t.zero_sum_violations() for t in traces)
    return Verdict(bad == 0, bad, "== 0 violating records")


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str
    description: str
    defaults: dict
    runner: Callable[[dict, int], Result]


REGISTRY: dict[str, Experiment] = {e.name: e for e in (
    Experiment("pm-factorial-8", "Predictability Minimization: 8 patterns, 3 code units",
               "PM game until the code is binary and factorial", PM_DEFAULTS, run_pm_factorial),
    Experiment("pm-generative", "Predictability Minimization: decoder and sampling",
               "PM code, decoder, Bernoulli code sampling", PM_GENERATIVE_DEFAULTS, run_pm_generative),
    Experiment("gan-toy", "GANs as a special case of curiosity",
               "GAN on 8 scalar patterns or a 2-D 4-Gaussian mixture", GAN_TOY_DEFAULTS, run_gan_toy),
    Experiment("gan-as-ac", "GANs as an application of adversarial curiosity",
               "GAN and membership-curiosity routes, bitwise trace comparison", GAN_AS_AC_DEFAULTS,
               run_gan_as_ac),
    Experiment("gan-factorial-pipeline", "GAN pipeline for factorial codes",
               "GAN on independent bits plus an attached inverse encoder", GAN_PIPELINE_DEFAULTS,
               run_gan_pipeline),
    Experiment("curiosity-noisytv", "Improvement-based curiosity and the noisy TV",
               "error, improvement and information-gain rewards on a chain with a noise state",
               CURIOSITY_DEFAULTS, run_curiosity),
    Experiment("saddle-games", "Convergence of minimax gradient games",
               "GDA on a convex-concave quadratic and on the bilinear game", SADDLE_DEFAULTS, run_saddle),
    Experiment("pipeline-duel", "Is the GAN pipeline easier to train than PM?",
               "PM pipeline vs GAN-plus-encoder pipeline over matched budgets", DUEL_DEFAULTS, run_duel),
)}

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_lab.autodiff import Optimizer
from minimax_lab.engine import (
    ConfigError,
    DivergedError,
    GameConfig,
    Schedule,
    bilinear_game,
    equilibrium_residual,
    play,
    quadratic_game,
    tape_objective,
)
from minimax_lab.seeding import derive_seed, stream

ONE = np.array([1.0])
ZERO = np.array([0.0])


def norm_ab(a, b):
    return float(np.hypot(np.linalg.norm(a), np.linalg.norm(b)))


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"schedule": ("alternating", 0, 1)},
        {"schedule": ("alternating", 1, 0)},
        {"schedule": "leapfrog"},
        {"role_a": "maximizer"},
        {"lr_a": -0.1},
        {"max_steps": -1},
    ])
    def test_rejected(self, kw):
        with pytest.raises(ConfigError):
            GameConfig(quadratic_game(), **{"lr_a": 0.1, "lr_b": 0.1, **kw})

    def test_inverse_decay(self):
        s = Schedule(0.1, "inverse", 10.0)
        assert s(0) == 0.1
        assert s(10) == pytest.approx(0.05)


class TestAnalyticGames:
    def test_quadratic_saddle(self):
        game = GameConfig(quadratic_game(1, 1, 0), 0.1, 0.1, "simultaneous", 200)
        a, b, _ = play(game, ONE, ONE)
        assert norm_ab(a, b) < 1e-4

    def test_bilinear_start_1_0(self):
        eta = 0.1
        game = GameConfig(bilinear_game(), eta, eta, "simultaneous", 50, snapshot_every=1)
        _, _, trace = play(game, ONE, ZERO)
        norms = [1.0] + [norm_ab(a, b) for _, a, b in trace.snapshots]
        assert np.all(np.diff(norms) > 0)
        # closed form: each step scales the norm by sqrt(1 + eta^2)
        np.testing.assert_allclose(norms, np.sqrt(1 + eta**2) ** np.arange(51), rtol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 0.5))
    def test_bilinear_diverges_from_any_start(self, a0, b0, eta):
        if abs(a0) + abs(b0) < 1e-3:
            return
        game = GameConfig(bilinear_game(), eta, eta, "simultaneous", 20, snapshot_every=1)
        _, _, trace = play(game, [a0], [b0])
        norms = [norm_ab(a0, b0)] + [norm_ab(a, b) for _, a, b in trace.snapshots]
        assert np.all(np.diff(norms) > 0)

    def test_two_timescale(self):
        game = GameConfig(quadratic_game(1, 1, 0.5), 0.01, 0.1, "simultaneous", 10**4, log_every=100)
        a, b, _ = play(game, ONE, ONE)
        assert norm_ab(a, b) < 1e-3

    def test_alternating_converges(self):
        game = GameConfig(quadratic_game(1, 1, 0.5), 0.05, 0.05, ("alternating", 2, 1), 2000)
        a, b, _ = play(game, ONE, ONE)
        assert norm_ab(a, b) < 1e-6

    def test_stop_tolerance(self):
        game = GameConfig(quadratic_game(), 0.1, 0.1, "simultaneous", 10**4, stop_tol=1e-10)
        _, _, trace = play(game, ONE, ONE)
        assert trace.stopped_early
        assert trace.records[-1].step < 10**4 - 1


class TestResidual:
    @pytest.mark.parametrize("point,expected", [((0.0, 0.0), (0.0, 0.0)), ((1.0, 0.0), (2.0, 0.0))])
    def test_quadratic(self, point, expected):
        game = GameConfig(quadratic_game(1, 1, 0), 0.1, 0.1)
        r = equilibrium_residual(game, ([point[0]], [point[1]]))
        assert r == pytest.approx(expected, abs=1e-15)


class TestBookkeeping:
    def test_zero_sum_every_record(self):
        game = GameConfig(quadratic_game(1, 2, 0.3), 0.05, 0.02, ("alternating", 1, 3), 300)
        _, _, trace = play(game, [0.7, -0.2], [0.4, 0.1])
        assert len(trace) == 300
        assert trace.zero_sum_violations() == 0
        for r in trace.records:
            assert r.payoff_min == -r.objective and r.payoff_max == r.objective

    def test_csv_header(self, tmp_path):
        game = GameConfig(quadratic_game(), 0.1, 0.1, max_steps=5)
        _, _, trace = play(game, ONE, ONE)
        trace.to_csv(tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text().splitlines()[0] == "step,objective,grad_norm_min,grad_norm_max"

    def test_log_every_keeps_last(self):
        game = GameConfig(quadratic_game(), 0.1, 0.1, max_steps=25, log_every=10)
        _, _, trace = play(game, ONE, ONE)
        assert list(trace.column("step")) == [0, 10, 20, 24]


class TestSigns:
    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.floats(0.001, 1.0))
    def test_maximizer_step_never_decreases_linear_objective(self, c, lr):
        c = np.array(c)
        f = tape_objective(lambda t, a, b, _: t.sum(b * t.constant(c)) + t.sum(t.square(a)))
        game = GameConfig(f, 0.0, lr, ("alternating", 1, 1), 1)
        b0 = np.array([0.2, -0.1])
        _, b1, _ = play(game, ONE, b0)
        assert c @ b1 >= c @ b0

    def test_frozen_maximizer_is_gradient_descent(self):
        """alternating(1,1) with lr_B = 0 consumes A's minibatches exactly like plain descent."""

        def build(t, a, b, batch):
            return t.mean(t.square(a - t.constant(batch))) - t.sum(t.square(b)) + t.sum(a * b)

        f = tape_objective(build)
        draw = lambda rng: rng.normal(size=3)
        game = GameConfig(f, 0.1, 0.0, ("alternating", 1, 1), 50)
        a_game, _, _ = play(game, np.zeros(3), np.full(3, 0.5), draw, seed=9)

        rng = stream(9, "data/minimizer")
        opt = Optimizer(0.1)
        a = np.zeros(3)
        for _ in range(50):
            ev = f(a, np.full(3, 0.5), draw(rng), ("a",))
            a = opt.step(a, ev.grad_a)
        np.testing.assert_array_equal(a_game, a)


class TestDivergence:
    def test_bilinear_blows_up(self):
        game = GameConfig(bilinear_game(), 10.0, 10.0, "simultaneous", 1000)
        with pytest.raises(DivergedError) as err:
            play(game, ONE, ONE)
        trace = err.value.trace
        assert 0 < len(trace) < 1000
        assert np.all(np.isfinite(trace.column("objective")))

    def test_nan_objective(self):
        f = tape_objective(lambda t, a, b, _: t.sum(t.log(a)) - t.sum(t.square(b)))
        game = GameConfig(f, 1.0, 0.1, max_steps=10)
        with pytest.raises(Exception):
            play(game, [0.5], [0.0])


class TestDeterminism:
    def test_same_seed_same_trace(self):
        f = tape_objective(lambda t, a, b, x: t.sum(t.square(a - t.constant(x))) - t.sum(t.square(b)))
        draw = lambda rng: rng.normal(size=2)
        game = lambda: GameConfig(f, 0.1, 0.1, max_steps=40)
        t1 = play(game(), np.zeros(2), np.ones(2), draw, seed=4)[2]
        t2 = play(game(), np.zeros(2), np.ones(2), draw, seed=4)[2]
        t3 = play(game(), np.zeros(2), np.ones(2), draw, seed=5)[2]
        assert t1.equals(t2)
        assert not t1.equals(t3)

    def test_named_streams_are_independent(self):
        assert derive_seed(0, "data/minimizer") != derive_seed(0, "data/maximizer")
        x = stream(3, "a").random(4)
        np.testing.assert_array_equal(x, stream(3, "a").random(4))
        assert not np.array_equal(x, stream(3, "b").random(4))

    def test_on_round_hook_sees_every_round(self):
        seen = []
        game = GameConfig(quadratic_game(), 0.1, 0.1, max_steps=7, on_round=seen.append)
        play(game, ONE, ONE)
        assert seen == list(range(7))

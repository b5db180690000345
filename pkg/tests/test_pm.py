import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_lab import nets, pm
from minimax_lab.autodiff import StateError
from minimax_lab.engine import equilibrium_residual
from minimax_lab.pm import NotFactorialError, NotFactorialWarning, PatternSet

SAT = 50.0  # sigmoid(50) rounds to 1.0 in float64


def logit(p):
    return float(np.log(p / (1 - p)))


def constant_system(code_biases, pred_biases):
    """Sigmoid code with zero weights: every pattern gets the same code and predictions."""
    m = len(code_biases)
    enc = nets.mlp((1, m), "tanh", "sigmoid")
    pred = nets.mlp((m - 1, 1), "tanh", "sigmoid")
    enc_p = np.concatenate([np.zeros(m), code_biases])
    pred_p = np.stack([np.concatenate([np.zeros(m - 1), [b]]) for b in pred_biases])
    return pm.PMSystem(enc, enc_p, pred, pred_p)


def corner_system(p_on=0.5):
    """Two code units copying the two input bits of the 4 corners of the unit square."""
    enc = nets.mlp((2, 2), "tanh", "sigmoid")
    enc_p = np.array([2 * SAT, 0, 0, 2 * SAT, -SAT, -SAT])
    pred = nets.mlp((1, 1), "tanh", "sigmoid")
    pred_p = np.array([[0.0, logit(p_on)], [0.0, logit(p_on)]])
    return pm.PMSystem(enc, enc_p, pred, pred_p)


CORNERS = PatternSet([[0, 0], [0, 1], [1, 0], [1, 1]])


class TestPatternSet:
    def test_eight_patterns(self):
        d = pm.eight_patterns()
        np.testing.assert_allclose(d.patterns[:, 0], [(2 * k + 1) / 16 for k in range(8)])
        assert d.weights.sum() == 1.0

    @pytest.mark.parametrize("weights", [[0.5, 0.6], [1.5, -0.5], [1.0]])
    def test_bad_weights(self, weights):
        with pytest.raises(ValueError):
            PatternSet([[0.0], [1.0]], weights)


class TestObjective:
    def test_perfect_prediction_is_zero(self):
        s = constant_system([SAT, -SAT], [SAT, -SAT])
        assert pm.pm_objective(s, PatternSet([[0.3]])) == 0.0

    def test_all_wrong_is_one(self):
        # y = (1, 0), p = (0, 1)
        s = constant_system([SAT, -SAT], [-SAT, SAT])
        assert pm.pm_objective(s, PatternSet([[0.3]])) == 1.0

    @pytest.mark.parametrize("seed", range(3))
    def test_double_loop_oracle(self, seed):
        s = pm.make_system(1, 3, seed)
        data = pm.eight_patterns()
        a = nets.forward_net(s.encoder_spec, s.encoder, data.patterns)
        w = data.weights
        centre = w @ a
        scale = np.sqrt(w @ (a - centre) ** 2 + pm.STANDARDIZE_EPS)
        Y = 1 / (1 + np.exp(-s.code_gain * (a - centre) / scale))
        total = 0.0
        for k in range(len(data)):
            for i in range(s.m):
                others = np.delete(Y[k], i)
                p = nets.forward_net(s.predictor_spec, s.predictors[i], others)[0]
                total += w[k] * (Y[k, i] - p) ** 2 / s.m
        assert pm.pm_objective(s, data) == pytest.approx(total, abs=1e-12)

    def test_predictor_never_reads_own_unit(self):
        s = pm.make_system(1, 3, 0)
        Y = np.random.default_rng(0).random((5, 3))
        base = pm.predictions(s, Y)
        for i in range(3):
            Z = Y.copy()
            Z[:, i] = 1 - Z[:, i]
            np.testing.assert_array_equal(pm.predictions(s, Z)[:, i], base[:, i])

    def test_codes_in_unit_interval(self):
        s = pm.make_system(1, 3, 1)
        s.code_stats = pm.batch_code_stats(s, pm.eight_patterns().patterns)
        Y = pm.encode(s, np.linspace(-2, 3, 50)[:, None])
        assert np.all((Y >= 0) & (Y <= 1))

    def test_standardized_needs_linear_output(self):
        s = pm.make_system(1, 2, 0, code="sigmoid")
        with pytest.raises(ValueError):
            pm.PMSystem(s.encoder_spec, s.encoder, s.predictor_spec, s.predictors, code_gain=1.0)

    def test_unfrozen_encode_is_a_state_error(self):
        with pytest.raises(StateError):
            pm.encode(pm.make_system(1, 2, 0), [[0.5]])


class TestGainSchedule:
    @pytest.mark.parametrize("t,gain", [(0, 1.0), (7999, 1.0), (8500, 3.5), (9000, 6.0), (10**5, 6.0)])
    def test_values(self, t, gain):
        assert pm.GainSchedule()(t) == pytest.approx(gain)


class TestStatistics:
    def test_ideal_code(self):
        bits = np.array(list(itertools.product([0, 1], repeat=3)), float)
        st_ = pm.statistics_of_codes(bits, np.full(8, 1 / 8))
        assert st_.total_correlation == 0.0
        np.testing.assert_array_equal(st_.marginals, 0.5)
        assert st_.distinct_codewords == 8 and st_.binarity == 0.0

    def test_copied_units(self):
        y = np.array([[0, 0], [1, 1], [1, 1], [0, 0]], float)
        tc = pm.statistics_of_codes(y, np.full(4, 0.25)).total_correlation
        assert tc == pytest.approx(np.log(2), abs=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force_enumeration(self, seed):
        s = pm.make_system(1, 3, seed, code="sigmoid", encoder_init="plain")
        data = pm.eight_patterns()
        Y = pm.encode(s, data.patterns)
        got = pm.code_statistics(s, data)
        bits = [tuple(int(v >= 0.5) for v in row) for row in Y]
        joint = Counter(bits)
        h = -sum(c / 8 * np.log(c / 8) for c in joint.values())
        marg = 0.0
        for i in range(3):
            p = sum(b[i] for b in bits) / 8
            marg -= sum(q * np.log(q) for q in (p, 1 - p) if q > 0)
        assert got.total_correlation == pytest.approx(marg - h, abs=1e-12)
        assert got.distinct_codewords == len(joint)
        assert got.binarity == pytest.approx(np.mean(np.abs(Y - np.round(Y))), abs=1e-15)
        np.testing.assert_allclose(got.marginals, Y.mean(axis=0), atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.booleans(), st.booleans(), st.booleans()), min_size=1, max_size=30))
    def test_total_correlation_non_negative(self, rows):
        assert pm.total_correlation(np.array(rows, int)) >= -1e-12


class TestUnconditionalProbability:
    def test_quarter(self):
        s = corner_system(0.25)
        up = pm.unconditional_probability(s, 0, CORNERS)
        assert up.certified and up.value == pytest.approx(0.25, abs=1e-12)

    def test_sampled_marginal_matches(self):
        s = pm.train_decoder(corner_system(0.25), CORNERS, pm.DecoderConfig(steps=2000))
        x = pm.sample_generative(s, 10**4, np.random.default_rng(0), CORNERS)
        on = np.rint(x[:, 0])
        # binomial sd at n=1e4 is ~0.004
        assert np.mean(on) == pytest.approx(0.25, abs=0.02)

    def test_not_factorial_raises(self):
        s = pm.make_system(1, 3, 0, code="sigmoid", encoder_init="plain")
        with pytest.raises(NotFactorialError):
            pm.unconditional_probability(s, 0, pm.eight_patterns())

    def test_forced_is_flagged(self):
        s = pm.make_system(1, 3, 0, code="sigmoid", encoder_init="plain")
        data = pm.eight_patterns()
        with pytest.warns(NotFactorialWarning):
            up = pm.unconditional_probability(s, 1, data, force=True)
        expected = data.weights @ pm.predictions(s, pm.encode(s, data.patterns))[:, 1]
        assert not up.certified and up.value == pytest.approx(expected, abs=1e-15)


class TestDecoder:
    def test_identity_code(self):
        s = pm.train_decoder(corner_system(), CORNERS, pm.DecoderConfig(steps=3000))
        assert np.max(pm.reconstruction_errors(s, CORNERS)) < 1e-3

    def test_shuffled_pairs_hit_variance_floor(self):
        rng = np.random.default_rng(0)
        data = PatternSet(rng.random((200, 1)))
        codes = rng.integers(0, 2, (200, 3)).astype(float)
        s = pm.make_system(1, 3, 0, code="sigmoid")
        s = pm.train_decoder(s, data, pm.DecoderConfig(steps=2000), codes=codes)
        mse = np.mean((pm.decode(s, codes) - data.patterns) ** 2)
        assert mse == pytest.approx(np.var(data.patterns), rel=0.15)

    def test_missing_decoder(self):
        s = corner_system()
        with pytest.raises(StateError):
            pm.sample_generative(s, 3, np.random.default_rng(0), probabilities=[0.5, 0.5])


@pytest.fixture(scope="module")
def decoded():
    return pm.train_decoder(corner_system(), CORNERS, pm.DecoderConfig(steps=2000))


class TestSampling:
    def test_degenerate_probabilities(self, decoded):
        x = pm.sample_generative(decoded, 20, np.random.default_rng(1), probabilities=[1.0, 0.0])
        assert np.all(x == x[0])

    def test_empty(self, decoded):
        assert pm.sample_generative(decoded, 0, np.random.default_rng(1), probabilities=[0.5, 0.5]).shape == (0, 2)

    def test_total_variation(self):
        assert pm.total_variation([0.5, 0.5], [1.0, 0.0]) == 0.5


class TestTraining:
    def test_single_unit_saturates(self):
        data = pm.eight_patterns()
        cfg = pm.PMTrainConfig(steps=3000, gain=pm.GainSchedule(1.0, 6.0, 1000, 1000))
        s, _ = pm.pm_train(pm.make_system(1, 1, 0), data, cfg, 0)
        Y = pm.encode(s, data.patterns)
        assert np.var(Y) > 0.2
        # the lone predictor sees nothing and settles on the mean activation
        assert pm.predictions(s, Y)[0, 0] == pytest.approx(Y.mean(), abs=0.02)

    def test_constant_dataset(self):
        one = PatternSet([[0.3]])
        s, trace = pm.pm_train(pm.make_system(1, 3, 0, code="sigmoid"), one,
                               pm.PMTrainConfig(steps=3000, lr_encoder=0.5), 0)
        y = pm.encode(s, one.patterns)
        assert np.max(np.abs(y - np.rint(y))) < 0.01
        assert trace.records[-1].objective < 1e-3


@pytest.fixture(scope="module")
def trained():
    data = pm.eight_patterns()
    cfg = pm.PMTrainConfig()
    s, trace = pm.pm_train(pm.make_system(1, 3, 0), data, cfg, 0)
    return s, trace, cfg


@pytest.mark.slow
class TestEightPatterns:
    def test_factorial_code(self, trained):
        s, _, _ = trained
        stats = pm.code_statistics(s, pm.eight_patterns())
        assert stats.binarity < 0.05
        assert stats.distinct_codewords == 8
        assert np.all(np.abs(stats.marginals - 0.5) <= 0.05)
        assert stats.total_correlation < 0.05

    def test_unit_probabilities(self, trained):
        s, _, _ = trained
        for i in range(3):
            up = pm.unconditional_probability(s, i, pm.eight_patterns())
            assert up.certified and abs(up.value - 0.5) <= 0.05

    def test_equilibrium_residual(self, trained):
        s, _, cfg = trained
        data = pm.eight_patterns()
        game = pm.pm_game(s, cfg)
        game.on_round(cfg.steps - 1)
        ga, gb = equilibrium_residual(game, (s.predictors.ravel(), s.encoder), (data.patterns, data.weights))
        assert ga < 0.05 and gb < 0.05

    def test_zero_sum(self, trained):
        assert trained[1].zero_sum_violations() == 0

    def test_decoder_and_sampling(self, trained):
        data = pm.eight_patterns()
        s = pm.train_decoder(trained[0], data, seed=0)
        assert np.max(pm.reconstruction_errors(s, data)) < 0.02
        x = pm.sample_generative(s, 10**4, np.random.default_rng(0), data)
        assert pm.total_variation(pm.nearest_pattern_histogram(x, data), data.weights) < 0.05

import numpy as np
import pytest

from lpvss import (DataSet, DimensionError, NoiseFree, bfr,
                   identification_signals, innovation_filter,
                   one_step_predictions, random_stable_model, set_snr,
                   simulate, validation_signals)
from lpvss.metrics import measured_snr


class TestBfr:
    def test_perfect_fit(self, rng):
        y = rng.standard_normal((50, 2))
        assert bfr(y, y) == 100.0

    def test_mean_predictor_scores_zero(self, rng):
        y = rng.standard_normal((200, 2))
        yhat = np.tile(y.mean(axis=0), (200, 1))
        assert abs(bfr(y, yhat)) < 1e-9

    def test_clamped_at_zero(self, rng):
        y = rng.standard_normal((50, 1))
        assert bfr(y, 100.0 + 50.0 * y) == 0.0

    def test_constant_reference_rejected(self):
        with pytest.raises(DimensionError):
            bfr(np.ones((10, 1)), np.zeros((10, 1)))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            bfr(np.zeros((10, 1)), np.zeros((9, 1)))


class TestSetSnr:
    def _model_and_signals(self, n=4000):
        model = random_stable_model(3, 2, 2, 2, rho=0.7, seed=0,
                                    noise="innovation")
        u, p = identification_signals(n, seed=1, nu=2, np_=2)
        return model, u, p

    @pytest.mark.parametrize("target", [25.0, 10.0])
    def test_reaches_target_within_half_db(self, target):
        model, u, p = self._model_and_signals()
        scaled = set_snr(model, u, p, target)
        snr = measured_snr(simulate(scaled, u, p, seed=0))
        assert np.max(np.abs(snr - target)) < 0.5

    def test_infinite_target_removes_noise(self):
        model, u, p = self._model_and_signals(n=500)
        clean = set_snr(model, u, p, np.inf)
        assert isinstance(clean.noise, NoiseFree)

    def test_mixed_infinite_targets_rejected(self):
        model, u, p = self._model_and_signals(n=500)
        with pytest.raises(ValueError):
            set_snr(model, u, p, [np.inf, 10.0])

    def test_noise_free_model_rejected(self):
        model = random_stable_model(2, 2, 2, 2, seed=0)
        u, p = identification_signals(300, nu=2, np_=2)
        with pytest.raises(TypeError):
            set_snr(model, u, p, 20.0)


class TestSignals:
    def test_validation_signals_deterministic(self):
        u1, p1 = validation_signals(seed=3)
        u2, p2 = validation_signals(seed=3)
        np.testing.assert_array_equal(u1, u2)
        np.testing.assert_array_equal(p1, p2)

    def test_validation_signal_ranges(self):
        u, p = validation_signals(n_val=5000, seed=4)
        assert u.shape == (5000, 2) and p.shape == (5000, 5)
        assert np.max(np.abs(u)) <= 0.65 + 1e-12
        # scheduling offset 0.25 - 0.05 i, amplitude 0.4, dither 0.15:
        # worst case [-0.55, 0.75] over the five channels
        assert np.min(p) >= -0.55 - 1e-12
        assert np.max(p) <= 0.75 + 1e-12

    def test_identification_signal_ranges(self):
        u, p = identification_signals(2000, seed=5, u_range=0.8, p_level=0.9)
        assert np.max(np.abs(u)) <= 0.8
        assert set(np.unique(p)) == {-0.9, 0.9}


class TestOneStepPredictions:
    def test_noise_free_equals_simulation(self, rng):
        model = random_stable_model(3, 2, 2, 2, seed=6)
        u = rng.uniform(-1, 1, (100, 2))
        p = rng.uniform(-1, 1, (100, 2))
        data = simulate(model, u, p)
        np.testing.assert_allclose(one_step_predictions(model, data),
                                   data.yd, atol=1e-12)

    def test_general_noise_matches_kalman_filter(self, rng):
        model = random_stable_model(3, 2, 2, 2, seed=7, noise="general")
        u = rng.uniform(-1, 1, (200, 2))
        p = rng.uniform(-1, 1, (200, 2))
        data = simulate(model, u, p, seed=7)
        *_, yhat = innovation_filter(model, data, p0=np.eye(model.nx))
        np.testing.assert_allclose(one_step_predictions(model, data), yhat,
                                   atol=1e-10)

    def test_innovation_predictor_outperforms_simulation(self, rng):
        model = random_stable_model(3, 2, 2, 2, rho=0.7, seed=8,
                                    noise="innovation")
        u, p = identification_signals(3000, seed=9, nu=2, np_=2)
        model = set_snr(model, u, p, 10.0)
        data = simulate(model, u, p, seed=9)
        pred = one_step_predictions(model, data)
        assert bfr(data.y, pred) > bfr(data.y, data.yd)

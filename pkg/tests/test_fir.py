import warnings

import numpy as np
import pytest

from lpvss import (BasisFunctionSet, BayesHyper, DataSet, DimensionError,
                   build_regression, estimate_table_fir, fir_predict,
                   neg_log_marginal, random_stable_model, rwls, simulate,
                   true_table, tune_hyper)
from lpvss.exceptions import RankDeficiencyError
from lpvss.fir import table_to_theta, theta_to_table
from lpvss.markov import enumerate_matrix_keys


def _small_regression(n=60, nu=1, ny=2, npsi=1, nh=1, seed=0, noise=0.1):
    """A small problem whose dense oracle is cheap (ntheta <= 20)."""
    rng = np.random.default_rng(seed)
    model = random_stable_model(2, nu, ny, npsi, rho=0.5, seed=seed)
    u = rng.uniform(-1, 1, (n, nu))
    p = 0.9 * rng.choice([-1.0, 1.0], (n, npsi))
    data = simulate(model, u, p)
    y = data.y + noise * rng.standard_normal(data.y.shape)
    return build_regression(DataSet(u=u, p=p, y=y), model.basis, nh)


def dense_posterior_mean(reg, alpha, sigma2):
    """Gaussian posterior mean with prior N(0, alpha I) and noise sigma2 I,
    computed on the fully expanded design matrix."""
    x = np.kron(reg.phi, np.eye(reg.ny)).T      # (ny*M, ntheta)
    yv = np.reshape(reg.y, -1, order="F")
    normal = x.T @ x / sigma2 + np.eye(reg.ntheta) / alpha
    return np.linalg.solve(normal, x.T @ yv / sigma2)


def dense_neg_log_marginal(reg, alpha, sigma2):
    """log det Sigma_Y + Y' Sigma_Y^-1 Y on the expanded covariance."""
    x = np.kron(reg.phi, np.eye(reg.ny)).T
    yv = np.reshape(reg.y, -1, order="F")
    cov = alpha * (x @ x.T) + sigma2 * np.eye(x.shape[0])
    sign, logdet = np.linalg.slogdet(cov)
    return float(logdet + yv @ np.linalg.solve(cov, yv))


class TestRwls:
    def test_matches_dense_posterior_mean(self):
        reg = _small_regression()
        assert reg.ntheta <= 20
        for alpha, sigma2 in ((1.0, 0.5), (10.0, 0.01), (0.05, 2.0)):
            theta = rwls(reg, we=1.0 / sigma2, wr=1.0 / alpha)
            oracle = dense_posterior_mean(reg, alpha, sigma2)
            np.testing.assert_allclose(theta, oracle, atol=1e-9)

    def test_scalar_and_dense_paths_agree(self):
        reg = _small_regression(seed=1)
        fast = rwls(reg, we=2.0, wr=0.3)
        dense = rwls(reg, we=2.0 * np.eye(reg.ny * reg.m),
                     wr=0.3 * np.eye(reg.ntheta))
        np.testing.assert_allclose(fast, dense, atol=1e-9)

    def test_unregularized_equals_least_squares(self):
        reg = _small_regression(seed=2)
        theta = rwls(reg)
        x = np.kron(reg.phi, np.eye(reg.ny)).T
        yv = np.reshape(reg.y, -1, order="F")
        ls, *_ = np.linalg.lstsq(x, yv, rcond=None)
        np.testing.assert_allclose(theta, ls, atol=1e-8)

    def test_heavy_regularization_shrinks(self):
        reg = _small_regression(seed=3)
        free = rwls(reg, we=1.0, wr=1e-8)
        tight = rwls(reg, we=1.0, wr=1e8)
        assert np.linalg.norm(tight) < 1e-4 * np.linalg.norm(free)

    def test_rank_deficiency_reported(self, rng):
        # fewer samples than parameters and no regularization
        model = random_stable_model(1, 2, 1, 2, seed=4)
        u = rng.uniform(-1, 1, (8, 2))
        p = rng.uniform(-1, 1, (8, 2))
        data = simulate(model, u, p)
        reg = build_regression(data, model.basis, nh=2)
        with pytest.raises(RankDeficiencyError):
            rwls(reg)


class TestMarginal:
    def test_all_paths_agree(self):
        reg = _small_regression(seed=5)
        for alpha, sigma2 in ((1.0, 1.0), (100.0, 0.01), (1e-3, 10.0)):
            hyper = BayesHyper(alpha, sigma2)
            vals = [neg_log_marginal(reg, hyper, path=p)
                    for p in ("fast", "woodbury", "direct")]
            ref = vals[0]
            for v in vals[1:]:
                assert abs(v - ref) <= 1e-10 * max(1.0, abs(ref))

    def test_matches_dense_oracle(self):
        reg = _small_regression(seed=6)
        for alpha, sigma2 in ((0.7, 0.2), (5.0, 1.5)):
            got = neg_log_marginal(reg, BayesHyper(alpha, sigma2))
            want = dense_neg_log_marginal(reg, alpha, sigma2)
            assert abs(got - want) <= 1e-8 * max(1.0, abs(want))

    def test_invalid_hyper_rejected(self):
        with pytest.raises(ValueError):
            BayesHyper(-1.0, 1.0)
        with pytest.raises(ValueError):
            BayesHyper(1.0, 0.0)


class TestTuner:
    def test_deterministic(self):
        reg = _small_regression(seed=7)
        h1 = tune_hyper(reg)
        h2 = tune_hyper(reg)
        assert h1.alpha == h2.alpha and h1.sigma2 == h2.sigma2

    def test_improves_on_grid_corner(self):
        reg = _small_regression(seed=8)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            hyper = tune_hyper(reg)
        tuned = neg_log_marginal(reg, hyper)
        corner = neg_log_marginal(reg, BayesHyper(1e6, 1e6))
        assert tuned < corner

    def test_boundary_warning_on_exact_data(self, rng):
        # output generated exactly by a truncated response: the residual is
        # zero and the noise scale runs into the lower grid edge
        model = random_stable_model(1, 1, 1, 1, rho=0.5, seed=9)
        truth = true_table(model, max_lag=1)
        u = rng.uniform(-1, 1, (200, 1))
        p = 0.9 * rng.choice([-1.0, 1.0], (200, 1))
        y = fir_predict(truth, model.basis, 1, u, p)
        reg = build_regression(DataSet(u=u, p=p, y=y), model.basis, nh=1)
        with pytest.warns(RuntimeWarning):
            tune_hyper(reg)


class TestTableAssembly:
    def test_theta_table_round_trip(self):
        reg = _small_regression(seed=10)
        theta = rwls(reg, we=1.0, wr=0.5)
        table = theta_to_table(theta, reg)
        np.testing.assert_allclose(table_to_theta(table, reg.nh), theta)

    def test_estimate_recovers_noise_free_truth(self, rng):
        model = random_stable_model(2, 2, 2, 2, rho=0.35, seed=11)
        u = rng.uniform(-1, 1, (4000, 2))
        p = 0.9 * rng.choice([-1.0, 1.0], (4000, 2))
        data = simulate(model, u, p)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            table = estimate_table_fir(data, model.basis, nh=2)
        truth = true_table(model, max_lag=2)
        for key in enumerate_matrix_keys(2, 2):
            np.testing.assert_allclose(table.get(key), truth.get(key),
                                       atol=5e-3)

    def test_too_short_dataset_rejected(self):
        data = DataSet(u=np.zeros((3, 1)), p=np.zeros((3, 1)),
                       y=np.zeros((3, 1)))
        with pytest.raises(DimensionError):
            build_regression(data, BasisFunctionSet.poly_linear(1), nh=2)

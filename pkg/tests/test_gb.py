import numpy as np
import pytest

from lpvss import (GbConfig, PemParameterization, SimilarityTransform,
                   apply_transform, ddlc_basis, gb_refine,
                   predict_and_jacobian, random_stable_model, simulate)
from lpvss.gb import predict_residuals


def _setup(nx=2, nu=1, ny=1, npsi=1, n=150, seed=0, snr_noise=0.05):
    model = random_stable_model(nx, nu, ny, npsi, rho=0.6, seed=seed,
                                noise="innovation")
    rng = np.random.default_rng(seed + 50)
    u = rng.uniform(-1, 1, (n, nu))
    p = 0.9 * rng.choice([-1.0, 1.0], (n, npsi))
    data = simulate(model, u, p, seed=seed)
    return model, data


class TestJacobian:
    @pytest.mark.parametrize("affine_k", [False, True])
    def test_matches_central_differences(self, affine_k):
        model, data = _setup(seed=1)
        param = PemParameterization.for_model(model, affine_k=affine_k)
        psi = param.basis.series(data.p, warn_outside=False)
        theta = param.flatten(model)
        resid, jac = predict_and_jacobian(param, theta, data, psi)
        eps = 1e-6
        scale = max(1.0, np.linalg.norm(jac))
        for k in range(0, param.nparams, 3):  # probe a spread of directions
            dt = np.zeros_like(theta)
            dt[k] = eps
            rp = predict_residuals(param, theta + dt, data, psi).ravel()
            rm = predict_residuals(param, theta - dt, data, psi).ravel()
            fd = (rp - rm) / (2 * eps)
            # the Jacobian is taken of the predictions, the residual moves
            # the opposite way
            err = np.linalg.norm(jac[:, k] + fd)
            assert err < 1e-4 * scale, f"component {k}: {err}"

    def test_residuals_zero_at_generating_model(self):
        model, data = _setup(seed=2)
        from lpvss.models import DataSet
        clean = DataSet(u=data.u, p=data.p, y=data.yd)
        param = PemParameterization.for_model(model)
        psi = param.basis.series(clean.p, warn_outside=False)
        resid = predict_residuals(param, param.flatten(model), clean, psi)
        assert resid.shape == (clean.n, model.ny)
        assert np.max(np.abs(resid)) < 1e-10

    def test_flatten_unflatten_round_trip(self, rng):
        model, data = _setup(seed=3)
        param = PemParameterization.for_model(model)
        theta = param.flatten(model)
        back = param.unflatten(theta, xi=np.eye(model.ny))
        np.testing.assert_allclose(param.flatten(back), theta)


class TestDdlc:
    def test_orthogonal_complement_of_orbit_tangent(self):
        model, _ = _setup(seed=4)
        param = PemParameterization.for_model(model)
        theta = param.flatten(model)
        basis_c = ddlc_basis(param, theta)
        nx = model.nx
        assert basis_c.shape == (param.nparams, param.nparams - nx * nx)
        # tangent directions generated by infinitesimal state transforms
        # (I + eps E): A -> E A - A E, B -> E B, C -> -C E, D fixed, K -> E K
        rng = np.random.default_rng(0)
        a, b, c, d, kb = param.blocks(theta)
        for _ in range(5):
            e = rng.standard_normal((nx, nx))
            parts = []
            parts.extend((e @ ai - ai @ e).ravel(order="F") for ai in a)
            parts.extend((e @ bi).ravel(order="F") for bi in b)
            parts.extend((-ci @ e).ravel(order="F") for ci in c)
            parts.extend(np.zeros(di.size) for di in d)
            parts.append((e @ kb[0]).ravel(order="F"))
            tangent = np.concatenate(parts)
            assert np.max(np.abs(basis_c.T @ tangent)) < 1e-12 * \
                max(1.0, np.linalg.norm(tangent))

    def test_orthonormal_columns(self):
        model, _ = _setup(seed=5)
        param = PemParameterization.for_model(model)
        basis_c = ddlc_basis(param, param.flatten(model))
        gram = basis_c.T @ basis_c
        np.testing.assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-12)


class TestRefinement:
    def test_costs_nonincreasing_and_armijo(self):
        model, data = _setup(nx=2, ny=2, n=300, seed=6)
        start = random_stable_model(2, 1, 2, 1, rho=0.6, seed=777,
                                    noise="innovation")
        cfg = GbConfig(max_iter=10)
        refined, result = gb_refine(start, data, cfg)
        costs = np.asarray(result.costs)
        assert np.all(np.diff(costs) <= 1e-12)
        for step in result.steps:
            bound = step.cost_before + \
                cfg.beta * step.alpha * step.directional_derivative
            assert step.cost_after <= bound + 1e-9 * abs(step.cost_before)
            assert step.directional_derivative < 0

    def test_start_at_truth_keeps_cost_negligible(self):
        model, data = _setup(seed=7)
        # noise-free data generated by the model itself: zero residual
        clean = simulate(model, data.u, data.p)
        from lpvss.models import DataSet
        data0 = DataSet(u=clean.u, p=clean.p, y=clean.yd)
        refined, result = gb_refine(model, data0, GbConfig(max_iter=5))
        assert result.costs[-1] < 1e-18 * max(1.0, float(np.sum(clean.yd**2)))

    def test_refined_noise_is_innovation_form(self):
        model, data = _setup(seed=8)
        refined, _ = gb_refine(model, data, GbConfig(max_iter=2))
        from lpvss.models import InnovationNoise
        assert isinstance(refined.noise, InnovationNoise)

    def test_transform_invariant_cost(self, rng):
        model, data = _setup(seed=9)
        t = rng.standard_normal((2, 2)) + 3 * np.eye(2)
        other = apply_transform(model, SimilarityTransform(t))
        pa = PemParameterization.for_model(model)
        po = PemParameterization.for_model(other)
        psi = pa.basis.series(data.p, warn_outside=False)
        ra = predict_residuals(pa, pa.flatten(model), data, psi)
        ro = predict_residuals(po, po.flatten(other), data, psi)
        assert abs(np.sum(ra**2) - np.sum(ro**2)) < 1e-8 * \
            max(1.0, np.sum(ra**2))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            GbConfig(gamma=1.5)
        with pytest.raises(ValueError):
            GbConfig(nu=0.0)

"""Shared fixtures and reference implementations used as test oracles."""

import numpy as np
import pytest

from lpvss import (AffineMatrixFunction, BasisFunctionSet, GeneralNoise,
                   InnovationNoise, LpvSsModel, NoiseFree)


def constant_model(a, b, c, d, npsi=0, noise=None):
    """An LPV model whose matrices do not depend on the scheduling signal."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    d = np.atleast_2d(np.asarray(d, dtype=float))
    return LpvSsModel(
        a=AffineMatrixFunction.constant(a, npsi),
        b=AffineMatrixFunction.constant(b, npsi),
        c=AffineMatrixFunction.constant(c, npsi),
        d=AffineMatrixFunction.constant(d, npsi),
        basis=BasisFunctionSet.poly_linear(npsi),
        noise=noise if noise is not None else NoiseFree())


def gaussian_smoother_oracle(model, dataset, x0_mean=None, p0=None):
    """Exact smoothed moments and log-likelihood by brute-force joint
    Gaussian conditioning.

    Stacks z = [x0, w_0..w_{N-2}, v_0..v_{N-1}] and builds the affine maps
    x = Mx z, y = My z + offset, then conditions on the observed outputs.
    Only feasible for tiny nx and N; used to validate the Kalman filter /
    RTS smoother implementation.
    """
    from lpvss.em import _qr_noise
    from lpvss.models import matrix_series

    q, r = _qr_noise(model)
    nx, ny, n = model.nx, model.ny, dataset.n
    psi = model.basis.series(dataset.p, warn_outside=False)
    a_t = matrix_series(model.a, psi)
    b_t = matrix_series(model.b, psi)
    c_t = matrix_series(model.c, psi)
    d_t = matrix_series(model.d, psi)
    x0_mean = np.zeros(nx) if x0_mean is None else np.asarray(x0_mean)
    p0 = np.eye(nx) if p0 is None else np.asarray(p0)

    nz = nx + (n - 1) * nx + n * ny
    cov_z = np.zeros((nz, nz))
    cov_z[:nx, :nx] = p0
    for t in range(n - 1):
        s = nx + t * nx
        cov_z[s:s + nx, s:s + nx] = q
    for t in range(n):
        s = nx + (n - 1) * nx + t * ny
        cov_z[s:s + ny, s:s + ny] = r
    mean_z = np.zeros(nz)
    mean_z[:nx] = x0_mean

    # state maps: x_t = mx[t] @ z + cx[t]
    mx = np.zeros((n, nx, nz))
    cx = np.zeros((n, nx))
    mx[0, :, :nx] = np.eye(nx)
    for t in range(n - 1):
        mx[t + 1] = a_t[t] @ mx[t]
        mx[t + 1, :, nx + t * nx:nx + (t + 1) * nx] += np.eye(nx)
        cx[t + 1] = a_t[t] @ cx[t] + b_t[t] @ dataset.u[t]
    my = np.zeros((n * ny, nz))
    cy = np.zeros(n * ny)
    for t in range(n):
        my[t * ny:(t + 1) * ny] = c_t[t] @ mx[t]
        off = nx + (n - 1) * nx + t * ny
        my[t * ny:(t + 1) * ny, off:off + ny] += np.eye(ny)
        cy[t * ny:(t + 1) * ny] = c_t[t] @ cx[t] + d_t[t] @ dataset.u[t]

    y_vec = dataset.y.ravel()
    mean_y = my @ mean_z + cy
    cov_y = my @ cov_z @ my.T
    cov_y = 0.5 * (cov_y + cov_y.T)
    resid = y_vec - mean_y
    sign, logdet = np.linalg.slogdet(cov_y)
    quad = resid @ np.linalg.solve(cov_y, resid)
    ll = -0.5 * (n * ny * np.log(2.0 * np.pi) + logdet + quad)

    cov_zy = cov_z @ my.T
    gain = np.linalg.solve(cov_y, cov_zy.T).T
    mean_post = mean_z + gain @ resid
    cov_post = cov_z - gain @ cov_zy.T

    x_smooth = np.stack([mx[t] @ mean_post + cx[t] for t in range(n)])
    p_smooth = np.stack([mx[t] @ cov_post @ mx[t].T for t in range(n)])
    p_lag = np.stack([mx[t + 1] @ cov_post @ mx[t].T for t in range(n - 1)])
    return x_smooth, p_smooth, p_lag, float(ll)


@pytest.fixture
def rng():
    return np.random.default_rng(0)

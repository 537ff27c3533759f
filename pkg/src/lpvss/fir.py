"""Truncated-FIR regression with empirical-Bayes tuned Ridge regularization.

The outputs are stacked against a nested Kronecker regressor of basis and
input samples; the sub-Markov parameters are the regression coefficients.
The Ridge weights follow from a zero-mean Gaussian prior theta ~ N(0, a*I)
and white output noise with covariance s2*I; (a, s2) are chosen by
maximizing the marginal likelihood of the observed outputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from .exceptions import DimensionError, RankDeficiencyError
from .markov import (SubMarkovKey, SubMarkovTable, enumerate_keys,
                     lagged_regressor, nf_count)
from .models import BasisFunctionSet, DataSet

__all__ = ["FirRegression", "BayesHyper", "build_regression", "rwls",
           "neg_log_marginal", "tune_hyper", "estimate_table_fir",
           "theta_to_table", "table_to_theta"]


@dataclass(frozen=True)
class BayesHyper:
    """Prior scale ``alpha`` (P = alpha*I) and noise scale ``sigma2``
    (R = sigma2*I)."""

    alpha: float
    sigma2: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.sigma2 > 0):
            raise ValueError("alpha and sigma2 must be strictly positive")


class FirRegression:
    """Stacked FIR regression data.

    ``phi`` has shape (nf, M) with one column per time step t = nh..N-1
    (0-based) and rows in the canonical key-column order; ``y`` has shape
    (ny, M).
    """

    def __init__(self, phi: np.ndarray, y: np.ndarray, nh: int, npsi: int,
                 nu: int):
        self.phi = np.asarray(phi, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.nh = int(nh)
        self.npsi = int(npsi)
        self.nu = int(nu)
        if self.phi.shape[0] != nf_count(npsi, nh, nu):
            raise DimensionError("phi row count does not match nf")
        if self.phi.shape[1] != self.y.shape[1]:
            raise DimensionError("phi and y have different column counts")
        self._gram_eig: Optional[Tuple[np.ndarray, np.ndarray]] = None

    @property
    def nf(self) -> int:
        return self.phi.shape[0]

    @property
    def ny(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.phi.shape[1]

    @property
    def ntheta(self) -> int:
        return self.ny * self.nf

    def columns(self):
        return enumerate_keys(self.npsi, self.nh, self.nu, self.ny)[0]

    def gram_eig(self):
        """Cached eigendecomposition of phi @ phi' and the projected outputs,
        shared by all marginal-likelihood evaluations."""
        if self._gram_eig is None:
            gram = self.phi @ self.phi.T
            lam, q = np.linalg.eigh(0.5 * (gram + gram.T))
            lam = np.clip(lam, 0.0, None)
            z = q.T @ (self.phi @ self.y.T)  # (nf, ny)
            self._gram_eig = (lam, z)
        return self._gram_eig


def build_regression(dataset: DataSet, basis: BasisFunctionSet, nh: int
                     ) -> FirRegression:
    """Assemble the stacked regressor and output block from a dataset."""
    n = dataset.n
    if n <= nh + 1:
        raise DimensionError(f"need more than nh+1={nh+1} samples, got {n}")
    psi = basis.series(dataset.p)
    full = lagged_regressor(psi, dataset.u, nh)  # (nf, N), zero padded
    phi = full[:, nh:]
    y = dataset.y[nh:].T
    return FirRegression(phi=phi, y=y, nh=nh, npsi=basis.npsi,
                         nu=dataset.u.shape[1])


# ---------------------------------------------------------------------------
# weighted Ridge regression


def _vec(a: np.ndarray) -> np.ndarray:
    return np.reshape(a, -1, order="F")


def _unvec(v: np.ndarray, rows: int) -> np.ndarray:
    return np.reshape(v, (rows, -1), order="F")


def rwls(reg: FirRegression, we=None, wr=None) -> np.ndarray:
    """Weighted regularized least squares
    theta = (Phi We Phi' + Wr)^-1 Phi We Y with Phi = phi (x) I_ny.

    ``we`` (ny*M square) and ``wr`` (ntheta square) may be None (identity /
    zero), scalars, or full PSD matrices.  Scalar weights take a fast path
    exploiting the Kronecker structure; returns the stacked parameter vector
    of length ntheta (column-major over the ny x nf coefficient block).
    """
    ny, nf, m = reg.ny, reg.nf, reg.m
    scalar_we = we is None or np.isscalar(we)
    scalar_wr = wr is None or np.isscalar(wr)
    if scalar_we and scalar_wr:
        se = 1.0 if we is None else float(we)
        sr = 0.0 if wr is None else float(wr)
        if se < 0 or sr < 0:
            raise ValueError("scalar weights must be nonnegative")
        gram = se * (reg.phi @ reg.phi.T) + sr * np.eye(nf)
        rhs = se * (reg.y @ reg.phi.T)  # (ny, nf)
        theta_bar = _solve_spd(gram, rhs.T, nf).T
        return _vec(theta_bar)
    # general dense path
    we_m = np.eye(ny * m) if we is None else np.asarray(we, dtype=float)
    if np.isscalar(we):
        we_m = float(we) * np.eye(ny * m)
    wr_m = np.zeros((reg.ntheta, reg.ntheta)) if wr is None \
        else np.asarray(wr, dtype=float)
    if np.isscalar(wr):
        wr_m = float(wr) * np.eye(reg.ntheta)
    phi_full = np.kron(reg.phi, np.eye(ny))  # (ntheta, ny*M)
    normal = phi_full @ we_m @ phi_full.T + wr_m
    rhs_v = phi_full @ we_m @ _vec(reg.y)
    return _solve_spd(normal, rhs_v, reg.ntheta)


def _solve_spd(a: np.ndarray, b: np.ndarray, size: int) -> np.ndarray:
    a = 0.5 * (a + a.T)
    try:
        cho = scipy.linalg.cho_factor(a)
        return scipy.linalg.cho_solve(cho, b)
    except scipy.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(a)
        deficiency = int(np.sum(eig <= max(eig.max(), 0) * 1e-12))
        raise RankDeficiencyError(
            f"normal matrix is rank deficient ({deficiency} of {size} "
            "directions unresolved); add regularization or more data",
            deficiency=deficiency) from None


# ---------------------------------------------------------------------------
# marginal likelihood


def neg_log_marginal(reg: FirRegression, hyper: BayesHyper,
                     path: str = "auto") -> float:
    """-2 log f(Y | alpha, sigma2) up to an additive constant:

        log det(alpha Phi' Phi + sigma2 I) + Y' (alpha Phi' Phi + sigma2 I)^-1 Y

    ``path`` selects the evaluation route: "woodbury" works on the nf x nf
    Gram matrix, "direct" builds the full ny*M x ny*M covariance (small
    problems only), "auto" picks by size.  All routes drop the same
    constants and agree to rounding error.
    """
    a, s2 = hyper.alpha, hyper.sigma2
    ny, m, nf = reg.ny, reg.m, reg.nf
    if path == "auto":
        path = "woodbury" if reg.ntheta < ny * m or ny * m > 4000 else "direct"
    if path == "fast":
        lam, z = reg.gram_eig()
        ysq = float(np.sum(reg.y ** 2))
        zsq = np.sum(z ** 2, axis=1)  # per eigen direction
        logdet = ny * ((m - nf) * math.log(s2)
                       + float(np.sum(np.log(a * lam + s2))))
        quad = (ysq - float(np.sum(a * zsq / (a * lam + s2)))) / s2
        return logdet + quad
    if path == "woodbury":
        gram = reg.phi @ reg.phi.T
        inner = gram + (s2 / a) * np.eye(nf)
        try:
            cho = scipy.linalg.cho_factor(0.5 * (inner + inner.T))
        except scipy.linalg.LinAlgError:
            raise RankDeficiencyError(
                "hyperparameters are too ill-conditioned for a stable "
                "marginal-likelihood evaluation") from None
        logdet_inner = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
        # det(a*Phi'Phi + s2 I_M) = a^nf * s2^(M-nf) * det(inner)
        logdet = ny * (nf * math.log(a) + (m - nf) * math.log(s2)
                       + logdet_inner)
        py = reg.phi @ reg.y.T  # (nf, ny)
        quad = (float(np.sum(reg.y ** 2))
                - float(np.sum(py * scipy.linalg.cho_solve(cho, py)))) / s2
        return logdet + quad
    if path == "direct":
        if ny * m > 4000:
            raise ValueError("direct path limited to ny*M <= 4000")
        cov = a * np.kron(reg.phi.T @ reg.phi, np.eye(ny)) \
            + s2 * np.eye(ny * m)
        try:
            cho = scipy.linalg.cho_factor(0.5 * (cov + cov.T))
        except scipy.linalg.LinAlgError:
            raise RankDeficiencyError(
                "hyperparameters are too ill-conditioned for a stable "
                "marginal-likelihood evaluation") from None
        logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
        yv = _vec(reg.y)
        quad = float(yv @ scipy.linalg.cho_solve(cho, yv))
        return logdet + quad
    raise ValueError(f"unknown evaluation path {path!r}")


def _golden_minimize(fun, lo, hi, tol=1e-3, max_iter=60):
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fun(d)
    return (c, fc) if fc < fd else (d, fd)


def tune_hyper(reg: FirRegression, grid_points: int = 13,
               log10_range: Tuple[float, float] = (-6.0, 6.0)
               ) -> BayesHyper:
    """Minimize the negative log marginal likelihood over (log alpha,
    log sigma2): coarse log grid followed by coordinate-wise golden-section
    refinement.  Deterministic; warns when the optimum sits on the grid
    boundary."""
    lo, hi = log10_range
    grid = np.linspace(lo, hi, grid_points)

    def objective(la, ls):
        return neg_log_marginal(reg, BayesHyper(10.0 ** la, 10.0 ** ls),
                                path="fast")

    best = None
    for la in grid:
        for ls in grid:
            val = objective(la, ls)
            if best is None or val < best[0]:
                best = (val, la, ls)
    _, la, ls = best
    if min(abs(la - lo), abs(hi - la), abs(ls - lo), abs(hi - ls)) < 1e-9:
        warnings.warn("marginal-likelihood optimum lies on the search grid "
                      "boundary; widen the range if this is unexpected",
                      RuntimeWarning, stacklevel=2)
    step = grid[1] - grid[0]
    for _ in range(3):  # coordinate descent sweeps
        la, _ = _golden_minimize(lambda v: objective(v, ls),
                                 max(lo, la - step), min(hi, la + step))
        ls, _ = _golden_minimize(lambda v: objective(la, v),
                                 max(lo, ls - step), min(hi, ls + step))
    return BayesHyper(alpha=10.0 ** la, sigma2=10.0 ** ls)


# ---------------------------------------------------------------------------
# table assembly


def theta_to_table(theta: np.ndarray, reg: FirRegression) -> SubMarkovTable:
    theta_bar = _unvec(np.asarray(theta, dtype=float), reg.ny)
    table = SubMarkovTable(ny=reg.ny, nu=reg.nu, npsi=reg.npsi)
    cols = reg.columns()
    blocks = {}
    for col, (key, j) in enumerate(cols):
        blocks.setdefault(key, np.zeros((reg.ny, reg.nu)))[:, j] = \
            theta_bar[:, col]
    for key, value in blocks.items():
        table.set(key, value)
    return table


def table_to_theta(table: SubMarkovTable, nh: int) -> np.ndarray:
    """Canonical stacked parameter vector of a table (inverse of
    :func:`theta_to_table`)."""
    cols, nf = enumerate_keys(table.npsi, nh, table.nu, table.ny)
    theta_bar = np.empty((table.ny, nf))
    for col, (key, j) in enumerate(cols):
        theta_bar[:, col] = table.get(key)[:, j]
    return _vec(theta_bar)


def estimate_table_fir(dataset: DataSet, basis: BasisFunctionSet, nh: int,
                       hyper: Optional[BayesHyper] = None) -> SubMarkovTable:
    """Full FIR pipeline: build the regression, tune (alpha, sigma2) unless
    given, solve the Bayes-weighted Ridge problem and reshape into a table."""
    reg = build_regression(dataset, basis, nh)
    if hyper is None:
        hyper = tune_hyper(reg)
    theta = rwls(reg, we=1.0 / hyper.sigma2, wr=1.0 / hyper.alpha)
    return theta_to_table(theta, reg)

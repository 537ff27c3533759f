"""Expectation-maximization refinement of an affine LPV state-space model.

Noise structure: x[t+1] = A(p)x + B(p)u + w, y = C(p)x + D(p)u + v with
w ~ N(0, Q), v ~ N(0, R) independent.  The E-step runs a scheduling-dependent
Kalman filter, an RTS smoother and a one-lag covariance smoother; the M-step
solves a linear least-squares problem in the stacked coefficient block and
updates Q, R, x0, P0 in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from .exceptions import (DegenerateExcitationError, LpvssError,
                         SingularInnovationError)
from .models import (AffineMatrixFunction, BasisFunctionSet, DataSet,
                     GeneralNoise, InnovationNoise, LpvSsModel, NoiseFree,
                     matrix_series, simulate)

__all__ = ["EmConfig", "SmoothedMoments", "e_step", "m_step", "em_refine"]

_COV_FLOOR = 1e-12


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 20
    rel_tol: float = 2e-3
    abs_tol: float = 1e4
    x0_mean: Optional[np.ndarray] = None
    p0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


@dataclass
class SmoothedMoments:
    """Smoothed first/second moments and the exact data log-likelihood."""

    x_smooth: np.ndarray       # (N, nx)  E[x_t | y_0..y_{N-1}]
    p_smooth: np.ndarray       # (N, nx, nx)
    p_lag: np.ndarray          # (N-1, nx, nx)  Cov(x_{t+1}, x_t | Y)
    log_likelihood: float
    x_filt: np.ndarray         # (N, nx)  E[x_t | y_0..y_t]
    p_filt: np.ndarray         # (N, nx, nx)


def _qr_noise(model: LpvSsModel) -> Tuple[np.ndarray, np.ndarray]:
    """Map the model's noise block onto the (Q, R) structure used here."""
    nx, ny = model.nx, model.ny
    noise = model.noise
    if isinstance(noise, GeneralNoise):
        if noise.g.shape != (nx, nx) or noise.h.shape != (ny, ny):
            raise ValueError("noise shapes incompatible with Q/R structure")
        g0, h0 = noise.g.m0, noise.h.m0
        q = g0 @ noise.q @ g0.T
        r = h0 @ noise.r @ h0.T
        if np.max(np.abs(noise.s)) > 0:
            warnings.warn("cross covariance S is ignored by the EM noise "
                          "structure", RuntimeWarning, stacklevel=3)
        return 0.5 * (q + q.T), 0.5 * (r + r.T)
    if isinstance(noise, InnovationNoise):
        k0 = noise.k.m0
        q = k0 @ noise.xi @ k0.T + _COV_FLOOR * np.eye(nx)
        return 0.5 * (q + q.T), noise.xi.copy()
    raise ValueError("model carries no noise block; supply Q and R via a "
                     "GeneralNoise structure")


def e_step(model: LpvSsModel, dataset: DataSet, config: EmConfig = EmConfig()
           ) -> SmoothedMoments:
    """Kalman filter + RTS smoother + one-lag covariance smoother.

    The log-likelihood is the exact Gaussian prediction-error decomposition
    sum_t log N(y_t; yhat_t, Xi_t), constants included.
    """
    nx, ny = model.nx, model.ny
    n = dataset.n
    q, r = _qr_noise(model)
    x0 = np.zeros(nx) if config.x0_mean is None \
        else np.asarray(config.x0_mean, dtype=float).ravel()
    p0 = np.eye(nx) if config.p0 is None else np.asarray(config.p0, float)

    psi = model.basis.series(dataset.p, warn_outside=False)
    a_t = matrix_series(model.a, psi)
    b_t = matrix_series(model.b, psi)
    c_t = matrix_series(model.c, psi)
    d_t = matrix_series(model.d, psi)
    bu = np.einsum("tij,tj->ti", b_t, dataset.u)
    du = np.einsum("tij,tj->ti", d_t, dataset.u)

    x_pred = np.empty((n, nx))
    p_pred = np.empty((n, nx, nx))
    x_filt = np.empty((n, nx))
    p_filt = np.empty((n, nx, nx))
    ll = 0.0
    x_pred[0] = x0
    p_pred[0] = 0.5 * (p0 + p0.T)
    eye = np.eye(nx)
    last_gain = np.zeros((nx, ny))
    for t in range(n):
        c = c_t[t]
        innov = dataset.y[t] - c @ x_pred[t] - du[t]
        s = c @ p_pred[t] @ c.T + r
        s = 0.5 * (s + s.T)
        try:
            cho = scipy.linalg.cho_factor(s)
        except scipy.linalg.LinAlgError:
            raise SingularInnovationError(
                f"innovation covariance singular at t={t}", t=t) from None
        ll -= 0.5 * (ny * math.log(2.0 * math.pi)
                     + 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
                     + float(innov @ scipy.linalg.cho_solve(cho, innov)))
        gain = scipy.linalg.cho_solve(cho, c @ p_pred[t]).T
        x_filt[t] = x_pred[t] + gain @ innov
        ikc = eye - gain @ c
        pf = ikc @ p_pred[t] @ ikc.T + gain @ r @ gain.T  # Joseph form
        p_filt[t] = 0.5 * (pf + pf.T)
        last_gain = gain
        if t + 1 < n:
            a = a_t[t]
            x_pred[t + 1] = a @ x_filt[t] + bu[t]
            pp = a @ p_filt[t] @ a.T + q
            p_pred[t + 1] = 0.5 * (pp + pp.T)

    # RTS smoother
    x_smooth = np.empty_like(x_filt)
    p_smooth = np.empty_like(p_filt)
    js = np.empty((n - 1, nx, nx))
    x_smooth[-1] = x_filt[-1]
    p_smooth[-1] = p_filt[-1]
    for t in range(n - 2, -1, -1):
        j = np.linalg.solve(p_pred[t + 1], a_t[t] @ p_filt[t]).T
        js[t] = j
        x_smooth[t] = x_filt[t] + j @ (x_smooth[t + 1] - x_pred[t + 1])
        ps = p_filt[t] + j @ (p_smooth[t + 1] - p_pred[t + 1]) @ j.T
        p_smooth[t] = 0.5 * (ps + ps.T)

    # one-lag smoother: Cov(x_{t+1}, x_t | Y)
    p_lag = np.empty((max(n - 1, 0), nx, nx))
    if n >= 2:
        p_lag[-1] = (eye - last_gain @ c_t[-1]) @ a_t[-2] @ p_filt[-2]
        for t in range(n - 3, -1, -1):
            p_lag[t] = (p_filt[t + 1] @ js[t].T
                        + js[t + 1] @ (p_lag[t + 1]
                                       - a_t[t + 1] @ p_filt[t + 1]) @ js[t].T)
    return SmoothedMoments(x_smooth=x_smooth, p_smooth=p_smooth, p_lag=p_lag,
                           log_likelihood=float(ll), x_filt=x_filt,
                           p_filt=p_filt)


def m_step(moments: SmoothedMoments, dataset: DataSet,
           basis: BasisFunctionSet
           ) -> Tuple[np.ndarray, np.ndarray, np.ndarray,
                      np.ndarray, np.ndarray]:
    """Closed-form maximizer of the expected complete-data log-likelihood.

    Returns ``(lam, q, r, x0, p0)`` where ``lam`` is the stacked coefficient
    block [[A_0..A_npsi, B_0..B_npsi], [C_0.., D_0..]] of shape
    (nx + ny, (1+npsi)(nx+nu)).
    """
    x = moments.x_smooth
    n, nx = x.shape
    ny = dataset.y.shape[1]
    nu = dataset.u.shape[1]
    psi = basis.series(dataset.p, warn_outside=False)
    k = psi.shape[1]
    nz = nx + nu
    z = np.hstack([x, dataset.u])                       # (N, nz)
    phi = np.einsum("ta,tb->tab", psi, z).reshape(n, -1)  # psi (x) [x; u]

    # second-moment corrections: E[phi phi'] adds psi psi' (x) [[P,0],[0,0]]
    def corr(mat_t, rows, cols):
        """sum_t psi_t psi_t' (x) mat_t embedded at (rows, cols) of nz x nz."""
        out = np.zeros((k * nz, k * nz))
        acc = np.einsum("ta,tb,tij->aibj", psi[: mat_t.shape[0]],
                        psi[: mat_t.shape[0]], mat_t)
        full = np.zeros((k, nz, k, nz))
        full[:, rows[0]:rows[1], :, cols[0]:cols[1]] = acc
        return full.reshape(k * nz, k * nz)

    # state-equation rows use t = 0..N-2
    phi_s = phi[:-1]
    gram_s = phi_s.T @ phi_s + corr(moments.p_smooth[:-1], (0, nx), (0, nx))
    cross_s = x[1:].T @ phi_s
    lag_corr = np.einsum("ta,tij->iaj", psi[:-1], moments.p_lag
                         ).reshape(nx, k * nx)
    # embed the P_{t+1,t} correction in the x-part of the regressor columns
    cross_full = np.zeros((nx, k * nz))
    cross_full += cross_s
    idx = np.arange(k * nz).reshape(k, nz)[:, :nx].ravel()
    cross_full[:, idx] += lag_corr
    lam_state = _solve_gram(gram_s, cross_full)

    # output rows use t = 0..N-1
    gram_o = phi.T @ phi + corr(moments.p_smooth, (0, nx), (0, nx))
    cross_o = dataset.y.T @ phi
    lam_out = _solve_gram(gram_o, cross_o)

    # residual second moments
    #   Q = (1/(N-1)) sum E[(x_{t+1} - Lam phi_t)(...)']
    pred_s = phi_s @ lam_state.T
    resid = x[1:] - pred_s
    q = resid.T @ resid
    a_part = lam_state.reshape(nx, k, nz)[:, :, :nx]  # per-psi A blocks
    a_eff = np.einsum("ta,iaj->tij", psi[:-1], a_part)  # A(p_t) per step
    q += np.einsum("tij->ij", moments.p_smooth[1:])
    apat = np.einsum("tij,tjk,tlk->il", a_eff, moments.p_smooth[:-1], a_eff)
    q += apat
    cross_lag = np.einsum("tij,tkj->ik", moments.p_lag, a_eff)
    q -= cross_lag + cross_lag.T
    q = _floor_cov(q / (n - 1))

    pred_o = phi @ lam_out.T
    resid_o = dataset.y - pred_o
    r = resid_o.T @ resid_o
    c_part = lam_out.reshape(ny, k, nz)[:, :, :nx]
    c_eff = np.einsum("ta,iaj->tij", psi, c_part)
    r += np.einsum("tij,tjk,tlk->il", c_eff, moments.p_smooth, c_eff)
    r = _floor_cov(r / n)

    x0 = x[0].copy()
    p0 = _floor_cov(moments.p_smooth[0].copy())
    lam = np.vstack([_deinterleave(lam_state, k, nx, nu),
                     _deinterleave(lam_out, k, nx, nu)])
    return lam, q, r, x0, p0


def _deinterleave(lam_rows: np.ndarray, k: int, nx: int, nu: int
                  ) -> np.ndarray:
    """Reorder psi (x) [x; u] columns into [A_0..A_k-1, B_0..B_k-1]."""
    rows = lam_rows.shape[0]
    blocks = lam_rows.reshape(rows, k, nx + nu)
    a_cols = blocks[:, :, :nx].reshape(rows, k * nx)
    b_cols = blocks[:, :, nx:].reshape(rows, k * nu)
    return np.hstack([a_cols, b_cols])


def _solve_gram(gram: np.ndarray, cross: np.ndarray) -> np.ndarray:
    gram = 0.5 * (gram + gram.T)
    try:
        cho = scipy.linalg.cho_factor(gram)
    except scipy.linalg.LinAlgError:
        raise DegenerateExcitationError(
            "regressor second-moment matrix is singular; the data do not "
            "excite every parameter direction") from None
    return scipy.linalg.cho_solve(cho, cross.T).T


def _floor_cov(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    w = np.maximum(w, _COV_FLOOR)
    return v @ np.diag(w) @ v.T


def _lam_to_model(lam: np.ndarray, template: LpvSsModel,
                  q: np.ndarray, r: np.ndarray) -> LpvSsModel:
    nx, nu, ny, k = (template.nx, template.nu, template.ny,
                     template.npsi + 1)
    a_flat = lam[:nx, :k * nx].reshape(nx, k, nx)
    b_flat = lam[:nx, k * nx:].reshape(nx, k, nu)
    c_flat = lam[nx:, :k * nx].reshape(ny, k, nx)
    d_flat = lam[nx:, k * nx:].reshape(ny, k, nu)
    noise = GeneralNoise(
        g=AffineMatrixFunction.constant(np.eye(nx), k - 1),
        h=AffineMatrixFunction.constant(np.eye(ny), k - 1),
        q=q, s=np.zeros((nx, ny)), r=r)
    return LpvSsModel(a=AffineMatrixFunction(np.moveaxis(a_flat, 1, 0)),
                      b=AffineMatrixFunction(np.moveaxis(b_flat, 1, 0)),
                      c=AffineMatrixFunction(np.moveaxis(c_flat, 1, 0)),
                      d=AffineMatrixFunction(np.moveaxis(d_flat, 1, 0)),
                      basis=template.basis, noise=noise)


def _init_noise(model: LpvSsModel, dataset: DataSet) -> LpvSsModel:
    """Equip a model with the Q/R noise structure the EM iteration uses."""
    nx, ny = model.nx, model.ny
    noise = model.noise
    if isinstance(noise, GeneralNoise):
        return model
    if isinstance(noise, InnovationNoise):
        k0 = noise.k.m0
        q = k0 @ noise.xi @ k0.T + 1e-8 * np.eye(nx)
        r = noise.xi.copy()
    else:
        sim = simulate(LpvSsModel(a=model.a, b=model.b, c=model.c, d=model.d,
                                  basis=model.basis, noise=NoiseFree()),
                       dataset.u, dataset.p)
        resid = dataset.y - sim.yd
        r = _floor_cov(resid.T @ resid / max(dataset.n - 1, 1))
        q = 0.1 * float(np.mean(np.diag(r))) * np.eye(nx)
    return LpvSsModel(a=model.a, b=model.b, c=model.c, d=model.d,
                      basis=model.basis,
                      noise=GeneralNoise(
                          g=AffineMatrixFunction.constant(np.eye(nx),
                                                          model.npsi),
                          h=AffineMatrixFunction.constant(np.eye(ny),
                                                          model.npsi),
                          q=_floor_cov(q), s=np.zeros((nx, ny)),
                          r=_floor_cov(r)))


def em_refine(model0: LpvSsModel, dataset: DataSet,
              config: EmConfig = EmConfig()
              ) -> Tuple[LpvSsModel, List[float]]:
    """Alternate E- and M-steps from ``model0`` until the relative
    log-likelihood improvement falls below ``rel_tol`` or ``max_iter`` is
    reached.  Returns the refined model and the log-likelihood trace (one
    entry per completed E-step)."""
    model = _init_noise(model0, dataset)
    cfg = config
    trace: List[float] = []
    for it in range(config.max_iter):
        moments = e_step(model, dataset, cfg)
        ll = moments.log_likelihood
        if trace and ll < trace[-1] - 1e-6 * max(1.0, abs(trace[-1])):
            raise LpvssError(
                f"log-likelihood decreased at iteration {it} "
                f"({trace[-1]:.6g} -> {ll:.6g}); numerical failure")
        converged = bool(trace) and abs(ll - trace[-1]) < \
            config.rel_tol * max(abs(ll), 1e-12)
        trace.append(ll)
        if converged:
            break
        lam, q, r, x0, p0 = m_step(moments, dataset, model.basis)
        model = _lam_to_model(lam, model, q, r)
        cfg = EmConfig(max_iter=config.max_iter, rel_tol=config.rel_tol,
                       abs_tol=config.abs_tol, x0_mean=x0, p0=p0)
    return model, trace

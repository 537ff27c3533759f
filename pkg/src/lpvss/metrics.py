"""Fit metrics, SNR calibration and benchmark excitation signals."""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from .exceptions import DimensionError
from .models import (AffineMatrixFunction, DataSet, GeneralNoise,
                     InnovationNoise, LpvSsModel, NoiseFree, matrix_series,
                     simulate)

__all__ = ["bfr", "measured_snr", "set_snr", "validation_signals",
           "identification_signals", "one_step_predictions"]


def bfr(y_ref: np.ndarray, y_hat: np.ndarray) -> float:
    """Best fit rate in percent:
    max{1 - sum_t ||y_t - yhat_t|| / sum_t ||y_t - ybar||, 0} * 100,
    the channel-averaged multi-output form."""
    y_ref = np.atleast_2d(np.asarray(y_ref, dtype=float))
    y_hat = np.atleast_2d(np.asarray(y_hat, dtype=float))
    if y_ref.shape != y_hat.shape:
        raise DimensionError(
            f"shapes differ: {y_ref.shape} vs {y_hat.shape}")
    ybar = y_ref.mean(axis=0)
    denom = float(np.sum(np.linalg.norm(y_ref - ybar, axis=1)))
    if denom <= 0:
        raise DimensionError("reference signal is constant; BFR undefined")
    num = float(np.sum(np.linalg.norm(y_ref - y_hat, axis=1)))
    return max(1.0 - num / denom, 0.0) * 100.0


def measured_snr(dataset: DataSet) -> np.ndarray:
    """Per-channel 10 log10(sum yd^2 / sum (y - yd)^2); requires yd."""
    if dataset.yd is None:
        raise DimensionError("dataset has no noise-free output record")
    noise = dataset.y - dataset.yd
    sig_p = np.sum(dataset.yd ** 2, axis=0)
    noise_p = np.sum(noise ** 2, axis=0)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(sig_p / noise_p)


def set_snr(model: LpvSsModel, u, p, target_db, seed: int = 0,
            passes: int = 2) -> LpvSsModel:
    """Rescale the diagonal innovation covariance of ``model`` so the
    simulated per-channel SNR on (u, p) hits ``target_db`` within about
    0.5 dB (simulate-and-rescale, ``passes`` rounds).  ``target_db`` may be
    a scalar or per-channel array; ``inf`` entries remove the noise."""
    target = np.broadcast_to(np.asarray(target_db, dtype=float),
                             (model.ny,)).copy()
    if np.all(np.isinf(target)):
        return LpvSsModel(a=model.a, b=model.b, c=model.c, d=model.d,
                          basis=model.basis, noise=NoiseFree())
    if not isinstance(model.noise, InnovationNoise):
        raise TypeError("set_snr expects an innovation-form noise block")
    if np.any(np.isinf(target)):
        raise ValueError("per-channel inf targets cannot be mixed with "
                         "finite ones under a coupled gain")
    xi = np.array(model.noise.xi, dtype=float)
    if np.max(np.abs(xi - np.diag(np.diag(xi)))) > 1e-12:
        raise ValueError("set_snr requires a diagonal innovation covariance")
    clean = simulate(LpvSsModel(a=model.a, b=model.b, c=model.c, d=model.d,
                                basis=model.basis, noise=NoiseFree()), u, p)
    sig_p = np.sum(clean.yd ** 2, axis=0)
    if np.any(sig_p <= 0):
        raise DimensionError("a noise-free output channel has zero power")
    current = model
    for _ in range(passes):
        data = simulate(current, u, p, seed=seed)
        noise_p = np.sum((data.y - data.yd) ** 2, axis=0)
        if np.any(noise_p <= 0):
            scale = np.full(model.ny, 10.0)
        else:
            got_db = 10.0 * np.log10(sig_p / noise_p)
            scale = 10.0 ** ((got_db - target) / 10.0)
        xi = np.diag(np.diag(xi) * scale)
        current = LpvSsModel(a=model.a, b=model.b, c=model.c, d=model.d,
                             basis=model.basis,
                             noise=InnovationNoise(k=current.noise.k, xi=xi))
    return current


def validation_signals(n_val: int = 200, seed: int = 0, nu: int = 2,
                       np_: int = 5) -> Tuple[np.ndarray, np.ndarray]:
    """Benchmark validation excitation: slow quadrature sinusoids on the
    input and staggered-phase sinusoids on the scheduling channels, each
    with uniform dither on (-0.15, 0.15)."""
    if n_val < 1:
        raise DimensionError("n_val must be at least 1")
    rng = np.random.default_rng(seed)
    t = np.arange(n_val)
    u = np.zeros((n_val, nu))
    for j in range(nu):
        phase = 0.035 * t
        u[:, j] = 0.5 * (np.cos(phase) if j % 2 == 0 else np.sin(phase))
    u += rng.uniform(-0.15, 0.15, size=(n_val, nu))
    p = np.empty((n_val, np_))
    for i in range(1, np_ + 1):
        p[:, i - 1] = (0.25 - 0.05 * i
                       + 0.4 * np.sin(0.035 * t + 2.0 * i * math.pi / 5.0))
    p += rng.uniform(-0.15, 0.15, size=(n_val, np_))
    return u, p


def identification_signals(n: int, seed: int = 0, nu: int = 2, np_: int = 5,
                           u_range: float = 1.0, p_level: float = 0.9
                           ) -> Tuple[np.ndarray, np.ndarray]:
    """White uniform input on (-u_range, u_range) and white random-binary
    scheduling on {-p_level, +p_level} with a fair coin."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-u_range, u_range, size=(n, nu))
    p = p_level * rng.choice([-1.0, 1.0], size=(n, np_))
    return u, p


def one_step_predictions(model: LpvSsModel, dataset: DataSet) -> np.ndarray:
    """One-step-ahead output predictions yhat_{t|t-1} for any noise block.

    Innovation form uses the gain directly; the general (Q, R) structure
    runs a Kalman filter; a noise-free model degenerates to simulation.
    """
    psi = model.basis.series(dataset.p, warn_outside=False)
    a_t = matrix_series(model.a, psi)
    b_t = matrix_series(model.b, psi)
    c_t = matrix_series(model.c, psi)
    d_t = matrix_series(model.d, psi)
    n, nx = dataset.n, model.nx
    u, y = dataset.u, dataset.y
    noise = model.noise
    yhat = np.empty((n, model.ny))
    x = np.zeros(nx)
    if isinstance(noise, NoiseFree):
        for t in range(n):
            yhat[t] = c_t[t] @ x + d_t[t] @ u[t]
            x = a_t[t] @ x + b_t[t] @ u[t]
        return yhat
    if isinstance(noise, InnovationNoise):
        k_t = matrix_series(noise.k, psi)
        for t in range(n):
            yhat[t] = c_t[t] @ x + d_t[t] @ u[t]
            x = a_t[t] @ x + b_t[t] @ u[t] + k_t[t] @ (y[t] - yhat[t])
        return yhat
    if isinstance(noise, GeneralNoise):
        g_t = matrix_series(noise.g, psi)
        h_t = matrix_series(noise.h, psi)
        pp = np.eye(nx)
        for t in range(n):
            c, h = c_t[t], h_t[t]
            yhat[t] = c @ x + d_t[t] @ u[t]
            s = c @ pp @ c.T + h @ noise.r @ h.T
            k = np.linalg.solve(
                s.T, (a_t[t] @ pp @ c.T + g_t[t] @ noise.s @ h.T).T).T
            x = a_t[t] @ x + b_t[t] @ u[t] + k @ (y[t] - yhat[t])
            pp = a_t[t] @ pp @ a_t[t].T - k @ s @ k.T \
                + g_t[t] @ noise.q @ g_t[t].T
            pp = 0.5 * (pp + pp.T)
        return yhat
    raise TypeError(f"unsupported noise block {type(noise).__name__}")

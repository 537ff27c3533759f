"""Correlation-analysis estimation of individual sub-Markov parameters.

Each matrix C_{s1} A_{s2..s_{n-1}} B_{sn} is recovered as the ratio of a
higher-order sample cross-correlation between the output, shifted basis
streams and the input, and the product of the basis stream variances times
the input covariance.  The shift pattern is fixed by the key: the i-th index
is taken at shift i-1 and the input at shift n-1; the feed-through blocks
use the zero-shift two-signal form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .exceptions import DegenerateExcitationError, DimensionError
from .markov import SubMarkovKey, SubMarkovTable
from .models import BasisFunctionSet, DataSet

__all__ = ["CraConfig", "cross_correlation", "estimate_sub_markov_cra",
           "estimate_table_cra", "excitation_diagnostics"]

VAR_FLOOR = 1e-8  # relative power floor below which excitation is degenerate


@dataclass(frozen=True)
class CraConfig:
    keys: Tuple[SubMarkovKey, ...]
    min_samples: int = 100
    demean: bool = True

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(self.keys))
        if not self.keys:
            object.__setattr__(self, "keys", ())


def cross_correlation(y: np.ndarray, psi_streams: Sequence[np.ndarray],
                      shifts: Sequence[int], u: np.ndarray, tau_u: int
                      ) -> np.ndarray:
    """Sample k-dimensional cross-correlation

        (1 / (N - tau_u + 1)) * sum_{t >= tau_u} y_t
            * prod_i psi_i[t - shifts[i]] * u[t - tau_u]'

    with 0-based time indexing; returns an (ny, nu) matrix.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    n = y.shape[0]
    if u.shape[0] != n:
        raise DimensionError("y and u have different lengths")
    if len(psi_streams) != len(shifts):
        raise DimensionError("one shift per psi stream is required")
    max_shift = max([tau_u, *shifts]) if shifts else tau_u
    if max_shift >= n:
        raise DimensionError(
            f"shift {max_shift} exceeds the data length {n}")
    weight = np.ones(n - tau_u)
    for stream, shift in zip(psi_streams, shifts):
        stream = np.asarray(stream, dtype=float).ravel()
        seg = stream[tau_u - shift:n - shift]
        weight = weight * seg
    yw = y[tau_u:] * weight[:, None]
    return yw.T @ u[:n - tau_u] / (n - tau_u + 1)


def _key_indices(key: SubMarkovKey) -> List[int]:
    if key.is_d:
        return [key.gamma]
    return [key.gamma, *key.alpha, key.beta]


def _prepared_signals(dataset: DataSet, basis: BasisFunctionSet,
                      demean: bool):
    psi = basis.series(dataset.p)
    y = dataset.y.copy()
    u = dataset.u.copy()
    if demean:
        y = y - y.mean(axis=0)
        u = u - u.mean(axis=0)
        psi = psi.copy()
        psi[:, 1:] -= psi[:, 1:].mean(axis=0)
        psi[:, 0] = 1.0
    return y, u, psi


def _stream_variances(psi: np.ndarray) -> np.ndarray:
    """Unbiased sample variance per basis stream; index 0 is fixed at 1."""
    out = np.empty(psi.shape[1])
    out[0] = 1.0
    if psi.shape[1] > 1:
        out[1:] = np.var(psi[:, 1:], axis=0, ddof=1)
    return out


def _check_stream_excitation(variances: np.ndarray, psi: np.ndarray,
                             indices: Iterable[int]):
    for s in set(indices):
        if s == 0:
            continue
        power = float(np.mean(psi[:, s] ** 2))
        if variances[s] < VAR_FLOOR * max(power, 1e-30) or variances[s] <= 0:
            raise DegenerateExcitationError(
                f"basis stream {s} has (almost) no variance")


def _check_excitation(variances: np.ndarray, psi: np.ndarray,
                      u_cov: np.ndarray, u: np.ndarray,
                      indices: Iterable[int]):
    _check_stream_excitation(variances, psi, indices)
    u_power = float(np.mean(u ** 2))
    if np.linalg.cond(u_cov) > 1.0 / VAR_FLOOR or \
            np.min(np.linalg.eigvalsh(u_cov)) < VAR_FLOOR * max(u_power, 1e-30):
        raise DegenerateExcitationError("input covariance is degenerate")
    off = np.abs(u_cov - np.diag(np.diag(u_cov)))
    if off.size and np.max(off) > 0.2 * np.max(np.abs(np.diag(u_cov))):
        warnings.warn("input channels are noticeably correlated; the "
                      "whiteness/independence conditions may be violated",
                      RuntimeWarning, stacklevel=3)


def estimate_sub_markov_cra(dataset: DataSet, basis: BasisFunctionSet,
                            key: SubMarkovKey, demean: bool = True
                            ) -> np.ndarray:
    """Estimate a single sub-Markov matrix from data."""
    key.validate(basis.npsi)
    y, u, psi = _prepared_signals(dataset, basis, demean)
    return _estimate_prepared(y, u, psi, key)


def _estimate_prepared(y, u, psi, key: SubMarkovKey,
                       variances=None, u_cov_inv=None) -> np.ndarray:
    indices = _key_indices(key)
    n_idx = len(indices)
    shifts = list(range(n_idx))
    tau_u = n_idx - 1
    if variances is None or u_cov_inv is None:
        variances = _stream_variances(psi)
        u_cov = np.atleast_2d(np.cov(u.T, ddof=1))
        _check_excitation(variances, psi, u_cov, u, indices)
        u_cov_inv = np.linalg.inv(u_cov)
    else:
        _check_stream_excitation(variances, psi, indices)
    num = cross_correlation(y, [psi[:, s] for s in indices], shifts, u, tau_u)
    denom = float(np.prod([variances[s] for s in indices]))
    return num @ u_cov_inv / denom


def estimate_table_cra(dataset: DataSet, basis: BasisFunctionSet,
                       config: CraConfig) -> SubMarkovTable:
    """Estimate every (deduplicated) key in ``config``."""
    if dataset.n < config.min_samples:
        raise DimensionError(
            f"dataset has {dataset.n} samples, fewer than the configured "
            f"minimum {config.min_samples}")
    table = SubMarkovTable(ny=dataset.y.shape[1], nu=dataset.u.shape[1],
                           npsi=basis.npsi)
    y, u, psi = _prepared_signals(dataset, basis, config.demean)
    # dataset-level quantities shared across keys
    variances = _stream_variances(psi)
    u_cov = np.atleast_2d(np.cov(u.T, ddof=1))
    _check_excitation(variances, psi, u_cov, u, [])  # input-side checks
    u_cov_inv = np.linalg.inv(u_cov)
    failures: Dict[SubMarkovKey, str] = {}
    # group keys by their index-sequence length so each group shares one
    # shift pattern and is evaluated in a single batched contraction
    groups: Dict[int, List[SubMarkovKey]] = {}
    for key in dict.fromkeys(config.keys):  # dedupe, keep order
        try:
            _check_stream_excitation(variances, psi, _key_indices(key))
        except DegenerateExcitationError as exc:
            failures[key] = str(exc)
            continue
        groups.setdefault(len(_key_indices(key)), []).append(key)
    n = y.shape[0]
    for n_idx, keys in groups.items():
        tau_u = n_idx - 1
        shifted = [psi[tau_u - i:n - i] for i in range(n_idx)]
        scale = 1.0 / (n - tau_u + 1)
        for start in range(0, len(keys), 64):  # bound the weight panel size
            chunk = keys[start:start + 64]
            sidx = np.array([_key_indices(k) for k in chunk])  # (K, n_idx)
            weights = shifted[0][:, sidx[:, 0]]
            for i in range(1, n_idx):
                weights = weights * shifted[i][:, sidx[:, i]]
            nums = np.einsum("tk,ti,tj->kij", weights, y[tau_u:],
                             u[:n - tau_u]) * scale
            denoms = np.prod(variances[sidx], axis=1)
            for key, num, denom in zip(chunk, nums, denoms):
                table.set(key, num @ u_cov_inv / denom)
    if failures:
        detail = "; ".join(f"{k}: {msg}" for k, msg in
                           list(failures.items())[:5])
        raise DegenerateExcitationError(
            f"{len(failures)} keys failed with degenerate excitation: "
            f"{detail}")
    return table


def excitation_diagnostics(dataset: DataSet, basis: BasisFunctionSet,
                           max_lag: int = 5) -> Dict[str, np.ndarray]:
    """Lag-1..max_lag autocorrelations of u and the basis streams, for a
    manual check of the whiteness conditions."""
    y, u, psi = _prepared_signals(dataset, basis, demean=True)
    out: Dict[str, np.ndarray] = {}

    def autocorr(x):
        x = x - x.mean()
        denom = float(x @ x)
        if denom <= 0:
            return np.zeros(max_lag)
        return np.array([float(x[lag:] @ x[:-lag]) / denom
                         for lag in range(1, max_lag + 1)])

    for j in range(u.shape[1]):
        out[f"u{j+1}"] = autocorr(u[:, j])
    for s in range(1, psi.shape[1]):
        out[f"psi{s}"] = autocorr(psi[:, s])
    return out

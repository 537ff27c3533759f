"""LPV state-space model types, simulation and the innovation-form filter.

A model is a tuple of matrix functions with static, affine dependence on a
scheduling signal ``p`` through scalar basis functions ``psi``:

    x[t+1] = A(p_t) x_t + B(p_t) u_t + (noise)
    y[t]   = C(p_t) x_t + D(p_t) u_t + (noise)

with ``M(p) = M_0 + sum_i M_i psi_i(p)``.  Three noise blocks are supported:
none, a general (G, H, Sigma) structure, and the innovation form with gain K.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .exceptions import (DimensionError, InstabilityError,
                         SingularInnovationError)

__all__ = [
    "BasisFunctionSet", "AffineMatrixFunction", "NoiseFree", "GeneralNoise",
    "InnovationNoise", "LpvSsModel", "DataSet", "SimilarityTransform",
    "eval_matrix", "simulate", "innovation_filter", "apply_transform",
    "random_stable_model", "lambda_block", "matrix_series",
]


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# basis functions


@dataclass(frozen=True)
class BasisFunctionSet:
    """Scalar basis functions psi_1..psi_npsi plus the implicit psi_0 = 1.

    ``domain`` is the scheduling box P as an (np, 2) array of [low, high]
    bounds; evaluation outside P is allowed but flagged by callers.
    """

    funcs: tuple
    domain: np.ndarray
    name: Optional[str] = None

    def __post_init__(self):
        dom = _readonly(self.domain).reshape(-1, 2)
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "funcs", tuple(self.funcs))
        if np.any(dom[:, 0] > dom[:, 1]):
            raise DimensionError("domain lower bounds exceed upper bounds")

    @property
    def npsi(self) -> int:
        return len(self.funcs)

    @property
    def np_(self) -> int:
        return self.domain.shape[0]

    @classmethod
    def poly_linear(cls, np_: int, low: float = -1.0, high: float = 1.0
                    ) -> "BasisFunctionSet":
        """psi_i(p) = p_i on a common box, the paper-style identity basis."""
        funcs = tuple((lambda p, i=i: float(np.asarray(p).ravel()[i]))
                      for i in range(np_))
        dom = np.tile([low, high], (np_, 1))
        return cls(funcs=funcs, domain=dom, name="poly-linear")

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float).ravel()
        return bool(np.all(p >= self.domain[:, 0] - 1e-12)
                    and np.all(p <= self.domain[:, 1] + 1e-12))

    def eval(self, p) -> np.ndarray:
        """Return [1, psi_1(p), ..., psi_npsi(p)]."""
        p = np.asarray(p, dtype=float).ravel()
        if p.size != self.np_:
            raise DimensionError(
                f"scheduling point has dimension {p.size}, expected {self.np_}")
        out = np.empty(1 + self.npsi)
        out[0] = 1.0
        for i, f in enumerate(self.funcs):
            out[1 + i] = f(p)
        if not np.all(np.isfinite(out)):
            raise DimensionError("basis evaluation produced non-finite values")
        return out

    def series(self, p_seq, warn_outside: bool = True) -> np.ndarray:
        """Evaluate the basis along a trajectory; shape (N, 1 + npsi)."""
        p_seq = np.atleast_2d(np.asarray(p_seq, dtype=float))
        if p_seq.shape[1] != self.np_:
            p_seq = p_seq.reshape(-1, self.np_)
        lo, hi = self.domain[:, 0], self.domain[:, 1]
        if warn_outside and (np.any(p_seq < lo - 1e-12)
                             or np.any(p_seq > hi + 1e-12)):
            warnings.warn("scheduling trajectory leaves the basis domain box; "
                          "extrapolating", RuntimeWarning, stacklevel=2)
        if self.name == "poly-linear":
            return np.hstack([np.ones((p_seq.shape[0], 1)), p_seq])
        return np.stack([self.eval(pt) for pt in p_seq])

    def max_abs(self, n_samples: int = 512, seed: int = 0) -> np.ndarray:
        """Per-basis bound max_{p in P} |psi_i(p)|, estimated by sampling.

        Corners of the box are always included, which is exact for the
        poly-linear basis and any monotone psi.
        """
        rng = np.random.default_rng(seed)
        lo, hi = self.domain[:, 0], self.domain[:, 1]
        pts = [lo, hi, 0.5 * (lo + hi)]
        if self.np_ <= 12:
            grid = np.meshgrid(*[(l, h) for l, h in self.domain], indexing="ij")
            pts.extend(np.stack([g.ravel() for g in grid], axis=1))
        pts.extend(rng.uniform(lo, hi, size=(n_samples, self.np_)))
        vals = np.stack([self.eval(pt) for pt in np.atleast_2d(pts)])
        return np.max(np.abs(vals[:, 1:]), axis=0) if self.npsi else np.zeros(0)


# ---------------------------------------------------------------------------
# affine matrix functions


@dataclass(frozen=True)
class AffineMatrixFunction:
    """M(p) = coeffs[0] + sum_i coeffs[i] psi_i(p); coeffs has shape
    (1 + npsi, rows, cols)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _readonly(self.coeffs)
        if c.ndim != 3:
            raise DimensionError("coeffs must be a (1+npsi, r, c) array")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_blocks(cls, m0, mi=()) -> "AffineMatrixFunction":
        m0 = np.atleast_2d(np.asarray(m0, dtype=float))
        blocks = [m0]
        for m in mi:
            m = np.atleast_2d(np.asarray(m, dtype=float))
            if m.shape != m0.shape:
                raise DimensionError(
                    f"block shape {m.shape} differs from m0 shape {m0.shape}")
            blocks.append(m)
        return cls(np.stack(blocks))

    @classmethod
    def constant(cls, m, npsi: int = 0) -> "AffineMatrixFunction":
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return cls.from_blocks(m, [np.zeros_like(m)] * npsi)

    @classmethod
    def zeros(cls, r: int, c: int, npsi: int) -> "AffineMatrixFunction":
        return cls(np.zeros((1 + npsi, r, c)))

    @property
    def npsi(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def shape(self):
        return self.coeffs.shape[1:]

    @property
    def m0(self) -> np.ndarray:
        return self.coeffs[0]

    def __call__(self, psi_vec) -> np.ndarray:
        psi_vec = np.asarray(psi_vec, dtype=float).ravel()
        if psi_vec.size != self.coeffs.shape[0]:
            raise DimensionError(
                f"psi vector has length {psi_vec.size}, expected "
                f"{self.coeffs.shape[0]}")
        return np.tensordot(psi_vec, self.coeffs, axes=1)


def eval_matrix(f: AffineMatrixFunction, basis: BasisFunctionSet, p
                ) -> np.ndarray:
    """Evaluate M(p) = M0 + sum_i M_i psi_i(p)."""
    if f.npsi != basis.npsi:
        raise DimensionError(
            f"matrix function has {f.npsi} basis blocks, basis has {basis.npsi}")
    if not basis.contains(p):
        warnings.warn("scheduling point outside the basis domain box; "
                      "extrapolating", RuntimeWarning, stacklevel=2)
    return f(basis.eval(np.asarray(p, dtype=float)))


def matrix_series(f: AffineMatrixFunction, psi: np.ndarray) -> np.ndarray:
    """Evaluate a matrix function along a precomputed psi series (N, 1+npsi),
    returning (N, r, c)."""
    return np.einsum("tk,krc->trc", psi, f.coeffs)


# ---------------------------------------------------------------------------
# noise blocks


@dataclass(frozen=True)
class NoiseFree:
    pass


def _check_spd(m, name):
    m = np.asarray(m, dtype=float)
    if not np.allclose(m, m.T, atol=1e-10):
        raise DimensionError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(m + 0.0)
    except np.linalg.LinAlgError:
        raise DimensionError(f"{name} must be positive definite") from None
    return m


@dataclass(frozen=True)
class GeneralNoise:
    """x-noise G(p) w_t and y-noise H(p) v_t with joint covariance
    Sigma = [[Q, S], [S', R]] of (w, v)."""

    g: AffineMatrixFunction
    h: AffineMatrixFunction
    q: np.ndarray
    s: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _readonly(self.q))
        object.__setattr__(self, "s", _readonly(self.s))
        object.__setattr__(self, "r", _readonly(self.r))
        _check_spd(self.sigma, "Sigma")

    @property
    def sigma(self) -> np.ndarray:
        return np.block([[self.q, self.s], [self.s.T, self.r]])


@dataclass(frozen=True)
class InnovationNoise:
    """Innovation-form noise: gain K(p) on the innovation xi ~ N(0, Xi)."""

    k: AffineMatrixFunction
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", _readonly(self.xi))
        _check_spd(self.xi, "Xi")


NoiseBlock = Union[NoiseFree, GeneralNoise, InnovationNoise]


# ---------------------------------------------------------------------------
# the model


@dataclass(frozen=True)
class LpvSsModel:
    a: AffineMatrixFunction
    b: AffineMatrixFunction
    c: AffineMatrixFunction
    d: AffineMatrixFunction
    basis: BasisFunctionSet
    noise: NoiseBlock = field(default_factory=NoiseFree)

    def __post_init__(self):
        nx, nu, ny, npsi = self.nx, self.nu, self.ny, self.npsi
        expected = {"A": (self.a, (nx, nx)), "B": (self.b, (nx, nu)),
                    "C": (self.c, (ny, nx)), "D": (self.d, (ny, nu))}
        for name, (f, shape) in expected.items():
            if f.shape != shape:
                raise DimensionError(f"{name} has shape {f.shape}, "
                                     f"expected {shape}")
            if f.npsi != npsi:
                raise DimensionError(f"{name} has {f.npsi} basis blocks, "
                                     f"expected {npsi}")
        if self.basis.npsi != npsi:
            raise DimensionError("basis set size differs from matrix blocks")
        if isinstance(self.noise, GeneralNoise):
            n = self.noise
            if n.g.shape != (nx, nx) or n.h.shape != (ny, ny):
                raise DimensionError("G must be nx x nx and H ny x ny")
            if n.q.shape != (nx, nx) or n.s.shape != (nx, ny) \
                    or n.r.shape != (ny, ny):
                raise DimensionError("Sigma blocks have wrong dimensions")
        elif isinstance(self.noise, InnovationNoise):
            n = self.noise
            if n.k.shape != (nx, ny) or n.xi.shape != (ny, ny):
                raise DimensionError("K must be nx x ny and Xi ny x ny")

    @property
    def nx(self) -> int:
        return self.a.shape[0]

    @property
    def nu(self) -> int:
        return self.b.shape[1]

    @property
    def ny(self) -> int:
        return self.c.shape[0]

    @property
    def npsi(self) -> int:
        return self.a.npsi

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        if self.basis.name != "poly-linear":
            raise ValueError("only named basis forms can be serialized; got "
                             f"{self.basis.name!r}")
        doc = {
            "dims": {"nx": self.nx, "nu": self.nu, "ny": self.ny,
                     "npsi": self.npsi, "np": self.basis.np_},
            "basis": self.basis.name,
            "A": self.a.coeffs.tolist(),
            "B": self.b.coeffs.tolist(),
            "C": self.c.coeffs.tolist(),
            "D": self.d.coeffs.tolist(),
        }
        if isinstance(self.noise, NoiseFree):
            doc["noise"] = {"kind": "none"}
        elif isinstance(self.noise, GeneralNoise):
            doc["noise"] = {"kind": "general",
                            "G": self.noise.g.coeffs.tolist(),
                            "H": self.noise.h.coeffs.tolist(),
                            "Q": self.noise.q.tolist(),
                            "S": self.noise.s.tolist(),
                            "R": self.noise.r.tolist()}
        else:
            doc["noise"] = {"kind": "innovation",
                            "K": self.noise.k.coeffs.tolist(),
                            "Xi": self.noise.xi.tolist()}
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "LpvSsModel":
        if doc.get("basis") != "poly-linear":
            raise ValueError(f"unknown basis form {doc.get('basis')!r}")
        basis = BasisFunctionSet.poly_linear(doc["dims"]["np"])
        nd = doc["noise"]
        if nd["kind"] == "none":
            noise: NoiseBlock = NoiseFree()
        elif nd["kind"] == "general":
            noise = GeneralNoise(g=AffineMatrixFunction(np.array(nd["G"])),
                                 h=AffineMatrixFunction(np.array(nd["H"])),
                                 q=np.array(nd["Q"]), s=np.array(nd["S"]),
                                 r=np.array(nd["R"]))
        elif nd["kind"] == "innovation":
            noise = InnovationNoise(k=AffineMatrixFunction(np.array(nd["K"])),
                                    xi=np.array(nd["Xi"]))
        else:
            raise ValueError(f"unknown noise kind {nd['kind']!r}")
        return cls(a=AffineMatrixFunction(np.array(doc["A"])),
                   b=AffineMatrixFunction(np.array(doc["B"])),
                   c=AffineMatrixFunction(np.array(doc["C"])),
                   d=AffineMatrixFunction(np.array(doc["D"])),
                   basis=basis, noise=noise)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "LpvSsModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class DataSet:
    u: np.ndarray
    p: np.ndarray
    y: np.ndarray
    yd: Optional[np.ndarray] = None

    def __post_init__(self):
        u = _readonly(np.atleast_2d(self.u).T if np.ndim(self.u) == 1
                      else self.u)
        p = _readonly(np.atleast_2d(self.p).T if np.ndim(self.p) == 1
                      else self.p)
        y = _readonly(np.atleast_2d(self.y).T if np.ndim(self.y) == 1
                      else self.y)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "y", y)
        if self.yd is not None:
            object.__setattr__(self, "yd", _readonly(self.yd))
        lens = {u.shape[0], p.shape[0], y.shape[0]}
        if self.yd is not None:
            lens.add(self.yd.shape[0])
        if len(lens) != 1:
            raise DimensionError(f"sequence lengths differ: {sorted(lens)}")

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def to_csv(self, path):
        cols = [self.u, self.p, self.y] + ([self.yd] if self.yd is not None
                                           else [])
        names = ([f"u{i+1}" for i in range(self.u.shape[1])]
                 + [f"p{i+1}" for i in range(self.p.shape[1])]
                 + [f"y{i+1}" for i in range(self.y.shape[1])]
                 + ([f"yd{i+1}" for i in range(self.yd.shape[1])]
                    if self.yd is not None else []))
        data = np.hstack(cols)
        np.savetxt(path, data, delimiter=",", header=",".join(names),
                   comments="")

    @classmethod
    def from_csv(cls, path) -> "DataSet":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        groups = {"u": [], "p": [], "y": [], "yd": []}
        for idx, name in enumerate(header):
            for key in ("yd", "u", "p", "y"):  # yd before y
                if name.startswith(key):
                    groups[key].append(idx)
                    break
            else:
                raise ValueError(f"unrecognized CSV column {name!r}")
        yd = data[:, groups["yd"]] if groups["yd"] else None
        return cls(u=data[:, groups["u"]], p=data[:, groups["p"]],
                   y=data[:, groups["y"]], yd=yd)


# ---------------------------------------------------------------------------
# simulation


def simulate(model: LpvSsModel, u, p, x0=None, seed: int = 0) -> DataSet:
    """Simulate the model along (u, p); returns measured y and noise-free yd.

    Deterministic given ``seed``.  Raises :class:`InstabilityError` when the
    state diverges.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != model.nu:
        u = u.reshape(-1, model.nu)
    p = np.asarray(p, dtype=float).reshape(-1, model.basis.np_)
    if u.shape[0] != p.shape[0]:
        raise DimensionError("u and p have different lengths")
    n = u.shape[0]
    nx, ny = model.nx, model.ny
    x0 = np.zeros(nx) if x0 is None else np.asarray(x0, dtype=float).ravel()

    psi = model.basis.series(p)
    a_t = matrix_series(model.a, psi)
    bu = np.einsum("tij,tj->ti", matrix_series(model.b, psi), u)
    rng = np.random.default_rng(seed)

    # deterministic recursion (Eq. 4-style parallel pass)
    xs_d = np.empty((n, nx))
    x = x0.copy()
    for t in range(n):
        xs_d[t] = x
        x = a_t[t] @ x + bu[t]
    yd = (np.einsum("tij,tj->ti", matrix_series(model.c, psi), xs_d)
          + np.einsum("tij,tj->ti", matrix_series(model.d, psi), u))

    noise = model.noise
    if isinstance(noise, NoiseFree):
        y = yd
    elif isinstance(noise, GeneralNoise):
        chol = np.linalg.cholesky(noise.sigma)
        wv = rng.standard_normal((n, nx + ny)) @ chol.T
        w, v = wv[:, :nx], wv[:, nx:]
        gw = np.einsum("tij,tj->ti", matrix_series(noise.g, psi), w)
        hv = np.einsum("tij,tj->ti", matrix_series(noise.h, psi), v)
        xs = np.empty((n, nx))
        x = x0.copy()
        for t in range(n):
            xs[t] = x
            x = a_t[t] @ x + bu[t] + gw[t]
        y = (np.einsum("tij,tj->ti", matrix_series(model.c, psi), xs)
             + np.einsum("tij,tj->ti", matrix_series(model.d, psi), u) + hv)
    else:  # innovation form
        chol = np.linalg.cholesky(noise.xi)
        xi = rng.standard_normal((n, ny)) @ chol.T
        k_t = matrix_series(noise.k, psi)
        xs = np.empty((n, nx))
        x = x0.copy()
        for t in range(n):
            xs[t] = x
            x = a_t[t] @ x + bu[t] + k_t[t] @ xi[t]
        y = (np.einsum("tij,tj->ti", matrix_series(model.c, psi), xs)
             + np.einsum("tij,tj->ti", matrix_series(model.d, psi), u) + xi)

    for arr, label in ((yd, "noise-free"), (y, "measured")):
        bad = ~np.isfinite(arr).all(axis=1)
        if bad.any():
            t_bad = int(np.argmax(bad))
            raise InstabilityError(
                f"state diverged during {label} simulation at t={t_bad}; "
                "the model is likely unstable on this scheduling trajectory",
                t=t_bad)
    return DataSet(u=u, p=p, y=y, yd=yd)


# ---------------------------------------------------------------------------
# innovation-form filter (p-dependent Kalman gain recursion)


def innovation_filter(model: LpvSsModel, dataset: DataSet, p0=None):
    """Run the p-dependent innovation recursion for a general-noise model.

    Returns ``(gains, covariances, yhat)`` with shapes (N, nx, ny),
    (N, ny, ny) and (N, ny): the time-varying Kalman gain K_t, the innovation
    covariance Xi_t and the one-step-ahead output predictions.
    """
    if not isinstance(model.noise, GeneralNoise):
        raise TypeError("innovation_filter requires a GeneralNoise model")
    noise = model.noise
    nx, ny = model.nx, model.ny
    n = dataset.n
    p0 = np.zeros((nx, nx)) if p0 is None else np.asarray(p0, dtype=float)
    _check_spd(p0 + 1e-300 * np.eye(nx), "P0")  # symmetric PSD check

    psi = model.basis.series(dataset.p)
    a_t = matrix_series(model.a, psi)
    b_t = matrix_series(model.b, psi)
    c_t = matrix_series(model.c, psi)
    d_t = matrix_series(model.d, psi)
    g_t = matrix_series(noise.g, psi)
    h_t = matrix_series(noise.h, psi)

    gains = np.empty((n, nx, ny))
    covs = np.empty((n, ny, ny))
    yhat = np.empty((n, ny))
    x = np.zeros(nx)
    pp = p0.copy()
    for t in range(n):
        a, b, c, d, g, h = a_t[t], b_t[t], c_t[t], d_t[t], g_t[t], h_t[t]
        xi_cov = c @ pp @ c.T + h @ noise.r @ h.T
        xi_cov = 0.5 * (xi_cov + xi_cov.T)
        try:
            cho = scipy.linalg.cho_factor(xi_cov)
        except scipy.linalg.LinAlgError:
            raise SingularInnovationError(
                f"innovation covariance singular at t={t}", t=t) from None
        k = scipy.linalg.cho_solve(cho, (a @ pp @ c.T + g @ noise.s @ h.T).T).T
        yhat[t] = c @ x + d @ dataset.u[t]
        gains[t] = k
        covs[t] = xi_cov
        x = a @ x + b @ dataset.u[t] + k @ (dataset.y[t] - yhat[t])
        pp = a @ pp @ a.T - k @ xi_cov @ k.T + g @ noise.q @ g.T
        pp = 0.5 * (pp + pp.T)
    return gains, covs, yhat


# ---------------------------------------------------------------------------
# similarity transforms


@dataclass(frozen=True)
class SimilarityTransform:
    t: np.ndarray

    def __post_init__(self):
        t = _readonly(self.t)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise DimensionError("T must be square")
        if np.linalg.cond(t) > 1e12:
            raise DimensionError("T is singular or too ill-conditioned")
        object.__setattr__(self, "t", t)

    @property
    def inv(self) -> np.ndarray:
        return np.linalg.inv(self.t)


def apply_transform(model: LpvSsModel, transform: SimilarityTransform
                    ) -> LpvSsModel:
    """Change state basis: A' = T A T^-1, B' = T B, C' = C T^-1, D' = D."""
    t = transform.t
    if t.shape[0] != model.nx:
        raise DimensionError("T dimension differs from the state dimension")
    ti = transform.inv
    a = AffineMatrixFunction(t @ model.a.coeffs @ ti)
    b = AffineMatrixFunction(t @ model.b.coeffs)
    c = AffineMatrixFunction(model.c.coeffs @ ti)
    noise = model.noise
    if isinstance(noise, GeneralNoise):
        noise = GeneralNoise(g=AffineMatrixFunction(t @ noise.g.coeffs),
                             h=noise.h, q=noise.q, s=noise.s, r=noise.r)
    elif isinstance(noise, InnovationNoise):
        noise = InnovationNoise(k=AffineMatrixFunction(t @ noise.k.coeffs),
                                xi=noise.xi)
    return LpvSsModel(a=a, b=b, c=c, d=model.d, basis=model.basis, noise=noise)


# ---------------------------------------------------------------------------
# helpers for the refinement steps and random instances


def lambda_block(model: LpvSsModel) -> np.ndarray:
    """Stack the parameters as [A_0..A_npsi B_0..B_npsi; C_0.. D_0..]."""
    top = np.hstack(list(model.a.coeffs) + list(model.b.coeffs))
    bot = np.hstack(list(model.c.coeffs) + list(model.d.coeffs))
    return np.vstack([top, bot])


def random_stable_model(nx: int, nu: int, ny: int, npsi: int,
                        rho: float = 0.8, seed: int = 0,
                        noise: str = "none",
                        basis: Optional[BasisFunctionSet] = None,
                        predictor_rho: float = 0.95) -> LpvSsModel:
    """Draw a random model whose A-blocks satisfy the contraction condition
    ||A_0|| + sum_i ||A_i|| max|psi_i| <= rho, which certifies global
    asymptotic stability with Lyapunov matrix I.

    ``noise`` is one of "none", "innovation" (constant gain K, Xi = I) or
    "general" (G = H = I, Sigma = I).  For the innovation form K is shrunk
    until the one-step predictor A - K C satisfies the same contraction
    condition with bound ``predictor_rho``.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in the open interval (0, 1)")
    rng = np.random.default_rng(seed)
    basis = basis if basis is not None else BasisFunctionSet.poly_linear(npsi)
    if basis.npsi != npsi:
        raise DimensionError("basis size does not match npsi")
    wmax = np.concatenate([[1.0], basis.max_abs()])

    a_blocks = rng.standard_normal((1 + npsi, nx, nx)) / np.sqrt(nx)
    gain = sum(np.linalg.norm(a_blocks[i], 2) * wmax[i]
               for i in range(1 + npsi))
    a_blocks *= rho / max(gain, 1e-12)
    b_blocks = rng.standard_normal((1 + npsi, nx, nu)) / np.sqrt(nx)
    c_blocks = rng.standard_normal((1 + npsi, ny, nx)) / np.sqrt(nx)
    d_blocks = 0.3 * rng.standard_normal((1 + npsi, ny, nu))

    if noise == "none":
        nblock: NoiseBlock = NoiseFree()
    elif noise == "general":
        g = AffineMatrixFunction.constant(np.eye(nx), npsi)
        h = AffineMatrixFunction.constant(np.eye(ny), npsi)
        nblock = GeneralNoise(g=g, h=h, q=np.eye(nx), s=np.zeros((nx, ny)),
                              r=np.eye(ny))
    elif noise == "innovation":
        k = 0.3 * rng.standard_normal((nx, ny))
        for _ in range(60):
            # predictor uses A_i - K C_i for every block
            pred = sum(np.linalg.norm(a_blocks[i] - k @ c_blocks[i], 2)
                       * wmax[i] for i in range(1 + npsi))
            if pred <= predictor_rho:
                break
            k *= 0.7
        nblock = InnovationNoise(k=AffineMatrixFunction.constant(k, npsi),
                                 xi=np.eye(ny))
    else:
        raise ValueError(f"unknown noise kind {noise!r}")

    return LpvSsModel(a=AffineMatrixFunction(a_blocks),
                      b=AffineMatrixFunction(b_blocks),
                      c=AffineMatrixFunction(c_blocks),
                      d=AffineMatrixFunction(d_blocks),
                      basis=basis, noise=nblock)

"""Gauss-Newton prediction-error refinement with DDLC parameter reduction.

The one-step-ahead predictor

    xhat[t+1] = (A(p_t) - K C(p_t)) xhat[t] + (B(p_t) - K D(p_t)) u_t + K y_t
    yhat[t]   = C(p_t) xhat[t] + D(p_t) u_t

is fit by minimizing the squared prediction error.  The Jacobian comes from
an exact forward sensitivity recursion; at each iteration the parameters are
reduced to the ortho-complement of the similarity-orbit tangent (data-driven
local coordinates), the projected Jacobian is SVD-truncated and damped, and
the step length follows Armijo backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import InstabilityError
from .models import (AffineMatrixFunction, BasisFunctionSet, DataSet,
                     InnovationNoise, LpvSsModel, matrix_series)

__all__ = ["PemParameterization", "GbConfig", "GbStep", "GbResult",
           "predict_and_jacobian", "predict_residuals", "ddlc_basis",
           "gb_refine"]


@dataclass(frozen=True)
class GbConfig:
    beta: float = 1e-4        # Armijo sufficient-decrease constant
    gamma: float = 0.75       # backtracking contraction
    eta_min: float = 1e-5     # damping floor for the truncated SVD step
    alpha_min: float = 0.001  # backtracking floor
    nu: float = 0.01          # singular-value truncation threshold (rel.)
    epsilon: float = 1e-6     # relative cost-change stopping tolerance
    max_iter: int = 20
    affine_k: bool = False    # scheduling-dependent innovation gain

    def __post_init__(self):
        for name in ("beta", "eta_min", "alpha_min", "nu", "epsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")


class PemParameterization:
    """Flat vector <-> coefficient-block mapping for the predictor.

    The vector stacks vec(A_0)..vec(A_npsi), vec(B_*), vec(C_*), vec(D_*)
    and finally the gain block (constant K, or K_0..K_npsi when affine),
    all column-major.
    """

    def __init__(self, nx: int, nu: int, ny: int, npsi: int,
                 basis: BasisFunctionSet, affine_k: bool = False):
        self.nx, self.nu, self.ny, self.npsi = nx, nu, ny, npsi
        self.basis = basis
        self.affine_k = bool(affine_k)
        k = 1 + npsi
        self.sizes = (k * nx * nx, k * nx * nu, k * ny * nx, k * ny * nu,
                      (k if affine_k else 1) * nx * ny)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.nparams = int(self.offsets[-1])

    @classmethod
    def for_model(cls, model: LpvSsModel, affine_k: bool = False
                  ) -> "PemParameterization":
        return cls(model.nx, model.nu, model.ny, model.npsi, model.basis,
                   affine_k)

    def flatten(self, model: LpvSsModel) -> np.ndarray:
        k = 1 + self.npsi
        if isinstance(model.noise, InnovationNoise):
            kc = model.noise.k.coeffs
        else:
            kc = np.zeros((k, self.nx, self.ny))
        if self.affine_k:
            k_flat = np.concatenate([kc[i].ravel(order="F")
                                     for i in range(k)])
        else:
            k_flat = kc[0].ravel(order="F")
        parts = []
        for f in (model.a, model.b, model.c, model.d):
            parts.extend(f.coeffs[i].ravel(order="F") for i in range(k))
        parts.append(k_flat)
        theta = np.concatenate(parts)
        assert theta.size == self.nparams
        return theta

    def blocks(self, theta: np.ndarray):
        """Split the vector into (A, B, C, D, K) coefficient stacks; K has
        1 + npsi blocks (zero-padded when the gain is constant)."""
        k = 1 + self.npsi
        o = self.offsets
        shapes = ((self.nx, self.nx), (self.nx, self.nu),
                  (self.ny, self.nx), (self.ny, self.nu))
        out = []
        for idx, (r, c) in enumerate(shapes):
            seg = theta[o[idx]:o[idx + 1]].reshape(k, r * c)
            out.append(np.stack([seg[i].reshape(r, c, order="F")
                                 for i in range(k)]))
        kseg = theta[o[4]:o[5]]
        if self.affine_k:
            kb = np.stack([kseg[i * self.nx * self.ny:(i + 1) * self.nx
                                * self.ny].reshape(self.nx, self.ny,
                                                   order="F")
                           for i in range(k)])
        else:
            kb = np.zeros((k, self.nx, self.ny))
            kb[0] = kseg.reshape(self.nx, self.ny, order="F")
        return tuple(out) + (kb,)

    def unflatten(self, theta: np.ndarray, xi: Optional[np.ndarray] = None
                  ) -> LpvSsModel:
        a, b, c, d, kb = self.blocks(theta)
        noise = InnovationNoise(k=AffineMatrixFunction(kb),
                                xi=np.eye(self.ny) if xi is None else xi)
        return LpvSsModel(a=AffineMatrixFunction(a),
                          b=AffineMatrixFunction(b),
                          c=AffineMatrixFunction(c),
                          d=AffineMatrixFunction(d),
                          basis=self.basis, noise=noise)


def _series(param: PemParameterization, theta: np.ndarray, psi: np.ndarray):
    a, b, c, d, kb = param.blocks(theta)
    return (np.einsum("tk,kij->tij", psi, a),
            np.einsum("tk,kij->tij", psi, b),
            np.einsum("tk,kij->tij", psi, c),
            np.einsum("tk,kij->tij", psi, d),
            np.einsum("tk,kij->tij", psi, kb) if param.affine_k
            else np.broadcast_to(kb[0], (psi.shape[0],) + kb[0].shape))


def _predict_states(a_t, b_t, c_t, d_t, k_t, dataset: DataSet):
    n = dataset.n
    nx = a_t.shape[1]
    xs = np.empty((n, nx))
    x = np.zeros(nx)
    u, y = dataset.u, dataset.y
    for t in range(n):
        xs[t] = x
        x = (a_t[t] - k_t[t] @ c_t[t]) @ x \
            + (b_t[t] - k_t[t] @ d_t[t]) @ u[t] + k_t[t] @ y[t]
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e12:
            raise InstabilityError(
                f"predictor state diverged at t={t}; the candidate gain "
                "does not stabilize the predictor", t=t)
    return xs


def predict_residuals(param: PemParameterization, theta: np.ndarray,
                      dataset: DataSet, psi: Optional[np.ndarray] = None
                      ) -> np.ndarray:
    """Prediction errors e_t = y_t - yhat_t, shape (N, ny)."""
    if psi is None:
        psi = param.basis.series(dataset.p, warn_outside=False)
    a_t, b_t, c_t, d_t, k_t = _series(param, theta, psi)
    xs = _predict_states(a_t, b_t, c_t, d_t, k_t, dataset)
    yhat = np.einsum("tij,tj->ti", c_t, xs) \
        + np.einsum("tij,tj->ti", d_t, dataset.u)
    return dataset.y - yhat


def predict_and_jacobian(param: PemParameterization, theta: np.ndarray,
                         dataset: DataSet, psi: Optional[np.ndarray] = None
                         ) -> Tuple[np.ndarray, np.ndarray]:
    """Residuals e (N*ny,) and the Jacobian J = d yhat / d theta
    ((N*ny, nparams)) from the exact forward sensitivity recursion."""
    if psi is None:
        psi = param.basis.series(dataset.p, warn_outside=False)
    n = dataset.n
    nx, nu, ny = param.nx, param.nu, param.ny
    k = 1 + param.npsi
    a_t, b_t, c_t, d_t, k_t = _series(param, theta, psi)
    xs = _predict_states(a_t, b_t, c_t, d_t, k_t, dataset)
    yhat = np.einsum("tij,tj->ti", c_t, xs) \
        + np.einsum("tij,tj->ti", d_t, dataset.u)
    resid = dataset.y - yhat          # also the predictor innovation
    eye_x, eye_y = np.eye(nx), np.eye(ny)

    psi_x = np.einsum("ti,tc->tic", psi, xs)          # (N, k, nx)
    psi_u = np.einsum("ti,tc->tic", psi, dataset.u)   # (N, k, nu)

    # state-equation forcing F_t, one column per parameter
    f_a = np.einsum("tic,rs->trics", psi_x, eye_x).reshape(n, nx, -1)
    f_b = np.einsum("tic,rs->trics", psi_u, eye_x).reshape(n, nx, -1)
    f_c = np.einsum("tic,trs->trics", psi_x, -k_t).reshape(n, nx, -1)
    f_d = np.einsum("tic,trs->trics", psi_u, -k_t).reshape(n, nx, -1)
    if param.affine_k:
        f_k = np.einsum("ti,tc,rs->trics", psi, resid,
                        eye_x).reshape(n, nx, -1)
    else:
        f_k = np.einsum("tc,rs->trcs", resid, eye_x).reshape(n, nx, -1)
    forcing = np.concatenate([f_a, f_b, f_c, f_d, f_k], axis=2)

    acl = a_t - np.einsum("tij,tjk->tik", k_t, c_t)
    sens = np.zeros((n, nx, param.nparams))
    s = np.zeros((nx, param.nparams))
    for t in range(n):
        sens[t] = s
        s = acl[t] @ s + forcing[t]

    jac = np.einsum("tij,tjp->tip", c_t, sens)
    # direct output dependence on the C and D coefficients
    o = param.offsets
    jc = np.einsum("tic,rs->trics", psi_x, eye_y).reshape(n, ny, -1)
    jd = np.einsum("tic,rs->trics", psi_u, eye_y).reshape(n, ny, -1)
    jac[:, :, o[2]:o[3]] += jc
    jac[:, :, o[3]:o[4]] += jd
    return resid.reshape(-1), jac.reshape(n * ny, param.nparams)


def ddlc_basis(param: PemParameterization, theta: np.ndarray,
               tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the ortho-complement of the similarity-orbit
    tangent at ``theta`` (one tangent column per entry of the nx x nx
    transform perturbation)."""
    a, b, c, d, kb = param.blocks(theta)
    nx, ny, nu = param.nx, param.ny, param.nu
    k = 1 + param.npsi
    tangent = np.zeros((param.nparams, nx * nx))
    for col, (bcol, arow) in enumerate(
            (j, i) for j in range(nx) for i in range(nx)):
        e = np.zeros((nx, nx))
        e[arow, bcol] = 1.0
        parts = []
        parts.extend((e @ a[i] - a[i] @ e).ravel(order="F")
                     for i in range(k))
        parts.extend((e @ b[i]).ravel(order="F") for i in range(k))
        parts.extend((-c[i] @ e).ravel(order="F") for i in range(k))
        parts.extend(np.zeros(ny * nu) for _ in range(k))
        if param.affine_k:
            parts.extend((e @ kb[i]).ravel(order="F") for i in range(k))
        else:
            parts.append((e @ kb[0]).ravel(order="F"))
        tangent[:, col] = np.concatenate(parts)
    u, sv, _ = np.linalg.svd(tangent, full_matrices=True)
    rank = int(np.sum(sv > tol * (sv[0] if sv.size and sv[0] > 0 else 1.0)))
    return u[:, rank:]


@dataclass(frozen=True)
class GbStep:
    cost_before: float
    cost_after: float
    alpha: float
    directional_derivative: float  # grad' * step, negative for descent
    step_norm: float


@dataclass
class GbResult:
    costs: List[float] = field(default_factory=list)
    steps: List[GbStep] = field(default_factory=list)
    stalled: bool = False
    n_iter: int = 0


def gb_refine(model0: LpvSsModel, dataset: DataSet,
              config: GbConfig = GbConfig()
              ) -> Tuple[LpvSsModel, GbResult]:
    """Iterative DDLC-projected, SVD-truncated Gauss-Newton descent on the
    summed squared prediction error, with Armijo backtracking.  Returns the
    refined model (innovation form, Xi set to the final residual covariance)
    and the iteration record."""
    param = PemParameterization.for_model(model0, affine_k=config.affine_k)
    psi = param.basis.series(dataset.p, warn_outside=False)
    theta = param.flatten(model0)
    result = GbResult()

    def cost_of(th):
        e = predict_residuals(param, th, dataset, psi)
        return float(np.sum(e ** 2))

    cost = cost_of(theta)
    result.costs.append(cost)
    for it in range(config.max_iter):
        resid, jac = predict_and_jacobian(param, theta, dataset, psi)
        basis_c = ddlc_basis(param, theta)
        jp = jac @ basis_c
        u, sv, vt = np.linalg.svd(jp, full_matrices=False)
        if sv.size == 0 or sv[0] <= 0:
            break  # flat projected Jacobian: stationary, nothing to do
        keep = sv >= config.nu * sv[0]
        if not np.any(keep):
            result.stalled = True
            break
        # damped pseudo-inverse on the retained directions
        inv = sv[keep] / (sv[keep] ** 2 + config.eta_min)
        coeff = (u[:, keep].T @ resid) * inv
        step = basis_c @ (vt[keep].T @ coeff)
        # gradient of the cost ||e||^2 w.r.t. theta is -2 J'e
        dirderiv = -2.0 * float(resid @ (jac @ step))
        if dirderiv >= -1e-300:
            break  # numerically stationary (e.g. started at an optimum)
        alpha = 1.0
        accepted = False
        while alpha >= config.alpha_min:
            try:
                new_cost = cost_of(theta + alpha * step)
            except InstabilityError:
                new_cost = np.inf
            if new_cost <= cost + config.beta * alpha * dirderiv:
                accepted = True
                break
            alpha *= config.gamma
        if not accepted:
            result.stalled = True
            break
        result.steps.append(GbStep(
            cost_before=cost, cost_after=new_cost, alpha=alpha,
            directional_derivative=dirderiv,
            step_norm=float(np.linalg.norm(alpha * step))))
        theta = theta + alpha * step
        prev, cost = cost, new_cost
        result.costs.append(cost)
        result.n_iter = it + 1
        if abs(prev - cost) < config.epsilon * max(prev, 1e-300):
            break

    resid = predict_residuals(param, theta, dataset, psi)
    xi = resid.T @ resid / max(dataset.n - 1, 1)
    xi = 0.5 * (xi + xi.T) + 1e-12 * np.eye(param.ny)
    return param.unflatten(theta, xi=xi), result

"""Coefficient estimators for the target task and their oracle tuning rules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .analytic import c_tl, in_band
from .errors import (InfiniteCovarianceError, InvalidParameterError,
                     JointCovarianceSingularError, ScopeError, ShapeError)
from .linalg import expected_projected_quadratic, pseudoinverse_apply, solve_spd
from .model import Dataset, SourceSpec, TargetSpec, TaskRelation
from .operators import OperatorMatrix

ESTIMATORS = ("mltn", "tl", "ridge", "lmmse")


@dataclass(frozen=True)
class Estimate:
    beta_hat: np.ndarray = field(repr=False)
    estimator_id: str
    alpha: float | None = None

    def __post_init__(self):
        if self.estimator_id not in ESTIMATORS:
            raise InvalidParameterError(f"unknown estimator {self.estimator_id!r}")


def _check(ds: Dataset, d: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(ds.design, dtype=float)
    y = np.asarray(ds.responses, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"design {X.shape} and responses {y.shape} are inconsistent")
    if d is not None and X.shape[1] != d:
        raise ShapeError(f"design has {X.shape[1]} columns, expected {d}")
    return X, y


def mltn_fit(ds: Dataset) -> Estimate:
    """Minimum-norm least squares ``X^+ y``."""
    X, y = _check(ds)
    return Estimate(pseudoinverse_apply(X, y), "mltn")


def tl_fit(ds: Dataset, theta_hat, H: OperatorMatrix, alpha_tl: float) -> Estimate:
    """Transfer estimator regularized toward ``H beta = theta_hat``.

    Solves ``(X^T X + n a H^T H) beta = X^T y + n a H^T theta_hat``.
    ``alpha_tl = inf`` gives the pure-transfer limit ``H^{-1} theta_hat``.
    """
    Hm = H.H if isinstance(H, OperatorMatrix) else np.asarray(H, dtype=float)
    d = Hm.shape[0]
    X, y = _check(ds, d)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta_hat.shape != (d,):
        raise ShapeError(f"theta_hat has shape {theta_hat.shape}, expected ({d},)")
    if not alpha_tl > 0:
        raise InvalidParameterError("alpha_tl must be positive")
    if math.isinf(alpha_tl):
        return Estimate(sla.solve(Hm, theta_hat), "tl", alpha_tl)
    na = X.shape[0] * alpha_tl
    A = X.T @ X + na * (Hm.T @ Hm)
    rhs = X.T @ y + na * (Hm.T @ theta_hat)
    return Estimate(solve_spd(A, rhs), "tl", alpha_tl)


def ridge_fit(ds: Dataset, alpha_ridge: float) -> Estimate:
    """``(X^T X + n a I)^{-1} X^T y``."""
    X, y = _check(ds)
    if not alpha_ridge > 0:
        raise InvalidParameterError("alpha_ridge must be positive")
    n, d = X.shape
    A = X.T @ X + n * alpha_ridge * np.eye(d)
    return Estimate(solve_spd(A, X.T @ y), "ridge", alpha_ridge)


@dataclass(frozen=True)
class LMMSEMoments:
    """Second moments of ``beta`` and the source solution ``theta_hat``."""

    B: np.ndarray
    cross: np.ndarray
    theta_cov: np.ndarray


def lmmse_moments(t: TargetSpec, s: SourceSpec, rel: TaskRelation) -> LMMSEMoments:
    """Prior covariance, ``E[beta theta_hat^T]`` and ``E[theta_hat theta_hat^T]``.

    Raises
    ------
    InfiniteCovarianceError
        When ``|d - n_tilde| <= 1`` (the source solution has infinite variance).
    """
    d, nt = t.d, s.n_tilde
    if rel.d != d:
        raise ShapeError(f"operator is {rel.d}x{rel.d}, target has d={d}")
    if in_band(d, nt):
        raise InfiniteCovarianceError(f"theta_hat covariance is infinite at d={d}, n_tilde={nt}")
    H = rel.H.H
    B = t.prior_cov()
    K = H @ B @ H.T
    eta = rel.sigma_eta2 / d
    if d <= nt - 2:
        cross = B @ H.T
        theta_cov = K + (eta + s.sigma_xi2 / (nt - d - 1)) * np.eye(d)
    else:
        cross = (nt / d) * (B @ H.T)
        theta_cov = expected_projected_quadratic(K + eta * np.eye(d), nt)
        theta_cov += s.sigma_xi2 * (nt / d) / (d - nt - 1) * np.eye(d)
    return LMMSEMoments(B, cross, 0.5 * (theta_cov + theta_cov.T))


def lmmse_fit(ds: Dataset, theta_hat, rel: TaskRelation, t: TargetSpec, s: SourceSpec,
              moments: LMMSEMoments | None = None) -> Estimate:
    """Linear MMSE estimate of ``beta`` from ``(y, theta_hat)`` given the design.

    ``moments`` may pass a precomputed :func:`lmmse_moments` result for reuse
    across trials.
    """
    X, y = _check(ds, t.d)
    theta_hat = np.asarray(theta_hat, dtype=float)
    mom = lmmse_moments(t, s, rel) if moments is None else moments
    M = _joint_covariance(X, t.sigma_eps2, mom)
    try:
        c = sla.cho_factor(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        lam = float(np.linalg.eigvalsh(M)[0])
        raise JointCovarianceSingularError("joint covariance of (y, theta_hat) is singular", lam) from None
    w = sla.cho_solve(c, np.concatenate([y, theta_hat]), check_finite=False)
    n = X.shape[0]
    beta = mom.B @ (X.T @ w[:n]) + mom.cross @ w[n:]
    return Estimate(beta, "lmmse")


def _joint_covariance(X, sigma_eps2, mom: LMMSEMoments) -> np.ndarray:
    n = X.shape[0]
    XC = X @ mom.cross
    M = np.block([[X @ mom.B @ X.T + sigma_eps2 * np.eye(n), XC], [XC.T, mom.theta_cov]])
    return 0.5 * (M + M.T)


def lmmse_conditional_risk(X, t: TargetSpec, s: SourceSpec, rel: TaskRelation) -> float:
    """Design-conditional LMMSE test error ``sigma_eps2 + tr(B) - tr(C M^{-1} C^T)``.

    Valid for isotropic features; used by the semi-analytic curves.
    """
    if not t.isotropic:
        raise ScopeError("LMMSE risk formula assumes isotropic features")
    mom = lmmse_moments(t, s, rel)
    X = np.asarray(X, dtype=float)
    M = _joint_covariance(X, t.sigma_eps2, mom)
    C = np.hstack([mom.B @ X.T, mom.cross])
    try:
        S = solve_spd(M, C.T, jitter=False)
    except np.linalg.LinAlgError:
        lam = float(np.linalg.eigvalsh(M)[0])
        raise JointCovarianceSingularError("joint covariance of (y, theta_hat) is singular", lam) from None
    return float(t.sigma_eps2 + np.trace(mom.B) - np.sum(C * S.T))


def optimal_alpha_tl(t: TargetSpec, s: SourceSpec, rel: TaskRelation) -> float | None:
    """Oracle transfer strength ``sigma_eps2 / (n C_TL)``.

    Returns
    -------
    float or None
        ``None`` flags the source band ``|d - n_tilde| <= 1`` where no optimum
        exists; ``inf`` is returned for a perfect source (``C_TL = 0``), meaning
        the pure-transfer limit.

    Raises
    ------
    ScopeError
        For a non-orthonormal operator or anisotropic features with
        ``d >= n_tilde - 1``; grid-search the strength instead.
    """
    d, nt = t.d, s.n_tilde
    if not (rel.H.orthonormal and t.isotropic) and d >= nt - 1:
        raise ScopeError("closed-form transfer tuning for general H needs d <= n_tilde - 2")
    C = c_tl(d, nt, rel.sigma_eta2, s.sigma_xi2, t.b)
    if math.isinf(C):
        return None
    if C == 0:
        return math.inf
    return t.sigma_eps2 / (t.n * C)


def optimal_alpha_ridge(t: TargetSpec) -> float:
    """``d sigma_eps2 / (n b)``; zero in the noiseless case (use :func:`mltn_fit` then)."""
    return t.d * t.sigma_eps2 / (t.n * t.b)

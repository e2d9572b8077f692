"""Generative model for the source/target regression pair.

Target:  ``y = X beta + eps`` with rows of ``X ~ N(0, Sigma_x)``,
``beta ~ N(0, (b/d) I)``.
Source:  ``v = Z theta + xi`` with ``Z`` standard Gaussian and
``theta = H beta + eta``, ``eta ~ N(0, (sigma_eta2/d) I)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError, MisspecReductionError, ShapeError
from .linalg import RngLike, as_generator, cholesky_factor, sample_gaussian_matrix
from .operators import OperatorMatrix, dct_matrix


@dataclass(frozen=True)
class TargetSpec:
    d: int
    n: int
    sigma_eps2: float
    b: float
    Sigma_x: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise InvalidParameterError("d and n must be positive")
        if self.sigma_eps2 < 0:
            raise InvalidParameterError("sigma_eps2 must be nonnegative")
        if not self.b > 0:
            raise InvalidParameterError("prior energy b must be positive")
        if self.Sigma_x is not None:
            S = np.asarray(self.Sigma_x, dtype=float)
            if S.shape != (self.d, self.d):
                raise ShapeError(f"Sigma_x has shape {S.shape}, expected ({self.d}, {self.d})")
            cholesky_factor(S)
            object.__setattr__(self, "Sigma_x", S)

    @property
    def isotropic(self) -> bool:
        return self.Sigma_x is None

    def prior_cov(self) -> np.ndarray:
        return (self.b / self.d) * np.eye(self.d)


@dataclass(frozen=True)
class SourceSpec:
    n_tilde: int
    sigma_xi2: float

    def __post_init__(self):
        if self.n_tilde < 1:
            raise InvalidParameterError("n_tilde must be positive")
        if self.sigma_xi2 < 0:
            raise InvalidParameterError("sigma_xi2 must be nonnegative")


@dataclass(frozen=True)
class TaskRelation:
    """``theta = H beta + eta``; ``sigma_eta2`` is the total energy of ``eta``."""

    H: OperatorMatrix
    sigma_eta2: float

    def __post_init__(self):
        if self.sigma_eta2 < 0:
            raise InvalidParameterError("sigma_eta2 must be nonnegative")

    @property
    def d(self) -> int:
        return self.H.d


@dataclass(frozen=True)
class MisspecSpec:
    q: int
    a: float
    rho: float
    omega_beta_all: float

    def __post_init__(self):
        if self.q < 1 or not self.a > 0 or self.rho < 0 or not self.omega_beta_all > 0:
            raise InvalidParameterError("need q >= 1, a > 0, rho >= 0, omega_beta_all > 0")

    def ms_energy(self, d: int, n: int) -> float:
        """Expected ``||beta_ms||^2`` at ``d`` learned features."""
        return self.omega_beta_all * (1.0 + d / n) ** (-self.a)

    def b_ms(self, d: int, n: int) -> float:
        """Per-coordinate variance of ``beta_ms``."""
        return self.ms_energy(d, n) / self.q


@dataclass(frozen=True)
class Dataset:
    design: np.ndarray
    responses: np.ndarray
    truth_beta: np.ndarray

    def __post_init__(self):
        if self.design.shape[0] != self.responses.shape[0]:
            raise ShapeError("design rows and response length differ")


def sample_beta(t: TargetSpec, rng: RngLike) -> np.ndarray:
    gen = as_generator(rng)
    return np.sqrt(t.b / t.d) * gen.standard_normal(t.d)


def sample_theta(beta, rel: TaskRelation, rng: RngLike) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (rel.d,):
        raise ShapeError(f"beta has shape {beta.shape}, H is {rel.d}x{rel.d}")
    gen = as_generator(rng)
    eta = np.sqrt(rel.sigma_eta2 / rel.d) * gen.standard_normal(rel.d)
    return rel.H.H @ beta + eta


def sample_source_dataset(beta, rel: TaskRelation, s: SourceSpec, d: int, rng: RngLike) -> Dataset:
    """Source data; ``truth_beta`` holds the sampled ``theta``."""
    gen = as_generator(rng)
    theta = sample_theta(beta, rel, gen)
    Z = sample_gaussian_matrix(s.n_tilde, d, None, gen)
    xi = np.sqrt(s.sigma_xi2) * gen.standard_normal(s.n_tilde)
    return Dataset(Z, Z @ theta + xi, theta)


def sample_target_dataset(beta, t: TargetSpec, rng: RngLike) -> Dataset:
    gen = as_generator(rng)
    X = sample_gaussian_matrix(t.n, t.d, t.Sigma_x, gen)
    eps = np.sqrt(t.sigma_eps2) * gen.standard_normal(t.n)
    return Dataset(X, X @ beta + eps, np.asarray(beta, dtype=float))


def misspec_effective(t: TargetSpec, rel: TaskRelation, m: MisspecSpec, *, eta_per_coordinate: bool = False):
    """Well-specified surrogate of a misspecified problem.

    Ignored features fold into the target noise; the ``H_ms beta_ms`` term folds
    into the relation noise as ``b_ms * rho`` per coordinate on top of
    ``sigma_eta2 / d``. With ``eta_per_coordinate=True`` the base relation noise is
    read as a per-coordinate variance instead (sensitivity switch).

    The prior energy of ``beta`` becomes ``omega_beta_all - E||beta_ms||^2``;
    ``t.b`` is ignored.
    """
    if not t.isotropic:
        raise MisspecReductionError("misspecification reduction requires isotropic features")
    d, n = t.d, t.n
    ms = m.ms_energy(d, n)
    per_coord = (rel.sigma_eta2 if eta_per_coordinate else rel.sigma_eta2 / d) + m.b_ms(d, n) * m.rho
    t_eff = replace(t, sigma_eps2=t.sigma_eps2 + ms, b=m.omega_beta_all - ms)
    rel_eff = replace(rel, sigma_eta2=d * per_coord)
    return t_eff, rel_eff


def misspec_operator(d: int, q: int, rho: float) -> np.ndarray:
    """``H_ms`` (d x q) with orthogonal rows and ``H_ms H_ms^T = rho I``."""
    if q < d:
        raise InvalidParameterError(f"full misspecified path needs q >= d (q={q}, d={d})")
    return np.sqrt(rho) * dct_matrix(q)[:d]


@dataclass(frozen=True)
class MisspecDraw:
    beta: np.ndarray
    beta_ms: np.ndarray
    source: Dataset
    target: Dataset


def sample_misspecified(t: TargetSpec, rel: TaskRelation, s: SourceSpec, m: MisspecSpec,
                        rng: RngLike, H_ms: np.ndarray | None = None) -> MisspecDraw:
    """One draw from the full misspecified generative model.

    ``q`` extra target features and coefficients are generated and then hidden
    from the learner, which sees only the first ``d`` features.
    """
    if not t.isotropic:
        raise MisspecReductionError("misspecified model requires isotropic features")
    d, n = t.d, t.n
    gen = as_generator(rng)
    if H_ms is None:
        H_ms = misspec_operator(d, m.q, m.rho)
    b_eff = m.omega_beta_all - m.ms_energy(d, n)
    beta = np.sqrt(b_eff / d) * gen.standard_normal(d)
    beta_ms = np.sqrt(m.b_ms(d, n)) * gen.standard_normal(m.q)
    eta = np.sqrt(rel.sigma_eta2 / d) * gen.standard_normal(d)
    theta = rel.H.H @ beta + H_ms @ beta_ms + eta
    Z = gen.standard_normal((s.n_tilde, d))
    v = Z @ theta + np.sqrt(s.sigma_xi2) * gen.standard_normal(s.n_tilde)
    X = gen.standard_normal((n, d))
    X_ms = gen.standard_normal((n, m.q))
    y = X @ beta + X_ms @ beta_ms + np.sqrt(t.sigma_eps2) * gen.standard_normal(n)
    return MisspecDraw(beta, beta_ms, Dataset(Z, v, theta), Dataset(X, y, beta))


def empirical_risk(beta_hat, beta, t: TargetSpec) -> float:
    """Exact conditional test error ``sigma_eps2 + ||beta_hat - beta||_{Sigma_x}^2``."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if beta_hat.shape != beta.shape or beta.shape != (t.d,):
        raise ShapeError(f"shapes {beta_hat.shape} and {beta.shape} do not match d={t.d}")
    e = beta_hat - beta
    quad = e @ e if t.Sigma_x is None else e @ t.Sigma_x @ e
    return float(t.sigma_eps2 + quad)


def misspecified_risk(beta_hat, draw: MisspecDraw, t: TargetSpec) -> float:
    """Test error of ``beta_hat`` under the full model: adds the hidden-feature energy."""
    return empirical_risk(beta_hat, draw.beta, t) + float(draw.beta_ms @ draw.beta_ms)

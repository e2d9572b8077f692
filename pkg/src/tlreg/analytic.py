"""Closed-form and fixed-point generalization-error formulas.

Integer-dimension formulas return ``math.inf`` on their interpolation bands
(``|d - n| <= 1`` for the target, ``|d - n_tilde| <= 1`` for the source).
Asymptotic formulas take a :class:`Regime`; the band there is ``gamma_src == 1``
or, when the regime was built from counts, the integer band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from .errors import FixedPointError, InvalidParameterError, ScopeError, ShapeError
from .linalg import RngLike, as_generator, sample_gaussian_matrix

INF = math.inf


def in_band(d: int, n: int) -> bool:
    return n - 1 <= d <= n + 1


@dataclass(frozen=True)
class Regime:
    """Parameterization levels ``gamma_tgt = d/n`` and ``gamma_src = d/n_tilde``.

    Build with :meth:`from_counts` to keep the integer band information.
    """

    gamma_tgt: float
    gamma_src: float
    d: int | None = None
    n: int | None = None
    n_tilde: int | None = None

    def __post_init__(self):
        if not (self.gamma_tgt > 0 and self.gamma_src > 0):
            raise InvalidParameterError("parameterization levels must be positive")

    @classmethod
    def from_counts(cls, d: int, n: int, n_tilde: int) -> "Regime":
        return cls(float(Fraction(d, n)), float(Fraction(d, n_tilde)), d, n, n_tilde)

    @property
    def source_band(self) -> bool:
        if self.d is not None and self.n_tilde is not None:
            return in_band(self.d, self.n_tilde)
        return self.gamma_src == 1.0

    @property
    def source_over(self) -> bool:
        return self.gamma_src > 1.0


# ---------------------------------------------------------------- finite-n forms

def c_tl(d: int, n_tilde: int, sigma_eta2: float, sigma_xi2: float, b: float) -> float:
    """Transfer coefficient combining relation noise and source-solution error."""
    if d <= n_tilde - 2:
        return sigma_eta2 / d + sigma_xi2 / (n_tilde - d - 1)
    if d <= n_tilde + 1:
        return INF
    r = n_tilde / d
    return (1 - r) * b / d + r * (sigma_eta2 / d + sigma_xi2 / (d - n_tilde - 1))


def source_risk(d: int, n_tilde: int, sigma_xi2: float, theta_energy: float) -> float:
    """Test error of the minimum-norm source solution."""
    if d <= n_tilde - 2:
        return (1 + d / (n_tilde - d - 1)) * sigma_xi2
    if d <= n_tilde + 1:
        return INF
    return (1 + n_tilde / (d - n_tilde - 1)) * sigma_xi2 + (1 - n_tilde / d) * theta_energy


def mltn_risk(d: int, n: int, sigma_eps2: float, b: float) -> float:
    """Prior-averaged test error of the minimum-norm target solution."""
    return source_risk(d, n, sigma_eps2, b)


def tl_beats_ridge(d: int, n_tilde: int, sigma_eta2: float, sigma_xi2: float, b: float) -> bool:
    """Sufficient condition for tuned transfer to beat tuned ridge (orthonormal ``H``)."""
    if in_band(d, n_tilde):
        return False
    return sigma_eta2 + d * sigma_xi2 / (abs(d - n_tilde) - 1) < b


# ----------------------------------------------------------- Marchenko-Pastur

def mp_stieltjes(alpha: float, gamma: float) -> float:
    """Stieltjes transform ``m(-alpha; gamma)`` of the Marchenko-Pastur law."""
    if not (alpha > 0 and gamma > 0):
        raise InvalidParameterError("alpha and gamma must be positive")
    if math.isinf(alpha):
        return 0.0
    B = 1.0 - gamma + alpha
    root = math.sqrt(B * B + 4.0 * gamma * alpha)
    if B > 0:
        return 2.0 / (B + root)
    return (-B + root) / (2.0 * gamma * alpha)


def mp_stieltjes_slope(alpha: float, gamma: float) -> float:
    """``int dF(x) / (x + alpha)^2``, i.e. ``-d m(-alpha; gamma) / d alpha``."""
    m = mp_stieltjes(alpha, gamma)
    return (gamma * m * m + m) / (2.0 * gamma * alpha * m + 1.0 - gamma + alpha)


def transfer_energy_asymptotic(regime: Regime, sigma_eta2: float, sigma_xi2: float,
                               b: float) -> float:
    """Limit of ``d * C_TL``; ``inf`` on the source band."""
    if regime.source_band:
        return INF
    g = regime.gamma_src
    if g < 1:
        return sigma_eta2 + g * sigma_xi2 / (1 - g)
    return (g - 1) / g * b + (sigma_eta2 + g * sigma_xi2 / (g - 1)) / g


def tl_risk_orthonormal_asymptotic(regime: Regime, sigma_eps2: float, alpha_tl: float,
                                   sigma_eta2: float, sigma_xi2: float, b: float) -> float:
    """Asymptotic transfer risk at any ``alpha_tl > 0`` (orthonormal ``H``, ``Sigma_x = I``).

    ``sigma_eps2 (1 + g m - g a m') + a^2 D m'`` with ``D`` the limiting transfer
    energy and ``m' = -dm/da``; at the optimal ``a = sigma_eps2 g / D`` it reduces
    to :func:`tl_opt_risk_orthonormal_asymptotic`.
    """
    if not alpha_tl > 0:
        raise InvalidParameterError("alpha_tl must be positive")
    D = transfer_energy_asymptotic(regime, sigma_eta2, sigma_xi2, b)
    if math.isinf(D):
        return INF
    g = regime.gamma_tgt
    if math.isinf(alpha_tl):
        return sigma_eps2 + D
    m = mp_stieltjes(alpha_tl, g)
    mp = mp_stieltjes_slope(alpha_tl, g)
    return sigma_eps2 * (1.0 + g * m - g * alpha_tl * mp) + alpha_tl ** 2 * D * mp


def tl_opt_alpha_asymptotic(regime: Regime, sigma_eps2: float, sigma_eta2: float,
                            sigma_xi2: float, b: float) -> float:
    """Limit of the optimal transfer strength (orthonormal ``H``).

    Returns ``nan`` on the source band, ``inf`` for a perfect source.
    """
    if regime.source_band:
        return math.nan
    denom = transfer_energy_asymptotic(regime, sigma_eta2, sigma_xi2, b)
    if denom == 0:
        return INF
    return sigma_eps2 * regime.gamma_tgt / denom


def tl_opt_risk_orthonormal_asymptotic(regime: Regime, sigma_eps2: float, sigma_eta2: float,
                                       sigma_xi2: float, b: float) -> float:
    """Asymptotic risk of optimally tuned transfer with orthonormal ``H``, ``Sigma_x = I``."""
    if regime.source_band:
        return INF
    if sigma_eps2 == 0:
        return 0.0
    alpha = tl_opt_alpha_asymptotic(regime, sigma_eps2, sigma_eta2, sigma_xi2, b)
    return sigma_eps2 * (1.0 + regime.gamma_tgt * mp_stieltjes(alpha, regime.gamma_tgt))


def ridge_opt_alpha_asymptotic(gamma_tgt: float, sigma_eps2: float, b: float) -> float:
    return gamma_tgt * sigma_eps2 / b


def ridge_opt_risk_asymptotic(gamma_tgt: float, sigma_eps2: float, b: float) -> float:
    """Asymptotic risk of optimally tuned ridge under the isotropic prior."""
    if sigma_eps2 == 0:
        return 0.0
    alpha = ridge_opt_alpha_asymptotic(gamma_tgt, sigma_eps2, b)
    return sigma_eps2 * (1.0 + gamma_tgt * mp_stieltjes(alpha, gamma_tgt))


def ridge_risk_asymptotic(gamma_tgt: float, sigma_eps2: float, alpha: float, b: float) -> float:
    """Asymptotic ridge risk at any ``alpha > 0``: transfer from a zero source of energy ``b``."""
    if not alpha > 0:
        raise InvalidParameterError("alpha must be positive")
    m = mp_stieltjes(alpha, gamma_tgt)
    mp = mp_stieltjes_slope(alpha, gamma_tgt)
    return sigma_eps2 * (1.0 + gamma_tgt * m - gamma_tgt * alpha * mp) + alpha ** 2 * b * mp


# ---------------------------------------------------- eigenvalue-ensemble forms

def _gram_eigenvalues(X: np.ndarray) -> np.ndarray:
    """All ``d`` eigenvalues of ``X^T X`` (zeros padded when ``d > n``)."""
    n, d = X.shape
    if d <= n:
        return np.linalg.eigvalsh(X.T @ X)
    lam = np.linalg.eigvalsh(X @ X.T)
    return np.concatenate([np.zeros(d - n), lam])


def _mean_se(vals) -> tuple[float, float]:
    vals = np.asarray(vals, dtype=float)
    if vals.size < 2:
        return float(vals.mean()), math.nan
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def _transfer_sum(lam, g, n, alpha, C, sigma_eps2):
    na = n * alpha
    if math.isinf(alpha):
        return float(np.sum(g)) * C
    return float(np.sum(g * (na * na * C + sigma_eps2 * lam) / (lam + na) ** 2))


def tl_risk_seminonasymptotic(t, s, rel, alpha_tl: float, ensemble_draws: int = 500,
                              rng: RngLike = 0) -> tuple[float, float]:
    """Expected transfer risk averaged over design draws only.

    Orthonormal ``H`` with isotropic features uses the eigenvalues of ``X^T X``;
    otherwise the whitened design ``X H^{-1}`` and its eigenvector weights are
    used, which is only valid for an underparameterized source.
    Returns ``(mean, stderr)``.
    """
    d, n, nt = t.d, t.n, s.n_tilde
    if not alpha_tl > 0:
        raise InvalidParameterError("alpha_tl must be positive")
    general = not (rel.H.orthonormal and t.isotropic)
    if general and d > nt - 2:
        if in_band(d, nt) or d == nt - 1:
            return INF, math.nan
        raise ScopeError("general-H finite-n risk needs an underparameterized source (d <= n_tilde - 2)")
    C = c_tl(d, nt, rel.sigma_eta2, s.sigma_xi2, t.b)
    if math.isinf(C):
        return INF, math.nan
    gen = as_generator(rng)
    vals = np.empty(ensemble_draws)
    if not general:
        g = np.ones(d)
        for i in range(ensemble_draws):
            X = sample_gaussian_matrix(n, d, None, gen)
            vals[i] = _transfer_sum(_gram_eigenvalues(X), g, n, alpha_tl, C, t.sigma_eps2)
    else:
        W = whitened_covariance(rel.H.H, t.Sigma_x)
        for i in range(ensemble_draws):
            X = sample_gaussian_matrix(n, d, t.Sigma_x, gen)
            XH = sla.solve(rel.H.H.T, X.T, check_finite=False).T
            lam, Phi = np.linalg.eigh(XH.T @ XH)
            lam = np.clip(lam, 0.0, None)
            g = np.einsum("ik,ij,jk->k", Phi, W, Phi)
            vals[i] = _transfer_sum(lam, g, n, alpha_tl, C, t.sigma_eps2)
    mean, se = _mean_se(vals)
    return t.sigma_eps2 + mean, se


def ridge_opt_risk_seminonasymptotic(t, ensemble_draws: int = 500, rng: RngLike = 0) -> tuple[float, float]:
    """``sigma_eps2 (1 + E tr[(X^T X + n alpha I)^{-1}])`` at the optimal ridge strength."""
    if t.sigma_eps2 == 0:
        return 0.0, 0.0
    if not t.isotropic:
        raise ScopeError("ridge optimum formula assumes isotropic features")
    alpha = t.d * t.sigma_eps2 / (t.n * t.b)
    gen = as_generator(rng)
    vals = np.empty(ensemble_draws)
    for i in range(ensemble_draws):
        lam = _gram_eigenvalues(sample_gaussian_matrix(t.n, t.d, None, gen))
        vals[i] = np.sum(1.0 / (lam + t.n * alpha))
    mean, se = _mean_se(vals)
    return t.sigma_eps2 * (1.0 + mean), t.sigma_eps2 * se


def ridge_risk_seminonasymptotic(t, alpha: float, ensemble_draws: int = 500,
                                 rng: RngLike = 0) -> tuple[float, float]:
    """Ridge risk at any ``alpha > 0`` averaged over design draws (isotropic features)."""
    if not t.isotropic:
        raise ScopeError("ridge eigenvalue formula assumes isotropic features")
    if not alpha > 0:
        raise InvalidParameterError("alpha must be positive")
    gen = as_generator(rng)
    g = np.ones(t.d)
    vals = np.array([
        _transfer_sum(_gram_eigenvalues(sample_gaussian_matrix(t.n, t.d, None, gen)), g, t.n,
                      alpha, t.b / t.d, t.sigma_eps2)
        for _ in range(ensemble_draws)])
    mean, se = _mean_se(vals)
    return t.sigma_eps2 + mean, se


def ridge_opt_risk(t, ensemble_draws: int = 500, rng: RngLike = 0):
    """``((mean, stderr), asymptotic)`` risk of optimally tuned ridge."""
    semi = ridge_opt_risk_seminonasymptotic(t, ensemble_draws, rng)
    return semi, ridge_opt_risk_asymptotic(t.d / t.n, t.sigma_eps2, t.b)


# ------------------------------------------------------- general-covariance limit

@dataclass(frozen=True)
class SpectralSolution:
    c: float
    c_prime: float
    residual: float
    iterations: int


def whitened_covariance(H: np.ndarray, Sigma_x: np.ndarray | None) -> np.ndarray:
    """``W = H^{-T} Sigma_x H^{-1}``."""
    H = np.asarray(H, dtype=float)
    S = np.eye(H.shape[0]) if Sigma_x is None else np.asarray(Sigma_x, dtype=float)
    A = sla.solve(H.T, S, check_finite=False)
    W = sla.solve(H.T, A.T, check_finite=False).T
    return 0.5 * (W + W.T)


def _spectrum(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        return W
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ShapeError(f"W must be square, got {W.shape}")
    return np.linalg.eigvalsh(0.5 * (W + W.T))


def solve_fixed_point(W, gamma_tgt: float, alpha: float, *, tol: float = 1e-10,
                      max_iter: int = 10_000) -> SpectralSolution:
    """Solve ``1/c - 1 = (gamma/d) tr[W (cW + alpha I)^{-1}]`` for ``c`` in ``(0, 1]``.

    ``W`` may be a symmetric matrix or its eigenvalue vector. The root of the
    equivalent ``1 - c - (gamma/d) sum c l / (c l + alpha)``, which is strictly
    decreasing in ``c``, is bracketed by bisection and polished by Newton steps.
    The reported residual is ``|g(c)|``, i.e. the equation multiplied through by
    ``c``, which stays on a unit scale when ``c`` is tiny.
    """
    lam = _spectrum(W)
    if np.any(lam < -1e-12 * max(1.0, float(np.max(np.abs(lam))))):
        raise InvalidParameterError("W must be positive semi-definite")
    lam = np.clip(lam, 0.0, None)
    d = lam.size
    if not (alpha > 0 and gamma_tgt > 0):
        raise InvalidParameterError("alpha and gamma must be positive")
    k = gamma_tgt / d

    def g(c):
        return 1.0 - c - k * np.sum(c * lam / (c * lam + alpha))

    def dg(c):
        return -1.0 - k * np.sum(alpha * lam / (c * lam + alpha) ** 2)

    def residual(c):
        return abs(g(c))

    lo, hi = 1e-12, 1.0
    it = 0
    if g(lo) <= 0:
        raise FixedPointError("root lies below the bisection bracket", lo, residual(lo), 0)
    c = 1.0
    if g(hi) < 0:
        while hi - lo > 1e-6 * hi and it < max_iter:
            mid = 0.5 * (lo + hi)
            if g(mid) > 0:
                lo = mid
            else:
                hi = mid
            it += 1
        c = 0.5 * (lo + hi)
        for _ in range(60):
            step = g(c) / dg(c)
            c_new = c - step
            if not lo <= c_new <= hi:
                c_new = 0.5 * (lo + hi)
            if g(c_new) > 0:
                lo = c_new
            else:
                hi = c_new
            c = c_new
            it += 1
            if abs(step) <= 1e-16 * c or residual(c) <= 1e-14:
                break
    res = residual(c)
    if res > tol or it >= max_iter:
        raise FixedPointError(f"fixed point did not converge (residual {res:.3e})", c, res, it)
    f = lam / (c * lam + alpha)
    fro = k * float(np.sum(f * f))
    c_prime = fro / (c ** -2 - fro)
    return SpectralSolution(float(c), float(c_prime), float(res), it)


@dataclass(frozen=True)
class GammaTLInf:
    matrix: np.ndarray | None
    infinite: bool = False


def gamma_tl_inf(H, regime: Regime, b: float, sigma_eta2: float, sigma_xi2: float,
                 kappa_H: float | None = None) -> GammaTLInf:
    """Limiting covariance of ``theta_hat - H beta``.

    ``H`` is an :class:`~tlreg.operators.OperatorMatrix` or a square array;
    ``kappa_H`` defaults to the operator's own field (or ``||H||_F^2 / d``).
    """
    if hasattr(H, "kappa_H"):
        kappa_H = H.kappa_H if kappa_H is None else kappa_H
        H = H.H
    H = np.asarray(H, dtype=float)
    d = H.shape[0]
    if kappa_H is None:
        kappa_H = float(np.sum(H * H) / d)
    if regime.source_band:
        return GammaTLInf(None, True)
    g = regime.gamma_src
    if g < 1:
        return GammaTLInf((sigma_eta2 + g * sigma_xi2 / (1 - g)) / d * np.eye(d))
    HHt = H @ H.T
    r = (g - 1) / g
    M = (b / (d * g)) * ((g - 1) ** 2 / g * HHt + r * (kappa_H * np.eye(d) - np.diag(np.diag(HHt)) / d))
    M += (sigma_eta2 + g * sigma_xi2 / (g - 1)) / (d * g) * np.eye(d)
    return GammaTLInf(M)


def _gamma_tl_inf_identity(d: int, regime: Regime, b, sigma_eta2, sigma_xi2) -> float | None:
    """Scalar of ``Gamma_TL,inf = s I`` for orthonormal ``H`` (``H H^T = I``)."""
    if regime.source_band:
        return None
    g = regime.gamma_src
    if g < 1:
        return (sigma_eta2 + g * sigma_xi2 / (1 - g)) / d
    r = (g - 1) / g
    return (b / (d * g)) * ((g - 1) ** 2 / g + r * (1.0 - 1.0 / d)) + (sigma_eta2 + g * sigma_xi2 / (g - 1)) / (d * g)


def tl_risk_general_asymptotic(H, Sigma_x, regime: Regime, sigma_eps2: float, alpha_tl: float,
                               b: float, sigma_eta2: float, sigma_xi2: float,
                               d: int | None = None) -> float:
    """Asymptotic transfer risk at an arbitrary ``alpha_tl > 0`` for general ``H`` and ``Sigma_x``.

    ``H=None`` together with ``Sigma_x=None`` is the orthonormal/isotropic case,
    evaluated in scalar arithmetic at dimension ``d`` (so ``d`` may be huge).
    The expression is rearranged so that ``sigma_eps2 = 0`` needs no division.
    """
    if not alpha_tl > 0:
        raise InvalidParameterError("alpha_tl must be positive")
    gam = regime.gamma_tgt
    if H is None:
        if Sigma_x is not None:
            raise ShapeError("Sigma_x given without H")
        if d is None:
            raise InvalidParameterError("scalar path needs the dimension d")
        gs = _gamma_tl_inf_identity(d, regime, b, sigma_eta2, sigma_xi2)
        if gs is None:
            return INF
        sol = solve_fixed_point(np.ones(1), gam, alpha_tl)
        s = sol.c_prime + 1.0
        R = 1.0 / (sol.c + alpha_tl)
        lin = R
        quad_noise = alpha_tl * s * R * R
        quad_gamma = d * gs * s * R * R
        return sigma_eps2 * (1.0 + gam * lin - gam * quad_noise) + alpha_tl ** 2 * quad_gamma
    return GeneralTLRisk(H, Sigma_x, regime, b, sigma_eta2, sigma_xi2)(sigma_eps2, alpha_tl)


class GeneralTLRisk:
    """Cached evaluator of the general-covariance asymptotic transfer risk.

    The eigen-decomposition of ``W`` and the projected ``Gamma_TL,inf``
    diagonal are computed once; each call only solves the scalar fixed point.
    """

    def __init__(self, H, Sigma_x, regime: Regime, b: float, sigma_eta2: float, sigma_xi2: float):
        Hm = H.H if hasattr(H, "H") else np.asarray(H, dtype=float)
        self.gamma = regime.gamma_tgt
        Gam = gamma_tl_inf(H, regime, b, sigma_eta2, sigma_xi2)
        self.infinite = Gam.infinite
        lam, U = np.linalg.eigh(whitened_covariance(Hm, Sigma_x))
        self.lam = np.clip(lam, 0.0, None)
        self.gdiag = None if Gam.infinite else np.einsum("ik,ij,jk->k", U, Gam.matrix, U)

    def __call__(self, sigma_eps2: float, alpha_tl: float) -> float:
        if not alpha_tl > 0:
            raise InvalidParameterError("alpha_tl must be positive")
        if self.infinite:
            return INF
        lam, gam = self.lam, self.gamma
        if math.isinf(alpha_tl):
            # pure transfer: the whitened error covariance is Gamma itself
            return sigma_eps2 + float(np.sum(self.gdiag * lam))
        sol = solve_fixed_point(lam, gam, alpha_tl)
        s = sol.c_prime + 1.0
        inv = 1.0 / (sol.c * lam + alpha_tl)
        lin = float(np.mean(lam * inv))
        D = lam * inv * inv
        quad_noise = alpha_tl / lam.size * s * float(np.sum(D))
        quad_gamma = s * float(np.sum(self.gdiag * D))
        return sigma_eps2 * (1.0 + gam * lin - gam * quad_noise) + alpha_tl ** 2 * quad_gamma

    def minimize(self, sigma_eps2: float, lo: float = 1e-5, hi: float = 1e5) -> tuple[float, float]:
        """``(alpha, risk)`` minimizing the risk over ``alpha`` in ``[lo, hi]``."""
        if self.infinite:
            return math.nan, INF
        grid = np.geomspace(lo, hi, 41)
        vals = np.array([self(sigma_eps2, a) for a in grid])
        k = int(np.argmin(vals))
        a_lo, a_hi = math.log(grid[max(k - 1, 0)]), math.log(grid[min(k + 1, grid.size - 1)])
        res = minimize_scalar(lambda u: self(sigma_eps2, math.exp(u)), bounds=(a_lo, a_hi),
                              method="bounded", options={"xatol": 1e-8})
        if res.fun <= vals[k]:
            return math.exp(res.x), float(res.fun)
        return float(grid[k]), float(vals[k])

"""Experiment orchestration: sweeps over ``d``, Monte-Carlo averaging, comparison and output.

Every trial of a sweep cell ``(d, sigma_eta2 index)`` draws its data from the
stream ``Rng(base_seed).derive(d, sigma_index, trial)``. All estimators in the
cell are fitted to the same draws (common random numbers), so their risk
differences are paired. Cells are independent work units; results are
assembled in grid order whatever the number of worker processes.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import analytic as an
from .errors import ConfigError, InvalidParameterError, JoinError
from .estimators import (ESTIMATORS, lmmse_conditional_risk, lmmse_fit, lmmse_moments,
                         mltn_fit, optimal_alpha_ridge, optimal_alpha_tl, ridge_fit, tl_fit)
from .linalg import Rng, as_generator, sample_gaussian_matrix
from .model import (MisspecSpec, SourceSpec, TargetSpec, TaskRelation, empirical_risk,
                    misspec_effective, misspec_operator, misspecified_risk, sample_beta,
                    sample_misspecified, sample_source_dataset, sample_target_dataset)
from .operators import build_operator, parse_operator

CSV_HEADER = ("d", "gamma_tgt", "gamma_src", "estimator", "sigma_eta2", "alpha_used",
              "empirical_mean", "empirical_stderr", "analytic")

# Smallest strength used where the tuning rule gives zero (noiseless target).
ALPHA_FLOOR = 1e-10


# ------------------------------------------------------------------ config

def default_d_grid(n: int, n_tilde: int) -> tuple[int, ...]:
    """Quarter-octave grid over ``[n/8, 8n]`` plus both interpolation bands."""
    pts = {int(round(n * 2.0 ** (k / 4))) for k in range(-12, 13)}
    pts |= {n - 1, n, n + 1, n_tilde - 1, n_tilde, n_tilde + 1}
    return tuple(sorted(p for p in pts if p >= 1))


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one sweep.

    ``alpha_mode`` is ``"optimal"`` or ``"grid:<lo>,<hi>,<points>"``;
    ``analytic_mode`` is ``"asymptotic"`` or ``"semi"`` (design-ensemble averages).
    With a ``misspec`` section, ``b`` is replaced by the effective prior energy and
    ``misspec_path`` selects the ``"effective"`` surrogate or the ``"full"`` model.
    """

    n: int
    n_tilde: int
    d_grid: tuple[int, ...] = ()
    sigma_eps2: float = 0.05
    sigma_eta2_list: tuple[float, ...] = (0.0, 0.1, 0.5)
    sigma_xi2: float = 0.05
    b: float = 1.0
    operator: str = "dct"
    sigma_x: str = "identity"
    estimators: tuple[str, ...] = ESTIMATORS
    trials: int = 150
    ensemble_draws: int = 500
    base_seed: int = 0
    alpha_mode: str = "optimal"
    analytic_mode: str = "asymptotic"
    x_scale: str = "log"
    eta_per_coordinate: bool = False
    misspec: MisspecSpec | None = None
    misspec_path: str = "effective"

    def __post_init__(self):
        if self.n < 1 or self.n_tilde < 1:
            raise ConfigError("n and n_tilde must be positive")
        if not self.d_grid:
            object.__setattr__(self, "d_grid", default_d_grid(self.n, self.n_tilde))
        grid = tuple(int(d) for d in self.d_grid)
        if any(d < 1 for d in grid) or list(grid) != sorted(set(grid)):
            raise ConfigError("d_grid must be strictly ascending positive integers")
        object.__setattr__(self, "d_grid", grid)
        object.__setattr__(self, "sigma_eta2_list", tuple(float(v) for v in self.sigma_eta2_list))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.trials < 1 or self.ensemble_draws < 1:
            raise ConfigError("trials and ensemble_draws must be at least 1")
        if min((self.sigma_eps2, self.sigma_xi2) + self.sigma_eta2_list) < 0 or not self.sigma_eta2_list:
            raise ConfigError("noise levels must be nonnegative and sigma_eta2_list nonempty")
        if not self.b > 0:
            raise ConfigError("b must be positive")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            raise ConfigError(f"unknown estimators {bad}")
        if not 0 <= self.base_seed < 2 ** 64:
            raise ConfigError("base_seed must be a 64-bit unsigned integer")
        if self.analytic_mode not in ("asymptotic", "semi"):
            raise ConfigError(f"analytic_mode must be asymptotic or semi, got {self.analytic_mode!r}")
        if self.x_scale not in ("log", "linear"):
            raise ConfigError("x_scale must be log or linear")
        if self.misspec_path not in ("effective", "full"):
            raise ConfigError("misspec path must be effective or full")
        try:
            parse_operator(self.operator)
        except InvalidParameterError as exc:
            raise ConfigError(str(exc)) from exc
        self.alpha_grid()
        if self.misspec is not None and self.sigma_x != "identity":
            raise ConfigError("misspecification requires sigma_x = identity")
        if self.misspec is not None and self.misspec_path == "full" and max(grid) > self.misspec.q:
            raise ConfigError("full misspecified path needs q >= every d")

    def alpha_grid(self) -> np.ndarray | None:
        if self.alpha_mode == "optimal":
            return None
        kind, _, rest = self.alpha_mode.partition(":")
        try:
            lo, hi, pts = rest.split(",")
            lo, hi, pts = float(lo), float(hi), int(pts)
        except ValueError:
            raise ConfigError(f"bad alpha_mode {self.alpha_mode!r}") from None
        if kind != "grid" or not (0 < lo < hi) or pts < 2:
            raise ConfigError(f"bad alpha_mode {self.alpha_mode!r}")
        return np.geomspace(lo, hi, pts)


_FIELDS = {
    "n": int, "n_tilde": int, "sigma_eps2": float, "sigma_xi2": float, "b": float,
    "operator": str, "sigma_x": str, "trials": int, "ensemble_draws": int,
    "base_seed": int, "alpha_mode": str, "analytic_mode": str, "x_scale": str,
}
_MISSPEC_FIELDS = {"q": int, "a": float, "rho": float, "omega": float, "path": str}


def _split(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse a ``key = value`` document with an optional ``[misspec]`` section."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    try:
        cp.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    extra = set(cp.sections()) - {"experiment", "misspec"}
    if extra:
        raise ConfigError(f"unknown sections {sorted(extra)}")
    kw: dict = {}
    try:
        for key, raw in cp["experiment"].items():
            if key in _FIELDS:
                kw[key] = _FIELDS[key](raw.strip())
            elif key == "d_grid":
                kw[key] = () if raw.strip() == "default" else tuple(int(v) for v in _split(raw))
            elif key == "sigma_eta2_list":
                kw[key] = tuple(float(v) for v in _split(raw))
            elif key == "estimators":
                kw[key] = tuple(_split(raw))
            elif key == "eta_per_coordinate":
                kw[key] = _bool(raw)
            else:
                raise ConfigError(f"unknown key {key!r}")
        if cp.has_section("misspec"):
            sec = cp["misspec"]
            unknown = set(sec) - set(_MISSPEC_FIELDS)
            if unknown:
                raise ConfigError(f"unknown misspec keys {sorted(unknown)}")
            vals = {k: _MISSPEC_FIELDS[k](v.strip()) for k, v in sec.items()}
            kw["misspec_path"] = vals.pop("path", "effective")
            kw["misspec"] = MisspecSpec(vals["q"], vals["a"], vals["rho"], vals["omega"])
    except KeyError as exc:
        raise ConfigError(f"missing misspec key {exc}") from exc
    except (ValueError, InvalidParameterError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value: {exc}") from exc
    for req in ("n", "n_tilde"):
        if req not in kw:
            raise ConfigError(f"missing required key {req!r}")
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# -------------------------------------------------------------- matrix files

def read_matrix(path) -> np.ndarray:
    """Read ``rows cols`` then row-major whitespace-separated values."""
    try:
        tokens = Path(path).read_text().split()
    except OSError as exc:
        raise ConfigError(f"cannot read matrix file {path}: {exc}") from exc
    try:
        r, c = int(tokens[0]), int(tokens[1])
        vals = np.array([float(v) for v in tokens[2:]])
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"malformed matrix file {path}") from exc
    if vals.size != r * c:
        raise ConfigError(f"matrix file {path} declares {r}x{c} but has {vals.size} values")
    return vals.reshape(r, c)


def write_matrix(M, path) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [f"{M.shape[0]} {M.shape[1]}"] + [" ".join(format(v, ".17g") for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n")


def feature_covariance(spec: str, d: int) -> np.ndarray | None:
    """``Sigma_x`` at dimension ``d``.

    ``diag:<csv>`` repeats the listed variances cyclically to length ``d``;
    ``file:<path>`` takes the leading ``d x d`` block of the stored matrix.
    """
    if spec == "identity":
        return None
    if spec.startswith("diag:"):
        vals = [float(v) for v in _split(spec[5:])]
        if not vals or min(vals) <= 0:
            raise ConfigError("diag variances must be positive")
        return np.diag(np.resize(np.array(vals), d))
    if spec.startswith("file:"):
        M = read_matrix(spec[5:])
        if M.shape[0] != M.shape[1] or M.shape[0] < d:
            raise ConfigError(f"Sigma_x file is {M.shape}, need a square matrix of size >= {d}")
        return M[:d, :d]
    raise ConfigError(f"unknown sigma_x spec {spec!r}")


# ------------------------------------------------------------------ points

@dataclass(frozen=True)
class RiskPoint:
    d: int
    gamma_tgt: float
    gamma_src: float
    estimator: str
    sigma_eta2: float
    alpha_used: float | None
    empirical_mean: float
    empirical_stderr: float
    analytic: float

    def key(self):
        return (self.estimator, self.sigma_eta2, self.d)


def gammas(d: int, n: int, n_tilde: int) -> tuple[float, float]:
    return float(Fraction(d, n)), float(Fraction(d, n_tilde))


# ------------------------------------------------------------------- cells

@dataclass
class Cell:
    """Specs, operator and tuned strengths of one ``(d, sigma_eta2)`` grid cell."""

    cfg: ExperimentConfig
    d: int
    sigma_index: int
    target: TargetSpec
    source: SourceSpec
    relation: TaskRelation
    model_target: TargetSpec
    model_relation: TaskRelation
    alphas: dict = field(default_factory=dict)
    H_ms: np.ndarray | None = None
    _general: object = None

    @classmethod
    def build(cls, cfg: ExperimentConfig, d: int, sigma_index: int) -> "Cell":
        eta2 = cfg.sigma_eta2_list[sigma_index]
        op = build_operator(parse_operator(cfg.operator, d))
        b = cfg.b if cfg.misspec is None else cfg.misspec.omega_beta_all
        t = TargetSpec(d, cfg.n, cfg.sigma_eps2, b, feature_covariance(cfg.sigma_x, d))
        s = SourceSpec(cfg.n_tilde, cfg.sigma_xi2)
        if cfg.eta_per_coordinate and cfg.misspec is None:
            eta2 = eta2 * d
        rel = TaskRelation(op, eta2)
        mt, mr = t, rel
        H_ms = None
        if cfg.misspec is not None:
            mt, mr = misspec_effective(t, rel, cfg.misspec, eta_per_coordinate=cfg.eta_per_coordinate)
            if cfg.misspec_path == "full":
                H_ms = misspec_operator(d, cfg.misspec.q, cfg.misspec.rho)
        cell = cls(cfg, d, sigma_index, t, s, rel, mt, mr, H_ms=H_ms)
        cell.alphas = {e: cell.tuned_alpha(e) for e in ("ridge", "tl")}
        return cell

    @property
    def orthonormal(self) -> bool:
        return self.model_relation.H.orthonormal and self.model_target.isotropic

    def general(self) -> an.GeneralTLRisk:
        if self._general is None:
            t, r = self.model_target, self.model_relation
            self._general = an.GeneralTLRisk(r.H, t.Sigma_x, an.Regime.from_counts(self.d, t.n, self.source.n_tilde),
                                             t.b, r.sigma_eta2, self.source.sigma_xi2)
        return self._general

    def tuned_alpha(self, est: str) -> float:
        t = self.model_target
        a_ridge = max(optimal_alpha_ridge(t), ALPHA_FLOOR)
        if est == "ridge":
            return a_ridge
        nt = self.source.n_tilde
        if self.orthonormal or self.d <= nt - 2:
            a = optimal_alpha_tl(t, self.source, self.model_relation)
        elif an.in_band(self.d, nt) or self.d == nt - 1:
            a = None
        else:
            a, _ = self.general().minimize(t.sigma_eps2)
        if a is None:
            # no optimum on the source band; ridge tuning keeps the fit well posed
            return a_ridge
        return max(a, ALPHA_FLOOR)


def trial_stream(cfg: ExperimentConfig, d: int, sigma_index: int, trial: int) -> Rng:
    """Sub-stream feeding trial ``trial`` of cell ``(d, sigma_index)``."""
    return Rng(cfg.base_seed).derive(d, sigma_index, trial)


@dataclass
class TrialDraw:
    beta: np.ndarray
    theta_hat: np.ndarray
    target: object
    misspec: object = None


def sample_trial(cell: Cell, rng) -> TrialDraw:
    gen = as_generator(rng)
    cfg = cell.cfg
    if cfg.misspec is not None and cfg.misspec_path == "full":
        draw = sample_misspecified(cell.target, cell.relation, cell.source, cfg.misspec, gen, cell.H_ms)
        return TrialDraw(draw.beta, mltn_fit(draw.source).beta_hat, draw.target, draw)
    t, rel = cell.model_target, cell.model_relation
    beta = sample_beta(t, gen)
    src = sample_source_dataset(beta, rel, cell.source, t.d, gen)
    tgt = sample_target_dataset(beta, t, gen)
    return TrialDraw(beta, mltn_fit(src).beta_hat, tgt)


def trial_risk(cell: Cell, draw: TrialDraw, beta_hat) -> float:
    if draw.misspec is not None:
        return misspecified_risk(beta_hat, draw.misspec, cell.target)
    return empirical_risk(beta_hat, draw.beta, cell.model_target)


def fit(cell: Cell, est: str, draw: TrialDraw, alpha: float | None = None, moments=None):
    if est == "mltn":
        return mltn_fit(draw.target)
    if est == "ridge":
        return ridge_fit(draw.target, alpha)
    if est == "tl":
        return tl_fit(draw.target, draw.theta_hat, cell.model_relation.H, alpha)
    return lmmse_fit(draw.target, draw.theta_hat, cell.model_relation, cell.model_target,
                     cell.source, moments=moments)


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def analytic_value(cell: Cell, est: str, alpha: float | None) -> float:
    """Formula curve value attached to a point; ``nan`` when no formula applies."""
    cfg = cell.cfg
    t, rel, s = cell.model_target, cell.model_relation, cell.source
    d, n, nt = cell.d, t.n, s.n_tilde
    semi = cfg.analytic_mode == "semi"
    ens = Rng(cfg.base_seed).derive("ensemble", d, cell.sigma_index, est)
    if est == "mltn":
        return an.mltn_risk(d, n, t.sigma_eps2, t.b) if t.isotropic else math.nan
    if est == "ridge":
        if not t.isotropic:
            return math.nan
        if semi:
            return an.ridge_risk_seminonasymptotic(t, alpha, cfg.ensemble_draws, ens)[0]
        return an.ridge_risk_asymptotic(d / n, t.sigma_eps2, alpha, t.b)
    if est == "tl":
        regime = an.Regime.from_counts(d, n, nt)
        if regime.source_band:
            return math.inf
        if semi and (cell.orthonormal or d <= nt - 2):
            return an.tl_risk_seminonasymptotic(t, s, rel, alpha, cfg.ensemble_draws, ens)[0]
        if cell.orthonormal:
            return an.tl_risk_orthonormal_asymptotic(regime, t.sigma_eps2, alpha, rel.sigma_eta2,
                                                     s.sigma_xi2, t.b)
        return cell.general()(t.sigma_eps2, alpha)
    # lmmse: design-ensemble average only
    if an.in_band(d, nt):
        return math.inf
    if not (semi and t.isotropic):
        return math.nan
    gen = as_generator(ens)
    vals = [lmmse_conditional_risk(sample_gaussian_matrix(n, d, None, gen), t, s, rel)
            for _ in range(cfg.ensemble_draws)]
    return float(np.mean(vals))


def run_cell(cfg: ExperimentConfig, d: int, sigma_index: int, *, with_samples: bool = True,
             keep_samples: bool = False):
    """All points of one grid cell, in estimator order.

    With ``keep_samples=True`` also returns ``{estimator: per-trial risks}``
    (at the reported strength), for paired comparisons between estimators.
    """
    cell = Cell.build(cfg, d, sigma_index)
    eta2 = cfg.sigma_eta2_list[sigma_index]
    g_tgt, g_src = gammas(d, cfg.n, cfg.n_tilde)
    grid = cfg.alpha_grid()
    lmmse_ok = not an.in_band(d, cfg.n_tilde)
    moments = None
    if "lmmse" in cfg.estimators and lmmse_ok:
        moments = lmmse_moments(cell.model_target, cell.source, cell.model_relation)

    tuned = {e for e in ("ridge", "tl") if e in cfg.estimators}
    risks: dict[str, list] = {e: [] for e in cfg.estimators}
    if with_samples:
        for k in range(cfg.trials):
            draw = sample_trial(cell, trial_stream(cfg, d, sigma_index, k))
            for est in cfg.estimators:
                if est == "lmmse" and not lmmse_ok:
                    continue
                if est in tuned and grid is not None:
                    risks[est].append([trial_risk(cell, draw, fit(cell, est, draw, a).beta_hat) for a in grid])
                else:
                    bh = fit(cell, est, draw, cell.alphas.get(est), moments).beta_hat
                    risks[est].append(trial_risk(cell, draw, bh))

    points, samples = [], {}
    for est in cfg.estimators:
        alpha = cell.alphas.get(est)
        mean = se = math.nan
        samples[est] = np.asarray(risks[est], dtype=float)
        if est in tuned and grid is not None:
            if with_samples:
                R = np.asarray(risks[est])
                j = int(np.argmin(R.mean(axis=0)))
                alpha = float(grid[j])
                samples[est] = R[:, j]
                mean, se = _mean_se(R[:, j])
            else:
                vals = [analytic_value(cell, est, a) for a in grid]
                alpha = float(grid[int(np.argmin(vals))])
        elif with_samples and risks[est]:
            mean, se = _mean_se(risks[est])
        ana = analytic_value(cell, est, alpha)
        points.append(RiskPoint(d, g_tgt, g_src, est, eta2, alpha, mean, se, ana))
    return (points, samples) if keep_samples else points


def _cell_task(args):
    cfg, d, si, with_samples, keep = args
    with threadpool_limits(1):
        return run_cell(cfg, d, si, with_samples=with_samples, keep_samples=keep)


def _run_tasks(cfg, workers, with_samples, keep):
    if workers < 1:
        raise InvalidParameterError("workers must be at least 1")
    tasks = [(cfg, d, si, with_samples, keep) for si in range(len(cfg.sigma_eta2_list)) for d in cfg.d_grid]
    if workers == 1:
        return tasks, [_cell_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return tasks, list(ex.map(_cell_task, tasks))


def run_sweep(cfg: ExperimentConfig, workers: int = 1, *, with_samples: bool = True) -> list[RiskPoint]:
    """Run every ``(d, sigma_eta2, estimator)`` point of ``cfg``.

    ``with_samples=False`` skips all sampling and returns formula-only points
    (empirical fields ``nan``). Output is sorted by ``(estimator, sigma_eta2, d)``
    and does not depend on ``workers``.
    """
    _, chunks = _run_tasks(cfg, workers, with_samples, False)
    return sort_points([p for c in chunks for p in c])


def run_sweep_with_samples(cfg: ExperimentConfig, workers: int = 1):
    """Like :func:`run_sweep`, plus per-trial risks keyed by ``(estimator, sigma_eta2, d)``."""
    tasks, chunks = _run_tasks(cfg, workers, True, True)
    points, samples = [], {}
    for (_, d, si, _, _), (pts, smp) in zip(tasks, chunks):
        points.extend(pts)
        eta2 = cfg.sigma_eta2_list[si]
        samples.update({(est, eta2, d): v for est, v in smp.items()})
    return sort_points(points), samples


def paired_stderr(a, b) -> float:
    """Standard error of ``mean(a - b)`` for risks measured on the same trials."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return _mean_se(diff)[1]


def sort_points(points) -> list[RiskPoint]:
    return sorted(points, key=RiskPoint.key)


# ----------------------------------------------------------------- compare

@dataclass
class Verdict:
    point: RiskPoint
    status: str  # PASS, FAIL or SKIP
    z: float


@dataclass
class CompareReport:
    verdicts: list
    tolerance_sigmas: float

    @property
    def counts(self) -> dict:
        out = {"PASS": 0, "FAIL": 0, "SKIP": 0}
        for v in self.verdicts:
            out[v.status] += 1
        return out

    @property
    def passed(self) -> bool:
        return self.counts["FAIL"] == 0

    def worst(self, k: int = 5) -> list:
        fails = [v for v in self.verdicts if v.status != "SKIP"]
        return sorted(fails, key=lambda v: -v.z)[:k]

    def summary(self) -> str:
        c = self.counts
        lines = [f"PASS {c['PASS']}  FAIL {c['FAIL']}  SKIP {c['SKIP']}  (tolerance {self.tolerance_sigmas:g} sigma)"]
        for v in self.worst():
            p = v.point
            lines.append(f"  {v.status} {p.estimator:6s} sigma_eta2={p.sigma_eta2:g} d={p.d}: "
                         f"empirical {p.empirical_mean:.6g} +- {p.empirical_stderr:.3g}, "
                         f"analytic {p.analytic:.6g} (z={v.z:.2f})")
        return "\n".join(lines)


def _verdict(p: RiskPoint, k: float) -> Verdict:
    e, a, s = p.empirical_mean, p.analytic, p.empirical_stderr
    if math.isinf(a):
        # band convention: the formula is infinite, the sample mean is unbounded or absent
        return Verdict(p, "PASS", 0.0)
    if math.isnan(a):
        return Verdict(p, "SKIP", 0.0)
    if math.isnan(e):
        return Verdict(p, "FAIL", math.inf)
    diff = abs(e - a)
    if diff == 0:
        return Verdict(p, "PASS", 0.0)
    z = diff / s if s > 0 else math.inf
    return Verdict(p, "PASS" if diff <= k * s else "FAIL", z)


def join_analytic(points, reference) -> list[RiskPoint]:
    """Replace the analytic column of ``points`` by that of ``reference``.

    Raises
    ------
    JoinError
        If the two tables do not cover the same ``(estimator, sigma_eta2, d)`` keys.
    """
    ref = {p.key(): p for p in reference}
    keys = [p.key() for p in points]
    if set(keys) != set(ref) or len(keys) != len(ref):
        missing = sorted(set(keys) ^ set(ref))[:5]
        raise JoinError(f"point grids differ, e.g. {missing}")
    return [RiskPoint(**{**p.__dict__, "analytic": ref[p.key()].analytic}) for p in points]


def compare(points, tolerance_sigmas: float, reference=None) -> CompareReport:
    """PASS iff ``|empirical - analytic| <= k * stderr`` (infinite analytic counts as a band PASS)."""
    if not tolerance_sigmas >= 0:
        raise InvalidParameterError("tolerance must be nonnegative")
    if reference is not None:
        points = join_analytic(points, reference)
    return CompareReport([_verdict(p, tolerance_sigmas) for p in points], tolerance_sigmas)


# --------------------------------------------------------------------- CSV

def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def csv_text(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in sort_points(points):
        w.writerow([p.d, _fmt(p.gamma_tgt), _fmt(p.gamma_src), p.estimator, _fmt(p.sigma_eta2),
                    _fmt(p.alpha_used), _fmt(p.empirical_mean), _fmt(p.empirical_stderr), _fmt(p.analytic)])
    return buf.getvalue()


def emit_csv(points, path) -> Path:
    path = Path(path)
    path.write_text(csv_text(points))
    return path


def _parse(x: str) -> float:
    return math.nan if x == "" else float(x)


def read_csv(path) -> list[RiskPoint]:
    """Inverse of :func:`emit_csv`; an empty ``alpha_used`` reads as ``None``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ConfigError(f"{path} does not have the expected header")
    out = []
    for r in rows[1:]:
        if len(r) != len(CSV_HEADER):
            raise ConfigError(f"{path}: row with {len(r)} fields")
        out.append(RiskPoint(int(r[0]), _parse(r[1]), _parse(r[2]), r[3], _parse(r[4]),
                             None if r[5] == "" else float(r[5]), _parse(r[6]), _parse(r[7]), _parse(r[8])))
    return out


# --------------------------------------------------------------------- SVG

COLORS = {"mltn": "tab:red", "ridge": "tab:green", "tl": "tab:blue", "lmmse": "tab:purple"}
LABELS = {"mltn": "min-norm LS", "ridge": "ridge (tuned)", "tl": "transfer (tuned)", "lmmse": "LMMSE"}


def _svg_paths(path: Path, groups) -> list[Path]:
    if len(groups) <= 1:
        return [path]
    return [path.with_name(f"{path.stem}_eta2_{g:g}{path.suffix or '.svg'}") for g in groups]


def emit_svg(points, path, *, n: int | None = None, x_scale: str = "log") -> list[Path]:
    """One SVG per ``sigma_eta2`` value; several groups get a suffixed file name.

    Solid lines are the analytic values, markers with error bars the empirical
    means. Infinite analytic values are drawn as dotted vertical asymptotes.
    """
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "tlreg"
    path = Path(path)
    points = sort_points(points)
    groups = sorted({p.sigma_eta2 for p in points})
    written = []
    for g, out in zip(groups or [None], _svg_paths(path, groups)):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        pts = [p for p in points if p.sigma_eta2 == g]
        for est in ESTIMATORS:
            sel = [p for p in pts if p.estimator == est]
            if not sel:
                continue
            x = np.array([p.gamma_tgt for p in sel])
            ana = np.array([p.analytic for p in sel])
            fin = np.isfinite(ana)
            ax.plot(np.where(fin, x, np.nan), np.where(fin, ana, np.nan), "-", color=COLORS[est],
                    label=LABELS[est], lw=1.4)
            for xi in x[np.isinf(ana)]:
                ax.axvline(xi, color=COLORS[est], ls=":", lw=0.8)
            emp = np.array([p.empirical_mean for p in sel])
            se = np.array([p.empirical_stderr for p in sel])
            ok = np.isfinite(emp)
            if ok.any():
                ax.errorbar(x[ok], emp[ok], yerr=se[ok], fmt="o", ms=3, color=COLORS[est], capsize=2)
        ax.set_xscale(x_scale)
        ax.set_yscale("log" if pts else "linear")
        ax.set_xlabel("d / n")
        ax.set_ylabel("test error")
        if g is not None:
            ax.set_title(f"sigma_eta2 = {g:g}")
        if pts:
            finite = [p.empirical_mean for p in pts if np.isfinite(p.empirical_mean)]
            finite += [p.analytic for p in pts if np.isfinite(p.analytic)]
            if finite:
                lo = max(min(finite) * 0.8, 1e-6)
                ax.set_ylim(lo, min(max(finite) * 1.5, lo * 1e4))
            ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(out)
    return written

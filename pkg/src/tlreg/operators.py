"""Task-relation operators ``H`` at a chosen resolution ``d``.

All built-in families are scaled so that ``||H||_F^2 / d == 1``, which keeps
the relation energy fixed as the resolution changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.fft
import scipy.linalg as sla

from .errors import EmptyDimensionError, InvalidParameterError

KINDS = ("identity", "dct_transpose", "circulant_kernel")


@dataclass(frozen=True)
class OperatorSpec:
    kind: str
    d: int
    w_ker: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown operator kind {self.kind!r}")
        if self.kind == "circulant_kernel" and not (self.w_ker and self.w_ker > 0):
            raise InvalidParameterError("circulant_kernel needs w_ker > 0")

    def at(self, d: int) -> "OperatorSpec":
        return OperatorSpec(self.kind, d, self.w_ker)


@dataclass(frozen=True)
class OperatorMatrix:
    H: np.ndarray = field(repr=False)
    kappa_H: float
    min_singular: float
    kind: str

    @property
    def d(self) -> int:
        return self.H.shape[0]

    @property
    def orthonormal(self) -> bool:
        return self.kind in ("identity", "dct_transpose")


def parse_operator(text: str, d: int = 1) -> OperatorSpec:
    """Parse ``identity``, ``dct`` or ``circ:w=<float>`` (``w`` may be a ratio like ``2/75``)."""
    text = text.strip()
    if text == "identity":
        return OperatorSpec("identity", d)
    if text == "dct":
        return OperatorSpec("dct_transpose", d)
    if text.startswith("circ:"):
        key, _, val = text[5:].partition("=")
        if key.strip() != "w" or not val:
            raise InvalidParameterError(f"bad circulant spec {text!r}")
        try:
            w = float(Fraction(val.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidParameterError(f"bad kernel width in {text!r}") from exc
        return OperatorSpec("circulant_kernel", d, w)
    raise InvalidParameterError(f"unknown operator spec {text!r}")


def format_operator(spec: OperatorSpec) -> str:
    if spec.kind == "identity":
        return "identity"
    if spec.kind == "dct_transpose":
        return "dct"
    return f"circ:w={spec.w_ker!r}"


def dct_matrix(d: int) -> np.ndarray:
    """Orthonormal type-II DCT analysis matrix ``Psi`` (``Psi @ x == dct(x)``)."""
    return scipy.fft.dct(np.eye(d), type=2, norm="ortho", axis=0)


def circulant_kernel(d: int, w_ker: float, exp_weight: float = 1.0) -> np.ndarray:
    """First column of the unnormalized circulant: ``delta + exp(-|tau - 0.5| / w)``.

    The exponential is sampled at ``tau_j = j / d`` and rotated so its peak sits
    at index 0, where the unit delta sample is added.
    """
    tau = np.arange(d) / d
    e = exp_weight * np.exp(-np.abs(tau - 0.5) / w_ker)
    k = np.roll(e, -int(np.argmax(e)))
    k[0] += 1.0
    return k


def build_operator(spec: OperatorSpec, *, exp_weight: float = 1.0) -> OperatorMatrix:
    """Materialize ``H`` for ``spec``.

    ``exp_weight`` scales the exponential part of the circulant kernel; it is a
    test hook (``0`` leaves only the delta).
    """
    d = spec.d
    if d < 1:
        raise EmptyDimensionError("operator dimension must be at least 1")
    if spec.kind == "identity":
        H = np.eye(d)
    elif spec.kind == "dct_transpose":
        H = dct_matrix(d).T
    else:
        k = circulant_kernel(d, spec.w_ker, exp_weight)
        H = sla.circulant(k) / np.linalg.norm(k)
    kappa = float(np.sum(H * H) / d)
    smin = float(np.linalg.svd(H, compute_uv=False)[-1])
    return OperatorMatrix(H, kappa, smin, spec.kind)


@dataclass
class ResolutionReport:
    kappas: dict
    passed: bool


def resolution_consistency_check(spec: OperatorSpec, d_list, tol: float = 1e-12) -> ResolutionReport:
    """``kappa_H`` at each resolution in ``d_list``; passes when all equal 1 within ``tol``."""
    d_list = list(d_list)
    if not d_list:
        raise InvalidParameterError("d_list must be nonempty")
    kappas = {d: build_operator(spec.at(d)).kappa_H for d in d_list}
    return ResolutionReport(kappas, all(abs(k - 1.0) <= tol for k in kappas.values()))

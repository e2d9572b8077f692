"""Seeded random ensembles and the dense kernels used by every other module.

Random streams are addressed by value (:class:`Rng`) so that a trial's draws
depend only on its ``(seed, stream_id)`` pair, never on the order in which
trials are scheduled.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
import scipy.linalg as sla

from .errors import CovarianceNotSPDError, ShapeError, SymmetryError

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Rng:
    """Addressable random stream.

    Parameters
    ----------
    seed : int
        Base 64-bit seed of the experiment.
    stream_id : int
        64-bit sub-stream index. Use :meth:`derive` to obtain child streams.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _MASK64 and 0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def derive(self, *keys) -> "Rng":
        """Child stream keyed by ``keys`` (ints, floats or strings)."""
        h = hashlib.blake2b(digest_size=8)
        h.update(self.stream_id.to_bytes(8, "little"))
        for k in keys:
            h.update(repr(k).encode())
            h.update(b"\x1f")
        return Rng(self.seed, int.from_bytes(h.digest(), "little"))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


RngLike = Union[Rng, np.random.Generator, int]


def as_generator(rng: RngLike) -> np.random.Generator:
    """Turn an :class:`Rng`, a seed or a live generator into a generator.

    A live ``np.random.Generator`` is returned as-is (and consumed by the caller);
    an :class:`Rng` always restarts its stream.
    """
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, Rng):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return Rng(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def cholesky_factor(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, raising :class:`CovarianceNotSPDError` on failure."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ShapeError(f"covariance must be square, got {cov.shape}")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceNotSPDError("covariance matrix is not positive definite") from exc


def sample_gaussian_matrix(rows: int, cols: int, row_covariance=None, rng: RngLike = 0) -> np.ndarray:
    """Matrix whose rows are i.i.d. ``N(0, row_covariance)``.

    ``row_covariance=None`` means the identity; that path draws standard
    normals directly and never factors a matrix.
    """
    gen = as_generator(rng)
    G = gen.standard_normal((rows, cols))
    if row_covariance is None:
        return G
    cov = np.asarray(row_covariance, dtype=float)
    if cov.shape != (cols, cols):
        raise ShapeError(f"row covariance {cov.shape} does not match cols={cols}")
    L = cholesky_factor(cov)
    return G @ L.T


def _rank_cutoff(s: np.ndarray, shape, rel_tol):
    if rel_tol is None:
        rel_tol = 1e-12 * max(shape)
    smax = s[0] if s.size else 0.0
    # values whose reciprocal overflows are treated as zero
    return max(rel_tol * smax, 1.0 / np.finfo(float).max)


def pseudoinverse_apply(A, b, rel_tol: float | None = None) -> np.ndarray:
    """Minimum-norm least-squares solution ``A^+ b`` via the SVD.

    Singular values below ``rel_tol * sigma_max`` are treated as zero
    (default ``rel_tol = 1e-12 * max(rows, cols)``).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.ndim != 1 or b.shape[0] != A.shape[0]:
        raise ShapeError(f"cannot apply pseudoinverse of {A.shape} to vector {b.shape}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cutoff = _rank_cutoff(s, A.shape, rel_tol)
    keep = s > cutoff
    if not np.any(keep):
        return np.zeros(A.shape[1])
    coef = (U[:, keep].T @ b) / s[keep]
    return Vt[keep].T @ coef


def pseudoinverse(A, rel_tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse with the same rank policy as :func:`pseudoinverse_apply`."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {A.shape}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cutoff = _rank_cutoff(s, A.shape, rel_tol)
    keep = s > cutoff
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


class EigenDecomposition(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray
    has_negative: bool


def sym_eigendecomposition(S) -> EigenDecomposition:
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending.

    ``has_negative`` flags eigenvalues below ``-1e-10 * max|S|``.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"expected a square matrix, got {S.shape}")
    scale = np.max(np.abs(S)) if S.size else 0.0
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-10 * scale:
        raise SymmetryError("matrix is not symmetric")
    w, V = np.linalg.eigh(S)
    w, V = w[::-1], V[:, ::-1]
    return EigenDecomposition(w, V, bool(np.any(w < -1e-10 * scale)))


def solve_spd(A, b, *, jitter: bool = True) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A`` by Cholesky.

    On factorization failure a jitter of ``1e-12 * trace(A) / d`` is added once.
    """
    A = np.asarray(A, dtype=float)
    try:
        c = sla.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        if not jitter:
            raise
        d = A.shape[0]
        eps = 1e-12 * np.trace(A) / d
        c = sla.cho_factor(A + eps * np.eye(d), lower=True, check_finite=False)
    return sla.cho_solve(c, b, check_finite=False)


# Moments of the minimum-norm source solution. ``Z`` is an ``n_tilde x d``
# standard Gaussian matrix throughout.

def expected_projection(d: int, n_tilde: int) -> float:
    """Scalar ``s`` with ``E[Z^+ Z] = s I``."""
    return 1.0 if d <= n_tilde else n_tilde / d


def expected_gram_pinv(d: int, n_tilde: int) -> float:
    """Scalar ``s`` with ``E[(Z^T Z)^+] = s I``; ``inf`` when ``|d - n_tilde| <= 1``."""
    if d <= n_tilde - 2:
        return 1.0 / (n_tilde - d - 1)
    if d <= n_tilde + 1:
        return float("inf")
    return (n_tilde / d) / (d - n_tilde - 1)


def expected_projected_quadratic(A, n_tilde: int) -> np.ndarray:
    """``E[P A P]`` for ``P = Z^+ Z`` and symmetric ``A``.

    For ``d > n_tilde`` the row space of ``Z`` is a uniformly random subspace of
    a real space, giving ``E[P A P] = c1 A + c2 tr(A) I`` with
    ``c1 = n(nd + d - 2) / (d(d-1)(d+2))`` and ``c2 = n(d - n) / (d(d-1)(d+2))``.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    if d <= n_tilde:
        return A.copy()
    nt = n_tilde
    den = d * (d - 1) * (d + 2)
    c1 = nt * (nt * d + d - 2) / den
    c2 = nt * (d - nt) / den
    return c1 * A + c2 * np.trace(A) * np.eye(d)

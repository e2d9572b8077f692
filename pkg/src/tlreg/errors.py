"""Exception types raised across the package."""


class TLRegError(Exception):
    """Base class for all package errors."""


class ShapeError(TLRegError, ValueError):
    """Array shapes are not conformable."""


class InvalidParameterError(TLRegError, ValueError):
    """A scalar parameter is outside its admissible range."""


class CovarianceNotSPDError(TLRegError, ValueError):
    """A covariance matrix failed its Cholesky factorization."""


class SymmetryError(TLRegError, ValueError):
    """A matrix expected to be symmetric is not."""


class EmptyDimensionError(TLRegError, ValueError):
    """A dimension of zero was requested."""


class InfiniteCovarianceError(TLRegError, ArithmeticError):
    """The source-solution covariance is infinite at this dimension."""


class JointCovarianceSingularError(TLRegError, ArithmeticError):
    """The joint covariance of (y, theta_hat) is singular."""

    def __init__(self, message: str, smallest_eigenvalue: float):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class ScopeError(TLRegError, ValueError):
    """The requested quantity has no closed form in this regime."""


class MisspecReductionError(TLRegError, ValueError):
    """The misspecification reduction needs isotropic features."""


class FixedPointError(TLRegError, ArithmeticError):
    """The resolvent fixed-point iteration did not converge."""

    def __init__(self, message: str, c: float, residual: float, iterations: int):
        super().__init__(message)
        self.c = c
        self.residual = residual
        self.iterations = iterations


class ConfigError(TLRegError, ValueError):
    """Malformed or inconsistent experiment configuration."""


class JoinError(TLRegError, ValueError):
    """Two risk tables do not cover the same grid."""

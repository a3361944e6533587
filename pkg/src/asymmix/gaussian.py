"""Multivariate Gaussian building block with a cached Cholesky factor."""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._validation import check_point
from .exceptions import ContractViolation

LOG_2PI = np.log(2.0 * np.pi)


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianParams:
    """Mean and covariance of one Gaussian.

    The Cholesky factor and log-determinant are computed once at construction;
    a covariance that is not exactly symmetric or not positive definite is
    rejected.
    """

    mean: np.ndarray
    covariance: np.ndarray
    cholesky: np.ndarray = field(init=False, repr=False)
    logdet: float = field(init=False, repr=False)

    def __post_init__(self):
        mean = _frozen(np.atleast_1d(self.mean))
        cov = _frozen(np.atleast_2d(self.covariance))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise ContractViolation(
                f"mean shape {mean.shape} and covariance shape {cov.shape} disagree"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ContractViolation("Gaussian parameters must be finite")
        if np.max(np.abs(cov - cov.T)) != 0.0:
            raise ContractViolation("covariance is not symmetric")
        try:
            chol = linalg.cholesky(cov, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise ContractViolation("covariance is not positive definite") from exc
        diag = np.diag(chol)
        if not np.all(diag > 0.0):
            raise ContractViolation("covariance is not positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "cholesky", _frozen(chol))
        object.__setattr__(self, "logdet", float(2.0 * np.sum(np.log(diag))))

    @property
    def dim(self):
        return self.mean.shape[0]


def log_gaussian_rows(X, mean, cholesky, logdet):
    """Log-density of every row of ``X`` (N, D) under one Gaussian.

    Uses a triangular solve against the Cholesky factor; the inverse
    covariance is never formed.
    """
    diff = (X - mean).T
    sol = linalg.solve_triangular(cholesky, diff, lower=True, check_finite=False)
    maha = np.einsum("dn,dn->n", sol, sol)
    d = X.shape[1]
    return -0.5 * (d * LOG_2PI + logdet + maha)


def log_gaussian_pdf(x, g):
    """Log-density of a single point ``x`` under Gaussian ``g``."""
    x = check_point(x, g.dim)
    return float(log_gaussian_rows(x[None, :], g.mean, g.cholesky, g.logdet)[0])

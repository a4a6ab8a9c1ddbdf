"""Gaussian belief containers and the dense linear-algebra primitives.

Everything downstream (linearization, decorrelation, the partitioned filter,
the baselines) builds on the three value types and two matrix operations
defined here.  Covariances are symmetrized on construction and validated
PSD so that numerical asymmetry cannot accumulate across filter steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (
    NonSymmetricInput,
    NotPositiveSemiDefinite,
    SingularInnovation,
)

__all__ = [
    "GaussianState",
    "MeasurementModel",
    "LinearStateModel",
    "matrix_sqrt",
    "sym_eig_ascending",
    "symmetrize",
]

# Relative eigenvalue slack when validating PSD covariances: roundoff from
# repeated P - K S K' updates can leave eigenvalues slightly negative.
PSD_SLACK = 1e-9

# Innovation matrices with condition estimates above this are treated as
# singular rather than solved.
COND_LIMIT = 1e12


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the symmetric part (A + A') / 2 of a square matrix."""
    return 0.5 * (a + a.T)


def _square(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    return m


def _check_psd(cov: np.ndarray, name: str) -> np.ndarray:
    cov = symmetrize(_square(cov, name))
    if not np.all(np.isfinite(cov)):
        raise NotPositiveSemiDefinite(f"{name} contains non-finite entries")
    w = np.linalg.eigvalsh(cov)
    if w[0] < -PSD_SLACK * max(w[-1], 0.0):
        raise NotPositiveSemiDefinite(
            f"{name} has eigenvalue {w[0]:.3e} below the PSD tolerance "
            f"(largest eigenvalue {w[-1]:.3e})"
        )
    return cov


@dataclass(frozen=True)
class GaussianState:
    """Gaussian belief N(mean, cov) over an n-dimensional state.

    The covariance is symmetrized on construction and must be PSD up to a
    relative slack of 1e-9 on the smallest eigenvalue.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {mean.shape}")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean contains non-finite entries")
        cov = _check_psd(self.cov, "state covariance")
        if cov.shape[0] != mean.shape[0]:
            raise ValueError(
                f"mean has dimension {mean.shape[0]} but covariance is {cov.shape}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class MeasurementModel:
    """A realized measurement: nonlinear map, observed value, noise covariance.

    Parameters
    ----------
    func : callable
        Deterministic map from a state vector (n,) to a measurement vector
        (d,).  Must be finite wherever the filters probe it.
    value : array_like, shape (d,)
        The realized measurement.
    noise_cov : array_like, shape (d, d)
        Additive Gaussian noise covariance; must be symmetric positive
        definite.
    batch : callable, optional
        Vectorized variant mapping (N, n) states to (N, d) measurements.
        Used by the particle filters when present; must agree with ``func``.
    """

    func: Callable[[np.ndarray], np.ndarray]
    value: np.ndarray
    noise_cov: np.ndarray
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, kw_only=True
    )

    def __post_init__(self):
        value = np.atleast_1d(np.asarray(self.value, dtype=float))
        if value.ndim != 1:
            raise ValueError(f"measurement value must be a vector, got {value.shape}")
        noise = symmetrize(_square(self.noise_cov, "measurement noise covariance"))
        if noise.shape[0] != value.shape[0]:
            raise ValueError(
                f"value has dimension {value.shape[0]} but noise is {noise.shape}"
            )
        try:
            np.linalg.cholesky(noise)
        except np.linalg.LinAlgError:
            raise NotPositiveSemiDefinite(
                "measurement noise covariance is not positive definite"
            ) from None
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "noise_cov", noise)

    @property
    def dim(self) -> int:
        return self.value.shape[0]


@dataclass(frozen=True)
class AnalyticMeasurementModel(MeasurementModel):
    """Measurement model carrying closed-form first and second derivatives.

    ``jacobian(x)`` returns the (d, n) Jacobian and ``hessians(x)`` the
    (d, n, n) stack of per-component Hessians.  Required by the baselines
    that linearize analytically (EKF, analytic EKF2, IEKF, RUF).
    """

    jacobian: Callable[[np.ndarray], np.ndarray] = field(kw_only=True, default=None)
    hessians: Callable[[np.ndarray], np.ndarray] = field(kw_only=True, default=None)

    def __post_init__(self):
        super().__post_init__()
        if self.jacobian is None:
            raise ValueError("AnalyticMeasurementModel requires a jacobian callable")


@dataclass(frozen=True)
class LinearStateModel:
    """Linear-Gaussian dynamics x' = F x + w,  w ~ N(0, W)."""

    transition: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        trans = _square(self.transition, "transition matrix")
        noise = _check_psd(self.noise_cov, "process noise covariance")
        if noise.shape != trans.shape:
            raise ValueError(
                f"transition is {trans.shape} but process noise is {noise.shape}"
            )
        object.__setattr__(self, "transition", trans)
        object.__setattr__(self, "noise_cov", noise)

    @property
    def dim(self) -> int:
        return self.transition.shape[0]


def matrix_sqrt(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor L with L L' = cov.

    If the factorization fails, the matrix is retried with a jitter of
    1e-12 * trace/n added to the diagonal, escalating tenfold at most three
    times before NotPositiveSemiDefinite is raised.  The diagonal of the
    returned factor is non-negative.
    """
    cov = _square(cov, "covariance")
    asym = np.max(np.abs(cov - cov.T)) if cov.size else 0.0
    if asym > 1e-12 * (1.0 + np.max(np.abs(cov))):
        raise NonSymmetricInput(
            f"covariance asymmetry {asym:.3e} exceeds tolerance"
        )
    if not np.all(np.isfinite(cov)):
        raise NotPositiveSemiDefinite("covariance contains non-finite entries")
    n = cov.shape[0]
    jitter = 1e-12 * np.trace(cov) / n
    attempt = cov
    for k in range(5):
        try:
            return np.linalg.cholesky(attempt)
        except np.linalg.LinAlgError:
            if k == 4 or jitter <= 0.0:
                break
            attempt = cov + (jitter * 10.0**k) * np.eye(n)
    raise NotPositiveSemiDefinite(
        "covariance is not positive semi-definite (Cholesky failed after jitter)"
    )


def sym_eig_ascending(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix with a fixed convention.

    Returns ``(U, w)`` with eigenvalues ``w`` sorted ascending and the
    columns of ``U`` orthonormal eigenvectors.  Each column's sign is
    canonicalized so that its largest-magnitude entry is positive (first
    occurrence wins on ties), which makes downstream transforms
    reproducible across runs.

    Raises
    ------
    NonSymmetricInput
        If the asymmetry exceeds 1e-10 relative to the largest entry.
    """
    s = _square(s, "matrix")
    scale = 1.0 + (np.max(np.abs(s)) if s.size else 0.0)
    asym = np.max(np.abs(s - s.T)) if s.size else 0.0
    if asym > 1e-10 * scale:
        raise NonSymmetricInput(f"asymmetry {asym:.3e} exceeds 1e-10 relative tolerance")
    w, u = np.linalg.eigh(symmetrize(s))
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0.0:
            u[:, j] = -u[:, j]
    return u, w


def _solve_spd(s: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve S X = B for symmetric positive-definite S.

    Used for innovation solves; raises SingularInnovation when the
    condition estimate exceeds 1e12 or the factorization fails, so filters
    never form an explicit inverse of a near-singular innovation.
    """
    s = symmetrize(np.asarray(s, dtype=float))
    if not np.all(np.isfinite(s)):
        raise SingularInnovation("innovation covariance contains non-finite entries")
    cond = np.linalg.cond(s)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularInnovation(
            f"innovation covariance condition estimate {cond:.3e} exceeds 1e12"
        )
    try:
        c, low = scipy.linalg.cho_factor(s, lower=True)
    except scipy.linalg.LinAlgError:
        raise SingularInnovation("innovation covariance factorization failed") from None
    return scipy.linalg.cho_solve((c, low), b)


def _gain(s: np.ndarray, cross: np.ndarray) -> np.ndarray:
    """Kalman gain  cross @ inv(S)  via an SPD solve."""
    return _solve_spd(s, cross.T).T

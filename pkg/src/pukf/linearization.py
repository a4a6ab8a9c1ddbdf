"""Derivative-free second-order statistical linearization and EKF2 moments.

The central object is :func:`linearize`, which probes a nonlinear map at
symmetric sigma-like points and recovers

* ``M``    -- the Jacobian right-multiplied by the covariance square root,
* ``Q[k]`` -- the per-output Hessian congruence-transformed by the square
  root, entry by entry from second differences.

Both are exact (no truncation error) whenever the map is polynomial of
degree at most two, for any probe scale gamma.  The trace statistics
``xi[k] = tr(Q[k])`` and ``Xi[k, l] = tr(Q[k] Q[l])`` are then the
second-order bias and spread corrections that turn a first-order update
into an EKF2-style update without any analytic derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    GaussianState,
    MeasurementModel,
    _gain,
    matrix_sqrt,
    symmetrize,
)
from .errors import NonFiniteEvaluation

__all__ = [
    "GAMMA_DEFAULT",
    "LinearizationSummary",
    "linearize",
    "ekf2_update",
    "ekf2_update_numerical",
    "ekf2_predict",
]

# Probe scale that matches the fourth moment of a Gaussian, so the diagonal
# second differences are unbiased for quartic terms as well.
GAMMA_DEFAULT = math.sqrt(3.0)


@dataclass(frozen=True)
class LinearizationSummary:
    """Second-order probe statistics of a map at a given belief.

    Attributes
    ----------
    M : ndarray, shape (d, n)
        Central-difference estimate of J @ sqrt_cov.
    Q : ndarray, shape (d, n, n)
        Per-output symmetric second-difference matrices, estimates of
        sqrt_cov' @ H_k @ sqrt_cov.
    xi : ndarray, shape (d,)
        Second-order mean corrections, xi[k] = trace(Q[k]).
    Xi : ndarray, shape (d, d)
        Second-order spread corrections, Xi[k, l] = trace(Q[k] @ Q[l]).
        Symmetric PSD by construction.
    h_at_mean : ndarray, shape (d,)
        The map evaluated at the linearization mean.
    """

    M: np.ndarray
    Q: np.ndarray
    xi: np.ndarray
    Xi: np.ndarray
    h_at_mean: np.ndarray


def _eval(func, x, d=None):
    y = np.atleast_1d(np.asarray(func(x), dtype=float))
    if not np.all(np.isfinite(y)):
        raise NonFiniteEvaluation(
            f"function returned non-finite value {y} at probe point {x}"
        )
    if d is not None and y.shape != (d,):
        raise ValueError(f"function returned shape {y.shape}, expected ({d},)")
    return y


def linearize(
    func, mean: np.ndarray, sqrt_cov: np.ndarray, gamma: float = GAMMA_DEFAULT
) -> LinearizationSummary:
    """Probe ``func`` around ``mean`` and assemble second-order statistics.

    Parameters
    ----------
    func : callable
        Map from (n,) to (d,); evaluated at 1 + 2n + n(n-1)/2 points.
    mean : ndarray, shape (n,)
        Expansion point.
    sqrt_cov : ndarray, shape (n, n)
        Square root of the covariance (typically from :func:`matrix_sqrt`);
        probe offsets are gamma times its columns.
    gamma : float
        Positive probe scale.  The default sqrt(3) matches the Gaussian
        fourth moment.

    Raises
    ------
    NonFiniteEvaluation
        If any probe returns NaN or infinity.
    """
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    mean = np.asarray(mean, dtype=float)
    sqrt_cov = np.asarray(sqrt_cov, dtype=float)
    n = mean.shape[0]

    h0 = _eval(func, mean)
    d = h0.shape[0]
    delta = gamma * sqrt_cov.T  # row i is the i-th probe offset

    plus = np.empty((n, d))
    minus = np.empty((n, d))
    for i in range(n):
        plus[i] = _eval(func, mean + delta[i], d)
        minus[i] = _eval(func, mean - delta[i], d)

    M = (plus - minus).T / (2.0 * gamma)

    g2 = gamma * gamma
    Q = np.zeros((d, n, n))
    diag = (plus + minus - 2.0 * h0) / g2  # (n, d)
    for i in range(n):
        Q[:, i, i] = diag[i]
    for i in range(n):
        for j in range(i + 1, n):
            cross = _eval(func, mean + delta[i] + delta[j], d)
            qij = (cross - plus[i] - plus[j] + h0) / g2
            Q[:, i, j] = qij
            Q[:, j, i] = qij

    xi = np.trace(Q, axis1=1, axis2=2)
    Xi = np.einsum("kij,lij->kl", Q, Q)
    Xi = np.triu(Xi) + np.triu(Xi, 1).T  # exactly symmetric
    return LinearizationSummary(M=M, Q=Q, xi=xi, Xi=Xi, h_at_mean=h0)


def ekf2_update(
    prior: GaussianState, model: MeasurementModel, lin: LinearizationSummary
) -> GaussianState:
    """Second-order measurement update from probe statistics.

    ``lin`` must have been computed at the prior mean with the square root
    of the prior covariance.  The update is

        yhat = h(mu) + xi/2
        S    = M M' + Xi/2 + R
        K    = sqrtP M' inv(S)
        mu+  = mu + K (y - yhat)
        P+   = P - K S K'

    Raises SingularInnovation if S cannot be solved.
    """
    sqrt_p = matrix_sqrt(prior.cov)
    yhat = lin.h_at_mean + 0.5 * lin.xi
    s = symmetrize(lin.M @ lin.M.T + 0.5 * lin.Xi + model.noise_cov)
    gain = _gain(s, sqrt_p @ lin.M.T)
    mean = prior.mean + gain @ (model.value - yhat)
    cov = symmetrize(prior.cov - gain @ s @ gain.T)
    return GaussianState(mean, cov)


def ekf2_update_numerical(
    prior: GaussianState, model: MeasurementModel, gamma: float = GAMMA_DEFAULT
) -> GaussianState:
    """Convenience wrapper: linearize at the prior, then update."""
    lin = linearize(model.func, prior.mean, matrix_sqrt(prior.cov), gamma)
    return ekf2_update(prior, model, lin)


def ekf2_predict(
    prior: GaussianState,
    func,
    noise_cov: np.ndarray,
    gamma: float = GAMMA_DEFAULT,
) -> GaussianState:
    """Second-order prediction through a nonlinear transition.

    Propagates N(mu, P) through ``func`` with additive noise W:

        mu- = f(mu) + xi/2
        P-  = M M' + Xi/2 + W
    """
    noise_cov = symmetrize(np.asarray(noise_cov, dtype=float))
    lin = linearize(func, prior.mean, matrix_sqrt(prior.cov), gamma)
    mean = lin.h_at_mean + 0.5 * lin.xi
    cov = symmetrize(lin.M @ lin.M.T + 0.5 * lin.Xi + noise_cov)
    return GaussianState(mean, cov)

"""Measurement decorrelation that minimizes elementwise nonlinearity.

A measurement model can be mixed by any invertible matrix D without
changing the (second-order) posterior, but the amount of nonlinearity
carried by each transformed element does change.  Whitening the noise and
then rotating into the eigenbasis of the whitened spread correction Xi
makes the transformed noise the identity and the per-element nonlinearity
the (ascending) eigenvalues, which is the minimizing ordering: no other
orthonormal mixing gives its first element less nonlinearity than the
smallest eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .core import MeasurementModel, symmetrize, sym_eig_ascending
from .errors import SingularNoiseSqrt

__all__ = [
    "DecorrelationResult",
    "nonlinearity",
    "decorrelate",
    "transform_model",
]


@dataclass(frozen=True)
class DecorrelationResult:
    """Outcome of a decorrelation pass.

    Attributes
    ----------
    D : ndarray, shape (d, d)
        Invertible transform; D R D' = I and D Xi D' = diag(lambdas).
    lambdas : ndarray, shape (d,)
        Per-element nonlinearity of the transformed model, ascending.
        Negative eigenvalues from roundoff are clamped to zero.
    split_k : int
        Number of leading elements at or below the threshold, forced to at
        least 1 so a partitioned update always makes progress.
    """

    D: np.ndarray
    lambdas: np.ndarray
    split_k: int


def nonlinearity(Xi: np.ndarray, noise_cov: np.ndarray) -> float:
    """Total nonlinearity trace(inv(R) Xi) of a model at a given belief.

    Invariant under invertible re-mixing of the measurement vector, so it
    measures how non-quadratic-free the model is regardless of
    parametrization.
    """
    Xi = np.asarray(Xi, dtype=float)
    noise_cov = np.asarray(noise_cov, dtype=float)
    c, low = scipy.linalg.cho_factor(noise_cov, lower=True)
    return float(np.trace(scipy.linalg.cho_solve((c, low), Xi)))


def _check_sqrt_invertible(sqrt_noise: np.ndarray) -> None:
    diag = np.abs(np.diag(sqrt_noise))
    if diag.min() <= 0.0 or diag.max() / diag.min() > 1e12:
        raise SingularNoiseSqrt(
            "measurement-noise square root is numerically singular"
        )


def decorrelate(
    Xi: np.ndarray,
    sqrt_noise: Optional[np.ndarray],
    threshold: float,
) -> DecorrelationResult:
    """Find the transform that diagonalizes the whitened spread correction.

    Parameters
    ----------
    Xi : ndarray, shape (d, d)
        Symmetric PSD spread-correction matrix from a linearization.
    sqrt_noise : ndarray or None
        Lower-triangular square root of the measurement noise covariance.
        ``None`` means the noise is already the identity and the whitening
        solves are skipped.
    threshold : float
        Extended-real nonlinearity cutoff.  split_k counts eigenvalues
        at or below it; -inf forces single-element splits, +inf accepts
        everything in one block.

    Returns
    -------
    DecorrelationResult
        With D = U' inv(sqrt_noise) for the eigenvectors U of
        inv(sqrt_noise) Xi inv(sqrt_noise)'.
    """
    Xi = symmetrize(np.asarray(Xi, dtype=float))
    if sqrt_noise is None:
        whitened = Xi
    else:
        sqrt_noise = np.asarray(sqrt_noise, dtype=float)
        _check_sqrt_invertible(sqrt_noise)
        half = scipy.linalg.solve_triangular(sqrt_noise, Xi, lower=True)
        whitened = scipy.linalg.solve_triangular(
            sqrt_noise, half.T, lower=True
        ).T
        whitened = symmetrize(whitened)
    u, w = sym_eig_ascending(whitened)
    lambdas = np.clip(w, 0.0, None)
    if sqrt_noise is None:
        d_mat = u.T
    else:
        # D' = inv(sqrt_noise)' U  via a triangular solve
        d_mat = scipy.linalg.solve_triangular(
            sqrt_noise.T, u, lower=False
        ).T
    split_k = int(np.count_nonzero(lambdas <= threshold))
    if split_k == 0:
        split_k = 1
    return DecorrelationResult(D=d_mat, lambdas=lambdas, split_k=split_k)


def transform_model(model: MeasurementModel, rows: np.ndarray) -> MeasurementModel:
    """Mix a measurement model by a row block: y -> rows @ y.

    The returned model evaluates ``rows @ func(x)``, carries the mixed
    value and noise covariance, and keeps a vectorized ``batch`` when the
    source model has one.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    func = model.func
    mixed_batch = None
    if model.batch is not None:
        src_batch = model.batch
        mixed_batch = lambda xs: src_batch(xs) @ rows.T  # noqa: E731
    return MeasurementModel(
        func=lambda x: rows @ np.asarray(func(x), dtype=float),
        value=rows @ model.value,
        noise_cov=symmetrize(rows @ model.noise_cov @ rows.T),
        batch=mixed_batch,
    )

"""Partitioned measurement updates driven by the nonlinearity spectrum.

Instead of absorbing a d-dimensional measurement in one shot, the update
decorrelates the measurement so the transformed noise is white and the
per-element nonlinearity is the ascending eigenvalue spectrum of the
whitened spread correction.  The most-linear block (everything at or below
a threshold, or the single best element when nothing qualifies) is applied
first; the remaining elements are re-linearized at the partially updated
belief, where there is less prior spread and therefore less nonlinearity
left to commit to.  The loop repeats until the measurement is exhausted.

With threshold +inf this collapses to a single full second-order update;
with -inf it processes one transformed element per round.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import GaussianState, MeasurementModel, _gain, matrix_sqrt, symmetrize
from .decorrelation import decorrelate
from .errors import RoundLimitExceeded
from .linearization import GAMMA_DEFAULT, linearize

__all__ = [
    "PukfConfig",
    "PartialUpdateRound",
    "PartialUpdateTrace",
    "pukf_update",
    "pukf_step",
]


@dataclass(frozen=True)
class PukfConfig:
    """Tuning knobs for a partitioned update.

    threshold is the extended-real nonlinearity cutoff (default 1.0: accept
    transformed elements whose nonlinearity is at most the noise floor).
    gamma is the linearization probe scale.  max_rounds defaults to the
    measurement dimension, which the round logic can never exceed since
    every round consumes at least one element; a smaller explicit value
    turns an overrun into RoundLimitExceeded.
    """

    threshold: float = 1.0
    gamma: float = GAMMA_DEFAULT
    max_rounds: Optional[int] = None

    def __post_init__(self):
        if np.isnan(self.threshold):
            raise ValueError("threshold must not be NaN")
        if not (self.gamma > 0.0 and np.isfinite(self.gamma)):
            raise ValueError(f"gamma must be a positive finite number, got {self.gamma}")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ValueError(f"max_rounds must be at least 1, got {self.max_rounds}")


@dataclass(frozen=True)
class PartialUpdateRound:
    """One round of a partitioned update: the spectrum seen, the block size
    taken, and the belief after absorbing that block."""

    lambdas: np.ndarray
    split_k: int
    posterior: GaussianState


@dataclass(frozen=True)
class PartialUpdateTrace:
    rounds: tuple[PartialUpdateRound, ...] = field(default_factory=tuple)

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    @property
    def split_sizes(self) -> tuple[int, ...]:
        return tuple(r.split_k for r in self.rounds)


def pukf_update(
    prior: GaussianState,
    model: MeasurementModel,
    config: PukfConfig = PukfConfig(),
) -> tuple[GaussianState, PartialUpdateTrace]:
    """Apply one measurement through partitioned second-order updates.

    Returns the posterior belief and a trace with one entry per round.
    The sum of the per-round block sizes always equals the measurement
    dimension.
    """
    mean = prior.mean
    cov = prior.cov
    func = model.func
    value = model.value
    d = value.shape[0]
    sqrt_noise: Optional[np.ndarray] = matrix_sqrt(model.noise_cov)
    limit = config.max_rounds if config.max_rounds is not None else d

    rounds = []
    while d > 0:
        if len(rounds) >= limit:
            raise RoundLimitExceeded(
                f"partitioned update needed more than {limit} rounds"
            )
        sqrt_p = matrix_sqrt(cov)
        lin = linearize(func, mean, sqrt_p, config.gamma)
        dec = decorrelate(lin.Xi, sqrt_noise, config.threshold)
        k = dec.split_k
        d_head = dec.D[:k]

        yhat = d_head @ (lin.h_at_mean + 0.5 * lin.xi)
        b = d_head @ lin.M  # (k, n)
        s = symmetrize(b @ b.T + 0.5 * np.diag(dec.lambdas[:k]) + np.eye(k))
        gain = _gain(s, sqrt_p @ b.T)
        mean = mean + gain @ (d_head @ value - yhat)
        cov = symmetrize(cov - gain @ s @ gain.T)
        posterior = GaussianState(mean, cov)
        rounds.append(
            PartialUpdateRound(
                lambdas=dec.lambdas.copy(), split_k=k, posterior=posterior
            )
        )

        # Re-express what is left of the measurement in the transformed
        # basis; its noise is white by construction.
        d_tail = dec.D[k:]
        value = d_tail @ value
        func = _mix(d_tail, func)
        sqrt_noise = None
        d -= k

    return GaussianState(mean, cov), PartialUpdateTrace(rounds=tuple(rounds))


def _mix(rows, func):
    def mixed(x, _rows=rows, _func=func):
        return _rows @ np.asarray(_func(x), dtype=float)

    return mixed


def pukf_step(
    prior: GaussianState,
    state_model,
    measurement: MeasurementModel,
    config: PukfConfig = PukfConfig(),
) -> tuple[GaussianState, PartialUpdateTrace]:
    """Exact linear prediction followed by a partitioned update."""
    f = state_model.transition
    predicted = GaussianState(
        f @ prior.mean, f @ prior.cov @ f.T + state_model.noise_cov
    )
    return pukf_update(predicted, measurement, config)

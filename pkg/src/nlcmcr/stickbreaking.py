"""Truncated stick-breaking weights and their conjugate updates.

Sticks ``U`` of length ``K`` have ``U[K-1] == 1`` so the weights
``pi_k = U_k * prod_{h<k} (1 - U_h)`` always sum to one.  All functions
accept a leading batch axis, which the nested sampler uses to update the
``K`` bottom-layer stick sets in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import PROB_EPS, ParameterError, sample_beta, sample_gamma


class TruncationError(ValueError):
    """Stick vector violates the truncation contract."""


@dataclass(frozen=True)
class StickSet:
    sticks: np.ndarray
    weights: np.ndarray
    alpha: float

    @property
    def truncation(self) -> int:
        return self.sticks.shape[-1]

    def check(self, tol: float = 1e-12) -> None:
        """Raise ``AssertionError`` if any stick invariant is broken."""
        assert self.truncation >= 1
        assert np.all((self.sticks > 0) & (self.sticks <= 1))
        assert np.all(self.sticks[..., -1] == 1.0)
        assert np.all((self.weights >= 0) & (self.weights <= 1))
        assert np.all(np.abs(self.weights.sum(axis=-1) - 1.0) <= tol)
        np.testing.assert_allclose(
            self.weights, _weights(self.sticks), rtol=1e-12, atol=1e-300
        )


def _weights(sticks: np.ndarray) -> np.ndarray:
    remaining = np.cumprod(1.0 - sticks[..., :-1], axis=-1)
    left = np.concatenate([np.ones(sticks.shape[:-1] + (1,)), remaining], axis=-1)
    return sticks * left


def weights_from_sticks(sticks) -> np.ndarray:
    """Weights from break proportions; the last proportion must be exactly 1."""
    U = np.asarray(sticks, dtype=float)
    if U.shape[-1] < 2:
        raise TruncationError("truncation level must be at least 2")
    if np.any(U[..., -1] != 1.0):
        raise TruncationError("last stick must equal 1 under truncation")
    if np.any((U <= 0) | (U > 1)):
        raise TruncationError("sticks must lie in (0, 1]")
    return _weights(U)


def update_sticks(occupancy, alpha, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Conjugate stick update given class occupancy counts.

    ``U_k ~ Beta(1 + u_k, alpha + sum_{h>k} u_h)`` for ``k < K``; ``U_K = 1``.
    Returns ``(sticks, weights)``.  A truncation of 1 is allowed here and gives
    the fixed weight vector ``(1,)``.
    """
    u = np.asarray(occupancy, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(u < 0):
        raise ParameterError("occupancy counts must be nonnegative")
    if np.any(~(alpha > 0)):
        raise ParameterError(f"concentration must be positive, got {alpha}")
    K = u.shape[-1]
    sticks = np.ones_like(u)
    if K > 1:
        tail = np.cumsum(u[..., ::-1], axis=-1)[..., ::-1]
        after = tail[..., 1:]
        b = alpha[..., None] + after if alpha.ndim else alpha + after
        sticks[..., :-1] = sample_beta(1.0 + u[..., :-1], b, rng)
    return sticks, _weights(sticks)


def update_concentration(a, b, truncation, tail_weight, rng: np.random.Generator):
    """Draw ``alpha ~ Gamma(a - 1 + K, b - log pi_K)`` (shape, rate).

    ``tail_weight`` is floored at ``PROB_EPS`` so an exhausted stick never
    produces an infinite rate.
    """
    tail = np.clip(np.asarray(tail_weight, dtype=float), PROB_EPS, 1.0)
    shape = a - 1.0 + truncation
    rate = b - np.log(tail)
    return sample_gamma(shape, rate, rng)


def draw_prior_sticks(alpha, truncation: int, rng: np.random.Generator):
    """Sticks and weights from the truncated SB(alpha) prior, one set per alpha entry."""
    zeros = np.zeros(np.shape(alpha) + (truncation,))
    return update_sticks(zeros, alpha, rng)

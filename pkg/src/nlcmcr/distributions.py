"""Seeded random variate generation for the samplers.

Every draw goes through a :class:`numpy.random.Generator` built from a
``(seed, stream)`` pair, so a chain's draw sequence depends only on those two
integers.  Parameterizations are fixed here once:

* Gamma is shape--rate (mean = shape / rate).
* Negative binomial counts failures before the n-th success,
  ``P(k) = C(k + n - 1, k) (1 - p)^k p^n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Floor applied to probabilities before taking logs.
PROB_EPS = 1e-300


class ParameterError(ValueError):
    """A distribution was asked for a draw outside its parameter domain."""


class DegenerateDistributionError(ArithmeticError):
    """A categorical distribution has no finite log-weight."""


@dataclass(frozen=True)
class RngState:
    """Identifies one reproducible random stream."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return RngState(seed, stream).generator()


def _open_unit(x):
    lo = np.finfo(float).tiny
    hi = 1.0 - np.finfo(float).epsneg
    return np.clip(x, lo, hi)


def sample_beta(a, b, rng: np.random.Generator, size=None):
    """Beta(a, b) draw(s), clamped to the open interval (0, 1).

    ``a`` and ``b`` broadcast like numpy arguments.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise ParameterError(f"beta parameters must be positive, got a={a}, b={b}")
    x = _open_unit(rng.beta(a, b, size=size))
    return float(x) if np.ndim(x) == 0 else x


def sample_gamma(shape, rate, rng: np.random.Generator, size=None):
    """Gamma draw(s) in the shape--rate parameterization."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise ParameterError(
            f"gamma shape and rate must be positive, got shape={shape}, rate={rate}"
        )
    x = rng.gamma(shape, 1.0 / rate, size=size)
    x = np.maximum(x, np.finfo(float).tiny)
    return float(x) if np.ndim(x) == 0 else x


def normalize_log_weights(log_weights) -> np.ndarray:
    """Max-shifted softmax along the last axis.

    Rows whose entries are all ``-inf`` raise :class:`DegenerateDistributionError`.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.shape[-1] == 0:
        raise ParameterError("log-weight vector is empty")
    top = np.max(lw, axis=-1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise DegenerateDistributionError("categorical log-weights have no finite entry")
    p = np.exp(lw - top)
    p /= p.sum(axis=-1, keepdims=True)
    return p


def sample_categorical_log(log_weights, rng: np.random.Generator):
    """Draw an index with probability proportional to ``exp(log_weights)``.

    A 2-d input draws one index per row.
    """
    p = normalize_log_weights(log_weights)
    if p.ndim == 1:
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
        return min(idx, p.size - 1)
    cdf = np.cumsum(p, axis=-1)
    u = rng.random(p.shape[:-1])[..., None]
    idx = (cdf <= u).sum(axis=-1)
    return np.minimum(idx, p.shape[-1] - 1)


def sample_negative_binomial(n, p, rng: np.random.Generator, size=None):
    """Failures before the ``n``-th success with success probability ``p``.

    Drawn as a Poisson with a Gamma(n, rate p / (1 - p)) mean, which stays
    cheap for ``n`` in the tens of thousands.
    """
    if not np.all(np.asarray(n) >= 1):
        raise ParameterError(f"negative binomial needs n >= 1, got {n}")
    if not np.all((np.asarray(p) > 0) & (np.asarray(p) < 1)):
        raise ParameterError(f"negative binomial needs 0 < p < 1, got {p}")
    p = np.asarray(p, dtype=float)
    return sample_negative_binomial_odds(n, (1.0 - p) / p, rng, size=size)


def sample_negative_binomial_odds(n, odds, rng: np.random.Generator, size=None):
    """Same law as :func:`sample_negative_binomial` with ``odds = (1 - p) / p``.

    Callers holding a tiny failure probability pass the odds directly so that
    ``1 - p`` never rounds to zero.
    """
    n = np.asarray(n, dtype=float)
    odds = np.asarray(odds, dtype=float)
    mean = rng.gamma(n, odds, size=size)
    out = rng.poisson(mean)
    return int(out) if np.ndim(out) == 0 else out


def sample_multinomial(trials, probs, rng: np.random.Generator) -> np.ndarray:
    """Multinomial counts; ``probs`` may be a matrix of rows, one per trial count."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0):
        raise ParameterError("multinomial probabilities must be nonnegative")
    total = probs.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ParameterError("multinomial probabilities sum to zero")
    probs = probs / total
    trials = np.asarray(trials)
    if np.any(trials < 0):
        raise ParameterError("multinomial trials must be nonnegative")
    return rng.multinomial(trials, probs)

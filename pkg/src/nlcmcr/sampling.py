"""Pieces shared by the flat and nested samplers: configuration, the
capture log-likelihood table, the unobserved-count augmentation step, and
the chain driver."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import (
    PROB_EPS,
    make_rng,
    sample_multinomial,
    sample_negative_binomial_odds,
)

OCCUPANCY_MODES = ("individuals", "groups")
TOP_PRIOR_MODES = ("group", "record")

#: Above this total unobserved-cell probability the augmentation step refuses.
DEGENERACY_LIMIT = 1.0 - 1e-12


class ConfigError(ValueError):
    pass


class NumericDegeneracyError(ArithmeticError):
    """The sampler reached a state where the model is numerically degenerate."""

    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(message + where)


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings shared by both models.

    ``iterations`` counts every sweep including burn-in, so each chain keeps
    ``(iterations - burn_in) // thinning`` draws.  ``k_star`` is the flat
    model's class truncation and the nested model's top-layer truncation.

    ``occupancy_counting`` and ``top_prior`` select the nested model's
    top-layer variant; see :mod:`nlcmcr.nested`.

    ``population_prior_decay`` is ``q`` in ``P(N) ∝ q**N / N``.  The default
    ``q = 1`` is the improper ``1/N`` prior; ``q < 1`` makes the prior proper
    (log-series), which the getting-it-right checks need.
    """

    k_star: int = 10
    l_star: int = 10
    iterations: int = 15000
    burn_in: int = 5000
    thinning: int = 1
    chains: int = 4
    a0: float = 0.25
    b0: float = 0.25
    ak: float = 0.25
    bk: float = 0.25
    seed: int = 0
    occupancy_counting: str = "individuals"
    top_prior: str = "group"
    population_prior_decay: float = 1.0

    def __post_init__(self):
        if self.k_star < 1 or self.l_star < 1:
            raise ConfigError("truncation levels must be at least 1")
        if self.iterations <= 0 or self.burn_in < 0 or self.thinning < 1 or self.chains < 1:
            raise ConfigError("need iterations > 0, burn_in >= 0, thinning >= 1, chains >= 1")
        if self.iterations <= self.burn_in:
            raise ConfigError("iterations must exceed burn_in")
        if min(self.a0, self.b0, self.ak, self.bk) <= 0:
            raise ConfigError("hyperparameters must be positive")
        if self.occupancy_counting not in OCCUPANCY_MODES:
            raise ConfigError(f"occupancy_counting must be one of {OCCUPANCY_MODES}")
        if self.top_prior not in TOP_PRIOR_MODES:
            raise ConfigError(f"top_prior must be one of {TOP_PRIOR_MODES}")
        if not 0 < self.population_prior_decay <= 1:
            raise ConfigError("population_prior_decay must lie in (0, 1]")

    @property
    def kept_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thinning

    def replace(self, **changes) -> "McmcConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, values: dict) -> "McmcConfig":
        """Build from string key-value pairs; unknown keys raise ``ConfigError``."""
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in fields:
                raise ConfigError(f"unknown sampler setting {key!r}")
            default = getattr(cls(), key)
            try:
                kwargs[key] = type(default)(raw) if not isinstance(default, str) else str(raw)
            except ValueError:
                raise ConfigError(f"bad value {raw!r} for {key}") from None
        return cls(**kwargs)


def parse_key_values(text: str) -> dict[str, str]:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def log_capture_likelihood(lam: np.ndarray, patterns: np.ndarray) -> np.ndarray:
    """``log P(pattern | capture probs)`` for every pattern.

    ``lam`` has shape ``(..., S)``; the result has shape ``(..., P)``.
    """
    y = patterns.astype(float)
    return np.log(lam) @ y.T + np.log1p(-lam) @ (1.0 - y).T


def log_weights(pi: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(pi, PROB_EPS))


def draw_unobserved(rho: np.ndarray, n: int, decay: float, rng: np.random.Generator,
                    iteration: int | None = None) -> np.ndarray:
    """Unobserved counts per latent cell given cell miss masses ``rho``.

    ``n0 ~ NegBin(n, 1 - decay * sum(rho))`` then a multinomial split
    proportional to ``rho``.  Returns an integer array shaped like ``rho``.
    """
    rho0 = float(rho.sum())
    if rho0 >= DEGENERACY_LIMIT:
        raise NumericDegeneracyError(
            f"unobserved probability {rho0:.15f} leaves the population unidentified", iteration
        )
    if rho0 < PROB_EPS:
        return np.zeros(rho.shape, dtype=np.int64)
    tilted = decay * rho0
    n0 = sample_negative_binomial_odds(n, tilted / (1.0 - tilted), rng)
    if n0 == 0:
        return np.zeros(rho.shape, dtype=np.int64)
    flat = sample_multinomial(n0, rho.ravel(), rng)
    return flat.reshape(rho.shape).astype(np.int64)


def split_counts(counts: np.ndarray, log_probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Multinomial split of each row count over classes with log-probabilities per row."""
    p = np.exp(log_probs - log_probs.max(axis=-1, keepdims=True))
    p /= p.sum(axis=-1, keepdims=True)
    return rng.multinomial(counts, p)


def run_chains(run_one: Callable, config: McmcConfig, workers: int = 1) -> list:
    """Run ``run_one(chain_id)`` for every chain, optionally in a process pool."""
    ids = list(range(config.chains))
    if workers <= 1 or config.chains == 1:
        return [run_one(c) for c in ids]
    with ProcessPoolExecutor(max_workers=min(workers, config.chains)) as pool:
        return list(pool.map(run_one, ids))


def chain_rng(config: McmcConfig, chain_id: int) -> np.random.Generator:
    return make_rng(config.seed, chain_id)

"""One-layer latent class capture-recapture sampler (LCMCR).

Individuals fall in latent classes with stick-breaking weights; within a class
the lists capture independently.  The unobserved count is augmented through a
negative binomial draw under ``P(N) ∝ 1/N``.

Records with the same pattern are exchangeable, so class assignments are held
as ``alloc[p, k]``: how many records with pattern ``p`` sit in class ``k``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .data import CellCounts, GroupedDataset, PatternCountTable, cell_counts
from .distributions import sample_beta
from .posterior import ChainOutput
from .sampling import (
    McmcConfig,
    NumericDegeneracyError,
    chain_rng,
    draw_unobserved,
    log_capture_likelihood,
    log_weights,
    run_chains,
    split_counts,
)
from .stickbreaking import StickSet, draw_prior_sticks, update_concentration, update_sticks


@dataclass
class FlatModelState:
    alloc: np.ndarray  # (P, K) records per pattern and class
    lam: np.ndarray  # (K, S)
    sticks: np.ndarray  # (K,)
    pi: np.ndarray  # (K,)
    alpha: float
    w: np.ndarray  # (K,) unobserved per class
    N: int

    @property
    def K(self) -> int:
        return self.lam.shape[0]

    def class_counts(self) -> np.ndarray:
        return self.alloc.sum(axis=0)

    def record_labels(self) -> list[np.ndarray]:
        """Per-pattern class label vectors (0-based), expanded from ``alloc``."""
        return [np.repeat(np.arange(self.K), self.alloc[p]) for p in range(self.alloc.shape[0])]

    def check(self, cells: CellCounts) -> None:
        n = cells.n
        assert self.N == n + int(self.w.sum()), "N != n + sum(w)"
        assert np.all(self.w >= 0)
        assert np.array_equal(self.alloc.sum(axis=1), cells.counts.sum(axis=0))
        assert np.all((self.lam > 0) & (self.lam < 1))
        if self.K > 1:
            StickSet(self.sticks, self.pi, self.alpha).check()


def capture_counts(state: FlatModelState, patterns: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(captured, missed)`` observed-record counts per class and list."""
    captured = state.alloc.T @ patterns.astype(np.int64)
    missed = state.alloc.sum(axis=0)[:, None] - captured
    return captured, missed


def init_state(cells: CellCounts, config: McmcConfig, rng: np.random.Generator) -> FlatModelState:
    K, S = config.k_star, cells.S
    counts = cells.counts.sum(axis=0)
    alloc = rng.multinomial(counts, np.full(K, 1.0 / K))
    lam = sample_beta(1.0, 1.0, rng, size=(K, S))
    alpha = config.a0 / config.b0
    sticks, pi = draw_prior_sticks(alpha, K, rng)
    return FlatModelState(alloc, lam, sticks, pi, alpha, np.zeros(K, dtype=np.int64), cells.n)


def update_assignments(state: FlatModelState, cells: CellCounts, rng) -> None:
    counts = cells.counts.sum(axis=0)
    loglik = log_capture_likelihood(state.lam, cells.patterns)  # (K, P)
    logits = log_weights(state.pi)[None, :] + loglik.T
    state.alloc = split_counts(counts, logits, rng)


def update_capture_probs(state: FlatModelState, cells: CellCounts, rng) -> None:
    captured, missed = capture_counts(state, cells.patterns)
    state.lam = sample_beta(1.0 + captured, 1.0 + missed + state.w[:, None], rng)


def update_weights(state: FlatModelState, config: McmcConfig, rng) -> None:
    u = state.class_counts() + state.w
    state.sticks, state.pi = update_sticks(u, state.alpha, rng)
    state.alpha = update_concentration(config.a0, config.b0, state.K, state.pi[-1], rng)


def miss_masses(state: FlatModelState) -> np.ndarray:
    return state.pi * np.exp(np.log1p(-state.lam).sum(axis=1))


def update_missing(state: FlatModelState, n: int, config: McmcConfig, rng, iteration=None) -> None:
    state.w = draw_unobserved(miss_masses(state), n, config.population_prior_decay, rng, iteration)
    state.N = n + int(state.w.sum())


def lcmcr_sweep(state: FlatModelState, cells: CellCounts, config: McmcConfig, rng,
                iteration: int | None = None) -> FlatModelState:
    """One Gibbs sweep: assignments, capture probabilities, weights,
    concentration, then the unobserved counts and N.  Updates in place."""
    update_assignments(state, cells, rng)
    update_capture_probs(state, cells, rng)
    update_weights(state, config, rng)
    update_missing(state, cells.n, config, rng, iteration)
    return state


def monitor(state: FlatModelState) -> dict:
    occ = state.class_counts() + state.w
    return {
        "N": state.N,
        "alpha": state.alpha,
        "pi": state.pi.copy(),
        "lam": state.lam.copy(),
        "occupancy": occ,
        "occupied_cells": int(np.count_nonzero(occ)),
    }


def run_lcmcr_chain(cells: CellCounts, config: McmcConfig, chain_id: int = 0,
                    check: bool = False, callback=None) -> ChainOutput:
    rng = chain_rng(config, chain_id)
    state = init_state(cells, config, rng)
    kept: dict[str, list] = {}
    for it in range(config.iterations):
        lcmcr_sweep(state, cells, config, rng, iteration=it + 1)
        if check:
            state.check(cells)
        if callback is not None:
            callback(it, state)
        t = it - config.burn_in
        if t >= 0 and (t + 1) % config.thinning == 0:
            for key, val in monitor(state).items():
                kept.setdefault(key, []).append(val)
    draws = {k: np.asarray(v) for k, v in kept.items()}
    return ChainOutput("lcmcr", draws, chain_id, config.seed, cells.n, config.as_dict())


def fit_lcmcr(data: GroupedDataset | PatternCountTable | CellCounts, config: McmcConfig,
              workers: int = 1, check: bool = False) -> list[ChainOutput]:
    """Run ``config.chains`` independent chains on the pooled records."""
    cells = data if isinstance(data, CellCounts) else cell_counts(data)
    cells = cells.pooled()
    if cells.n == 0:
        raise ValueError("dataset must be nonempty")
    run_one = functools.partial(_run_chain_entry, cells, config, check)
    return run_chains(run_one, config, workers)


def _run_chain_entry(cells, config, check, chain_id):
    return run_lcmcr_chain(cells, config, chain_id, check=check)


__all__ = [
    "FlatModelState", "NumericDegeneracyError", "capture_counts", "fit_lcmcr",
    "init_state", "lcmcr_sweep", "run_lcmcr_chain",
]

"""Nested latent class capture-recapture sampler (NLCMCR).

Groups (e.g. location-times) carry a top-layer class ``z2``; records inside a
group carry a bottom-layer class drawn from that top class's weights.  Capture
probabilities ``lam[k, l, s]`` depend on both layers.  Unobserved individuals
are pooled across groups: the augmentation step assigns them to ``(k, l)``
cells in proportion to ``pi2[k] * pi1[k, l] * prod_s (1 - lam[k, l, s])``.

Bottom-layer assignments are stored per (group, pattern) cell as counts,
``alloc[j, p, l]``, because records in one cell are exchangeable.

Two settings shape the top layer:

``occupancy_counting``
    ``"individuals"`` (default) counts every individual, observed or not,
    toward its top class in the ``pi2`` stick update.  ``"groups"`` counts
    each group once and ignores unobserved individuals.
``top_prior``
    ``"group"`` (default) lets ``pi2[k]`` enter a group's top-class draw once.
    ``"record"`` raises it to the group's record count, treating every record
    as a draw from ``pi2``.

Only ``individuals`` + ``record`` makes all the updates the full
conditionals of one joint density (the getting-it-right checks use it).  That
variant tends to merge all groups into a single top class.  The default lets
empty top classes soak up unobserved mass on grouped data; ``groups``
counting is the setting that reliably clusters groups.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .data import CellCounts, GroupedDataset, PatternCountTable, cell_counts
from .distributions import DegenerateDistributionError, sample_beta, sample_categorical_log
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
class NestedModelState:
    z2: np.ndarray  # (J,) top class per group
    alloc: np.ndarray  # (J, P, L) records per group, pattern, bottom class
    lam: np.ndarray  # (K, L, S)
    sticks2: np.ndarray  # (K,)
    pi2: np.ndarray  # (K,)
    alpha0: float
    sticks1: np.ndarray  # (K, L)
    pi1: np.ndarray  # (K, L)
    alpha: np.ndarray  # (K,)
    w: np.ndarray  # (K, L) unobserved per cell
    N: int

    @property
    def K(self) -> int:
        return self.lam.shape[0]

    @property
    def L(self) -> int:
        return self.lam.shape[1]

    def copy(self) -> "NestedModelState":
        return NestedModelState(**{k: (v.copy() if isinstance(v, np.ndarray) else v)
                                   for k, v in self.__dict__.items()})

    def cell_records(self) -> np.ndarray:
        """Observed records per ``(k, l, p)``."""
        onehot = np.eye(self.K, dtype=np.int64)[self.z2]
        return np.einsum("jk,jpl->klp", onehot, self.alloc)

    def record_labels(self) -> list[np.ndarray]:
        """Bottom-class label (0-based) of every record, group by group,
        records ordered by pattern row within a group."""
        out = []
        for j in range(self.alloc.shape[0]):
            labels = [np.repeat(np.arange(self.L), self.alloc[j, p]) for p in range(self.alloc.shape[1])]
            out.append(np.concatenate(labels))
        return out

    def check(self, cells: CellCounts) -> None:
        assert self.N == cells.n + int(self.w.sum()), "N != n + sum(w)"
        assert np.all(self.w >= 0)
        assert np.array_equal(self.alloc.sum(axis=2), cells.counts)
        assert np.all((self.z2 >= 0) & (self.z2 < self.K))
        assert np.all((self.lam > 0) & (self.lam < 1))
        if self.K > 1:
            StickSet(self.sticks2, self.pi2, self.alpha0).check()
        if self.L > 1:
            for k in range(self.K):
                StickSet(self.sticks1[k], self.pi1[k], self.alpha[k]).check()
        captured, missed, n_kl = sufficient_stats(self, cells)
        slow = sufficient_stats_by_record(self, cells)
        assert np.array_equal(captured, slow[0]) and np.array_equal(missed, slow[1])
        assert np.array_equal(n_kl, slow[2])


def sufficient_stats(state: NestedModelState, cells: CellCounts):
    """``(captured[k,l,s], missed[k,l,s], records[k,l])`` from the assignments."""
    A = state.cell_records()
    captured = A @ cells.patterns.astype(np.int64)
    n_kl = A.sum(axis=2)
    return captured, n_kl[..., None] - captured, n_kl


def sufficient_stats_by_record(state: NestedModelState, cells: CellCounts):
    """Same counts as :func:`sufficient_stats`, tallied record by record."""
    K, L, S = state.lam.shape
    captured = np.zeros((K, L, S), dtype=np.int64)
    missed = np.zeros((K, L, S), dtype=np.int64)
    n_kl = np.zeros((K, L), dtype=np.int64)
    labels = state.record_labels()
    for j, lab in enumerate(labels):
        pats = np.repeat(np.arange(cells.patterns.shape[0]), cells.counts[j])
        k = state.z2[j]
        for p, l in zip(pats, lab):
            n_kl[k, l] += 1
            for s in range(S):
                if cells.patterns[p, s]:
                    captured[k, l, s] += 1
                else:
                    missed[k, l, s] += 1
    return captured, missed, n_kl


def init_state(cells: CellCounts, config: McmcConfig, rng: np.random.Generator) -> NestedModelState:
    K, L, S, J = config.k_star, config.l_star, cells.S, cells.J
    z2 = rng.integers(0, K, size=J)
    alloc = rng.multinomial(cells.counts, np.full(L, 1.0 / L))
    lam = sample_beta(1.0, 1.0, rng, size=(K, L, S))
    alpha0 = config.a0 / config.b0
    alpha = np.full(K, config.ak / config.bk)
    sticks2, pi2 = draw_prior_sticks(alpha0, K, rng)
    sticks1, pi1 = draw_prior_sticks(alpha, L, rng)
    w = np.zeros((K, L), dtype=np.int64)
    return NestedModelState(z2, alloc, lam, sticks2, pi2, alpha0, sticks1, pi1, alpha, w, cells.n)


def record_mixture_loglik(state: NestedModelState, patterns: np.ndarray) -> np.ndarray:
    """``log sum_l pi1[k,l] P(pattern | lam[k,l])`` with shape ``(K, P)``."""
    loglik = log_capture_likelihood(state.lam, patterns)  # (K, L, P)
    return logsumexp(log_weights(state.pi1)[..., None] + loglik, axis=1)


def top_class_log_weights(state: NestedModelState, cells: CellCounts, top_prior: str = "group") -> np.ndarray:
    """Unnormalized log-probabilities of each group's top class, ``(J, K)``.

    The bottom class of every record is summed out, giving a product over
    records of per-record mixtures.
    """
    mix = record_mixture_loglik(state, cells.patterns)
    exponent = cells.group_sizes if top_prior == "record" else np.ones(cells.J)
    return exponent[:, None] * log_weights(state.pi2)[None, :] + cells.counts @ mix.T


def update_top_assignments(state, cells, config, rng, iteration=None) -> None:
    lw = top_class_log_weights(state, cells, config.top_prior)
    try:
        state.z2 = np.asarray(sample_categorical_log(lw, rng))
    except DegenerateDistributionError as exc:
        raise NumericDegeneracyError(f"top-layer assignment: {exc}", iteration) from None


def update_bottom_assignments(state, cells, rng, iteration=None) -> None:
    loglik = log_capture_likelihood(state.lam, cells.patterns)  # (K, L, P)
    jj, pp = np.nonzero(cells.counts)
    k = state.z2[jj]
    logits = log_weights(state.pi1)[k] + loglik[k, :, pp]
    if not np.all(np.isfinite(logits.max(axis=1))):
        raise NumericDegeneracyError("bottom-layer assignment has no finite weight", iteration)
    alloc = np.zeros_like(state.alloc)
    alloc[jj, pp] = split_counts(cells.counts[jj, pp], logits, rng)
    state.alloc = alloc


def update_capture_probs(state, cells, rng) -> None:
    captured, missed, _ = sufficient_stats(state, cells)
    state.lam = sample_beta(1.0 + captured, 1.0 + missed + state.w[..., None], rng)


def top_occupancy(state: NestedModelState, mode: str, n_kl: np.ndarray) -> np.ndarray:
    if mode == "individuals":
        return n_kl.sum(axis=1) + state.w.sum(axis=1)
    return np.bincount(state.z2, minlength=state.K)


def update_weights_and_concentrations(state, config: McmcConfig, rng, n_kl=None) -> None:
    if n_kl is None:
        n_kl = state.cell_records().sum(axis=2)
    u2 = top_occupancy(state, config.occupancy_counting, n_kl)
    state.sticks2, state.pi2 = update_sticks(u2, state.alpha0, rng)
    state.alpha0 = update_concentration(config.a0, config.b0, state.K, state.pi2[-1], rng)
    state.sticks1, state.pi1 = update_sticks(n_kl + state.w, state.alpha, rng)
    state.alpha = np.atleast_1d(
        update_concentration(config.ak, config.bk, state.L, state.pi1[:, -1], rng)
    )


def miss_masses(state: NestedModelState) -> np.ndarray:
    """``rho[k, l] = pi2[k] pi1[k, l] prod_s (1 - lam[k, l, s])``."""
    return state.pi2[:, None] * state.pi1 * np.exp(np.log1p(-state.lam).sum(axis=2))


def update_missing_and_N(state, n: int, config: McmcConfig, rng, iteration=None) -> None:
    state.w = draw_unobserved(miss_masses(state), n, config.population_prior_decay, rng, iteration)
    state.N = n + int(state.w.sum())


def nlcmcr_sweep(state: NestedModelState, cells: CellCounts, config: McmcConfig, rng,
                 iteration: int | None = None) -> NestedModelState:
    """Top classes, bottom classes, capture probabilities, stick weights and
    concentrations, then unobserved counts and N.  Updates in place."""
    update_top_assignments(state, cells, config, rng, iteration)
    update_bottom_assignments(state, cells, rng, iteration)
    captured, missed, n_kl = sufficient_stats(state, cells)
    state.lam = sample_beta(1.0 + captured, 1.0 + missed + state.w[..., None], rng)
    update_weights_and_concentrations(state, config, rng, n_kl)
    update_missing_and_N(state, cells.n, config, rng, iteration)
    return state


def monitor(state: NestedModelState, n_kl: np.ndarray | None = None) -> dict:
    if n_kl is None:
        n_kl = state.cell_records().sum(axis=2)
    occ = n_kl + state.w
    return {
        "N": state.N,
        "alpha0": state.alpha0,
        "alpha": state.alpha.copy(),
        "pi2": state.pi2.copy(),
        "pi1": state.pi1.copy(),
        "lam": state.lam.copy(),
        "occupancy": occ,
        "occupied_top": int(np.count_nonzero(np.bincount(state.z2, minlength=state.K))),
        "occupied_cells": int(np.count_nonzero(occ)),
    }


def run_nlcmcr_chain(cells: CellCounts, config: McmcConfig, chain_id: int = 0,
                     check: bool = False, callback=None) -> ChainOutput:
    rng = chain_rng(config, chain_id)
    state = init_state(cells, config, rng)
    kept: dict[str, list] = {}
    for it in range(config.iterations):
        nlcmcr_sweep(state, cells, config, rng, iteration=it + 1)
        if check:
            state.check(cells)
        if callback is not None:
            callback(it, state)
        t = it - config.burn_in
        if t >= 0 and (t + 1) % config.thinning == 0:
            for key, val in monitor(state).items():
                kept.setdefault(key, []).append(val)
    draws = {k: np.asarray(v) for k, v in kept.items()}
    return ChainOutput("nlcmcr", draws, chain_id, config.seed, cells.n, config.as_dict())


def fit_nlcmcr(data: GroupedDataset | CellCounts, config: McmcConfig,
               workers: int = 1, check: bool = False) -> list[ChainOutput]:
    if isinstance(data, PatternCountTable):
        raise ValueError("the nested model needs record-level data with group labels")
    cells = data if isinstance(data, CellCounts) else cell_counts(data)
    if cells.J < 1 or cells.n == 0:
        raise ValueError("dataset must contain at least one nonempty group")
    run_one = functools.partial(_run_chain_entry, cells, config, check)
    return run_chains(run_one, config, workers)


def _run_chain_entry(cells, config, check, chain_id):
    return run_nlcmcr_chain(cells, config, chain_id, check=check)

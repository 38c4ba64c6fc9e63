"""Getting-it-right checks for the two samplers.

Two simulators target the same joint distribution of parameters and data:

* marginal-conditional: independent parameter draws from their marginal,
  followed by the unobserved count given the parameters;
* successive-conditional: alternate "regenerate data given parameters" with
  one Gibbs sweep.

The record counts per group are held fixed and records are drawn from the
capture distribution restricted to nonzero patterns, so the parameter marginal
is the prior tilted by the probability of the fixed observed layout.  That
tilt is at most one, so the marginal is sampled by rejection from the prior.

The nested sampler is checked in its ``individuals`` + ``record`` setting, the
one whose updates are exact full conditionals.  A population prior decay
``q < 1`` keeps the joint proper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import CellCounts, all_patterns
from .distributions import make_rng
from .lcmcr import FlatModelState, lcmcr_sweep
from .nested import NestedModelState, nlcmcr_sweep
from .posterior import effective_sample_size
from .sampling import McmcConfig, draw_unobserved, log_capture_likelihood
from .stickbreaking import draw_prior_sticks


@dataclass
class GewekeComparison:
    name: str
    moment: str  # "mean" or "variance"
    marginal: float
    successive: float
    z: float
    p_value: float


def _miss(lam: np.ndarray) -> np.ndarray:
    return np.prod(1.0 - lam, axis=-1)


# -- nested model -----------------------------------------------------------

def nested_prior(config: McmcConfig, S: int, size: int, rng) -> dict:
    K, L = config.k_star, config.l_star
    alpha0 = rng.gamma(config.a0, 1.0 / config.b0, size=size)
    sticks2, pi2 = draw_prior_sticks(alpha0, K, rng)
    alpha = rng.gamma(config.ak, 1.0 / config.bk, size=(size, K))
    sticks1, pi1 = draw_prior_sticks(alpha, L, rng)
    lam = rng.uniform(size=(size, K, L, S))
    return dict(alpha0=alpha0, sticks2=sticks2, pi2=pi2, alpha=alpha,
                sticks1=sticks1, pi1=pi1, lam=lam)


def nested_log_tilt(params: dict, group_sizes: np.ndarray, decay: float) -> np.ndarray:
    """Log probability, up to a parameter-free constant, of the fixed layout.

    ``prod_j sum_k (pi2_k (1 - m_k))**n_j * (1 - q rho0)**(-n)`` where ``m_k``
    is top class ``k``'s miss probability; bounded above by one.
    """
    m_kl = _miss(params["lam"])
    seen_k = params["pi2"] * (params["pi1"] * (1.0 - m_kl)).sum(axis=-1)  # (B, K)
    rho0 = 1.0 - seen_k.sum(axis=-1)
    out = -int(group_sizes.sum()) * np.log1p(-decay * rho0)
    for nj in group_sizes:
        out = out + np.log((seen_k**nj).sum(axis=-1))
    return out


def nested_marginal(config: McmcConfig, S: int, group_sizes, draws: int, rng,
                    batch: int = 50000) -> dict[str, np.ndarray]:
    """Independent draws of the monitored statistics from the joint."""
    group_sizes = np.asarray(group_sizes)
    n = int(group_sizes.sum())
    kept: dict[str, list] = {}
    total = 0
    while total < draws:
        params = nested_prior(config, S, batch, rng)
        accept = np.log(rng.uniform(size=batch)) < nested_log_tilt(
            params, group_sizes, config.population_prior_decay)
        if not accept.any():
            continue
        sub = {k: v[accept] for k, v in params.items()}
        rho0 = (sub["pi2"][:, :, None] * sub["pi1"] * _miss(sub["lam"])).sum(axis=(1, 2))
        t = config.population_prior_decay * rho0
        n0 = rng.poisson(rng.gamma(n, t / (1.0 - t)))
        for key, val in nested_statistics(sub, n + n0).items():
            kept.setdefault(key, []).append(val)
        total += int(accept.sum())
    return {k: np.concatenate(v)[:draws] for k, v in kept.items()}


def nested_statistics(params: dict, N) -> dict[str, np.ndarray]:
    lam = params["lam"]
    return {
        "N": np.asarray(N, dtype=float),
        "alpha0": np.asarray(params["alpha0"], dtype=float),
        "lam[1,1,1]": lam[..., 0, 0, 0],
        "lam[2,1,2]": lam[..., 1, 0, 1],
    }


def regenerate_nested(state: NestedModelState, patterns: np.ndarray, group_sizes: np.ndarray,
                      decay: float, rng) -> CellCounts:
    """Redraw every observed record, all assignments and the unobserved counts
    given the current parameters.  Updates ``state`` and returns new data."""
    K, L, S = state.lam.shape
    P = patterns.shape[0]
    m_kl = _miss(state.lam)
    seen_kl = state.pi1 * (1.0 - m_kl)
    seen_k = state.pi2 * seen_kl.sum(axis=1)
    loglik = log_capture_likelihood(state.lam, patterns)  # (K, L, P)
    pat_probs = np.exp(loglik) / (1.0 - m_kl)[..., None]
    J = len(group_sizes)
    counts = np.zeros((J, P), dtype=np.int64)
    alloc = np.zeros((J, P, L), dtype=np.int64)
    z2 = np.zeros(J, dtype=np.int64)
    for j, nj in enumerate(group_sizes):
        lw = nj * np.log(seen_k)
        p = np.exp(lw - lw.max())
        k = rng.choice(K, p=p / p.sum())
        z2[j] = k
        per_l = rng.multinomial(nj, seen_kl[k] / seen_kl[k].sum())
        for l in range(L):
            if per_l[l]:
                alloc[j, :, l] = rng.multinomial(per_l[l], pat_probs[k, l] / pat_probs[k, l].sum())
        counts[j] = alloc[j].sum(axis=1)
    rho = state.pi2[:, None] * state.pi1 * m_kl
    state.z2, state.alloc = z2, alloc
    state.w = draw_unobserved(rho, int(group_sizes.sum()), decay, rng)
    state.N = int(group_sizes.sum() + state.w.sum())
    return CellCounts(patterns, counts, tuple(f"g{j + 1}" for j in range(J)))


def nested_successive(config: McmcConfig, S: int, group_sizes, cycles: int, rng) -> dict[str, np.ndarray]:
    group_sizes = np.asarray(group_sizes)
    patterns = all_patterns(S)
    K, L = config.k_star, config.l_star
    p = {k: v[0] for k, v in nested_prior(config, S, 1, rng).items()}
    state = NestedModelState(
        z2=np.zeros(len(group_sizes), dtype=np.int64),
        alloc=np.zeros((len(group_sizes), patterns.shape[0], L), dtype=np.int64),
        lam=p["lam"], sticks2=p["sticks2"], pi2=p["pi2"], alpha0=float(p["alpha0"]),
        sticks1=p["sticks1"], pi1=p["pi1"], alpha=p["alpha"],
        w=np.zeros((K, L), dtype=np.int64), N=int(group_sizes.sum()),
    )
    out = np.zeros((cycles, 4))
    for t in range(cycles):
        cells = regenerate_nested(state, patterns, group_sizes, config.population_prior_decay, rng)
        nlcmcr_sweep(state, cells, config, rng)
        out[t] = (state.N, state.alpha0, state.lam[0, 0, 0], state.lam[1, 0, 1])
    return dict(zip(("N", "alpha0", "lam[1,1,1]", "lam[2,1,2]"), out.T))


# -- flat model -------------------------------------------------------------

def flat_prior(config: McmcConfig, S: int, size: int, rng) -> dict:
    alpha = rng.gamma(config.a0, 1.0 / config.b0, size=size)
    sticks, pi = draw_prior_sticks(alpha, config.k_star, rng)
    lam = rng.uniform(size=(size, config.k_star, S))
    return dict(alpha=alpha, sticks=sticks, pi=pi, lam=lam)


def flat_marginal(config: McmcConfig, S: int, n: int, draws: int, rng,
                  batch: int = 50000) -> dict[str, np.ndarray]:
    q = config.population_prior_decay
    kept: dict[str, list] = {}
    total = 0
    while total < draws:
        params = flat_prior(config, S, batch, rng)
        rho0 = (params["pi"] * _miss(params["lam"])).sum(axis=-1)
        log_tilt = n * (np.log1p(-rho0) - np.log1p(-q * rho0))
        accept = np.log(rng.uniform(size=batch)) < log_tilt
        sub = {k: v[accept] for k, v in params.items()}
        t = q * rho0[accept]
        n0 = rng.poisson(rng.gamma(n, t / (1.0 - t)))
        for key, val in flat_statistics(sub, n + n0).items():
            kept.setdefault(key, []).append(val)
        total += int(accept.sum())
    return {k: np.concatenate(v)[:draws] for k, v in kept.items()}


def flat_statistics(params: dict, N) -> dict[str, np.ndarray]:
    return {
        "N": np.asarray(N, dtype=float),
        "alpha": np.asarray(params["alpha"], dtype=float),
        "lam[1,1]": params["lam"][..., 0, 0],
        "lam[2,2]": params["lam"][..., 1, 1],
    }


def flat_successive(config: McmcConfig, S: int, n: int, cycles: int, rng) -> dict[str, np.ndarray]:
    patterns = all_patterns(S)
    K = config.k_star
    p = {k: v[0] for k, v in flat_prior(config, S, 1, rng).items()}
    state = FlatModelState(np.zeros((patterns.shape[0], K), dtype=np.int64), p["lam"], p["sticks"],
                           p["pi"], float(p["alpha"]), np.zeros(K, dtype=np.int64), n)
    out = np.zeros((cycles, 4))
    for t in range(cycles):
        m_k = _miss(state.lam)
        seen = state.pi * (1.0 - m_k)
        per_k = rng.multinomial(n, seen / seen.sum())
        pat = np.exp(log_capture_likelihood(state.lam, patterns)) / (1.0 - m_k)[:, None]
        alloc = np.stack([rng.multinomial(per_k[k], pat[k] / pat[k].sum()) for k in range(K)], axis=1)
        state.alloc = alloc
        state.w = draw_unobserved(state.pi * m_k, n, config.population_prior_decay, rng)
        state.N = n + int(state.w.sum())
        cells = CellCounts(patterns, alloc.sum(axis=1)[None, :], ("_all",))
        lcmcr_sweep(state, cells, config, rng)
        out[t] = (state.N, state.alpha, state.lam[0, 0], state.lam[1, 1])
    return dict(zip(("N", "alpha", "lam[1,1]", "lam[2,2]"), out.T))


# -- comparison -------------------------------------------------------------

def compare_moments(marginal: dict[str, np.ndarray], successive: dict[str, np.ndarray]) -> list[GewekeComparison]:
    """z-tests of means and variances; the successive-conditional standard
    error uses its effective sample size.  Variances are compared as means of
    squared deviations from the marginal-conditional mean."""
    out = []
    for name in marginal:
        center = float(np.mean(marginal[name]))
        for moment, f in (("mean", lambda x: x), ("variance", lambda x: (x - center) ** 2)):
            a, b = f(marginal[name]), f(successive[name])
            ess = float(effective_sample_size(b).ess)
            se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / ess)
            z = (a.mean() - b.mean()) / se
            p = 2.0 * stats.norm.sf(abs(z))
            out.append(GewekeComparison(name, moment, float(a.mean()), float(b.mean()), float(z), float(p)))
    return out


def run_nested_geweke(cycles: int = 100000, seed: int = 0, group_sizes=(2, 3, 4),
                      decay: float = 0.5, S: int = 2) -> list[GewekeComparison]:
    config = McmcConfig(k_star=2, l_star=2, a0=1.0, b0=1.0, ak=1.0, bk=1.0,
                        occupancy_counting="individuals", top_prior="record",
                        population_prior_decay=decay, iterations=2, burn_in=1, chains=1)
    mc = nested_marginal(config, S, group_sizes, cycles, make_rng(seed, 0))
    sc = nested_successive(config, S, group_sizes, cycles, make_rng(seed, 1))
    return compare_moments(mc, sc)


def run_flat_geweke(cycles: int = 100000, seed: int = 0, n: int = 6,
                    decay: float = 0.5, S: int = 2) -> list[GewekeComparison]:
    config = McmcConfig(k_star=2, a0=1.0, b0=1.0, population_prior_decay=decay,
                        iterations=2, burn_in=1, chains=1)
    mc = flat_marginal(config, S, n, cycles, make_rng(seed, 0))
    sc = flat_successive(config, S, n, cycles, make_rng(seed, 1))
    return compare_moments(mc, sc)

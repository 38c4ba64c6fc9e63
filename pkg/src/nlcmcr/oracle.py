"""Brute-force references for the samplers.

Nothing here shares code with the Gibbs updates: the single-cell posterior of
N is computed by quadrature over the capture probabilities, and the top-class
weights of a small group by enumerating every bottom-class configuration.
All functions are deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, xlog1py, xlogy

from .data import PatternCountTable

MAX_ORACLE_LISTS = 3
MAX_ORACLE_RECORDS = 200
MAX_ENUM_RECORDS = 3
MAX_ENUM_CLASSES = 3


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class GridPosterior:
    lam_grid: np.ndarray  # shared regular grid for every list's capture probability
    support: np.ndarray  # N = n .. N_max
    log_post: np.ndarray  # unnormalized log posterior over the support
    pmf: np.ndarray  # normalized marginal of N

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def mean(self) -> float:
        return float(self.support @ self.pmf)

    def quantile(self, q: float) -> int:
        return int(self.support[np.searchsorted(self.cdf(), q)])


def simpson_weights(m: int) -> np.ndarray:
    """Composite Simpson weights for ``m`` (odd) equally spaced points on [0, 1]."""
    if m < 3 or m % 2 == 0:
        raise OracleError("grid_points must be odd and at least 3")
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * (m - 1))


def _log_grid_integral(log_f: np.ndarray, log_w: np.ndarray) -> np.ndarray:
    # log_f: (..., m) values on the grid
    return logsumexp(log_f + log_w, axis=-1)


def grid_posterior_single_cell(data: PatternCountTable, S: int, N_max: int,
                               grid_points: int = 201) -> GridPosterior:
    """Posterior of N for the one-class product-Bernoulli model.

    Prior ``P(N) ∝ 1/N`` and ``lam_s ~ Beta(1, 1)``.  Given N the likelihood
    factorizes over lists: list ``s`` contributes
    ``lam_s**c_s * (1 - lam_s)**(N - c_s)`` with ``c_s`` its capture count, so
    the ``S``-dimensional grid integral is a product of 1-d Simpson sums on a
    regular grid.  The remaining factor is ``N! / ((N - n)! N)``.
    """
    if S != data.S:
        raise OracleError(f"table has {data.S} lists, not {S}")
    if S > MAX_ORACLE_LISTS:
        raise OracleError(f"grid oracle handles at most {MAX_ORACLE_LISTS} lists")
    n = data.n
    if n < 1 or n > MAX_ORACLE_RECORDS:
        raise OracleError(f"grid oracle needs 1 <= n <= {MAX_ORACLE_RECORDS}, got {n}")
    if N_max < n:
        raise OracleError(f"N_max={N_max} is below the observed count {n}")
    lam = np.linspace(0.0, 1.0, grid_points)
    log_w = np.log(simpson_weights(grid_points))
    captured = np.zeros(S, dtype=np.int64)
    for pattern, count in data.counts.items():
        captured += count * np.asarray(pattern, dtype=np.int64)

    support = np.arange(n, N_max + 1)
    log_post = gammaln(support + 1.0) - gammaln(support - n + 1.0) - np.log(support)
    for c in captured:
        missed = (support - c)[:, None]
        log_f = xlogy(c, lam)[None, :] + xlog1py(missed, -lam[None, :])
        log_post = log_post + _log_grid_integral(log_f, log_w)
    pmf = np.exp(log_post - logsumexp(log_post))
    return GridPosterior(lam, support, log_post, pmf / pmf.sum())


def exact_single_cell_log_post(data: PatternCountTable, N_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed form of the same posterior via Beta functions (unnormalized)."""
    n = data.n
    captured = np.zeros(data.S, dtype=np.int64)
    for pattern, count in data.counts.items():
        captured += count * np.asarray(pattern, dtype=np.int64)
    support = np.arange(n, N_max + 1)
    lp = gammaln(support + 1.0) - gammaln(support - n + 1.0) - np.log(support)
    for c in captured:
        lp = lp + gammaln(c + 1.0) + gammaln(support - c + 1.0) - gammaln(support + 2.0)
    return support, lp


def ks_distance(draws, posterior: GridPosterior) -> float:
    """Kolmogorov-Smirnov distance between integer draws and the grid marginal."""
    x = np.sort(np.asarray(draws))
    if x.size == 0:
        raise OracleError("no draws")
    if x[0] < posterior.support[0] or x[-1] > posterior.support[-1]:
        raise OracleError("draws fall outside the oracle support; raise N_max")
    ecdf = np.searchsorted(x, posterior.support, side="right") / x.size
    return float(np.max(np.abs(ecdf - posterior.cdf())))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    m = max(len(p), len(q))
    p = np.pad(p, (0, m - len(p)))
    q = np.pad(q, (0, m - len(q)))
    return 0.5 * float(np.abs(p - q).sum())


def enumerate_top_class_weights(records, pi2, pi1, lam, top_prior: str = "group") -> np.ndarray:
    """Top-class probabilities for one group by summing over every bottom-class
    configuration of its records.

    ``records`` is a ``(m, S)`` 0/1 array, ``pi2`` has shape ``(K,)``, ``pi1``
    ``(K, L)`` and ``lam`` ``(K, L, S)``.  With ``top_prior="record"`` the top
    weight enters once per record instead of once per group.
    """
    y = np.atleast_2d(np.asarray(records, dtype=float))
    pi2, pi1, lam = np.asarray(pi2, float), np.asarray(pi1, float), np.asarray(lam, float)
    m = y.shape[0]
    K, L = pi1.shape
    if m > MAX_ENUM_RECORDS:
        raise OracleError(f"enumeration refuses groups with more than {MAX_ENUM_RECORDS} records")
    if K > MAX_ENUM_CLASSES or L > MAX_ENUM_CLASSES:
        raise OracleError(f"enumeration handles at most {MAX_ENUM_CLASSES} classes per layer")
    # per-record, per-(k, l) joint of bottom class and pattern
    like = np.prod(lam[None] ** y[:, None, None, :] * (1 - lam[None]) ** (1 - y[:, None, None, :]), axis=-1)
    totals = np.zeros(K)
    for k in range(K):
        for config in itertools.product(range(L), repeat=m):
            term = 1.0
            for i, l in enumerate(config):
                term *= pi1[k, l] * like[i, k, l]
            totals[k] += term
        totals[k] *= pi2[k] ** (m if top_prior == "record" else 1)
    return totals / totals.sum()

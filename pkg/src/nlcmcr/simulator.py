"""Synthetic grouped capture data from known one- and two-layer truths."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DataError, GroupedDataset, pattern_string

TRUTH_HEADER = "# nlcmcr-truth v1"

# Group sizes 1 + round(LogNormal(mu, sigma)): sigma^2 = log(1 + (116/99)^2)
# and mu = log(99) - sigma^2 / 2 give a mean near 100 and sd near 116 before
# rescaling to the population total.
PAPER_SIZE_SIGMA = float(np.sqrt(np.log1p((116.0 / 99.0) ** 2)))
PAPER_SIZE_MU = float(np.log(99.0) - PAPER_SIZE_SIGMA**2 / 2.0)


class SimulationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LogNormalSizes:
    """Heavy right-tailed group sizes: ``1 + round(LogNormal(mu, sigma))``,
    rescaled by largest remainders to sum to the population total, with every
    group at least ``minimum``."""

    mu: float = PAPER_SIZE_MU
    sigma: float = PAPER_SIZE_SIGMA
    minimum: int = 2

    def draw(self, J: int, N: int, rng: np.random.Generator) -> np.ndarray:
        if N < self.minimum * J:
            raise SimulationConfigError(f"N={N} too small for {J} groups of at least {self.minimum}")
        raw = 1.0 + np.round(rng.lognormal(self.mu, self.sigma, size=J))
        target = raw / raw.sum() * N
        sizes = np.floor(target).astype(np.int64)
        short = N - int(sizes.sum())
        order = np.argsort(-(target - sizes), kind="stable")
        sizes[order[:short]] += 1
        # Lift small groups to the minimum, taking the difference from the largest.
        for j in np.flatnonzero(sizes < self.minimum):
            need = self.minimum - sizes[j]
            sizes[j] += need
            sizes[np.argmax(sizes)] -= need
        return sizes


@dataclass(frozen=True)
class SimulationConfig:
    """Ground truth for simulated data.

    ``capture_probs[k][l]`` is the length-``S`` capture vector of bottom
    class ``l`` inside top class ``k``.  ``group_sizes`` is either an explicit
    sequence (summing to ``N``) or a :class:`LogNormalSizes` rule.
    """

    S: int
    J: int
    N: int
    top_props: tuple[float, ...]
    bottom_props: tuple[tuple[float, ...], ...]
    capture_probs: tuple[tuple[tuple[float, ...], ...], ...]
    group_sizes: tuple[int, ...] | LogNormalSizes = field(default_factory=LogNormalSizes)
    seed: int = 0

    def __post_init__(self):
        if self.S < 2:
            raise SimulationConfigError("need at least two lists")
        if self.J < 1 or self.N < 1:
            raise SimulationConfigError("need J >= 1 and N >= 1")
        _check_simplex(self.top_props, "top_props")
        if len(self.bottom_props) != len(self.top_props):
            raise SimulationConfigError("one bottom simplex per top class is required")
        for k, props in enumerate(self.bottom_props):
            _check_simplex(props, f"bottom_props[{k}]")
            if len(self.capture_probs[k]) != len(props):
                raise SimulationConfigError(f"capture_probs[{k}] needs {len(props)} rows")
            for l, row in enumerate(self.capture_probs[k]):
                if len(row) != self.S or not all(0 <= p <= 1 for p in row):
                    raise SimulationConfigError(
                        f"capture_probs[{k}][{l}] must hold {self.S} probabilities in [0, 1]")
        if not isinstance(self.group_sizes, LogNormalSizes):
            sizes = tuple(int(x) for x in self.group_sizes)
            if len(sizes) != self.J or sum(sizes) != self.N or min(sizes) < 0:
                raise SimulationConfigError("explicit group sizes must be J nonnegative ints summing to N")

    @property
    def K(self) -> int:
        return len(self.top_props)

    def cell_props(self) -> list[tuple[int, int, float]]:
        """Flattened ``(k, l, top_k * bottom_kl)`` in top-major order."""
        return [(k, l, self.top_props[k] * p)
                for k, props in enumerate(self.bottom_props) for l, p in enumerate(props)]

    def unobserved_fraction(self) -> float:
        """Expected share of the population no list records (group-averaged)."""
        total = 0.0
        for k, l, w in self.cell_props():
            total += w * float(np.prod(1.0 - np.asarray(self.capture_probs[k][l])))
        return total

    def pattern_probs(self) -> np.ndarray:
        """Probability of each of the ``2**S`` patterns (row order of
        ``itertools.product``; index 0 is all-false) for one individual."""
        import itertools
        pats = np.array(list(itertools.product((0, 1), repeat=self.S)), dtype=float)
        out = np.zeros(len(pats))
        for k, l, w in self.cell_props():
            lam = np.asarray(self.capture_probs[k][l])
            out += w * np.prod(lam**pats * (1 - lam) ** (1 - pats), axis=1)
        return out


def _check_simplex(props, name: str) -> None:
    arr = np.asarray(props, dtype=float)
    if arr.ndim != 1 or len(arr) == 0 or np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-12:
        raise SimulationConfigError(f"{name} must be a probability vector summing to 1")


def paper_sim_config(seed: int = 0) -> SimulationConfig:
    """Two top classes over 100 groups, 4 lists, N = 10000."""
    return SimulationConfig(
        S=4, J=100, N=10000,
        top_props=(0.4, 0.6),
        bottom_props=((0.8, 0.2), (0.6, 0.4)),
        capture_probs=(
            ((0.9, 0.8, 0.7, 0.6), (0.01, 0.3, 0.1, 0.2)),
            ((0.1, 0.01, 0.2, 0.05), (0.9, 0.02, 0.1, 0.01)),
        ),
        group_sizes=LogNormalSizes(),
        seed=seed,
    )


def collapse_to_one_layer(cfg: SimulationConfig) -> SimulationConfig:
    """Single top class whose bottom classes are the original (k, l) cells."""
    cells = cfg.cell_props()
    return SimulationConfig(
        S=cfg.S, J=cfg.J, N=cfg.N,
        top_props=(1.0,),
        bottom_props=(_renormalize([w for _, _, w in cells]),),
        capture_probs=(tuple(tuple(cfg.capture_probs[k][l]) for k, l, _ in cells),),
        group_sizes=cfg.group_sizes, seed=cfg.seed,
    )


def _renormalize(ws):
    arr = np.asarray(ws, dtype=float)
    arr = arr / arr.sum()
    return tuple(float(x) for x in arr)


@dataclass
class TruthRecord:
    N: int
    n: int
    group_keys: list[str]
    group_sizes: np.ndarray  # (J,) true N_j
    observed_sizes: np.ndarray  # (J,) n_j including empty groups
    top_class: np.ndarray  # (J,) true top class per group
    cell_counts: np.ndarray  # (K, Lmax) true individuals per (k, l)
    unobserved_cells: np.ndarray  # (K, Lmax) unobserved individuals per (k, l)
    bottom_class: list[np.ndarray]  # observed records' true bottom class, per nonempty group

    @property
    def unobserved(self) -> int:
        return self.N - self.n

    def format(self) -> str:
        lines = [TRUTH_HEADER, f"N = {self.N}", f"n = {self.n}", f"unobserved = {self.unobserved}",
                 f"J = {len(self.group_keys)}"]
        K, L = self.cell_counts.shape
        for k in range(K):
            for l in range(L):
                lines.append(f"cell.{k + 1}.{l + 1}.total = {int(self.cell_counts[k, l])}")
                lines.append(f"cell.{k + 1}.{l + 1}.unobserved = {int(self.unobserved_cells[k, l])}")
        for key, size, obs, top in zip(self.group_keys, self.group_sizes, self.observed_sizes, self.top_class):
            lines.append(f"group.{key} = N:{int(size)} n:{int(obs)} top:{int(top) + 1}")
        return "\n".join(lines) + "\n"


def parse_truth(text: str) -> dict[str, str]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRUTH_HEADER:
        raise DataError("not a truth file (missing version header)")
    out = {}
    for line in lines[1:]:
        if "=" in line:
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def simulate_two_layer(cfg: SimulationConfig, rng: np.random.Generator) -> tuple[GroupedDataset, TruthRecord]:
    """Draw each group's top class, then each member's bottom class and
    capture pattern; members missed by every list are dropped from the data
    but tallied in the truth record."""
    K = cfg.K
    Lmax = max(len(p) for p in cfg.bottom_props)
    if isinstance(cfg.group_sizes, LogNormalSizes):
        sizes = cfg.group_sizes.draw(cfg.J, cfg.N, rng)
    else:
        sizes = np.asarray(cfg.group_sizes, dtype=np.int64)
    width = len(str(cfg.J))
    keys = [f"g{j + 1:0{width}d}" for j in range(cfg.J)]
    top = rng.choice(K, size=cfg.J, p=np.asarray(cfg.top_props))
    cell_total = np.zeros((K, Lmax), dtype=np.int64)
    cell_missed = np.zeros((K, Lmax), dtype=np.int64)
    groups, bottom_labels, observed = [], [], np.zeros(cfg.J, dtype=np.int64)
    for j in range(cfg.J):
        k = top[j]
        probs = np.asarray(cfg.bottom_props[k])
        lab = rng.choice(len(probs), size=sizes[j], p=probs)
        lam = np.asarray(cfg.capture_probs[k], dtype=float)[lab]
        y = rng.random((sizes[j], cfg.S)) < lam
        seen = y.any(axis=1)
        np.add.at(cell_total[k], lab, 1)
        np.add.at(cell_missed[k], lab[~seen], 1)
        observed[j] = int(seen.sum())
        if observed[j]:
            groups.append((keys[j], y[seen]))
            bottom_labels.append(lab[seen])
    if not groups:
        raise DataError("simulation produced no observed records")
    ds = GroupedDataset(cfg.S, tuple(groups), provenance=f"simulated two-layer data (seed {cfg.seed})")
    truth = TruthRecord(cfg.N, ds.n, keys, sizes, observed, top, cell_total, cell_missed, bottom_labels)
    return ds, truth


def simulate_one_layer(cfg: SimulationConfig, rng: np.random.Generator) -> tuple[GroupedDataset, TruthRecord]:
    if cfg.K != 1:
        raise SimulationConfigError("one-layer simulation needs exactly one top class")
    return simulate_two_layer(cfg, rng)


def simulate_replicates(cfg: SimulationConfig, replicates: int):
    """Independent replicates; replicate ``r`` uses stream ``r`` of ``cfg.seed``
    and redraws group sizes when they come from a rule."""
    from .distributions import make_rng
    return [simulate_two_layer(cfg, make_rng(cfg.seed, r)) for r in range(replicates)]


def pattern_table_string(ds: GroupedDataset) -> str:
    from .data import aggregate_patterns
    t = aggregate_patterns(ds)
    return "\n".join(f"{pattern_string(p)} {c}" for p, c in sorted(t.counts.items()))


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise SimulationConfigError(f"expected comma-separated numbers, got {text!r}") from None


def simulation_config_from_mapping(values: dict[str, str]) -> SimulationConfig:
    """Build a config from flat key-value settings.

    Keys: ``S``, ``J``, ``N``, ``seed``, ``top`` (comma list), ``bottom.<k>``
    (comma list per top class), ``lam.<k>.<l>`` (comma list of ``S`` capture
    probabilities), and ``group_sizes`` which is either ``lognormal`` (with
    optional ``size_mu``, ``size_sigma``, ``size_minimum``) or a comma list.
    Class indices are 1-based.
    """
    known = {"S", "J", "N", "seed", "top", "group_sizes", "size_mu", "size_sigma", "size_minimum"}
    for key in values:
        if key not in known and not key.startswith(("bottom.", "lam.")):
            raise SimulationConfigError(f"unknown simulation setting {key!r}")
    try:
        S, J, N = (int(values[k]) for k in ("S", "J", "N"))
        seed = int(values.get("seed", 0))
    except KeyError as e:
        raise SimulationConfigError(f"missing simulation setting {e.args[0]!r}") from None
    except ValueError as e:
        raise SimulationConfigError(str(e)) from None
    if "top" not in values:
        raise SimulationConfigError("missing simulation setting 'top'")
    top = _floats(values["top"])
    bottom, lam = [], []
    for k in range(1, len(top) + 1):
        if f"bottom.{k}" not in values:
            raise SimulationConfigError(f"missing simulation setting 'bottom.{k}'")
        props = _floats(values[f"bottom.{k}"])
        bottom.append(props)
        rows = []
        for l in range(1, len(props) + 1):
            if f"lam.{k}.{l}" not in values:
                raise SimulationConfigError(f"missing simulation setting 'lam.{k}.{l}'")
            rows.append(_floats(values[f"lam.{k}.{l}"]))
        lam.append(tuple(rows))
    sizes_spec = values.get("group_sizes", "lognormal").strip()
    if sizes_spec == "lognormal":
        sizes = LogNormalSizes(float(values.get("size_mu", PAPER_SIZE_MU)),
                               float(values.get("size_sigma", PAPER_SIZE_SIGMA)),
                               int(values.get("size_minimum", 2)))
    else:
        sizes = tuple(int(x) for x in _floats(sizes_spec))
    return SimulationConfig(S, J, N, top, tuple(bottom), tuple(lam), sizes, seed)

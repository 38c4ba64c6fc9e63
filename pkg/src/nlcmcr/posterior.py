"""Chain storage, pooled summaries, class relabeling and effective sample size.

Quantiles use linear interpolation between order statistics (the "type 7"
rule, numpy's default), and credible intervals are central.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

CHAIN_HEADER = "# nlcmcr-chain v1"
SUMMARY_HEADER = "# nlcmcr-summary v1"

#: Array-valued monitors and the class axes they carry, per model.
CLASS_AXES = {
    "lcmcr": {"alpha": 0, "pi": 1, "lam": 1, "occupancy": 1},
    "nlcmcr": {"alpha0": 0, "alpha": 1, "pi2": 1, "pi1": 2, "lam": 2, "occupancy": 2},
}


class ChainError(ValueError):
    """Chains are empty or do not share a schema."""


@dataclass
class ChainOutput:
    """Kept draws of one chain.

    ``draws`` maps a monitored name to an array whose first axis indexes kept
    iterations: ``N`` is ``(D,)``; class-level arrays keep their model shape,
    e.g. ``lam`` is ``(D, K, L, S)`` for the nested model.
    """

    model: str
    draws: dict[str, np.ndarray]
    chain_id: int = 0
    seed: int = 0
    n: int = 0
    config: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.draws["N"])

    def schema(self) -> tuple:
        return (self.model,) + tuple((k, v.shape[1:]) for k, v in sorted(self.draws.items()))

    def columns(self) -> tuple[list[str], np.ndarray]:
        names, cols = [], []
        for key in _ordered_keys(self.draws):
            arr = self.draws[key]
            if arr.ndim == 1:
                names.append(key)
                cols.append(arr[:, None].astype(float))
                continue
            for idx in np.ndindex(*arr.shape[1:]):
                names.append(key + "_" + "_".join(str(i + 1) for i in idx))
            cols.append(arr.reshape(arr.shape[0], -1).astype(float))
        return names, np.concatenate(cols, axis=1)


def _ordered_keys(draws) -> list[str]:
    first = [k for k in ("N", "n0") if k in draws]
    return first + sorted(k for k in draws if k not in first)


INTEGER_MONITORS = {"N", "n0", "occupancy", "occupied_top", "occupied_cells"}


def format_chain(chain: ChainOutput) -> str:
    names, table = chain.columns()
    meta = " ".join(
        f"{k}={v}" for k, v in (
            ("model", chain.model), ("chain", chain.chain_id), ("seed", chain.seed), ("n", chain.n),
            ("shapes", ";".join(f"{k}:{'x'.join(map(str, chain.draws[k].shape[1:])) or '-'}"
                                for k in _ordered_keys(chain.draws))),
        )
    )
    buf = io.StringIO()
    buf.write(f"{CHAIN_HEADER} {meta}\n")
    buf.write(",".join(names) + "\n")
    integer = [n.split("_")[0] in INTEGER_MONITORS or n in INTEGER_MONITORS for n in names]
    for row in table:
        buf.write(",".join(
            str(int(v)) if is_int else repr(float(v)) for v, is_int in zip(row, integer)
        ) + "\n")
    return buf.getvalue()


def parse_chain(text: str) -> ChainOutput:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(CHAIN_HEADER):
        raise ChainError("not a chain file (missing version header)")
    meta = dict(tok.split("=", 1) for tok in lines[0][len(CHAIN_HEADER):].split())
    names = lines[1].split(",")
    table = np.array([[float(x) for x in ln.split(",")] for ln in lines[2:] if ln], dtype=float)
    table = table.reshape(-1, len(names))
    draws = {}
    col = 0
    for item in meta["shapes"].split(";"):
        key, shape = item.split(":")
        shape = () if shape == "-" else tuple(int(s) for s in shape.split("x"))
        width = int(np.prod(shape)) if shape else 1
        block = table[:, col:col + width].reshape((-1,) + shape)
        if key in INTEGER_MONITORS:
            block = block.astype(np.int64)
        draws[key] = block
        col += width
    return ChainOutput(meta["model"], draws, int(meta["chain"]), int(meta["seed"]), int(meta["n"]))


def write_chain(chain: ChainOutput, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_chain(chain))


def read_chain(path) -> ChainOutput:
    with open(path, encoding="utf-8") as fh:
        return parse_chain(fh.read())


def pool(chains: list[ChainOutput], key: str) -> np.ndarray:
    check_schema(chains)
    return np.concatenate([c.draws[key] for c in chains], axis=0)


def check_schema(chains: list[ChainOutput]) -> None:
    if not chains:
        raise ChainError("no chains to summarize")
    if any(c.size == 0 for c in chains):
        raise ChainError("a chain has no kept draws")
    first = chains[0].schema()
    for c in chains[1:]:
        if c.schema() != first:
            raise ChainError(
                f"chain {c.chain_id} ({c.model}) does not match the schema of chain "
                f"{chains[0].chain_id} ({chains[0].model})"
            )


# ---------------------------------------------------------------------------
# effective sample size


@dataclass(frozen=True)
class EssResult:
    ess: float
    zero_variance: bool = False

    def __float__(self):
        return self.ess


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(series) -> EssResult:
    """Geyer's initial positive sequence estimator, capped at the series length."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 10:
        raise ValueError("effective sample size needs at least 10 draws")
    if np.ptp(x) == 0:
        return EssResult(float(n), zero_variance=True)
    rho = autocorrelation(x)
    # Sum consecutive pairs while they stay positive.
    total = 0.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        total += pair
    tau = max(2.0 * total - 1.0, 1e-12)
    return EssResult(float(min(n / tau, n)))


def pooled_ess(chains_series: list[np.ndarray]) -> float:
    return float(sum(effective_sample_size(s).ess for s in chains_series))


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class QuantitySummary:
    name: str
    mean: float
    median: float
    lower: float
    upper: float
    ess: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class PosteriorSummary:
    level: float
    quantities: dict[str, QuantitySummary]
    classes: "ClassTable | None" = None
    draws: int = 0
    chains: int = 0

    def __getitem__(self, key) -> QuantitySummary:
        return self.quantities[key]


def credible_interval(x, level: float = 0.95) -> tuple[float, float]:
    lo = (1.0 - level) / 2.0
    q = np.quantile(np.asarray(x, dtype=float), [lo, 1.0 - lo], method="linear")
    return float(q[0]), float(q[1])


def summarize_draws(name: str, per_chain: list[np.ndarray], level: float) -> QuantitySummary:
    x = np.concatenate(per_chain)
    lo, hi = credible_interval(x, level)
    ess = sum(effective_sample_size(s).ess for s in per_chain if len(s) >= 10)
    return QuantitySummary(name, float(np.mean(x)), float(np.median(x)), lo, hi, float(ess))


def summarize(chains: list[ChainOutput], level: float = 0.95, relabel: bool = True) -> PosteriorSummary:
    """Pool kept draws over chains and summarize the label-invariant scalars.

    Class-level parameters are summarized through :func:`relabel_classes`.
    """
    if not 0 < level < 1:
        raise ValueError("credible level must lie in (0, 1)")
    check_schema(chains)
    quantities = {}
    scalar_keys = [k for k in _ordered_keys(chains[0].draws) if chains[0].draws[k].ndim == 1]
    for key in scalar_keys:
        quantities[key] = summarize_draws(key, [c.draws[key] for c in chains], level)
    classes = relabel_classes(chains, level) if relabel else None
    return PosteriorSummary(level, quantities, classes, sum(c.size for c in chains), len(chains))


# ---------------------------------------------------------------------------
# relabeling


@dataclass
class ClassTable:
    """Per-slot summaries after sorting classes by weight within each draw.

    ``rows`` holds one dict per retained slot with keys ``top``, ``bottom``
    (``None`` for the flat model), ``weight``/``top_weight`` tuples of
    ``(median, lower, upper)``, ``lam`` as a list of such tuples per list, and
    ``occupancy`` (posterior mean).
    """

    model: str
    level: float
    rows: list[dict]
    sorted_draws: dict[str, np.ndarray]


def _median_interval(x, level) -> tuple[float, float, float]:
    lo, hi = credible_interval(x, level)
    return float(np.median(x)), lo, hi


def sort_classes(model: str, draws: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Reorder class axes in every draw by descending weight.

    Flat model: classes by ``pi``.  Nested model: top classes by ``pi2``,
    then bottom classes within each top class by ``pi1``.  Ties keep the
    original order (stable sort).
    """
    out = dict(draws)
    if model == "lcmcr":
        order = np.argsort(-draws["pi"], axis=1, kind="stable")
        D = order.shape[0]
        rows = np.arange(D)[:, None]
        for key in ("pi", "lam", "occupancy"):
            out[key] = draws[key][rows, order]
        return out
    top = np.argsort(-draws["pi2"], axis=1, kind="stable")
    D, K = top.shape
    rows = np.arange(D)[:, None]
    for key in ("pi2", "alpha"):
        out[key] = draws[key][rows, top]
    for key in ("pi1", "lam", "occupancy"):
        out[key] = draws[key][rows, top]
    bottom = np.argsort(-out["pi1"], axis=2, kind="stable")
    rows3 = np.arange(D)[:, None, None]
    cols3 = np.arange(K)[None, :, None]
    for key in ("pi1", "lam", "occupancy"):
        out[key] = out[key][rows3, cols3, bottom]
    return out


def relabel_classes(chains: list[ChainOutput], level: float = 0.95,
                    min_occupancy: float = 1.0) -> ClassTable:
    """Slot-wise parameter table with sparsely used slots suppressed.

    A slot is kept when its posterior mean occupancy (observed plus
    unobserved members) is at least ``min_occupancy``.
    """
    check_schema(chains)
    model = chains[0].model
    draws = {k: np.concatenate([c.draws[k] for c in chains]) for k in chains[0].draws}
    s = sort_classes(model, draws)
    rows = []
    if model == "lcmcr":
        occ = s["occupancy"].mean(axis=0)
        for k in range(occ.shape[0]):
            if occ[k] < min_occupancy:
                continue
            rows.append({
                "top": k + 1, "bottom": None,
                "weight": _median_interval(s["pi"][:, k], level),
                "lam": [_median_interval(s["lam"][:, k, j], level) for j in range(s["lam"].shape[2])],
                "occupancy": float(occ[k]),
            })
    else:
        occ = s["occupancy"].mean(axis=0)
        for k in range(occ.shape[0]):
            if occ[k].sum() < min_occupancy:
                continue
            top_w = _median_interval(s["pi2"][:, k], level)
            for l in range(occ.shape[1]):
                if occ[k, l] < min_occupancy:
                    continue
                rows.append({
                    "top": k + 1, "bottom": l + 1,
                    "top_weight": top_w,
                    "weight": _median_interval(s["pi1"][:, k, l], level),
                    "lam": [_median_interval(s["lam"][:, k, l, j], level)
                            for j in range(s["lam"].shape[3])],
                    "occupancy": float(occ[k, l]),
                })
    return ClassTable(model, level, rows, s)


# ---------------------------------------------------------------------------
# report formatting


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def format_summary_table(summary: PosteriorSummary) -> str:
    pct = f"{summary.level * 100:g}%"
    lines = [f"Posterior summary: {summary.chains} chain(s), {summary.draws} pooled draws, "
             f"{pct} central credible intervals",
             f"{'quantity':<16}{'median':>12}{'mean':>12}{'lower':>12}{'upper':>12}{'ESS':>10}"]
    for q in summary.quantities.values():
        lines.append(f"{q.name:<16}{_fmt(q.median):>12}{_fmt(q.mean):>12}"
                     f"{_fmt(q.lower):>12}{_fmt(q.upper):>12}{q.ess:>10.0f}")
    if summary.classes is not None and summary.classes.rows:
        lines.append("")
        lines.append("Class parameters (slots sorted by weight; median [lower, upper])")
        for row in summary.classes.rows:
            label = f"class {row['top']}" if row["bottom"] is None else f"top {row['top']} / bottom {row['bottom']}"
            parts = []
            if "top_weight" in row:
                parts.append("top weight " + _interval_text(row["top_weight"]))
            parts.append("weight " + _interval_text(row["weight"]))
            parts.append("lambda " + " ".join(_interval_text(t) for t in row["lam"]))
            lines.append(f"{label}: " + "; ".join(parts) + f"; mean occupancy {row['occupancy']:.1f}")
    return "\n".join(lines) + "\n"


def _interval_text(t) -> str:
    return f"{t[0]:.3f} [{t[1]:.3f}, {t[2]:.3f}]"


def format_summary_kv(summary: PosteriorSummary) -> str:
    lines = [SUMMARY_HEADER, f"level = {summary.level!r}", f"chains = {summary.chains}",
             f"draws = {summary.draws}"]
    for q in summary.quantities.values():
        for attr in ("median", "mean", "lower", "upper", "ess"):
            lines.append(f"{q.name}.{attr} = {getattr(q, attr)!r}")
    if summary.classes is not None:
        for row in summary.classes.rows:
            slot = f"class.{row['top']}" + ("" if row["bottom"] is None else f".{row['bottom']}")
            if "top_weight" in row:
                lines.append(f"{slot}.top_weight = {' '.join(map(repr, row['top_weight']))}")
            lines.append(f"{slot}.weight = {' '.join(map(repr, row['weight']))}")
            for s, t in enumerate(row["lam"], start=1):
                lines.append(f"{slot}.lambda_{s} = {' '.join(map(repr, t))}")
            lines.append(f"{slot}.occupancy = {row['occupancy']!r}")
    return "\n".join(lines) + "\n"


def trace_table(chains: list[ChainOutput]) -> str:
    """Per-iteration N and relabeled class-weight traces as delimited text."""
    check_schema(chains)
    model = chains[0].model
    out = ["# nlcmcr-trace v1", None]
    header = None
    for c in chains:
        s = sort_classes(model, c.draws)
        weights = s["pi"] if model == "lcmcr" else s["pi2"]
        if header is None:
            header = ["chain", "draw", "N"] + [f"weight_{k + 1}" for k in range(weights.shape[1])]
        for d in range(c.size):
            out.append(",".join([str(c.chain_id), str(d), str(int(c.draws["N"][d]))]
                                + [repr(float(w)) for w in weights[d]]))
    out[1] = ",".join(header)
    return "\n".join(out) + "\n"

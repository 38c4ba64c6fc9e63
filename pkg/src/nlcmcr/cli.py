"""Command-line entry point: ``nlcmcr simulate | fit | summarize``.

Exit codes: 0 success, 2 usage or configuration error, 3 data validation
error, 4 numeric degeneracy.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from importlib import metadata
from pathlib import Path

from .data import DEFAULT_GROUP, DataError, PatternCountTable, format_records, load_dataset
from .lcmcr import fit_lcmcr
from .nested import fit_nlcmcr
from .posterior import (
    ChainError,
    format_summary_kv,
    format_summary_table,
    read_chain,
    summarize,
    trace_table,
    write_chain,
)
from .sampling import (
    OCCUPANCY_MODES,
    TOP_PRIOR_MODES,
    ConfigError,
    McmcConfig,
    NumericDegeneracyError,
    parse_key_values,
)
from .simulator import (
    SimulationConfigError,
    paper_sim_config,
    simulate_replicates,
    simulation_config_from_mapping,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 2, 3, 4
MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create output directory {out}: {e.strerror}") from None
    return out


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e.strerror}") from None


def write_manifest(out: Path, command: str, config: dict, seed: int, inputs: list, started: str) -> dict:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _digest(p) for p in inputs},
        "started": started,
        "finished": _now(),
        "version": _version(),
    }
    _write(out / MANIFEST_NAME, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _read_config(path) -> dict[str, str]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_key_values(fh.read())
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror}") from None


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    started = _now()
    if args.paper_sim == (args.config is not None):
        raise UsageError("give exactly one of --config or --paper-sim")
    if args.paper_sim:
        cfg = paper_sim_config(seed=args.seed if args.seed is not None else 0)
        inputs = []
    else:
        values = _read_config(args.config)
        if args.seed is not None:
            values["seed"] = str(args.seed)
        cfg = simulation_config_from_mapping(values)
        inputs = [args.config]
    if args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    out = _out_dir(args.out_dir)
    for r, (ds, truth) in enumerate(simulate_replicates(cfg, args.replicates), start=1):
        _write(out / f"rep_{r:03d}.csv", format_records(ds))
        _write(out / f"rep_{r:03d}.truth.txt", truth.format())
    echo = {"S": cfg.S, "J": cfg.J, "N": cfg.N, "top_props": cfg.top_props,
            "bottom_props": cfg.bottom_props, "capture_probs": cfg.capture_probs,
            "group_sizes": repr(cfg.group_sizes), "replicates": args.replicates}
    write_manifest(out, "simulate", echo, cfg.seed, inputs, started)
    print(f"wrote {args.replicates} replicate(s) to {out}")
    return EXIT_OK


# -- fit --------------------------------------------------------------------

FIT_FLAGS = {
    "k_star": "k_star", "l_star": "l_star", "iterations": "iterations", "burn_in": "burn_in",
    "thin": "thinning", "chains": "chains", "seed": "seed", "occupancy": "occupancy_counting",
    "top_prior": "top_prior",
}


def build_fit_config(args) -> McmcConfig:
    values = _read_config(args.config)
    for flag, key in FIT_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            values[key] = str(v)
    return McmcConfig.from_mapping(values)


def cmd_fit(args) -> int:
    started = _now()
    config = build_fit_config(args)
    data = load_dataset(args.data)
    if args.model == "nlcmcr":
        if isinstance(data, PatternCountTable):
            raise UsageError("nlcmcr needs record-level data with a group column; "
                             "aggregated pattern counts carry no groups")
        if data.group_keys == [DEFAULT_GROUP]:
            raise UsageError("nlcmcr needs a group column; the record file has none")
        chains = fit_nlcmcr(data, config, workers=args.workers)
    else:
        chains = fit_lcmcr(data, config, workers=args.workers)
    out = _out_dir(args.out_dir)
    for c in chains:
        write_chain(c, out / f"chain_{c.chain_id + 1}.csv")
    summary = summarize(chains, args.level)
    table = format_summary_table(summary)
    _write(out / "summary.txt", table)
    _write(out / "summary.kv", format_summary_kv(summary))
    echo = dict(config.as_dict(), model=args.model, level=args.level)
    write_manifest(out, "fit", echo, config.seed, [args.data] + ([args.config] if args.config else []), started)
    sys.stdout.write(table)
    return EXIT_OK


# -- summarize --------------------------------------------------------------

def cmd_summarize(args) -> int:
    started = _now()
    chains = []
    for path in args.chains:
        try:
            chains.append(read_chain(path))
        except OSError as e:
            raise UsageError(f"cannot read chain file {path}: {e.strerror}") from None
    summary = summarize(chains, args.level)
    table = format_summary_table(summary)
    if args.out_dir is not None:
        out = _out_dir(args.out_dir)
        _write(out / "summary.txt", table)
        _write(out / "summary.kv", format_summary_kv(summary))
        _write(out / "trace.csv", trace_table(chains))
        write_manifest(out, "summarize", {"level": args.level, "chains": len(chains)},
                       chains[0].seed, list(args.chains), started)
    sys.stdout.write(table)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _level(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("level must lie strictly between 0 and 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlcmcr", description="Latent class capture-recapture estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate synthetic grouped capture data")
    s.add_argument("--config", help="key-value simulation settings")
    s.add_argument("--paper-sim", action="store_true", help="two-layer preset with N=10000, J=100")
    s.add_argument("--replicates", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="run MCMC on a dataset")
    f.add_argument("--model", choices=("lcmcr", "nlcmcr"), required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--config", help="key-value sampler settings; flags override")
    f.add_argument("--k-star", type=int)
    f.add_argument("--l-star", type=int)
    f.add_argument("--iterations", type=int, help="sweeps per chain including burn-in")
    f.add_argument("--burn-in", type=int)
    f.add_argument("--thin", type=int)
    f.add_argument("--chains", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--occupancy", choices=OCCUPANCY_MODES)
    f.add_argument("--top-prior", choices=TOP_PRIOR_MODES)
    f.add_argument("--workers", type=int, default=1, help="processes for running chains")
    f.add_argument("--level", type=_level, default=0.95)
    f.add_argument("--out-dir", default=".")
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("summarize", help="pool chain files into a posterior summary")
    m.add_argument("--chains", nargs="+", required=True)
    m.add_argument("--level", type=_level, default=0.95)
    m.add_argument("--out-dir")
    m.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, SimulationConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericDegeneracyError as e:
        print(f"numeric degeneracy: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataError, ChainError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

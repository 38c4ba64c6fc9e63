import json

import pytest

from nlcmcr import cli
from nlcmcr.data import load_dataset, table1_path
from nlcmcr.sampling import NumericDegeneracyError
from nlcmcr.simulator import parse_truth

SMALL_SIM = """\
S = 3
J = 8
N = 240
seed = 5
top = 0.5, 0.5
bottom.1 = 0.5, 0.5
bottom.2 = 1.0
lam.1.1 = 0.5, 0.4, 0.3
lam.1.2 = 0.2, 0.3, 0.2
lam.2.1 = 0.6, 0.6, 0.5
group_sizes = 30, 30, 30, 30, 30, 30, 30, 30
"""


def _run(*argv) -> int:
    return cli.main([str(a) for a in argv])


@pytest.fixture
def sim_dir(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(SMALL_SIM)
    assert _run("simulate", "--config", cfg, "--replicates", 2, "--out-dir", tmp_path / "sim") == 0
    return tmp_path / "sim"


def test_preset_writes_replicates(tmp_path):
    assert _run("simulate", "--paper-sim", "--replicates", 3, "--seed", 7, "--out-dir", tmp_path) == 0
    for r in (1, 2, 3):
        truth = parse_truth((tmp_path / f"rep_{r:03d}.truth.txt").read_text())
        assert truth["N"] == "10000"
        ds = load_dataset(tmp_path / f"rep_{r:03d}.csv")
        assert ds.n == int(truth["n"]) and len(ds.group_keys) <= 100
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["seed"] == 7


def test_simulate_byte_identical(tmp_path, sim_dir):
    cfg = tmp_path / "sim.cfg"
    assert _run("simulate", "--config", cfg, "--replicates", 2, "--out-dir", tmp_path / "again") == 0
    for name in ("rep_001.csv", "rep_002.csv", "rep_001.truth.txt"):
        assert (sim_dir / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_simulate_rejects_bad_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(SMALL_SIM.replace("top = 0.5, 0.5", "top = 0.5, 0.6"))
    assert _run("simulate", "--config", cfg, "--out-dir", tmp_path) == 2
    cfg.write_text(SMALL_SIM + "colour = blue\n")
    assert _run("simulate", "--config", cfg, "--out-dir", tmp_path) == 2
    assert _run("simulate", "--out-dir", tmp_path) == 2


def _fit(data, out, model="nlcmcr", seed=1, *extra):
    return _run("fit", "--model", model, "--data", data, "--iterations", 60, "--burn-in", 20,
                "--chains", 2, "--k-star", 3, "--l-star", 2, "--seed", seed, "--out-dir", out, *extra)


def test_fit_reproducible_and_summarize(tmp_path, sim_dir, capsys):
    data = sim_dir / "rep_001.csv"
    assert _fit(data, tmp_path / "a") == 0
    assert _fit(data, tmp_path / "b") == 0
    for name in ("chain_1.csv", "chain_2.csv", "summary.kv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "fit" and str(data) in manifest["inputs"]
    capsys.readouterr()
    chains = [tmp_path / "a" / "chain_1.csv", tmp_path / "a" / "chain_2.csv"]
    assert _run("summarize", "--chains", *chains, "--level", 0.9, "--out-dir", tmp_path / "s") == 0
    assert "90%" in capsys.readouterr().out
    trace = (tmp_path / "s" / "trace.csv").read_text().splitlines()
    assert len(trace) == 2 + 2 * 40


def test_summarize_rejects_mixed_models(tmp_path, sim_dir):
    data = sim_dir / "rep_001.csv"
    assert _fit(data, tmp_path / "n") == 0
    assert _fit(data, tmp_path / "f", "lcmcr") == 0
    assert _run("summarize", "--chains", tmp_path / "n" / "chain_1.csv", tmp_path / "f" / "chain_1.csv") == 3


def test_nlcmcr_needs_groups(tmp_path):
    assert _fit(table1_path(), tmp_path, "nlcmcr") == 2
    plain = tmp_path / "plain.csv"
    plain.write_text("list_1,list_2\n1,0\n0,1\n1,1\n")
    assert _fit(plain, tmp_path, "nlcmcr") == 2


def test_lcmcr_on_bundled_counts(tmp_path, capsys):
    assert _run("fit", "--model", "lcmcr", "--data", table1_path(), "--iterations", 50, "--burn-in", 10,
                "--chains", 1, "--out-dir", tmp_path) == 0
    assert capsys.readouterr().out.splitlines()[2].startswith("N")


def test_data_errors_exit_3(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("list_1,list_2,group\n0,0,a\n")
    assert _fit(bad, tmp_path, "lcmcr") == 3


def test_bad_sampler_config_exits_2(tmp_path, sim_dir):
    assert _fit(sim_dir / "rep_001.csv", tmp_path, "nlcmcr", 1, "--thin", 0) == 2


def test_degeneracy_exits_4(tmp_path, sim_dir, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericDegeneracyError("unobserved probability 1 leaves the population unidentified", 17)
    monkeypatch.setattr(cli, "fit_nlcmcr", boom)
    assert _fit(sim_dir / "rep_001.csv", tmp_path) == 4

import json
import hashlib
import math
from pathlib import Path

import numpy as np
import pytest

from ergmvi import __version__
from ergmvi.cli import main

FAST = ["--aux-iters", "3000", "--thin", "100", "--count", "1000"]


def run(*args):
    return main([str(a) for a in args])


def test_oracle_prints_log_z(tmp_path, capsys):
    assert run("oracle", "--nodes", 4, "--terms", "edges", "--theta", 0, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    value = float(out.split("log_z = ")[1].split()[0])
    assert value == pytest.approx(6 * math.log(2), abs=1e-12)


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_usage_errors(tmp_path):
    assert run("oracle", "--bogus") == 2
    assert run("mple", "--terms", "edges", "--out", tmp_path) == 2
    assert run("mple", "--network", tmp_path / "missing.txt", "--nodes", 3, "--terms", "edges",
               "--out", tmp_path) == 2
    assert run("fit-ncvmp", "--out", tmp_path) == 2


def test_module_error_exit_1(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("1 9\n")
    assert run("mple", "--network", f, "--nodes", 3, "--terms", "edges", "--out", tmp_path) == 1
    assert run("oracle", "--nodes", 7, "--terms", "edges", "--theta", 0, "--out", tmp_path) == 1


def test_config_and_flags_win(tmp_path):
    cfg = tmp_path / "m.toml"
    cfg.write_text('karate = true\nterms = ["edges", "gwesp:0.2"]\nthin = 7\n')
    assert run("mple", "--config", cfg, "--out", tmp_path / "a") == 0
    man = json.loads((tmp_path / "a" / "mple.manifest.json").read_text())
    assert man["config"]["terms"] == ["edges", "gwesp:0.2"] and man["config"]["thin"] == 7
    assert run("mple", "--config", cfg, "--terms", "edges", "--out", tmp_path / "b") == 0
    rows = (tmp_path / "b" / "mple.csv").read_text().splitlines()
    assert len(rows) == 2
    cfg.write_text("unknown_key = 1\n")
    assert run("mple", "--config", cfg, "--out", tmp_path) == 2


def test_bundled_config(tmp_path):
    assert run("dump-changestats", "--config", "karate-m3", "--out", tmp_path) == 0
    lines = (tmp_path / "changestats.csv").read_text().splitlines()
    assert lines[0] == "i,j,y,edges,gwesp.0.2,gwd.0.8"
    assert len(lines) == 1 + 34 * 33 // 2


def test_manifest_hashes(tmp_path):
    assert run("simulate", "--karate", "--terms", "edges,gwd:0.8", "--theta=-1.4,-1.5",
               "--aux-iters", 200, "--thin", 10, "--count", 50, "--out", tmp_path) == 0
    man = json.loads((tmp_path / "simulate.manifest.json").read_text())
    assert man["subcommand"] == "simulate" and man["version"] == __version__
    for rec in man["outputs"].values():
        assert hashlib.sha256(Path(rec["path"]).read_bytes()).hexdigest() == rec["sha256"]


@pytest.fixture(scope="module")
def karate_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("karate")
    for m in (1, 2, 3):
        d = base / f"m{m}"
        assert run("adjust", "--config", f"karate-m{m}", *FAST, "--temps", 10, "--rung-samples", 200,
                   "--out", d) == 0
        assert run("fit-ncvmp", "--adjust-cache", d / "adjust.json", "--out", d) == 0
        assert run("iwlb", "--posterior", d / "posterior.csv", "--adjust-cache", d / "adjust.json",
                   "--N", 300, "--label", f"M{m}", "--out", d) == 0
    return base


def test_ncvmp_pipeline(karate_runs):
    d = karate_runs / "m1"
    assert (d / "posterior.csv").exists()
    trace = np.loadtxt(d / "ncvmp-trace.csv", delimiter=",", skiprows=1)[:, 1]
    assert np.all(np.diff(trace) >= 0)


def test_compare_ranking(karate_runs, tmp_path, capsys):
    files = [karate_runs / f"m{m}" / "iwlb.csv" for m in (1, 2, 3)]
    assert run("compare", "--inputs", *files, "--out", tmp_path) == 0
    rows = [l.split(",") for l in (tmp_path / "compare.csv").read_text().splitlines()[1:]]
    rank = {r[0]: int(r[4]) for r in rows}
    assert rank == {"M1": 1, "M3": 2, "M2": 3}


def test_svi_laplace_kl(karate_runs, tmp_path):
    d = karate_runs / "m2"
    assert run("fit-laplace", "--adjust-cache", d / "adjust.json", "--out", tmp_path / "lap") == 0
    assert run("fit-svi", "--config", "karate-m2", "--adjust-cache", d / "adjust.json", "--aux-iters", 2000,
               "--thin", 100, "--check-every", 300, "--max-iters", 900, "--out", tmp_path / "svi") == 0
    assert run("iwlb", "--posterior", tmp_path / "svi" / "posterior.csv", "--adjust-cache",
               d / "adjust.json", "--path", "II", "--N", 200, "--out", tmp_path / "svi") == 0
    assert run("kl-compare", "--a", tmp_path / "svi" / "posterior.csv", "--b", d / "posterior.csv",
               "--out", tmp_path) == 0
    kl = np.loadtxt(tmp_path / "kl.csv", delimiter=",", skiprows=1, usecols=1)
    assert np.all(kl >= 0) and np.all(kl < 1)
    # wrong network for the cache
    assert run("fit-svi", "--config", "karate-m1", "--adjust-cache", d / "adjust.json",
               "--max-iters", 10, "--out", tmp_path / "bad") == 1


def test_exchange_and_kl_against_chain(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("1 2\n2 3\n3 4\n")
    assert run("fit-exchange", "--network", f, "--nodes", 4, "--terms", "edges", "--iters", 4000,
               "--burnin", 500, "--sigma-eps", 0.8, "--aux-iters", 50, "--out", tmp_path) == 0
    assert run("mple", "--network", f, "--nodes", 4, "--terms", "edges", "--out", tmp_path) == 0
    draws = np.loadtxt(tmp_path / "exchange.csv", delimiter=",", skiprows=1)
    assert draws.shape == (3500,)

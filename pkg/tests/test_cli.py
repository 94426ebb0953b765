import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from offsetlag.cli import main

LSTAR = 700 / 0.34


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    rc = main(["simulate", "--scheme", "pp-width", "--select", "tracker-list", "--width-model", "stationary",
               "--width-mean", "1500", "--n", "150", "--seed", "2", "--out", str(out)])
    assert rc == 0
    return out


def test_simulate_sequential_converges(tmp_path, capsys):
    rc = main(["simulate", "--scheme", "pp-lag", "--alpha", "0.34", "--tau", "70", "--rate", "10", "--n", "1000",
               "--select", "sequential", "--seed", "1", "--out", str(tmp_path)])
    assert rc == 0
    rows = read_csv(tmp_path / "summary.csv")
    assert list(rows[0]) == ["join_index", "theta", "lag", "width_at_place", "chain_len", "ref_peer",
                             "good_peer_flag"]
    assert abs(float(rows[-1]["lag"]) - LSTAR) / LSTAR < 1e-3
    out = capsys.readouterr().out
    assert "L* = 2058.82" in out and "convergence_index = " in out
    for name in ("trace.jsonl", "chains.csv", "meta.json"):
        assert (tmp_path / name).exists()
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["args"]["seed"] == 1 and meta["version"]


def test_simulate_fixed_padding_equal_lags(tmp_path):
    assert main(["simulate", "--scheme", "fp", "--pad", "700", "--n", "200", "--select", "random",
                 "--out", str(tmp_path)]) == 0
    assert len({r["lag"] for r in read_csv(tmp_path / "summary.csv")}) == 1


def test_simulate_missing_n(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path)]) == 2
    assert "usage:" in capsys.readouterr().err


def test_simulate_bad_values(tmp_path):
    assert main(["simulate", "--n", "5", "--alpha", "1.5", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--n", "5", "--no-such-flag", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--n", "five", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--n", "5", "--sweep", "seeds=3..1", "--out", str(tmp_path)]) == 2


def test_simulate_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--n", "3", "--out", str(blocker / "sub")]) == 3
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 3


def test_simulate_config_files(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"n_peers": 20, "selection": "random", "seed": 4}))
    (tmp_path / "c.toml").write_text('n_peers = 20\nselection = "random"\nseed = 4\n')
    assert main(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trace.jsonl").read_bytes() == (tmp_path / "b" / "trace.jsonl").read_bytes()
    # flags override file values
    assert main(["simulate", "--config", str(tmp_path / "c.json"), "--n", "7", "--out", str(tmp_path / "c")]) == 0
    assert len(read_csv(tmp_path / "c" / "summary.csv")) == 7
    (tmp_path / "bad.json").write_text(json.dumps({"n_peers": 3, "colour": "red"}))
    assert main(["simulate", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "d")]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("OFFSETLAG_OUT", str(tmp_path / "envout"))
    assert main(["simulate", "--n", "3"]) == 0
    assert (tmp_path / "envout" / "summary.csv").exists()


def test_sweep_outputs(tmp_path):
    assert main(["simulate", "--n", "10", "--select", "random", "--sweep", "seeds=1..3", "--workers", "2",
                 "--out", str(tmp_path)]) == 0
    for s in (1, 2, 3):
        assert (tmp_path / f"seed_{s}" / "trace.jsonl").exists()
    rows = read_csv(tmp_path / "summary.csv")
    assert len(rows) == 30 and {r["seed"] for r in rows} == {"1", "2", "3"}


def test_probe_fixed_point(tmp_path, capsys):
    assert main(["probe", "--beta", "const:1", "--alpha", "0.34", "--rtau", "700", "--hops", "200",
                 "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "probe.csv")
    assert list(rows[0]) == ["hop", "beta", "tau", "lag"]
    assert len(rows) == 200
    assert abs(float(rows[-1]["lag"]) - LSTAR) <= 1e-6
    assert "bounds = [2058.82" in capsys.readouterr().out


def test_probe_harmonic_grows(tmp_path):
    assert main(["probe", "--beta", "harmonic", "--rtau", "700", "--hops", "1000000", "--stride", "1000",
                 "--out", str(tmp_path)]) == 0
    lags = np.array([float(r["lag"]) for r in read_csv(tmp_path / "probe.csv")])
    assert lags[-1] > 10 * LSTAR
    assert np.all(np.diff(lags) > 0)


def test_probe_sandwich(tmp_path):
    assert main(["probe", "--beta", "const:0.5", "--rtau", "700", "--hops", "500", "--out", str(tmp_path)]) == 0
    final = float(read_csv(tmp_path / "probe.csv")[-1]["lag"])
    assert LSTAR < final < 2 * LSTAR


def test_probe_file_rule(tmp_path):
    (tmp_path / "b.txt").write_text("1.0\n0.5\n")
    assert main(["probe", "--beta", f"file:{tmp_path / 'b.txt'}", "--hops", "4", "--out", str(tmp_path)]) == 0
    assert [r["beta"] for r in read_csv(tmp_path / "probe.csv")] == ["1.0", "0.5", "1.0", "0.5"]


def test_probe_errors(tmp_path):
    assert main(["probe", "--beta", "cubic", "--out", str(tmp_path)]) == 2
    assert main(["probe", "--beta", "const:0.5", "--alpha", "1.2", "--out", str(tmp_path)]) == 2
    assert main(["probe", "--beta", "const:0.5", "--hops", "0", "--out", str(tmp_path)]) == 2
    assert main(["probe", "--out", str(tmp_path)]) == 2


def test_analyze_round_trip(sim_dir, tmp_path):
    assert main(["analyze", str(sim_dir / "trace.jsonl"), "--out", str(tmp_path)]) == 0
    for name in ("setup_times.csv", "coefficients.csv", "availability.csv", "summary.json"):
        assert (tmp_path / name).exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    coef = read_csv(tmp_path / "coefficients.csv")
    min_w = min(int(r["ref_width"]) for r in coef)
    assert abs(summary["alpha_w"]["mode"] - 0.34) <= 1 / min_w
    assert summary["rate"] == 10


def test_analyze_methods_agree(sim_dir, tmp_path):
    means = {}
    for m in ("aa", "li"):
        assert main(["analyze", str(sim_dir / "trace.jsonl"), "--method", m, "--occupation-threshold", "50",
                     "--infer-rate-from-tracker-width", "1200", "--availability-mode", "scope",
                     "--out", str(tmp_path / m)]) == 0
        means[m] = json.loads((tmp_path / m / "summary.json").read_text())["setup_time"]["mean"]
    assert abs(means["aa"] - means["li"]) <= 5.0


def test_analyze_errors(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["analyze", str(empty), "--out", str(tmp_path)]) == 4
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"kind":"header","schema":1}\n{"peer":1,"t":0}\nnot json\n')
    capsys.readouterr()
    assert main(["analyze", str(bad), "--out", str(tmp_path)]) == 4
    assert "line 3" in capsys.readouterr().err
    future = tmp_path / "v2.jsonl"
    future.write_text('{"kind":"header","schema":2}\n')
    assert main(["analyze", str(future), "--out", str(tmp_path)]) == 5
    assert main(["analyze", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path)]) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "offsetlag", "probe", "--beta", "const:1", "--hops", "5",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and "final_lag" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "offsetlag"], capture_output=True, text=True)
    assert proc.returncode == 2

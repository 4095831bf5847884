import json

import numpy as np
import pytest

from gravpursuit.cli import main


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    cfg = d / "cfg.json"
    cfg.write_text(json.dumps({"max_degree": 8, "reuter_control": 16, "n_lambda": 20,
                               "tracks": [6, 4, 60], "realizations": 4}))
    assert main(["simulate", "--config", str(cfg), "--scenario", "(500,5,cn,S)",
                 "--out", str(d / "a")]) == 0
    assert main(["simulate", "--config", str(cfg), "--scenario", "(500,5,cn,S)",
                 "--seed", "9", "--out", str(d / "b")]) == 0
    return d, cfg


def test_grid(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["grid", "--kind", "R", "--control", "2", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 7


def test_simulate_outputs(sim):
    d, _ = sim
    meta = json.loads((d / "a" / "meta.json").read_text())
    assert meta["max_degree"] == 8 and -1 < meta["alpha"] < 1
    rows = np.loadtxt(d / "a" / "data.csv", delimiter=",", skiprows=1)
    assert rows.shape == (6 * 30 + 4 * 60, 3)


def test_solve_path_select(sim, tmp_path):
    d, _ = sim
    assert main(["solve", "--data", str(d / "a"), "--lam", "1e-3", "--solver", "rofmp",
                 "--restart", "20", "--out", str(tmp_path / "s.gfc"),
                 "--diagnostics", str(tmp_path / "d.csv")]) == 0
    assert (tmp_path / "s.gfc").read_text().startswith("modelname")
    for name in ("a", "b"):
        assert main(["path", "--data", str(d / name), "--n-lambda", "20",
                     "--out", str(tmp_path / f"{name}.npz")]) == 0
    out = tmp_path / "sel.json"
    assert main(["select", "--data", str(d / "a"), "--path", str(tmp_path / "a.npz"),
                 "--partner", str(tmp_path / "b.npz"), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert len(rep["reports"]) == 11 and 1 <= rep["k_max"] <= 20


def test_bench_and_report(sim, tmp_path):
    _, cfg = sim
    out = tmp_path / "bench"
    assert main(["bench", "--config", str(cfg), "--scenario", "(500,5,wn,R)",
                 "--out", str(out)]) == 0
    again = tmp_path / "again"
    assert main(["bench", "--manifest", str(out / "manifest.json"), "--out", str(again)]) == 0
    assert (out / "stats.csv").read_bytes() == (again / "stats.csv").read_bytes()
    rep = tmp_path / "rep.csv"
    assert main(["report", str(out / "inefficiency.csv"), "--out", str(rep)]) == 0
    assert rep.read_text().splitlines()[0].startswith("scenario,method,median")


def test_errors_return_code(tmp_path, capsys):
    assert main(["solve", "--data", str(tmp_path / "missing"), "--lam", "1",
                 "--out", str(tmp_path / "x")]) == 2
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"noise": "cn", "grid": "R"}))
    assert main(["bench", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2

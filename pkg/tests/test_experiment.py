from __future__ import annotations

import json

import numpy as np
import pytest

from semtrack import cli
from semtrack.experiment import (CSV_COLUMNS, ExperimentSpec, build_policy, dump_policy_structure,
                                 parse_config_text, render_grid, resolve_config, results_csv, run_sweep)
from semtrack.figures import FIGURES, figure_spec
from semtrack.mdp import ConfigError, SystemConfig
from semtrack.policy import MyopicAoiiPolicy, TabularPolicy


def _body(path):
    text = path.read_text()
    assert text.startswith("# generated")
    return text.split("\n", 1)[1]


def test_parse_config_text():
    text = """
    # defaults for a quick run
    p = 0.7
    E = 6   # battery
    source = general
    matrix = 0.9, 0.1; 0.3, 0.7
    """
    d = parse_config_text(text)
    assert d == {"p": 0.7, "E": 6, "source": "general", "matrix": ((0.9, 0.1), (0.3, 0.7))}
    for bad in ("p 0.7", "nope = 1", "E = six"):
        with pytest.raises(ConfigError):
            parse_config_text(bad)


def test_resolve_config_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("mu = 0.3\nE = 6\n")
    cfg = resolve_config(str(path), {"E": "8"})
    assert (cfg.mu, cfg.E, cfg.N) == (0.3, 8, 30)
    assert resolve_config().hash() == SystemConfig().hash()


def test_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec("aoii", "zeta", [1])
    with pytest.raises(ConfigError):
        ExperimentSpec("bogus", "p", [0.7])
    with pytest.raises(ConfigError):
        ExperimentSpec("aoii", "p", [0.7], policies=["mystery"])
    with pytest.raises(ConfigError):
        ExperimentSpec("aoii", "p", [])


def test_build_policy_names():
    cfg = SystemConfig(E=4, N=10)
    pol, info = build_policy("optimal", "real_time_error", cfg)
    assert isinstance(pol, TabularPolicy) and pol.name == "rte_optimal" and info["gain"] > 0
    pol, info = build_policy("optimal", "aoii", cfg)
    assert isinstance(pol, MyopicAoiiPolicy) and info == {}
    pol, _ = build_policy("aoii_myopic", "aoii", cfg, lookahead=4)
    assert pol.horizon == 4
    pol, _ = build_policy("optimal", "aoii", cfg.with_(q=1.0))
    assert pol.name == "aoii_optimal" and pol.fields == ("e", "theta")
    pol, _ = build_policy("aoi_optimal", "aoii", cfg)
    assert pol.fields == ("e", "Delta", "theta")
    with pytest.raises(ConfigError):
        build_policy("nonsense", "aoii", cfg)


def test_single_point_sweep():
    spec = ExperimentSpec("real_time_error", "mu", [0.5], SystemConfig(E=4, N=10), ["optimal"], 20_000, [0, 1])
    rows = run_sweep(spec)
    assert len(rows) == 1
    r = rows[0]
    assert r["error"] == "" and r["policy"] == "optimal" and r["_label"] == "rte_optimal"
    assert r["ci_low"] <= r["mean"] <= r["ci_high"]
    assert r["config_hash"] == SystemConfig(E=4, N=10, mu=0.5).hash()


def test_infeasible_point_is_recorded():
    spec = ExperimentSpec("real_time_error", "c_t", [1, 9], SystemConfig(E=5, N=10), ["optimal", "baseline"],
                          20_000, [0, 1])
    rows = run_sweep(spec)
    assert [r["value"] for r in rows] == [1, 1, 9, 9]
    assert all(r["error"] == "" for r in rows[:2])
    assert all("E=5" in r["error"] for r in rows[2:])


def test_rows_are_ordered_by_value_then_policy():
    spec = ExperimentSpec("aoii", "mu", [0.9, 0.3], SystemConfig(q=1.0, E=4, N=10), ["baseline", "aoi_optimal"],
                          20_000, [0, 1])
    rows = run_sweep(spec)
    assert [(r["value"], r["policy"]) for r in rows] == [(0.9, "aoi_optimal"), (0.9, "baseline"),
                                                        (0.3, "aoi_optimal"), (0.3, "baseline")]


def test_csv_is_reproducible(tmp_path):
    kw = dict(metric="real_time_error", param="q", values=[0.5, 0.9], fixed=SystemConfig(E=4, N=10),
              policies=["optimal", "baseline"], horizon=20_000, seeds=[0, 1, 2])
    run_sweep(ExperimentSpec(**kw, out=str(tmp_path / "a.csv")))
    run_sweep(ExperimentSpec(**kw, out=str(tmp_path / "b.csv")))
    assert _body(tmp_path / "a.csv") == _body(tmp_path / "b.csv")
    header = _body(tmp_path / "a.csv").splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc["metadata"]["general_source_estimator"] == "last_received_sample"
    assert len(doc["rows"]) == 4 and all("solve_time" in r for r in doc["rows"])


def test_number_of_states_sweep_uses_symmetric_source():
    spec = ExperimentSpec("general_distortion", "M", [2, 3], SystemConfig(p=0.8, q=0.5, mu=0.8, E=3, N=8,
                          distortion="mse"), ["optimal"], 20_000, [0, 1])
    rows = run_sweep(spec)
    assert all(r["error"] == "" for r in rows)
    assert rows[1]["config_hash"] == SystemConfig(p=0.8, q=0.5, mu=0.8, E=3, N=8, distortion="mse",
                                                  source="symmetric", M=3).hash()


def test_results_csv_formats_missing_values():
    spec = ExperimentSpec("aoii", "p", [0.7], policies=["baseline"])
    from semtrack.experiment import _row
    text = results_csv([_row(spec, 0.7, "baseline", error="boom")])
    assert text.splitlines()[1].endswith(",boom")


def test_structure_grid(fig2_policy):
    doc = dump_policy_structure(fig2_policy, {"x_tilde": 1, "x_hat": 0})
    grid = np.array(doc["grid"])
    assert grid.shape == (11, 30)
    assert np.all(grid[0] == 0)
    assert "S" in render_grid(doc)
    with pytest.raises(ValueError):
        dump_policy_structure(fig2_policy, (1,))
    with pytest.raises(ValueError):
        dump_policy_structure(fig2_policy, (2, 0))


def test_structure_grid_aoii():
    pol, _ = build_policy("optimal", "aoii", SystemConfig(p=0.7, q=1.0, mu=0.5))
    grid = np.array(dump_policy_structure(pol)["grid"])
    assert grid.shape == (11, 30)
    assert np.all(grid[0] == 0) and np.all(grid[1] == 0)


def test_figure_specs_are_valid():
    for name in FIGURES:
        spec = figure_spec(name, horizon=10_000)
        for v in spec.values:
            cfg = spec.fixed.with_(**{spec.param: v})
            assert cfg.E >= cfg.c
    assert figure_spec("aoii_vs_q").myopic_lookahead == 5


def test_cli_solve_structure_simulate(tmp_path, capsys):
    pol = tmp_path / "pol.json"
    assert cli.main(["solve", "--set", "E=4", "--set", "N=10", "--out", str(pol)]) == 0
    assert json.loads(pol.read_text())["schema"] == "semtrack.policy/1"
    assert cli.main(["structure", "--policy", str(pol), "--slice", "1,0"]) == 0
    assert "rows e" in capsys.readouterr().out
    out = tmp_path / "sim.json"
    assert cli.main(["simulate", "--policy", str(pol), "--horizon", "20000", "--seeds", "0:3",
                     "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["policy"] == "rte_optimal" and len(doc["runs"]) == 3


def test_cli_exit_codes(tmp_path, capsys):
    args = ["sweep", "--set", "E=5", "--set", "N=10", "--sweep", "c_t", "--values", "1,9",
            "--policies", "baseline", "--horizon", "20000", "--seeds", "0,1"]
    assert cli.main(args) == 2
    out = capsys.readouterr()
    assert out.out.startswith("version,")
    assert "c_t=9" in out.err
    assert cli.main(["solve", "--set", "E=1"]) == 1
    assert cli.main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert cli.main(["solve", "--metric", "aoii", "--set", "q=0.5"]) == 1
    assert cli.main(args[:7] + ["--values", "1", "--policies", "baseline", "--horizon", "20000",
                                "--out", str(tmp_path / "s.csv")]) == 0
    assert (tmp_path / "s.json").exists()

import csv
from pathlib import Path

import pytest
import yaml

from aoicodesign.cli import EXIT_NONCONVERGED, EXIT_OK, EXIT_PARSE, main
from aoicodesign.scenario import ScenarioError, dump_scenario, load_scenario, parse_scenario

ROOT = Path(__file__).resolve().parents[1]
LINEAR = """name: linear
agents:
  - tau_set: [1]
    tx_len: {1: 1}
    delta_wait: 0
    cost: {kind: power, exponent: 1.0}
  - tau_set: [1]
    tx_len: {1: 1}
    delta_wait: 0
    cost: {kind: power, exponent: 1.0}
simulation:
  T: 3000
  seeds: 3
"""


@pytest.fixture
def linear_file(tmp_path):
    yml = tmp_path / "linear.yaml"
    yml.write_text(LINEAR)
    return yml


def read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_solve(linear_file, tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--scenario", str(linear_file), "--out", str(out)]) == EXIT_OK
    rows = read(out / "codesign.csv")
    assert [res["H_star"] for res in rows] == ["3.0", "3.0"]
    assert list(rows[0]) == ["agent", "tau_star", "H_star", "lambda", "utilization"]
    trace = read(out / "dual_trace.csv")
    assert list(trace[0]) == ["iteration", "C", "f", "dual"]


def test_solve_grid_scenario_writes_nine_rows(tmp_path):
    out = tmp_path / "g"
    assert main(["solve", "--scenario", str(ROOT / "scenarios/gridmap9.yaml"), "--out", str(out)]) == 0
    assert len(read(out / "codesign.csv")) == 9
    assert len(read(out / "tau_star.csv")) == 9


def test_singleton_at_zero_price(tmp_path):
    yml = tmp_path / "one.yaml"
    yml.write_text("agents:\n  - tau_set: [1, 2, 3]\n    tx_len: identity\n"
                 "    cost: {kind: affine, q_hat: 5.0}\n")
    assert main(["solve", "--scenario", str(yml), "--out", str(tmp_path)]) == 0
    row = read(tmp_path / "codesign.csv")[0]
    from aoicodesign.threshold import best_tau
    agent = load_scenario(yml).build_agents()[0]
    assert int(row["tau_star"]) == best_tau(agent, 0.0).tau_star


def test_non_convergence_exit_code(linear_file, tmp_path):
    yml = tmp_path / "slow.yaml"
    yml.write_text(LINEAR + "optimizer: {mode: dual-ascent, step: 0.000001, max_iter: 3}\n")
    assert main(["solve", "--scenario", str(yml), "--out", str(tmp_path)]) == EXIT_NONCONVERGED


def test_parse_error_names_field(tmp_path, capsys):
    yml = tmp_path / "bad.yaml"
    yml.write_text("agents:\n  - tx_len: identity\n    cost: {kind: power}\n")
    assert main(["solve", "--scenario", str(yml)]) == EXIT_PARSE
    err = capsys.readouterr().err
    assert "tau_set" in err and "line 2" in err


@pytest.mark.parametrize("text,field,line", [
    ("agents: []\n", "agents", 1),
    ("agents:\n  - tau_set: [1]\n    tx_len: identity\n    cost: {kind: power}\n    colour: red\n",
     "agents[0].colour", 5),
    ("agents: {gridmap: {n: 2}}\nsimulation:\n  T: 100\n  policy: [whittle]\n",
     "simulation.policy", 4),
    ("agents: {gridmap: {n: 2}}\noptimizer: {mode: newton}\n", "optimizer", 2),
    ("agents: {gridmap: {n: 2, p_max: 0.9}}\n", "agents.gridmap", 1),
    ("agents: {gridmap: {n: 2}}\nsimulation: {taus: [1, 2, 3]}\n", "simulation.taus", 2),
    ("agents:\n  - tau_set: [1]\n    tx_len: cubic\n    cost: {kind: power}\n", "agents[0].tx_len", 3),
])
def test_scenario_errors(text, field, line):
    with pytest.raises(ScenarioError) as e:
        parse_scenario(text)
    assert e.value.path == field
    assert e.value.line == line


def test_invalid_yaml_reports_line():
    with pytest.raises(ScenarioError) as e:
        parse_scenario("agents:\n  - [unclosed\n")
    assert e.value.line is not None


@pytest.mark.parametrize("name", ["gridmap9.yaml", "linear.yaml", "ridesharing.yaml"])
def test_round_trip(name):
    scen = load_scenario(ROOT / "scenarios" / name)
    again = parse_scenario(dump_scenario(scen))
    assert again.to_dict() == scen.to_dict()
    assert yaml.safe_load(dump_scenario(again)) == yaml.safe_load(dump_scenario(scen))


def test_simulate_rows_and_summary(linear_file, tmp_path):
    out = tmp_path / "s"
    rc = main(["simulate", "--scenario", str(linear_file), "--out", str(out),
               "--policies", "whittle,round-robin,randomized", "--seeds", "4"])
    assert rc == EXIT_OK
    rows = read(out / "sim.csv")
    assert len(rows) == 3 * 4 * 3
    assert sum(res["agent"] == "-1" for res in rows) == 12
    summary = read(out / "summary.csv")
    assert [s["policy"] for s in summary] == ["whittle", "round-robin", "randomized"]


def test_simulate_is_byte_deterministic(linear_file, tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--scenario", str(linear_file), "--out", str(tmp_path / d),
                     "--codesign", "--trace"]) == 0
    for fname in (tmp_path / "a").iterdir():
        assert fname.read_bytes() == (tmp_path / "b" / fname.name).read_bytes()


def test_sweep_tau(tmp_path):
    yml = tmp_path / "g.yaml"
    yml.write_text("agents: {gridmap: {n: 3, cells: 100, tau_set: [1, 2, 3]}}\n"
                 "simulation: {T: 2000, seeds: 2}\n")
    assert main(["simulate", "--scenario", str(yml), "--out", str(tmp_path), "--sweep-tau", "1:3"]) == 0
    rows = read(tmp_path / "sweep.csv")
    assert list(rows[0]) == ["tau", "policy", "mean_cost", "stderr"]
    assert len(rows) == 9
    assert main(["sweep", "--scenario", str(yml), "--out", str(tmp_path), "--entropy-curves",
                 "--max-age", "10"]) == 0
    assert len(read(tmp_path / "entropy.csv")) == 3 * 3 * 11
    assert main(["sweep", "--scenario", str(yml), "--sweep-tau", "0:3"]) == EXIT_PARSE


def test_oracle_linear_pass(linear_file, tmp_path, capsys):
    rc = main(["oracle", "--scenario", str(linear_file), "--out", str(tmp_path), "--C", "3",
               "--tau", "1"])
    out = capsys.readouterr().out
    assert rc == EXIT_OK and "PASS" in out and "lambda=4" in out
    assert list(read(tmp_path / "oracle.csv")[0]) == ["h", "S_prime", "action"]


def test_oracle_at_whittle_tie(linear_file, tmp_path, capsys):
    # C = W(3) = 3 is a tie between H = 3 and H = 4
    assert main(["oracle", "--scenario", str(linear_file), "--out", str(tmp_path),
                 "--C", "3.0", "--tau", "1"]) == EXIT_OK


def test_oracle_on_entropy_agent(tmp_path, capsys):
    rc = main(["oracle", "--scenario", str(ROOT / "scenarios/gridmap9.yaml"), "--out",
               str(tmp_path), "--agent", "1"])
    assert rc == EXIT_OK and "PASS" in capsys.readouterr().out


def test_validate(tmp_path, capsys):
    rc = main(["validate", "--scenario", str(ROOT / "scenarios/ridesharing.yaml"), "--grid", "30"])
    out = capsys.readouterr().out
    assert rc == EXIT_OK
    assert "FAIL" not in out and out.count("PASS") >= 8


def test_output_dir_from_environment(linear_file, tmp_path, monkeypatch):
    monkeypatch.setenv("AOICODESIGN_OUT", str(tmp_path / "env"))
    assert main(["solve", "--scenario", str(linear_file)]) == 0
    assert (tmp_path / "env" / "codesign.csv").exists()


def test_missing_file():
    assert main(["solve", "--scenario", "/nonexistent.yaml"]) == EXIT_PARSE


def test_module_entry_point(linear_file, tmp_path):
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "aoicodesign", "solve", "--scenario",
                        str(linear_file), "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "C*=" in res.stdout

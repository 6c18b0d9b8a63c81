import json

import pytest

from lfdd import checks, cli
from lfdd.io import read_record_csv


def run_cli(args, capsys=None):
    code = cli.main(args)
    out = capsys.readouterr() if capsys else None
    return code, out


def test_scenarios_lists_names(capsys):
    code, out = run_cli(["scenarios"], capsys)
    assert code == 0
    for name in ("static_uniaxial", "oscillating_shear", "dissipative_homogeneous"):
        assert name in out.out


def test_simulate_static_is_stationary(tmp_path, capsys):
    code, out = run_cli(["simulate", "--set", "scenario.name=static_uniaxial",
                         "--set", "scenario.params.n_nodes=21", "--out", str(tmp_path)], capsys)
    assert code == 0
    rec = read_record_csv(tmp_path / "record.csv")
    assert abs(rec["E"][-1] / rec["E"][0] - 1) <= 1e-10
    assert "E(t_end)/E(0)   = 1" in out.out
    assert (tmp_path / "effective_config.json").exists()


def test_simulate_dissipative_monotone(tmp_path, capsys):
    code, _ = run_cli(["simulate", "--set", "scenario.name=dissipative_homogeneous", "--set", "time.t_end=2",
                       "--out", str(tmp_path)], capsys)
    assert code == 0
    e = read_record_csv(tmp_path / "record.csv")["E"]
    assert all(b < a for a, b in zip(e, e[1:]))


def test_simulate_json_with_snapshots(tmp_path, capsys):
    code, _ = run_cli(["simulate", "--set", "scenario.name=dissipative_homogeneous", "--set", "time.t_end=0.5",
                       "--set", "time.snapshot_every=10", "--format", "json", "--out", str(tmp_path)], capsys)
    assert code == 0
    data = json.loads((tmp_path / "record.json").read_text())
    assert data["effective_config"]["time"]["snapshot_every"] == 10
    assert data["effective_config"]["scenario"]["name"] == "dissipative_homogeneous"
    snaps = sorted(p.name for p in tmp_path.glob("snapshot_*.json"))
    assert "snapshot_0.json" in snaps and len(snaps) >= 2


def test_csv_output_is_deterministic(tmp_path, capsys):
    args = ["simulate", "--set", "scenario.name=oscillating_shear", "--set", "scenario.params.n_nodes=41",
            "--set", "time.snapshot_every=50"]
    run_cli(args + ["--out", str(tmp_path / "a")], capsys)
    run_cli(args + ["--out", str(tmp_path / "b")], capsys)
    for name in ("record.csv", "snapshot_50.csv", "effective_config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_malformed_config_writes_nothing(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"grid": {"n_nodes": "many"}}')
    out = tmp_path / "out"
    code, res = run_cli(["simulate", "--config", str(cfg), "--out", str(out)], capsys)
    assert code == 2
    assert "grid.n_nodes" in res.err
    assert not out.exists()


def test_eigen_small_grid_rejected(tmp_path, capsys):
    code, _ = run_cli(["eigen", "--set", "grid.n_nodes=2", "--out", str(tmp_path / "o")], capsys)
    assert code == 2
    assert not (tmp_path / "o").exists()


def test_eigen_crossed_grid_labels(tmp_path, capsys):
    code, out = run_cli(["eigen", "--set", "grid.x_right=3.141592653589793", "--set", "material.mu=0.5",
                         "--set", "grid.n_nodes=31", "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = (tmp_path / "modes.csv").read_text().splitlines()
    assert rows[0] == "p,frequency,residual,label"
    assert len(rows) == 1 + 3 * 29
    assert "warning: repeated eigenvalues" in out.err
    # longitudinal frequencies near 1, 2, 3 carry zero residual
    labels = {round(float(r.split(",")[1]), 1): r.split(",")[3] for r in rows[1:]}
    assert labels[1.0] == "Case1" and labels[2.0] == "Case1"


def test_eigen_screw_transverse_case2(tmp_path, capsys):
    code, out = run_cli(["eigen", "--set", "alpha.kind=uniform", "--set", "alpha.tensor=[[0,0,0],[0,0,0],[0,0,1]]",
                         "--set", "grid.n_nodes=21", "--format", "json", "--out", str(tmp_path)], capsys)
    assert code == 0
    data = json.loads((tmp_path / "modes.json").read_text())
    assert data["summary"]["Case2"] == 19
    assert data["effective_config"]["alpha"]["kind"] == "uniform"


def test_rk4_step_too_large_is_config_error(tmp_path, capsys):
    code, res = run_cli(["simulate", "--set", "time.dt=1", "--set", "time.t_end=2", "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "stability" in res.err


def test_bad_scenario_param_is_config_error(tmp_path, capsys):
    code, _ = run_cli(["simulate", "--set", "scenario.name=static_uniaxial", "--set", "scenario.params.bogus=1",
                       "--out", str(tmp_path / "o")], capsys)
    assert code == 2


def test_numerical_failure_exit_code(tmp_path, capsys, monkeypatch):
    from lfdd.dynamics import NumericalError

    def boom(config, callback=None):
        raise NumericalError("non-finite values in the state", step=7)

    monkeypatch.setattr(cli, "run", boom)
    code, res = run_cli(["simulate", "--set", "time.t_end=0.01", "--out", str(tmp_path / "o")], capsys)
    assert code == 3
    assert "step 7" in res.err


def test_check_fault_injection_fails(capsys, monkeypatch):
    monkeypatch.setattr(checks, "suite", lambda level: [("criterion 1", checks.dissipation_identity)])
    code, out = run_cli(["check", "--level", "fast", "--inject-fault", "corrupt_b"], capsys)
    assert code == 1
    assert "[FAIL] dissipation identity" in out.out
    code, out = run_cli(["check", "--level", "fast"], capsys)
    assert code == 0


@pytest.mark.slow
def test_check_fast_passes(capsys):
    code, out = run_cli(["check", "--level", "fast"], capsys)
    assert code == 0, out.out
    assert "FAIL" not in out.out

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lfdd import io
from lfdd.config import (
    ConfigFileError,
    apply_overrides,
    build_problem,
    build_sim_config,
    default_config,
    load_config,
)
from lfdd.dynamics import Integrator, SimRecord, run
from lfdd.scenarios import dissipative_homogeneous


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    assert float(io.fmt(x)) == x


def test_record_csv_round_trip(tmp_path):
    rec = SimRecord()
    for k, t in enumerate([0.0, 0.1, 0.2]):
        rec.append(k, t, 1.0 / (k + 3), 0.1 * k, 1e-17 * k)
    path = io.write_record_csv(tmp_path / "record.csv", rec)
    assert path.read_text().splitlines()[0] == "t,E,diss_rate,cum_diss,max_residual"
    back = io.read_record_csv(path)
    np.testing.assert_array_equal(back["E"], rec.energy)
    np.testing.assert_array_equal(back["cum_diss"], rec.cum_diss)


def test_record_json(tmp_path):
    rec = SimRecord()
    rec.append(0, 0.0, 1.0, 0.0, 0.0)
    data = json.loads(io.write_record_json(tmp_path / "r.json", rec, {"effective_config": {"a": 1}}).read_text())
    assert data["E"] == [1.0] and data["effective_config"] == {"a": 1}


def test_snapshot_columns(tmp_path):
    sc = dissipative_homogeneous(t_rates=0.1)
    st_ = sc.config.initial_state
    path = io.write_snapshot_csv(tmp_path / "s.csv", sc.grid, st_, sc.operator())
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == list(io.SNAPSHOT_COLUMNS)
    assert len(lines) == sc.grid.n_nodes + 1
    row = [float(x) for x in lines[1].split(",")]
    assert row[5] == 1.0  # eps13
    assert row[-1] == pytest.approx(2.0)  # |V| = 2 mu g alpha0


class TestOverrides:
    def test_nested_and_typed(self):
        out = apply_overrides({"grid": {"n_nodes": 5}}, ["grid.n_nodes=11", "time.integrator=rk4",
                                                         "alpha.tensor=[[1,0,0],[0,0,0],[0,0,0]]"])
        assert out["grid"]["n_nodes"] == 11
        assert out["time"]["integrator"] == "rk4"
        assert out["alpha"]["tensor"][0] == [1, 0, 0]

    def test_does_not_mutate_input(self):
        raw = {"grid": {"n_nodes": 5}}
        apply_overrides(raw, ["grid.n_nodes=7"])
        assert raw["grid"]["n_nodes"] == 5

    @pytest.mark.parametrize("bad", ["novalue", "a..b=1", "grid.n_nodes.x=1"])
    def test_malformed(self, bad):
        with pytest.raises(ConfigFileError):
            apply_overrides({"grid": {"n_nodes": 5}}, [bad])


class TestLoad:
    def test_defaults(self):
        cfg, eff = load_config()
        assert eff == default_config()
        assert cfg.grid.n_nodes == 101

    def test_file_and_overrides(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"material": {"mu": 2.0}}))
        cfg, eff = load_config(p, ["material.rho=3"])
        assert cfg.material.mu == 2.0 and eff["material"]["rho"] == 3.0

    @pytest.mark.parametrize("raw,path", [
        ({"grid": {"n_nodes": 2}}, "grid.n_nodes"),
        ({"material": {"mu": -1}}, "material.mu"),
        ({"bc": {"left": "sliding"}}, "bc.left"),
        ({"scenario": {"name": "nope"}}, "scenario.name"),
        ({"grid": {"bogus": 1}}, "grid.bogus"),
        ({"initial": {"eps": [0, 0]}}, "initial.eps"),
    ])
    def test_error_names_field_path(self, tmp_path, raw, path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps(raw))
        with pytest.raises(ConfigFileError, match=path.replace(".", r"\.")):
            load_config(p)

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{")
        with pytest.raises(ConfigFileError, match="not valid JSON"):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigFileError):
            load_config(tmp_path / "missing.json")

    def test_root_must_be_object(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("[1, 2]")
        with pytest.raises(ConfigFileError):
            load_config(p)


class TestBuilders:
    def test_explicit_problem(self):
        cfg, _ = load_config(overrides=["grid.n_nodes=9", "alpha.kind=uniform",
                                        "alpha.tensor=[[0,0,0],[0,0,0],[0,0,2]]", "time.t_end=0.2"])
        grid, material, bc, alpha = build_problem(cfg)
        assert grid.n_nodes == 9 and alpha[4, 2, 2] == 2.0
        sim = build_sim_config(cfg)
        assert sim.integrator is Integrator.RK4
        assert sim.t_end == 0.2

    def test_scenario_with_time_override(self):
        cfg, _ = load_config(overrides=["scenario.name=dissipative_homogeneous", "time.t_end=0.5",
                                        "time.integrator=backward_euler", "scenario.params.mu=2.0"])
        sim = build_sim_config(cfg)
        assert sim.t_end == 0.5
        assert sim.integrator is Integrator.BACKWARD_EULER
        assert sim.material.stiffness[0, 2, 0, 2] == 2.0
        rec = run(sim)
        assert rec.energy[-1] < rec.energy[0]

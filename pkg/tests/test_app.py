"""Tests for configuration, problem assembly, the command line and reporting."""

import csv
import json

import numpy as np
import pytest
import yaml

from wecflow.app import cli
from wecflow.app.config import ConfigError, RunConfig
from wecflow.app.problem import ScalingRefs, assemble_problem
from wecflow.app.run import admissible_grid, execute, prepare_inputs
from wecflow.field import DiskDomain, square_mesh
from wecflow.flow import FlowError, read_trace_csv
from wecflow.hydro import DeviceGeometry, synth_coeffs
from wecflow.spectrum import SeaState, discretize

TINY = {
    "park": {"n_bodies": 2, "layout": [[15.0, 15.0], [35.0, 30.0]], "c0": 1.0e4},
    "model": {"n_freq": 2, "n_prog": 1, "n_evan": 1},
    "constraints": {"mesh": "builtin:square", "mesh_h": 10.0},
    "solver": {"preset": "S4", "t_max": 400.0},
    "paths": {"cache_dir": "cache", "out_dir": "out"},
}


def write_config(tmp_path, data=TINY, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def merged(**sections):
    out = json.loads(json.dumps(TINY))
    for key, val in sections.items():
        out.setdefault(key, {}).update(val)
    return out


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    cfg = write_config(root)
    code = cli.main(["run", "--config", str(cfg), "--out", str(root / "out" / "S4")])
    return root, cfg, code


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig.from_dict({})
        s = cfg.flow_settings()
        assert s.mode == "S4" and s.adaptive_tolerances and s.adaptive_step
        assert s.tau_psi == 1e-3
        assert cfg.device["radius"] == 2.0 and cfg.device["draft"] == 0.5
        assert cfg.sea["depth"] == 30.0

    def test_preset_override(self):
        s = RunConfig.from_dict({}).flow_settings("S3")
        assert s.mode == "S3" and not s.adaptive_tolerances
        assert (s.tau_rk_rel, s.tau_rk_abs, s.tau_cg) == (1e-3, 1e-6, 1e-6)

    @pytest.mark.parametrize("data, match", [
        ({"sea": {"Hs": -1.0}}, "sea.Hs"),
        ({"sea": {"wind": 3}}, "unknown key"),
        ({"solver": {"preset": "S9"}}, "preset"),
        ({"park": {"n_bodies": 3, "layout": [[0, 0]]}}, "layout"),
        ({"model": {"n_prog": -1}}, "n_prog"),
        ({"constraints": 5}, "mapping"),
        ({"solver": {"overrides": {"no_such": 1}}}, "override"),
    ])
    def test_rejected(self, data, match):
        with pytest.raises(ConfigError, match=match):
            RunConfig.from_dict(data)

    def test_invalid_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("sea: {Hs: [1,\n")
        with pytest.raises(ConfigError, match="YAML"):
            RunConfig.load(p)

    def test_relative_paths(self, tmp_path):
        cfg = RunConfig.load(write_config(tmp_path))
        assert cfg.resolve(cfg.paths["out_dir"]) == tmp_path / "out"


def small_problem(X0, **kw):
    waves = discretize(SeaState(2.0, 8.0), 2, n_evan=1)
    coeffs = synth_coeffs(DeviceGeometry(), waves, 1, 1, seed=0)
    refs = ScalingRefs(50.0, 5e4, 5e4, 1.0, 0.7, 10.0, 50.0)
    return assemble_problem(coeffs, waves, DiskDomain((0.0, 0.0), 100.0), X0, 1e4, 0.0,
                            refs=refs, f0=1e5, **kw)


class TestAssembly:
    def test_single_device_rows(self):
        ap = small_problem([[0.0, 0.0]])
        lay = ap.layout
        assert lay.n_pairs == 0 and lay.n_ineq == 2
        assert ap.model.dim_g == 2 * lay.nf * (lay.M + 1) + 2

    def test_ten_devices_pairs(self):
        X = np.column_stack([np.arange(10) * 12.0, np.zeros(10)])
        ap = small_problem(X)
        assert ap.layout.n_pairs == 45
        assert ap.layout.g_slices["md"].stop - ap.layout.g_slices["md"].start == 45

    def test_initial_point_feasible(self):
        ap = small_problem([[0.0, 0.0], [20.0, 5.0], [-10.0, 30.0]])
        g = ap.model.constraint(ap.w0)
        e = g[ap.layout.g_slices["e"]]
        assert np.abs(e).max() < 1e-10
        # satisfied inequalities are closed exactly by their slacks
        assert np.abs(g[ap.layout.g_slices["sl"]]).max() < 1e-12

    def test_bad_positions(self):
        with pytest.raises(ValueError, match="shape"):
            small_problem(np.zeros((2, 3)))

    def test_admissible_grid(self):
        from wecflow.field import DomainField
        field = DomainField.from_mesh(square_mesh(10.0))
        X = admissible_grid(10, field, (0, 0, 50, 50), d_min=10.0)
        h, _, out = field.evaluate(X)
        assert len(X) == 10 and np.all(h < 0) and not out.any()
        with pytest.raises(ConfigError):
            admissible_grid(10, field, (0, 0, 50, 50), d_min=30.0)


class TestPrecompute:
    def test_cache_hit_and_recompute(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert cli.main(["precompute", "--config", str(cfg)]) == 0
        first = capsys.readouterr().out
        assert [ln.split()[1] for ln in first.splitlines()] == ["computed"] * 3
        assert cli.main(["precompute", "--config", str(cfg)]) == 0
        second = capsys.readouterr().out
        assert [ln.split()[1] for ln in second.splitlines()] == ["hit"] * 3
        cfg2 = write_config(tmp_path, merged(constraints={"mesh_h": 8.0}), "run2.yaml")
        assert cli.main(["precompute", "--config", str(cfg2)]) == 0
        third = capsys.readouterr().out
        field_lines = [ln for ln in (first + third).splitlines() if ln.startswith("field")]
        assert field_lines[1].split()[1] == "computed"
        assert field_lines[0].split()[-1] != field_lines[1].split()[-1]

    def test_missing_mesh(self, tmp_path, capsys):
        cfg = write_config(tmp_path, merged(constraints={"mesh": "nowhere/absent.mesh"}))
        assert cli.main(["precompute", "--config", str(cfg)]) == 3
        assert "absent.mesh" in capsys.readouterr().err

    def test_missing_config(self, tmp_path, capsys):
        assert cli.main(["precompute", "--config", str(tmp_path / "none.yaml")]) == 3
        assert "none.yaml" in capsys.readouterr().err


class TestRun:
    def test_converges_with_artifacts(self, tiny_run):
        root, _, code = tiny_run
        assert code == 0
        out = root / "out" / "S4"
        for name in ("trace.csv", "calls.csv", "summary.csv", "design.json", "run.json",
                     "mesh.txt", "w_final.npy"):
            assert (out / name).exists()
        design = json.loads((out / "design.json").read_text())
        assert design["status"] == "converged"
        assert np.shape(design["positions"]) == (2, 2)

    def test_deterministic(self, tiny_run, tmp_path):
        root, cfg, _ = tiny_run
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "again")]) == 0
        a = read_trace_csv(root / "out" / "S4" / "trace.csv")
        b = read_trace_csv(tmp_path / "again" / "trace.csv")
        for col in a:
            if col != "wall_s":
                assert np.array_equal(a[col], b[col]), col
        wa = np.load(root / "out" / "S4" / "w_final.npy")
        assert np.array_equal(wa, np.load(tmp_path / "again" / "w_final.npy"))

    def test_budget_exit(self, tmp_path):
        cfg = write_config(tmp_path, merged(solver={"t_max": 0.5}))
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert (tmp_path / "o" / "trace.csv").exists()

    def test_numerical_failure_exit(self, tmp_path, monkeypatch, capsys):
        def boom(*a, **k):
            raise FlowError("breakdown")
        monkeypatch.setattr(cli, "execute", boom)
        cfg = write_config(tmp_path)
        assert cli.main(["run", "--config", str(cfg)]) == 4
        assert "breakdown" in capsys.readouterr().err

    def test_infeasible_layout_input_error(self, tmp_path):
        cfg = write_config(tmp_path, merged(park={"layout": [[10.0, 10.0], [10.0, 10.0]]}))
        assert cli.main(["run", "--config", str(cfg)]) == 3

    def test_execute_summary(self, tmp_path):
        cfg = RunConfig.load(write_config(tmp_path))
        res, ap, inputs = execute(cfg, inputs=prepare_inputs(cfg))
        row = res.summary_row()
        assert res.status == "converged" and row["psi_end"] <= 1e-3
        assert row["ncalls"] == len(res.trace.calls)


class TestReport:
    def test_outputs(self, tiny_run, tmp_path):
        root, _, _ = tiny_run
        assert cli.main(["report", "--runs", str(root / "out"), "--out", str(tmp_path)]) == 0
        for suffix in ("history", "monitor", "layout", "controls"):
            assert (tmp_path / f"S4-{suffix}.png").stat().st_size > 0
        with open(tmp_path / "summary_all.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {"f_end", "g_end", "psi_end", "ncalls", "total_call_time_s"} <= set(rows[0])
        assert rows[0]["run"] == "S4"
        assert "f_end | g_end | psi_end | ncalls" in (tmp_path / "summary.md").read_text()

    def test_history_point_count(self, tiny_run, tmp_path):
        from wecflow.app.report import plot_history
        root, _, _ = tiny_run
        trace = read_trace_csv(root / "out" / "S4" / "trace.csv")
        with open(root / "out" / "S4" / "calls.csv", newline="") as fh:
            accepted = sum(r["accepted"] == "True" for r in csv.DictReader(fh)) - 1
        assert plot_history(trace, tmp_path / "h.png") == accepted == len(trace["t"])

    def test_missing_traces(self, tmp_path, capsys):
        assert cli.main(["report", "--runs", str(tmp_path)]) == 3
        assert "no run traces" in capsys.readouterr().err

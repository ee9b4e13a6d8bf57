"""Command line interface: exit codes, artifact layout, reproducibility."""

from __future__ import annotations

import filecmp
import json
import os

import numpy as np
import pytest

from hjsys.cli import main

F1 = {"const": 1.5, "terms": [{"k": [1], "cos": -1.0}]}
F2 = {"const": 2.0, "terms": [{"k": [1], "cos": -2.0}]}


def _write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _evolve_cfg(n=16, t_final=0.2):
    return {
        "system": {
            "grid": {"dim": 1, "n": n},
            "coupling": {"name": "symmetric_pair"},
            "hamiltonians": [
                {"id": "quadratic_eikonal", "params": {"f": F1}},
                {"id": "quadratic_eikonal", "params": {"f": F2}},
            ],
        },
        "solver": {"t_final": t_final, "snapshot_every": 0.1},
        "u0": {"kind": "zeros"},
    }


def _tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in sorted(files):
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


class TestListing:
    def test_list_suites(self, capsys):
        assert main(["list", "suites"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 5
        assert "largenew-eikonal" in lines
        assert "appendix-mc" in lines

    def test_list_hamiltonians(self, capsys):
        assert main(["list", "hamiltonians"]) == 0
        out = capsys.readouterr().out
        assert "quadratic_eikonal" in out
        assert "nonconvex_bs00" in out

    def test_list_couplings(self, capsys):
        assert main(["list", "couplings"]) == 0
        assert "symmetric_pair" in capsys.readouterr().out


class TestExitCodes:
    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["evolve", "--config", str(tmp_path / "nope.json")])
        assert rc == 2
        assert "config error" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["evolve", "--config", str(path)]) == 2
        assert "not valid JSON" in capsys.readouterr().err

    def test_missing_field_names_dotted_path(self, tmp_path, capsys):
        cfg = _evolve_cfg()
        del cfg["system"]["grid"]["n"]
        rc = main(["evolve", "--config", _write(tmp_path, "c.json", cfg)])
        assert rc == 2
        assert "system.grid.n" in capsys.readouterr().err

    def test_divergence_exits_3(self, tmp_path, capsys):
        cfg = _evolve_cfg(t_final=40.0)
        cfg["solver"]["dt_override"] = 10.0
        cfg["solver"]["snapshot_every"] = 40.0
        rc = main(["evolve", "--config", _write(tmp_path, "c.json", cfg)])
        assert rc == 3

    def test_nonmonotone_coupling_exits_1(self, tmp_path, capsys):
        cfg = {"coupling": {"entries": [[1.0, -2.0], [-1.0, 1.0]]}}
        rc = main(["validate-coupling", "--config", _write(tmp_path, "c.json", cfg)])
        assert rc == 1
        payload = json.loads(capsys.readouterr().out)
        assert payload["monotone"] is False

    def test_bad_threads_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("HJSYS_THREADS", "many")
        cfg = _evolve_cfg()
        rc = main(["evolve", "--config", _write(tmp_path, "c.json", cfg)])
        assert rc == 2


class TestValidateCoupling:
    def test_builtin_symmetric_pair(self, tmp_path, capsys):
        cfg = {"coupling": {"name": "symmetric_pair"}}
        out = tmp_path / "out"
        rc = main(
            [
                "validate-coupling",
                "--config",
                _write(tmp_path, "c.json", cfg),
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        payload = json.loads((out / "coupling.json").read_text())
        assert payload["monotone"] and payload["irreducible"]
        assert np.allclose(payload["perron"], [0.5, 0.5])
        assert payload["delta_rate"] == pytest.approx(2.0)


class TestEvolve:
    def test_artifacts_and_reproducibility(self, tmp_path, capsys):
        cfg_path = _write(tmp_path, "c.json", _evolve_cfg())
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["evolve", "--config", cfg_path, "--out", str(out_a)]) == 0
        assert main(["evolve", "--config", cfg_path, "--out", str(out_b)]) == 0
        files_a = _tree_bytes(out_a)
        files_b = _tree_bytes(out_b)
        assert "trajectory/manifest.json" in files_a
        assert any(k.endswith(".bin") for k in files_a)
        assert files_a == files_b  # byte-identical rerun

    def test_fourier_initial_data(self, tmp_path):
        cfg = _evolve_cfg()
        cfg["u0"] = {
            "kind": "fourier",
            "components": [
                {"const": 0.0, "terms": [{"k": [1], "cos": 0.1}]},
                {"const": 0.0},
            ],
        }
        out = tmp_path / "out"
        rc = main(
            ["evolve", "--config", _write(tmp_path, "c.json", cfg), "--out", str(out)]
        )
        assert rc == 0

    def test_wrong_component_count_in_u0(self, tmp_path, capsys):
        cfg = _evolve_cfg()
        cfg["u0"] = {"kind": "constants", "values": [0.0]}
        rc = main(["evolve", "--config", _write(tmp_path, "c.json", cfg)])
        assert rc == 2


class TestErgodic:
    def test_constant_reported(self, tmp_path, capsys):
        cfg = {
            "system": _evolve_cfg(n=32)["system"],
            "schedule": {"lambdas": [0.1, 0.05], "steady_state_tol": 1e-7},
        }
        out = tmp_path / "out"
        rc = main(
            ["ergodic", "--config", _write(tmp_path, "c.json", cfg), "--out", str(out)]
        )
        assert rc == 0
        payload = json.loads((out / "ergodic.json").read_text())
        assert len(payload["c"]) == 2
        # both sources share the minimizer at 0 with mean level 0.25
        assert abs(payload["c"][0] + 0.25) <= 0.05
        assert (out / "per_lambda.csv").exists()
        assert (out / "corrector0.bin").exists()


class TestDiagnose:
    def test_inline_system_with_sets(self, tmp_path):
        cfg = {
            "system": _evolve_cfg(n=32)["system"],
            "solver": {"t_final": 2.0, "snapshot_every": 0.25},
            "u0": {"kind": "zeros"},
            "c": [0.25, 0.25],
            "sets": [{"kind": "common_min"}, {"kind": "custom", "points": [[0.5]]}],
        }
        out = tmp_path / "out"
        rc = main(
            ["diagnose", "--config", _write(tmp_path, "c.json", cfg), "--out", str(out)]
        )
        assert rc == 0
        payload = json.loads((out / "convergence.json").read_text())
        assert payload["c_used"] == [0.25, 0.25]
        kinds = [s["kind"] for s in payload["set_evaluations"]]
        assert kinds == ["common_min", "custom"]
        assert (out / "p_eta.csv").exists()

    def test_diagnose_saved_trajectory(self, tmp_path):
        evolve_out = tmp_path / "run"
        cfg_path = _write(tmp_path, "e.json", _evolve_cfg(n=16, t_final=0.4))
        assert main(["evolve", "--config", cfg_path, "--out", str(evolve_out)]) == 0
        diag = {
            "trajectory_dir": str(evolve_out / "trajectory"),
            "c": [0.0, 0.0],
        }
        out = tmp_path / "diag"
        rc = main(
            ["diagnose", "--config", _write(tmp_path, "d.json", diag), "--out", str(out)]
        )
        assert rc == 0
        assert (out / "convergence.json").exists()


class TestSimulate:
    def test_idle_process_value(self, tmp_path, capsys):
        cfg = {
            "process": {
                "kind": "idle",
                "rates": [[0.0, 1.0], [1.0, 0.0]],
                "cost_rates": [0.0, 1.0],
            },
            "policy": {"kind": "constant", "index": 0},
            "horizon": 1.0,
            "x0": [0.0],
            "mode0": 0,
            "n_samples": 400,
            "seed": 12,
            "dt_sim": 0.25,
            "dump_path": True,
        }
        out = tmp_path / "out"
        rc = main(
            ["simulate", "--config", _write(tmp_path, "c.json", cfg), "--out", str(out)]
        )
        assert rc == 0
        payload = json.loads((out / "value.json").read_text())
        exact = 0.5 - (1 - np.exp(-2.0)) / 4
        assert abs(payload["mean"] - exact) <= 5 * payload["std_error"] + 1e-9
        lines = (out / "path.csv").read_text().splitlines()
        assert lines[0] == "t,mode,action,x0"

    def test_simulate_rerun_reproduces_bytes(self, tmp_path):
        cfg = {
            "process": {
                "kind": "unit_ball_eikonal",
                "rates": [[0.0, 1.0], [1.0, 0.0]],
                "fs": [F1, F2],
                "n_actions": 16,
            },
            "policy": {"kind": "constant", "index": 3},
            "horizon": 0.5,
            "x0": [0.25],
            "mode0": 1,
            "n_samples": 300,
            "seed": 77,
            "dt_sim": 0.125,
        }
        cfg_path = _write(tmp_path, "c.json", cfg)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg_path, "--out", str(out_a)]) == 0
        assert main(["simulate", "--config", cfg_path, "--out", str(out_b)]) == 0
        assert _tree_bytes(out_a) == _tree_bytes(out_b)


class TestTheoremSuite:
    def test_quick_pass(self, tmp_path, capsys):
        cfg = {"name": "identical-gap", "overrides": {"n": 64, "t_final": 6.0}}
        out = tmp_path / "out"
        rc = main(
            [
                "theorem-suite",
                "--config",
                _write(tmp_path, "c.json", cfg),
                "--out",
                str(out),
            ]
        )
        captured = capsys.readouterr().out
        assert rc == 0
        assert "[PASS]" in captured
        assert (out / "suite.json").exists()

    def test_short_horizon_fails(self, tmp_path, capsys):
        # half a time unit leaves too few snapshots to certify the decay rate
        cfg = {"name": "identical-gap", "overrides": {"n": 64, "t_final": 0.5}}
        rc = main(["theorem-suite", "--config", _write(tmp_path, "c.json", cfg)])
        assert rc == 1
        assert "[FAIL]" in capsys.readouterr().out

    def test_unknown_suite(self, tmp_path, capsys):
        cfg = {"name": "no-such-suite"}
        rc = main(["theorem-suite", "--config", _write(tmp_path, "c.json", cfg)])
        assert rc == 2

"""Command-line runner: pipelines, artifacts, determinism and exit codes."""

import copy
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from hjbopt.cli import EXIT_CODES, main
from hjbopt.grid import load_value_field
from hjbopt.solver import riccati_constant
from hjbopt.trajectory import read_trajectory_csv

RICCATI = {
    "objective": {"name": "riccati_dist", "params": {"c": 1.0}},
    "domain": {"nodes": [401]},
    "lambda": 0.1,
    "trajectory": {"x0": [1.0], "T": 10.0, "dt": 0.001, "policy": "optimal"},
    "analysis": {"r": 0.4, "floor": 0.05},
}


def write_cfg(tmp_path, name="cfg.yaml", **over):
    d = copy.deepcopy(RICCATI)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            d[k] = {**d[k], **v}
        else:
            d[k] = v
    d.setdefault("output_dir", str(tmp_path / "out"))
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d))
    return str(p), d["output_dir"]


def run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def assert_one_line_error(err, cause):
    lines = err.strip().splitlines()
    assert len(lines) == 1, err
    assert lines[0].startswith(f"hjbopt: error[{cause}]: ")


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """solve -> trajectory -> rates on the Riccati configuration."""
    tmp = tmp_path_factory.mktemp("pipe")
    cfg, out = write_cfg(tmp)
    for cmd in ("solve", "trajectory", "rates"):
        assert main([cmd, "--config", cfg]) == 0
    return cfg, out


class TestPipeline:
    def test_value_matches_closed_form(self, pipeline):
        _, out = pipeline
        vf = load_value_field(f"{out}/value.hjbv")
        x = vf.grid.points()[:, 0]
        ref = riccati_constant(0.1, 1.0) * x * x
        m = np.abs(x) <= 1.4
        assert np.linalg.norm(vf.values[m] - ref[m]) / np.linalg.norm(ref[m]) <= 0.02

    def test_trajectory_endpoint(self, pipeline):
        _, out = pipeline
        tr = read_trajectory_csv(f"{out}/trajectory.csv")
        j = tr.index_of(3.0)
        rho = 2 * riccati_constant(0.1, 1.0)
        assert tr.states[j, 0] == pytest.approx(np.exp(-rho * 3.0), abs=5e-3)

    def test_rates_all_pass(self, pipeline):
        _, out = pipeline
        rates = json.load(open(f"{out}/rates.json"))
        assert rates["all_pass"] is True
        assert {r["check"] for r in rates["reports"]} == {"variational_optimal", "pathwise",
                                                           "sandwich"}
        for r in rates["reports"]:
            assert r["pass"] is True and r["bound_violations"] == 0
        ass = json.load(open(f"{out}/assumptions.json"))
        assert ass["flags"]["A3"] and ass["flags"]["B"] and ass["flags"]["D"]
        assert ass["growth"][:2] == pytest.approx([1.0, 1.0])

    def test_plot_files(self, pipeline):
        _, out = pipeline
        lines = open(f"{out}/decay.dat").read().splitlines()
        assert lines[0] == "# t u_tilde u_bound dist2 dist2_bound"
        assert len(lines[1].split()) == 5
        assert "decay.dat" in open(f"{out}/decay.gp").read()
        assert open(f"{out}/gamma.csv").readline().strip() == "delta,gamma"

    def test_manifest_inventory(self, pipeline):
        _, out = pipeline
        man = json.load(open(f"{out}/manifest.json"))
        expected = {"value.hjbv", "solver_log.csv", "trajectory.csv", "rates.json",
                    "assumptions.json", "gamma.csv", "decay.dat", "decay.gp"}
        assert set(man["files"]) == expected
        for name, entry in man["files"].items():
            assert entry["sha256"] == sha(f"{out}/{name}")
        assert set(man["stages"]) == {"solve", "trajectory", "rates"}
        assert len(man["config_sha256"]) == 64 and man["tool_version"]

    def test_deterministic(self, pipeline, tmp_path):
        cfg, out = pipeline
        out2 = str(tmp_path / "again")
        for cmd in ("solve", "trajectory", "rates"):
            assert main([cmd, "--config", cfg, "--out", out2]) == 0
        for name in ("value.hjbv", "trajectory.csv", "rates.json", "assumptions.json",
                     "gamma.csv", "decay.dat"):
            assert sha(f"{out}/{name}") == sha(f"{out2}/{name}"), name

    def test_explicit_positional_inputs(self, pipeline, tmp_path, capsys):
        cfg, out = pipeline
        code, _, _ = run(capsys, "rates", "--config", cfg, "--out", str(tmp_path / "r"),
                         f"{out}/trajectory.csv", f"{out}/value.hjbv")
        assert code == 0


class TestPolicies:
    @pytest.mark.parametrize("policy", [
        {"kind": "quasi", "eta": 0.2, "eps0": 1e-3, "seed": 1},
        {"kind": "sampled", "delta_min": 0.5, "delta_max": 0.5, "sigma": 0.1, "seed": 1},
    ])
    def test_stochastic_pipeline_deterministic(self, tmp_path, capsys, policy):
        cfg, out = write_cfg(tmp_path, trajectory={"policy": policy})
        assert run(capsys, "solve", "--config", cfg)[0] == 0
        assert run(capsys, "trajectory", "--config", cfg)[0] == 0
        code, stdout, _ = run(capsys, "rates", "--config", cfg)
        assert code == 0
        assert json.load(open(f"{out}/rates.json"))["all_pass"] is True
        first = sha(f"{out}/trajectory.csv")
        assert run(capsys, "trajectory", "--config", cfg)[0] == 0
        assert sha(f"{out}/trajectory.csv") == first

    def test_seed_flag(self, tmp_path, capsys):
        pol = {"kind": "quasi", "eta": 0.2, "eps0": 1e-3}
        cfg, out = write_cfg(tmp_path, trajectory={"policy": pol})
        # the whole configuration is validated up front, whatever the stage
        for cmd in ("solve", "trajectory"):
            code, _, err = run(capsys, cmd, "--config", cfg)
            assert code == EXIT_CODES["config-invalid"]
            assert_one_line_error(err, "config-invalid")
        assert run(capsys, "solve", "--config", cfg, "--seed", "5")[0] == 0
        assert run(capsys, "--seed", "5", "trajectory", "--config", cfg)[0] == 0
        assert run(capsys, "trajectory", "--config", cfg, "--seed", "5")[0] == 0

    def test_flat_objective_records_failure(self, tmp_path, capsys):
        cfg, out = write_cfg(tmp_path, objective={"name": "flat", "params": {}},
                             domain={"nodes": [101]},
                             trajectory={"x0": [0.5], "T": 2.0, "dt": 0.001,
                                         "policy": "optimal"},
                             analysis={"r": 0.4})
        for cmd in ("solve", "trajectory"):
            assert run(capsys, cmd, "--config", cfg)[0] == 0
        code, stdout, _ = run(capsys, "rates", "--config", cfg)
        assert code == 0
        assert "assumption A3: FAILED" in stdout
        assert json.load(open(f"{out}/assumptions.json"))["flags"]["A3"] is False


class TestErrors:
    def test_malformed_config_writes_nothing(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text("objective: {name: [\n")
        out = tmp_path / "never"
        code, _, err = run(capsys, "solve", "--config", str(p), "--out", str(out))
        assert code == 2
        assert_one_line_error(err, "config-invalid")
        assert not out.exists()

    def test_x0_outside_box(self, tmp_path, capsys):
        cfg, _ = write_cfg(tmp_path, domain={"nodes": [101]},
                           trajectory={"x0": [3.0], "T": 1.0, "dt": 0.001})
        assert run(capsys, "solve", "--config", cfg)[0] == 0
        code, _, err = run(capsys, "trajectory", "--config", cfg)
        assert code == 3
        assert_one_line_error(err, "input-mismatch")

    def test_value_file_mismatch(self, tmp_path, capsys):
        cfg, out = write_cfg(tmp_path, domain={"nodes": [101]})
        assert run(capsys, "solve", "--config", cfg)[0] == 0
        cfg2, _ = write_cfg(tmp_path, name="other.yaml", domain={"nodes": [101]},
                            **{"lambda": 0.2})
        code, _, err = run(capsys, "trajectory", "--config", cfg2, f"{out}/value.hjbv")
        assert code == 3
        assert_one_line_error(err, "input-mismatch")

    def test_sampled_bounds_rejected(self, tmp_path, capsys):
        pol = {"kind": "sampled", "delta_min": 0.5, "delta_max": 0.2, "sigma": 0.1, "seed": 0}
        cfg, _ = write_cfg(tmp_path, trajectory={"policy": pol})
        code, _, err = run(capsys, "trajectory", "--config", cfg)
        assert code == 2
        assert_one_line_error(err, "config-invalid")

    def test_truncated_trajectory(self, tmp_path, capsys):
        cfg, _ = write_cfg(tmp_path, domain={"nodes": [101]},
                           trajectory={"T": 0.005, "dt": 0.001})
        for cmd in ("solve", "trajectory"):
            assert run(capsys, cmd, "--config", cfg)[0] == 0
        code, _, err = run(capsys, "rates", "--config", cfg)
        assert code == 6
        assert_one_line_error(err, "analysis-precondition")
        assert "insufficient-decay-window" in err

    def test_missing_value_file(self, tmp_path, capsys):
        cfg, _ = write_cfg(tmp_path)
        code, _, err = run(capsys, "trajectory", "--config", cfg)
        assert code == 9
        assert_one_line_error(err, "input-unreadable")

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        cfg, _ = write_cfg(tmp_path)
        code, _, err = run(capsys, "solve", "--config", cfg, "--out", str(blocker / "sub"))
        assert code == 4
        assert_one_line_error(err, "output-not-writable")

    def test_suite_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code, _, err = run(capsys, "suite", "--quick", "--out", str(blocker / "sub"))
        assert code == 4
        assert_one_line_error(err, "output-not-writable")

    def test_solver_failure(self, tmp_path, capsys):
        cfg, _ = write_cfg(tmp_path, domain={"nodes": [101]}, solver={"max_iters": 2})
        code, _, err = run(capsys, "solve", "--config", cfg)
        assert code == 5
        assert_one_line_error(err, "solver-failed")

    @pytest.mark.parametrize("argv", [["frobnicate"], [], ["solve"], ["--seed", "-1", "solve"],
                                      ["--seed", str(2 ** 64), "solve"]])
    def test_usage_errors(self, argv, capsys):
        code, _, err = run(capsys, *argv)
        assert code == 2
        assert_one_line_error(err, "config-invalid")

    def test_exit_codes_distinct(self):
        assert len(set(EXIT_CODES.values())) == len(EXIT_CODES)


class TestRiccatiCheck:
    def test_single_config(self, tmp_path, capsys):
        cfg, out = write_cfg(tmp_path)
        code, stdout, _ = run(capsys, "riccati-check", "--config", cfg)
        assert code == 0
        lines = stdout.splitlines()
        assert lines[0] == "case,check,predicted,measured,pass" and lines[1].endswith("PASS")

    def test_rejects_other_objective(self, tmp_path, capsys):
        cfg, _ = write_cfg(tmp_path, objective={"name": "double_well", "params": {}})
        code, _, err = run(capsys, "riccati-check", "--config", cfg)
        assert code == 2

    def test_matrix(self, tmp_path, capsys):
        code, stdout, _ = run(capsys, "riccati-check", "--out", str(tmp_path))
        assert code == 0
        rows = stdout.strip().splitlines()[1:]
        assert len(rows) == 24 and all(r.endswith("PASS") for r in rows)


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "hjbopt.cli", "frobnicate"],
                         capture_output=True, text=True)
    assert res.returncode == 2
    assert res.stderr.startswith("hjbopt: error[config-invalid]")


class TestSuiteCommand:
    def test_quick_suite_csv(self, tmp_path, capsys):
        code, stdout, _ = run(capsys, "suite", "--quick", "--out", str(tmp_path))
        assert code == 0
        lines = stdout.strip().splitlines()
        assert lines[0] == "case,check,predicted,measured,pass"
        assert all(line.endswith(",PASS") for line in lines[1:])
        assert (tmp_path / "suite.csv").read_text() == stdout
        assert "suite.csv" in json.load(open(tmp_path / "manifest.json"))["files"]

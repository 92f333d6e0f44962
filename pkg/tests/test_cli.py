import csv
import io
import json

import numpy as np
import pytest

from tasepmf.cli import (
    EXIT_INVALID,
    EXIT_NONCONVERGED,
    EXIT_OK,
    EXIT_VALIDATION,
    classify_phase,
    main,
)
from tasepmf.correlations import embed
from tasepmf.master import uniform_state


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


class TestDensity:
    def test_critical_table(self, capsys):
        code, out, _ = run(capsys, "density", "--n", "8", "--alpha", "0.15", "--beta", "0.15",
                           "--h", "uniform:1", "--models", "master,mf:1,mf:2,mf:3", "--steady")
        assert code == EXIT_OK
        table = rows(out)
        assert table[0] == ["site", "master", "mf:1", "mf:2", "mf:3"]
        assert len(table) == 9 and all(len(r) == 5 for r in table)
        assert [r[0] for r in table[1:]] == [str(s) for s in range(7, -1, -1)]

    def test_point_profile(self, capsys):
        code, out, _ = run(capsys, "density", "--n", "3", "--init", "point:101",
                           "--models", "master", "--evolve", "0")
        assert code == EXIT_OK
        assert [r[1] for r in rows(out)[1:]] == ["1", "0", "1"]

    def test_rfm_fluxes_equal(self, capsys):
        code, out, _ = run(capsys, "density", "--n", "7", "--alpha", "0.4", "--beta", "0.9",
                           "--models", "mf:1", "--steady")
        x = np.array([float(r[1]) for r in rows(out)[1:]])[::-1]  # index = site
        fluxes = [x[j + 1] * (1 - x[j]) for j in range(6)]
        assert code == EXIT_OK and np.ptp(fluxes) < 1e-9

    def test_evolve_models_agree(self, capsys):
        code, out, _ = run(capsys, "density", "--n", "5", "--init", "empty",
                           "--models", "master,full", "--evolve", "1.5")
        table = np.array([[float(v) for v in r] for r in rows(out)[1:]])
        assert code == EXIT_OK
        np.testing.assert_allclose(table[:, 1], table[:, 2], atol=1e-7)

    def test_long_lattice_reduced_models(self, capsys):
        # reduced-model starts must not build a 2^n distribution
        code, out, _ = run(capsys, "density", "--n", "30", "--alpha", "0.75", "--beta", "0.75",
                           "--models", "mf:2,mf:3", "--steady")
        table = np.array([[float(v) for v in r] for r in rows(out)[1:]])
        assert code == EXIT_OK and table.shape == (30, 3)
        assert abs(table[15, 1] - 0.5) < 0.03 and abs(table[15, 2] - 0.5) < 0.03

    def test_output_file_and_determinism(self, tmp_path, capsys):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["density", "--n", "6", "--models", "mf:2,mf:3", "--steady"]
        assert main(args + ["--output", str(out1)]) == EXIT_OK
        assert main(args + ["--output", str(out2)]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()
        assert b"\r" not in out1.read_bytes()

    def test_config_file_with_override(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n": 4, "alpha": 0.5, "models": ["mf:1"], "h": [1, 1, 1],
                                   "steady": True}))
        code, out, _ = run(capsys, "density", "--config", str(cfg), "--n", "5", "--h", "uniform:1")
        assert code == EXIT_OK and len(rows(out)) == 6

    def test_init_file(self, tmp_path, capsys):
        state = tmp_path / "z.json"
        state.write_text(json.dumps({"z": uniform_state(3).tolist()}))
        code, out, _ = run(capsys, "density", "--n", "3", "--init", f"file:{state}",
                           "--models", "master,mf:2", "--evolve", "0")
        assert code == EXIT_OK
        assert all(float(v) == 0.5 for r in rows(out)[1:] for v in r[1:])

    def test_ssa_model(self, capsys):
        code, out, _ = run(capsys, "density", "--n", "3", "--models", "ssa", "--steady",
                           "--replicas", "4", "--t-measure", "50", "--seed", "3")
        assert code == EXIT_OK and len(rows(out)) == 4


class TestInvalidInput:
    @pytest.mark.parametrize("argv, field", [
        (["density", "--n", "3", "--models", "mf:3"], "models"),
        (["density", "--n", "3", "--h", "1,2,3"], "h"),
        (["density", "--n", "3", "--init", "point:11"], "init"),
        (["density", "--n", "3", "--init", "file:/no/such/file"], "init"),
        (["density", "--n", "3", "--alpha", "-1"], "alpha"),
        (["density", "--n", "13", "--models", "full"], "models"),
        (["density", "--n", "3", "--tol", "0"], "tol"),
        (["density", "--n", "3", "--evolve", "-1"], "evolve"),
        (["density", "--n", "3", "--models", "ssa", "--evolve", "1"], "models"),
        (["sweep", "--n", "4", "--alpha-range", "0:1:3"], "alpha_range"),
        (["validate", "--n", "4", "--m-max", "4"], "m_max"),
        (["validate", "--n", "11"], "n"),
    ])
    def test_named_field(self, capsys, argv, field):
        code, _, err = run(capsys, *argv)
        assert code == EXIT_INVALID
        assert field in err

    def test_unknown_command(self, capsys):
        assert run(capsys, "plot")[0] == EXIT_INVALID

    def test_bad_config_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, _, err = run(capsys, "density", "--config", str(bad))
        assert code == EXIT_INVALID and "config" in err


class TestSteady:
    def test_report(self, capsys):
        code, out, _ = run(capsys, "steady", "--n", "6", "--models", "master,full,mf:2")
        table = rows(out)
        assert code == EXIT_OK
        assert table[0][:3] == ["model", "converged", "residual"]
        assert [r[1] for r in table[1:]] == ["true"] * 3
        assert float(table[1][5]) == pytest.approx(float(table[2][5]), abs=1e-10)

    def test_nonconvergence_exit_code(self, capsys):
        code, out, _ = run(capsys, "steady", "--n", "5", "--models", "mf:2", "--tol", "1e-30")
        assert code == EXIT_NONCONVERGED
        assert rows(out)[1][1] == "false"


class TestSweep:
    def test_phase_labels(self):
        assert classify_phase(0.75, 0.75) == "MC"
        assert classify_phase(0.15, 0.15) == "critical"
        assert classify_phase(0.2, 0.9) == "LD"
        assert classify_phase(0.9, 0.2) == "HD"
        assert classify_phase(0.3, 0.3, homogeneous=False) == "n/a"

    def test_grid(self, capsys):
        code, out, _ = run(capsys, "sweep", "--n", "6", "--alpha-range", "0.15:0.75:3",
                           "--beta-range", "0.15:0.9:2", "--model", "mf:1", "--workers", "2")
        table = rows(out)
        assert code == EXIT_OK
        assert table[0] == ["alpha", "beta", "production_rate", "mid_density", "phase", "converged"]
        labels = {(r[0], r[1]): r[4] for r in table[1:]}
        assert labels[("0.15", "0.15")] == "critical"
        assert labels[("0.75", "0.9")] == "MC"
        assert labels[("0.15", "0.9")] == "LD"
        assert labels[("0.75", "0.15")] == "HD"

    def test_inhomogeneous_disables_labels(self, capsys):
        code, out, _ = run(capsys, "sweep", "--n", "3", "--h", "1,2", "--alpha-range", "0.5:0.5:1",
                           "--beta-range", "0.5:0.5:1", "--model", "master", "--workers", "1")
        assert code == EXIT_OK and rows(out)[1][4] == "n/a"


class TestValidate:
    def test_all_pass(self, capsys):
        code, out, _ = run(capsys, "validate", "--n", "5", "--m-max", "3", "--alpha", "1", "--beta", "1")
        report = json.loads(out)
        assert code == EXIT_OK and report["passed"] and report["failed"] == []
        expected = {"consistency", "f_embedding", "tangency", "lower_bounds", "invariance",
                    "boundary_escape", "zero_set_monotone", "order_m_trend"}
        assert expected <= set(report["suites"])

    def test_corrupted_input(self, tmp_path, capsys):
        x = embed(uniform_state(5), 3).values
        x[7] += 0.05
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"order": 3, "values": x.tolist()}))
        code, out, err = run(capsys, "validate", "--n", "5", "--m-max", "3", "--input", str(bad),
                             "--samples", "3")
        assert code == EXIT_VALIDATION
        assert "input_consistency" in json.loads(out)["failed"]
        assert "input_consistency" in err

    def test_critical_trend_recorded(self, capsys):
        code, out, _ = run(capsys, "validate", "--n", "8", "--m-max", "3", "--alpha", "0.15",
                           "--beta", "0.15", "--samples", "3")
        errors = json.loads(out)["suites"]["order_m_trend"]["errors"]
        assert code == EXIT_OK
        assert errors["mf:1"] > errors["mf:2"] > errors["mf:3"]


class TestSsaCommand:
    def test_byte_identical(self, capsys):
        args = ["ssa", "--n", "3", "--seed", "11", "--replicas", "4", "--t-measure", "100"]
        a = run(capsys, *args)[1]
        b = run(capsys, *args)[1]
        assert a == b
        assert rows(a)[0] == ["site", "density", "stderr"]

    def test_against_master(self, capsys):
        code, out, _ = run(capsys, "ssa", "--n", "3", "--seed", "1", "--replicas", "16",
                           "--t-measure", "400")
        table = np.array([[float(v) for v in r] for r in rows(out)[1:]])
        exact = np.array([9 / 14, 1 / 2, 5 / 14])  # sites 2, 1, 0
        assert code == EXIT_OK
        assert (np.abs(table[:, 1] - exact) < 3 * table[:, 2]).all()

import csv
import json

import numpy as np
import pytest

from gmapprox.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main


def write_config(tmp_path, **kw):
    cfg = {
        "sde": {"theta": 1.5, "sigma": 1.0, "x0": 0.0},
        "grid": {"T": 1.0, "dt": 0.01},
        "model": {"type": "single_shot", "rate": 2.0},
        "mc": {"n_paths": 300, "seed": 7},
        "output": {"directory": str(tmp_path / "out"), "formats": ["csv", "json"]},
    }
    for key, val in kw.items():
        cfg[key] = val
    p = tmp_path / "config.json"
    p.write_text(json.dumps(cfg))
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    return head, data


class TestConfigValidation:
    def test_missing_file(self, tmp_path, capsys):
        assert main(["table1", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_bad_json(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert main(["table1", "--config", str(p)]) == EXIT_CONFIG

    def test_unknown_model(self, tmp_path, capsys):
        p = write_config(tmp_path, model={"type": "levy"})
        assert main(["simulate", "--config", str(p)]) == EXIT_CONFIG
        assert "levy" in capsys.readouterr().err

    def test_pairing_conflict(self, tmp_path, capsys):
        p = write_config(tmp_path, model={"type": "single_shot", "rate": 1.5})
        assert main(["simulate", "--config", str(p)]) == EXIT_CONFIG
        assert "coincides" in capsys.readouterr().err

    def test_bad_field_value(self, tmp_path, capsys):
        p = write_config(tmp_path, grid={"T": -1.0, "dt": 0.01})
        assert main(["simulate", "--config", str(p)]) == EXIT_CONFIG

    def test_odd_cost_order(self, tmp_path):
        p = write_config(tmp_path, costs={"p_list": [3]})
        assert main(["simulate", "--config", str(p)]) == EXIT_CONFIG


class TestSimulate:
    def test_outputs_and_shared_noise(self, tmp_path):
        p = write_config(tmp_path)
        assert main(["simulate", "--config", str(p), "--display-paths", "2"]) == EXIT_OK
        out = tmp_path / "out"
        head, data = read_csv(out / "paths.csv")
        assert head == ["t", "X_0", "X2_0", "X4_0", "X_1", "X2_1", "X4_1"]
        assert data.shape == (101, 7)
        _, f2 = read_csv(out / "F2.csv")
        _, f4 = read_csv(out / "F4.csv")
        # the three columns of one path share the same noise realization:
        # X2 - X4 = F2 - F4 exactly
        np.testing.assert_allclose(
            data[:, 2] - data[:, 3], f2[:, 1] - f4[:, 1], atol=1e-12
        )

    def test_deterministic_noise_free_columns_coincide(self, tmp_path):
        p = write_config(
            tmp_path,
            sde={"theta": 1.5, "sigma": 0.0, "x0": 0.0},
            model={"type": "deterministic", "constant": 1.0},
            mc={"n_paths": 50, "seed": 3},
        )
        assert main(["simulate", "--config", str(p)]) == EXIT_OK
        _, data = read_csv(tmp_path / "out" / "paths.csv")
        np.testing.assert_allclose(data[:, 1], data[:, 2], atol=1e-9)
        np.testing.assert_allclose(data[:, 1], data[:, 3], atol=1e-9)

    def test_default_grid_row_count(self, tmp_path):
        # default protocol grid: T/dt + 1 = 5001 rows
        out = tmp_path / "out"
        code = main([
            "simulate", "--seed", "1", "--paths", "40", "--out", str(out), "--display-paths", "1",
        ])
        assert code == EXIT_OK
        _, data = read_csv(out / "paths.csv")
        assert data.shape[0] == 5001


class TestBound:
    def test_single_shot_no_violation(self, tmp_path, capsys):
        p = write_config(tmp_path, mc={"n_paths": 500, "seed": 11})
        assert main(["bound", "--config", str(p)]) == EXIT_OK
        head, data = read_csv(tmp_path / "out" / "bound.csv")
        assert head == ["t", "mse", "se", "d2"]
        viol = data[:, 1] - data[:, 3] - 3 * data[:, 2]
        assert viol.max() <= 0
        assert "max violation" in capsys.readouterr().out

    def test_deterministic_zero_curves(self, tmp_path):
        p = write_config(
            tmp_path, model={"type": "deterministic", "constant": 2.0}, mc={"n_paths": 20, "seed": 1}
        )
        assert main(["bound", "--config", str(p)]) == EXIT_OK
        _, data = read_csv(tmp_path / "out" / "bound.csv")
        assert np.all(data[:, 1] == 0)
        assert np.all(data[:, 3] == 0)

    def test_brownian_d2_spot_values(self, tmp_path):
        # dt = 0.01 here, so the generic quadrature carries O(dt^2) error
        p = write_config(tmp_path, model={"type": "brownian", "trend": 2.0}, mc={"n_paths": 50, "seed": 2})
        assert main(["bound", "--config", str(p)]) == EXIT_OK
        _, data = read_csv(tmp_path / "out" / "bound.csv")
        th = 1.5
        t = data[:, 0]
        exact = t / (2 * th) + np.expm1(-2 * th * t) / (4 * th**2)
        for k in np.linspace(0, len(t) - 1, 10).astype(int):
            assert data[k, 3] == pytest.approx(exact[k], abs=5e-5)


class TestTables:
    def test_table1_deterministic_outputs(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        args = ["table1", "--seed", "42", "--paths", "50"]
        assert main(args + ["--out", str(out1)]) == EXIT_OK
        assert main(args + ["--out", str(out2)]) == EXIT_OK
        assert (out1 / "table1.csv").read_bytes() == (out2 / "table1.csv").read_bytes()
        assert (out1 / "table1.json").read_bytes() == (out2 / "table1.json").read_bytes()

    def test_table1_layout(self, tmp_path):
        out = tmp_path / "t1"
        assert main(["table1", "--seed", "1", "--paths", "40", "--out", str(out)]) == EXIT_OK
        with open(out / "table1.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 6  # header + 5 scenarios
        assert len(rows[1]) == 9  # scenario + 4 values + 4 SEs
        payload = json.loads((out / "table1.json").read_text())
        assert len(payload["records"]) == 20

    def test_table2_layout(self, tmp_path):
        out = tmp_path / "t2"
        assert main(["table2", "--seed", "1", "--paths", "30", "--out", str(out)]) == EXIT_OK
        with open(out / "table2.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 4  # header + 3 scenarios
        payload = json.loads((out / "table2.json").read_text())
        assert len(payload["records"]) == 12

    def test_costs_single_model(self, tmp_path):
        p = write_config(tmp_path, mc={"n_paths": 200, "seed": 5})
        assert main(["costs", "--config", str(p)]) == EXIT_OK
        payload = json.loads((tmp_path / "out" / "costs.json").read_text())
        assert len(payload["records"]) == 4


class TestNeuron:
    def test_analytic_scenario(self, tmp_path):
        p = write_config(
            tmp_path, neuron={"scenario": "exponential", "T": 10.0}, mc={"n_paths": 50, "seed": 2}
        )
        assert main(["neuron", "--config", str(p)]) == EXIT_OK
        _, f2 = read_csv(tmp_path / "out" / "neuron_F2.csv")
        assert f2.shape == (1001, 2)
        summary = json.loads((tmp_path / "out" / "neuron_summary.json").read_text())
        assert summary["scenario"] == "exponential"

    def test_simulated_scenario_small(self, tmp_path):
        p = write_config(tmp_path, neuron={"scenario": "simulated_network", "T": 2.0}, mc={"n_paths": 20, "seed": 2})
        assert main(["neuron", "--config", str(p)]) == EXIT_OK
        summary = json.loads((tmp_path / "out" / "neuron_summary.json").read_text())
        assert summary["censor_rate"] < 1e-3

    def test_censoring_failure_exit_code(self, tmp_path):
        # subthreshold noiseless inputs never fire: numerical failure, exit 3
        p = write_config(
            tmp_path,
            neuron={
                "scenario": "simulated_network",
                "mu_i": 1.0,
                "sigma_i": 0.0,
                "horizon_cap": 5.0,
                "T": 2.0,
            },
            mc={"n_paths": 3, "seed": 2},
        )
        assert main(["neuron", "--config", str(p)]) == EXIT_NUMERICAL


class TestConfigEcho:
    def test_rerun_from_echo_reproduces(self, tmp_path):
        p = write_config(tmp_path)
        assert main(["simulate", "--config", str(p)]) == EXIT_OK
        first = (tmp_path / "out" / "paths.csv").read_bytes()
        echo = tmp_path / "out" / "simulate_config.json"
        assert main(["simulate", "--config", str(echo)]) == EXIT_OK
        assert (tmp_path / "out" / "paths.csv").read_bytes() == first

"""CLI subcommands, artifacts, exit codes, reproducibility."""

import json
import subprocess
import sys

import numpy as np
import pytest

from growthopt import bundled_model_path, load_model
from growthopt.cli import main
from growthopt.modelio import load_policy, parse_model_dict


def write_model(tmp_path, mutate=None):
    with open(bundled_model_path()) as fh:
        doc = json.load(fh)
    if mutate:
        mutate(doc)
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    return str(path)


def base_args(tmp_path, out="out"):
    return ["--model", write_model(tmp_path), "--output-dir",
            str(tmp_path / out)]


class TestValidateCommand:
    def test_bundled_model_passes(self, tmp_path, capsys):
        code = main(base_args(tmp_path) + ["validate"])
        out = capsys.readouterr().out
        assert code == 0
        assert "kappa=" in out and "floor_rate=" in out
        doc = json.loads((tmp_path / "out" / "validate.json").read_text())
        assert doc["ok"] is True

    def test_identity_transition_fails(self, tmp_path):
        def mutate(doc):
            doc["factors"]["transition"] = [[1.0, 0.0], [0.0, 1.0]]
        path = write_model(tmp_path, mutate)
        code = main(["--model", path, "--output-dir", str(tmp_path / "o"),
                     "validate"])
        assert code == 1

    def test_excessive_costs_fail_growth_gate(self, tmp_path):
        def mutate(doc):
            doc["costs"]["buy"] = [0.4, 0.4]
            doc["costs"]["sell"] = [0.4, 0.4]
        path = write_model(tmp_path, mutate)
        code = main(["--model", path, "--output-dir", str(tmp_path / "o"),
                     "validate"])
        assert code == 1
        doc = json.loads((tmp_path / "o" / "validate.json").read_text())
        assert doc["checks"]["growth_exceeds_drag"]["passed"] is False

    def test_bad_row_sums_rejected(self, tmp_path):
        def mutate(doc):
            doc["factors"]["transition"] = [[0.8, 0.1], [0.2, 0.8]]
        path = write_model(tmp_path, mutate)
        assert main(["--model", path, "--output-dir", str(tmp_path / "o"),
                     "validate"]) == 1


class TestSolveCommand:
    def test_emits_reloadable_policy(self, tmp_path):
        args = base_args(tmp_path)
        code = main(args + ["--mesh-order", "4", "solve", "--beta", "0.95"])
        assert code == 0
        pol = load_policy(str(tmp_path / "out" / "value_beta"))
        assert pol.impulse.shape == (5, 16, 2)
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert "value_beta.csv" in manifest["outputs"]

    def test_proportional_model_drops_wealth_axis(self, tmp_path):
        def mutate(doc):
            doc["costs"]["fixed"] = 0.0
        path = write_model(tmp_path, mutate)
        code = main(["--model", path, "--output-dir", str(tmp_path / "p"),
                     "--mesh-order", "4", "solve", "--beta", "0.95"])
        assert code == 0
        pol = load_policy(str(tmp_path / "p" / "value_beta"))
        assert pol.wealth_free
        assert pol.impulse.shape == (5, 2)


@pytest.fixture(scope="module")
def optimal_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("opt")
    args = base_args(tmp)
    assert main(args + ["--mesh-order", "4", "optimal"]) == 0
    return tmp


class TestOptimalAndSimulate:
    def test_report_fields(self, optimal_dir):
        doc = json.loads((optimal_dir / "out" / "optimal.json").read_text())
        assert doc["policy_ref"] == "policy"
        assert len(doc["lambda_estimates"]) == len(doc["betas"])
        assert doc["lambda"] == doc["lambda_estimates"][-1]
        assert "residual_summary" in doc

    def test_simulate_emitted_policy(self, optimal_dir, capsys):
        model_path = str(optimal_dir / "model.json")
        code = main(["--model", model_path, "--output-dir",
                     str(optimal_dir / "sim"), "--T", "400", "--n-paths", "40",
                     "simulate", "--policy", str(optimal_dir / "out" / "policy"),
                     "--mimic", "off"])
        assert code == 0
        doc = json.loads((optimal_dir / "sim" / "simulate.json").read_text())
        opt = json.loads((optimal_dir / "out" / "optimal.json").read_text())
        # growth net of the initial-wealth offset lands near the solver rate
        offset = np.log(100.0) / 400
        assert abs(doc["growth_mean"] - offset - opt["lambda"]) <= 5e-3

    def test_simulate_mimicking_wrapper(self, optimal_dir):
        model_path = str(optimal_dir / "model.json")
        code = main(["--model", model_path, "--output-dir",
                     str(optimal_dir / "sim2"), "--T", "300", "--n-paths", "20",
                     "simulate", "--policy",
                     str(optimal_dir / "out" / "policy_prop"), "--mimic", "auto"])
        assert code == 0
        doc = json.loads((optimal_dir / "sim2" / "simulate.json").read_text())
        assert doc["mimicking"] is True


class TestTrajectoryArtifact:
    def test_csv_round_trip(self, optimal_dir):
        from growthopt.modelio import read_trajectory_csv
        model_path = str(optimal_dir / "model.json")
        assert main(["--model", model_path, "--output-dir",
                     str(optimal_dir / "traj"), "--T", "100", "--n-paths", "2",
                     "simulate", "--policy", str(optimal_dir / "out" / "policy"),
                     "--mimic", "off"]) == 0
        path = str(optimal_dir / "traj" / "trajectory.csv")
        head = open(path).readline().strip().split(",")
        assert head == ["t", "z", "xi", "pi_prev_0", "pi_prev_1", "transacted",
                        "pi_0", "pi_1", "e_applied", "x_prev", "x"]
        data = read_trajectory_csv(path)
        assert data["t"].shape[0] == 101
        assert np.isfinite(data["x_prev"]).all()
        np.testing.assert_allclose(data["pi_prev"].sum(axis=1), 1.0,
                                   atol=1e-12)


class TestLdcheckCommand:
    def test_emits_csv_and_slope(self, tmp_path):
        args = base_args(tmp_path)
        code = main(args + ["--n-paths", "5000", "ldcheck"])
        assert code == 0
        body = (tmp_path / "out" / "ld_tail.csv").read_text().splitlines()
        assert body[0] == "T,p_hat,eps,tail_prob,n_paths"
        assert len(body) == 7


class TestReproducibility:
    def test_csv_bodies_byte_identical(self, tmp_path):
        model = write_model(tmp_path)
        for out in ("a", "b"):
            assert main(["--model", model, "--output-dir",
                         str(tmp_path / out), "--mesh-order", "4", "--seed",
                         "777", "optimal"]) == 0
            assert main(["--model", model, "--output-dir",
                         str(tmp_path / out), "--T", "200", "--n-paths", "10",
                         "--seed", "777", "simulate", "--policy",
                         str(tmp_path / out / "policy"), "--mimic", "off"]) == 0
        for name in ("policy.csv", "policy_prop.csv", "trajectory.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, name

    def test_manifests_identical_modulo_timing(self, tmp_path):
        model = write_model(tmp_path)
        docs = []
        for out in ("m1", "m2"):
            assert main(["--model", model, "--output-dir",
                         str(tmp_path / out), "--mesh-order", "4", "--seed",
                         "9", "optimal"]) == 0
            doc = json.loads((tmp_path / out / "manifest.json").read_text())
            doc.pop("timing")
            doc["config"].pop("output_dir")
            docs.append(doc)
        assert docs[0] == docs[1]


class TestUsageErrors:
    def test_no_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2

    def test_empty_config_exits_2(self, tmp_path):
        cfg = tmp_path / "empty.json"
        cfg.write_text("{}")
        with pytest.raises(SystemExit) as err:
            main(["--config", str(cfg), "validate"])
        assert err.value.code == 2

    def test_missing_model_is_domain_error(self, tmp_path):
        assert main(["--model", str(tmp_path / "nope.json"), "--output-dir",
                     str(tmp_path / "o"), "validate"]) == 1

    def test_config_file_with_overrides(self, tmp_path):
        model = write_model(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "model_path": model,
            "grid": {"simplex_order": 4,
                     "wealth": {"x_min": 1e-3, "x_max": 1e4, "n_x": 8}},
            "betas": [0.9, 0.99],
            "tolerances": {"tol": 1e-5, "tie_eps": 1e-10, "cross_tol": 5e-3},
            "simulation": {"T": 100, "n_paths": 10, "seed": 5},
            "output_dir": str(tmp_path / "cfgout"),
        }))
        assert main(["--config", str(cfg), "optimal"]) == 0
        doc = json.loads((tmp_path / "cfgout" / "optimal.json").read_text())
        assert doc["betas"] == [0.9, 0.99]

    def test_console_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "growthopt.cli", "--help"],
                             capture_output=True, text=True)
        assert res.returncode == 0
        assert "validate" in res.stdout


class TestModelParsing:
    def test_decimal_strings_accepted(self):
        model, spec = load_model(bundled_model_path())
        assert model.shock_probs[0] == 0.5
        assert spec.fixed == 0.1

    def test_mild_rounding_renormalized(self):
        doc = {
            "assets": 1,
            "factors": {"transition": [[1.0 + 5e-10]]},
            "shocks": {"probs": [1.0]},
            "returns": [[[1.05]]],
        }
        model, _ = parse_model_dict(doc)
        assert model.transition[0, 0] == 1.0

    def test_shape_mismatch_rejected(self):
        doc = {
            "assets": 2,
            "factors": {"transition": [[1.0]]},
            "shocks": {"probs": [1.0]},
            "returns": [[[1.05]]],
        }
        with pytest.raises(ValueError):
            parse_model_dict(doc)

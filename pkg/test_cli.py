import json
import os

import numpy as np
import pytest

import mdi_cli
from artifacts import read_csv, read_json
from config import RunConfig, ConfigError, load_config_file
from fock_lab import ReconstructionError
from gaussian_core import tmsv
from mdi_cli import main, EXIT_OK, EXIT_COMPUTE, EXIT_CONFIG, EXIT_VERIFY, OUTPUT_FILES
from priors import PriorSpec
from sampler import summarize
from witness import VERDICT_CERTIFIED, VERDICT_INCONCLUSIVE


def _run(tmp_path, *args):
    return main([args[0], "--no-banner", "-q", "--out", str(tmp_path)] + list(args[1:]))


def _load(tmp_path, name):
    return read_json(os.path.join(str(tmp_path), name))


class TestConfig:
    def test_defaults(self):
        config = RunConfig.from_sources("contour", {})
        assert len(config.r_grid) == 51 and config.r_grid[-1] == 2.5
        assert len(config.eta_grid) == 51 and config.eta_grid[-1] == 1.0
        assert config.sigma_list == [1.0, 2.0, 3.0, 5.0, 10.0]

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"r": 0.8, "eta-a": 0.1, "seed": 3}))
        config = RunConfig.from_sources("witness-eval", {"r": 0.2, "seed": None}, str(path))
        assert config.r == 0.2
        assert config.eta_a == 0.1
        assert config.seed == 3

    def test_lambda_key(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"lambda": 0.7}))
        assert load_config_file(str(path)) == {"lam": 0.7}

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"temperature": 3}))
        with pytest.raises(ConfigError):
            RunConfig.from_sources("witness-eval", {}, str(path))

    def test_missing_and_malformed_files(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(str(tmp_path / "absent.json"))
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config_file(str(path))

    def test_sigma_inf_means_no_prior(self):
        config = RunConfig.from_sources("witness-eval", {"sigma": float("inf")})
        assert config.sigma is None

    @pytest.mark.parametrize("command,flags", [
        ("witness-eval", {"eta_a": 1.5}),
        ("witness-eval", {"kappa": -1.0}),
        ("witness-eval", {"kappa": "auto", "eta_b": 1.0}),
        ("mdi-simulate", {"trials": 10}),
        ("mdi-simulate", {"sigma": 2.0, "trials": 0}),
        ("mdi-simulate", {"prior": "smooth-box", "l": 1.0, "delta": 2.0}),
        ("contour", {"sigma_list": [0.0]}),
        ("fock-verify", {"cutoff": 15}),
        ("fock-verify", {"lam": 1.0}),
        ("prior-fim", {"kappa": "auto", "sigma": 1.0}),
        ("witness-eval", {"seed": -1}),
        ("mdi-simulate", {"sigma": 2.0, "n_sigma": 0.0}),
    ])
    def test_validation(self, command, flags):
        with pytest.raises(ConfigError):
            RunConfig.from_sources(command, flags).validate()


class TestWitnessEval:
    def test_tmsv_values(self, tmp_path):
        assert _run(tmp_path, "witness-eval", "--r", "0.5", "--kappa", "1", "--sigma", "2") == EXIT_OK
        result = _load(tmp_path, "witness_eval.json")
        assert result["ew"] == pytest.approx(np.exp(-1.0), abs=1e-12)
        assert result["mdiew"] == pytest.approx(0.5 * (1 + np.exp(-1.0)), abs=1e-12)
        assert result["mdi_bound"] == pytest.approx(0.8)
        assert result["ew_closed_form"] == pytest.approx(result["ew"], abs=1e-12)
        assert result["verdict"] == "entangled-certified"

    def test_auto_kappa(self, tmp_path):
        assert _run(tmp_path, "witness-eval", "--kappa", "auto", "--eta-a", "0", "--eta-b", "0.75") == EXIT_OK
        assert _load(tmp_path, "witness_eval.json")["kappa"] == pytest.approx(0.70711, abs=1e-5)

    def test_state_file(self, tmp_path):
        state_path = tmp_path / "state.json"
        state_path.write_text(tmsv(0.4).to_json())
        assert _run(tmp_path, "witness-eval", "--state-file", str(state_path), "--kappa", "auto") == EXIT_OK
        result = _load(tmp_path, "witness_eval.json")
        assert result["ew"] < result["ew_bound"]
        assert "ew_closed_form" not in result

    def test_csv_output(self, tmp_path):
        assert _run(tmp_path, "witness-eval", "--format", "csv") == EXIT_OK
        frame = read_csv(os.path.join(str(tmp_path), "witness_eval.csv"))
        assert len(frame) == 1
        assert "mdiew" in frame.columns

    def test_bad_loss_is_config_error(self, tmp_path):
        assert _run(tmp_path, "witness-eval", "--eta-a", "1.5") == EXIT_CONFIG

    def test_missing_state_file(self, tmp_path):
        assert _run(tmp_path, "witness-eval", "--state-file", str(tmp_path / "none.json")) == EXIT_CONFIG

    def test_config_file_precedence(self, tmp_path):
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps({"r": 2.0, "sigma": 2.0}))
        assert _run(tmp_path, "witness-eval", "--config", str(config_path), "--r", "0.5") == EXIT_OK
        result = _load(tmp_path, "witness_eval.json")
        assert result["state"]["r"] == 0.5
        assert result["sigma"] == 2.0


class TestMdiSimulate:
    def test_writes_samples_and_report(self, tmp_path):
        code = _run(tmp_path, "mdi-simulate", "--r", "0.5", "--sigma", "3", "--trials", "2000",
                    "--seed", "7", "--kappa-grid", "0.5,2")
        assert code == EXIT_OK
        samples = read_csv(os.path.join(str(tmp_path), OUTPUT_FILES["mdi-samples"]))
        assert len(samples) == 2000
        report = _load(tmp_path, OUTPUT_FILES["mdi-report"])
        assert report["seed"] == 7
        assert [entry["kappa"] for entry in report["kappa"]] == [0.5, 1.0, 2.0]
        assert report["primary"]["kappa"] == 1.0
        assert report["analytic_score"] == pytest.approx(0.5 * (1 + np.exp(-1.0)))

    def test_same_seed_same_bytes(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        for out in (first, second):
            assert _run(out, "mdi-simulate", "--sigma", "3", "--trials", "500", "--seed", "11") == EXIT_OK
        for name in ("mdi-samples", "mdi-report"):
            with open(os.path.join(str(first), OUTPUT_FILES[name]), "rb") as fa, \
                    open(os.path.join(str(second), OUTPUT_FILES[name]), "rb") as fb:
                assert fa.read() == fb.read()

    def test_skip_samples(self, tmp_path):
        code = _run(tmp_path, "mdi-simulate", "--sigma", "3", "--trials", "100", "--no-dump-samples")
        assert code == EXIT_OK
        assert not os.path.exists(os.path.join(str(tmp_path), OUTPUT_FILES["mdi-samples"]))

    def test_smooth_box_adversary(self, tmp_path):
        code = _run(tmp_path, "mdi-simulate", "--prior", "smooth-box", "--l", "3.14159", "--delta", "3.14159",
                    "--scheme", "separable-heterodyne", "--trials", "1000")
        assert code == EXIT_OK
        report = _load(tmp_path, OUTPUT_FILES["mdi-report"])
        assert "analytic_score" not in report
        assert report["primary"]["bound"] == pytest.approx(2 / 3, abs=1e-5)

    def test_gaussian_prior_needs_sigma(self, tmp_path):
        assert _run(tmp_path, "mdi-simulate", "--trials", "10") == EXIT_CONFIG

    def test_samples_csv_reproduces_report(self, tmp_path):
        code = _run(tmp_path, "mdi-simulate", "--r", "0.5", "--sigma", "3", "--trials", "3000", "--seed", "5")
        assert code == EXIT_OK
        samples = read_csv(os.path.join(str(tmp_path), OUTPUT_FILES["mdi-samples"]))
        report = _load(tmp_path, OUTPUT_FILES["mdi-report"])
        rescored = summarize(samples, [1.0], PriorSpec.gaussian(3.0))["kappa"][0]
        assert rescored["score"] == report["primary"]["score"]
        assert rescored["std_error"] == report["primary"]["std_error"]

    def test_n_sigma_sets_threshold(self, tmp_path):
        args = ("--r", "0.5", "--sigma", "3", "--trials", "2000", "--seed", "5", "--no-dump-samples")
        assert _run(tmp_path, "mdi-simulate", *args) == EXIT_OK
        report = _load(tmp_path, OUTPUT_FILES["mdi-report"])
        assert report["verdict_sigmas"] == 3.0
        assert report["primary"]["verdict"] == VERDICT_CERTIFIED

        assert _run(tmp_path, "mdi-simulate", *args, "--n-sigma", "1000") == EXIT_OK
        report = _load(tmp_path, OUTPUT_FILES["mdi-report"])
        assert report["verdict_sigmas"] == 1000.0
        assert report["primary"]["verdict"] == VERDICT_INCONCLUSIVE


class TestContour:
    def test_values_and_boundaries(self, tmp_path):
        code = _run(tmp_path, "contour", "--sigma-list", "2,5", "--r-grid", "0:2:5", "--eta-grid", "0,0.5,1")
        assert code == EXIT_OK
        values = read_csv(os.path.join(str(tmp_path), OUTPUT_FILES["contour-values"]))
        assert list(values.columns) == ["r", "eta", "mdiew_value"]
        assert len(values) == 15
        boundaries = read_csv(os.path.join(str(tmp_path), OUTPUT_FILES["contour-boundaries"]))
        assert set(boundaries["sigma"]) == {2.0, 5.0}

    def test_empty_sigma_list(self, tmp_path):
        code = _run(tmp_path, "contour", "--sigma-list", "", "--r-grid", "0:1:3", "--eta-grid", "0:1:3")
        assert code == EXIT_OK
        assert os.path.exists(os.path.join(str(tmp_path), OUTPUT_FILES["contour-values"]))
        assert not os.path.exists(os.path.join(str(tmp_path), OUTPUT_FILES["contour-boundaries"]))


class TestFockVerify:
    def test_small_run(self, tmp_path):
        code = _run(tmp_path, "fock-verify", "--cutoff", "3", "--instances", "2", "--lambda", "0.5")
        assert code in (EXIT_OK, EXIT_VERIFY)
        report = _load(tmp_path, OUTPUT_FILES["fock-verify"])
        assert report["config"]["cutoff"] == 3
        assert (code == EXIT_OK) == report["passed"]
        assert report["warnings"]

    def test_energy_window_rejected(self, tmp_path):
        code = _run(tmp_path, "fock-verify", "--cutoff", "3", "--lambda", "0.3", "--energy-scale", "10")
        assert code == EXIT_CONFIG
        assert not os.path.exists(os.path.join(str(tmp_path), OUTPUT_FILES["fock-verify"]))


class TestPriorFim:
    def test_smooth_box(self, tmp_path):
        code = _run(tmp_path, "prior-fim", "--prior", "smooth-box", "--l", str(np.pi), "--delta", str(np.pi))
        assert code == EXIT_OK
        report = _load(tmp_path, OUTPUT_FILES["prior-fim"])
        assert report["separable_mdi_bound"] == pytest.approx(2 / 3, abs=1e-9)

    def test_gaussian(self, tmp_path):
        assert _run(tmp_path, "prior-fim", "--sigma", "1", "--kappa", "2") == EXIT_OK
        report = _load(tmp_path, OUTPUT_FILES["prior-fim"])
        np.testing.assert_allclose(report["fim"], [[2.0, 0.0], [0.0, 2.0]])
        assert report["separable_mdi_bound"] == pytest.approx(17 / 16)


class TestExitCodes:
    def test_reconstruction_failure_is_compute_error(self, tmp_path, monkeypatch, capsys):
        def failing(config):
            raise ReconstructionError("Design matrix condition number 1e+13 exceeds 1e+12")

        monkeypatch.setitem(mdi_cli.COMMAND_HANDLERS, "fock-verify", failing)
        assert _run(tmp_path, "fock-verify", "--cutoff", "3") == EXIT_COMPUTE
        assert "fock-verify failed" in capsys.readouterr().out

    def test_linear_algebra_failure_is_compute_error(self, tmp_path, monkeypatch):
        def failing(config):
            raise np.linalg.LinAlgError("SVD did not converge")

        monkeypatch.setitem(mdi_cli.COMMAND_HANDLERS, "prior-fim", failing)
        assert _run(tmp_path, "prior-fim", "--sigma", "1") == EXIT_COMPUTE

    def test_bad_parameter_is_input_error(self, tmp_path, capsys):
        assert _run(tmp_path, "witness-eval", "--eta-b", "-0.1") == EXIT_CONFIG
        assert "Invalid input" in capsys.readouterr().out


def test_no_command_prints_help(capsys):
    assert main([]) == EXIT_CONFIG
    assert "usage" in capsys.readouterr().out.lower()

import json
import math

import numpy as np
import pytest

from tempersmc import cli
from tempersmc.config import config_from_dict, load_config
from tempersmc.diagnostics import compare_sample_sets, summarize
from tempersmc.errors import ConfigurationError, ContractError
from tempersmc.param_space import ParamSpace, ParamSpec
from tempersmc.snapshots import (
    read_cycle_snapshot,
    read_sample_csv,
    write_cycle_snapshot,
)

RNG = np.random.default_rng


def base_config(**overrides):
    raw = {
        "mode": "smc",
        "model": "toy",
        "seed": 5,
        "priors": "toy",
        "data": {"n": 40, "theta_true": 1.7, "sigma2_eps": 0.5, "seed": 7},
        "smc": {"n_particles": 80, "k": 2},
    }
    raw.update(overrides)
    return raw


class TestLoadConfig:
    def test_empty_file_lists_required_fields(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("")
        with pytest.raises(ConfigurationError) as err:
            load_config(path)
        for name in ("mode", "model", "seed"):
            assert name in str(err.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{broken")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_narrow_preset_loads_eleven_priors(self, tmp_path):
        raw = base_config(model="synthetic_multi_era", priors="psu3dice_narrow_priors")
        del raw["data"]
        path = tmp_path / "c.json"
        path.write_text(json.dumps(raw))
        config = load_config(path)
        space = config.build_space()
        assert space.dim == 11
        assert set(space.names) == {
            "OCFACMULT", "OCFACMULTASE", "CRHSHELF", "CRHFAC", "ENHANCESHEET",
            "ENHANCESHELF", "FACEMELTRATE", "TAUASTH", "CLIFFVMAX", "CALVLIQ",
            "CALVNICK",
        }

    def test_ess_thresh_defaults_to_half_n(self):
        config = config_from_dict(base_config())
        settings = config.smc_settings()
        assert settings.resolved_ess_thresh() == settings.n_particles / 2

    def test_paper_tuning_defaults(self):
        config = config_from_dict({"mode": "smc", "model": "toy", "seed": 1})
        settings = config.smc_settings()
        assert settings.n_particles == 2000
        assert settings.gamma_min == 0.1
        assert settings.resolved_ess_thresh() == 1000.0
        assert settings.k == 7
        assert settings.bins == 200
        assert settings.threshold_samples == 1000
        assert settings.threshold_quantile == 0.975
        assert settings.max_updates == 100

    def test_error_names_offending_field(self):
        with pytest.raises(ConfigurationError) as err:
            config_from_dict(base_config(smc={"n_particles": 1}))
        assert "n_particles" in str(err.value)
        with pytest.raises(ConfigurationError) as err:
            config_from_dict(base_config(smc={"gamma_min": 1.5}))
        assert "gamma_min" in str(err.value)
        with pytest.raises(ConfigurationError) as err:
            config_from_dict(base_config(smc={"n_particles": 10, "ess_thresh": 50}))
        assert "ess_thresh" in str(err.value)

    def test_unknown_fields_rejected(self):
        with pytest.raises(ConfigurationError) as err:
            config_from_dict(base_config(bogus=1))
        assert "bogus" in str(err.value)
        with pytest.raises(ConfigurationError) as err:
            config_from_dict(base_config(smc={"n_particles": 16, "typo_field": 2}))
        assert "typo_field" in str(err.value)

    def test_mode_and_model_validated(self):
        with pytest.raises(ConfigurationError):
            config_from_dict(base_config(mode="walk"))
        with pytest.raises(ConfigurationError):
            config_from_dict(base_config(model="unknown"))

    def test_external_requires_command(self):
        raw = base_config(model="external")
        del raw["data"]
        with pytest.raises(ConfigurationError) as err:
            config_from_dict(raw)
        assert "command" in str(err.value)

    def test_inline_priors(self):
        raw = base_config(
            priors=[
                {"name": "theta", "prior_kind": "normal", "mean": 0, "variance": 100},
                {"name": "phi_delta", "prior_kind": "uniform", "lower": 0.01, "upper": 1.5},
                {"name": "sigma2_delta", "prior_kind": "inverse_gamma", "shape": 2, "scale": 2},
                {"name": "sigma2_eps", "prior_kind": "inverse_gamma", "shape": 2, "scale": 2},
            ]
        )
        config = config_from_dict(raw)
        assert config.build_space().names == (
            "theta", "phi_delta", "sigma2_delta", "sigma2_eps",
        )


@pytest.fixture()
def one_dim_space():
    return ParamSpace([ParamSpec("x", "log_uniform", (10.0, -2.0, 2.0))])


class TestSnapshots:
    def test_small_swarm_row_count(self, tmp_path, one_dim_space):
        thetas = np.array([[0.0], [1.0], [-1.5]])
        path = write_cycle_snapshot(
            tmp_path, 0, one_dim_space, thetas, np.zeros(3), np.full(3, 1 / 3),
            {"cycle": 0, "gamma_t": None, "gamma_cum": 0.0, "ess": None,
             "db_trace": [], "updates": 0, "acceptance_rate": None,
             "hit_max": False, "seed": 1},
        )
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 4  # header plus one row per particle
        assert lines[0] == "particle,x,x_natural,log_lik,weight"

    def test_round_trip_bit_exact(self, tmp_path, one_dim_space):
        rng = RNG(0)
        thetas = rng.uniform(-2, 2, (32, 1))
        log_liks = rng.normal(-1000, 500, 32)
        log_liks[3] = -math.inf
        weights = rng.random(32)
        weights /= weights.sum()
        write_cycle_snapshot(
            tmp_path, 2, one_dim_space, thetas, log_liks, weights,
            {"cycle": 2, "gamma_t": 0.25, "gamma_cum": 0.35, "ess": 16.0,
             "db_trace": [0.1], "updates": 10, "acceptance_rate": 0.3,
             "hit_max": False, "seed": 1},
        )
        got_t, got_l, got_w, sidecar = read_cycle_snapshot(tmp_path, 2, one_dim_space)
        assert np.array_equal(got_t, thetas)
        assert np.array_equal(got_l, log_liks)
        assert np.array_equal(got_w, weights)
        assert sidecar["gamma_t"] == 0.25

    def test_prior_snapshot_sidecar_has_zero_exponent(self, tmp_path, one_dim_space):
        write_cycle_snapshot(
            tmp_path, 0, one_dim_space, np.zeros((2, 1)), np.zeros(2), np.full(2, 0.5),
            {"cycle": 0, "gamma_t": None, "gamma_cum": 0.0, "ess": None,
             "db_trace": [], "updates": 0, "acceptance_rate": None,
             "hit_max": False, "seed": 9},
        )
        _, _, _, sidecar = read_cycle_snapshot(tmp_path, 0, one_dim_space)
        assert sidecar["gamma_cum"] == 0.0
        assert sidecar["gamma_t"] is None

    def test_natural_columns_match_transform(self, tmp_path, one_dim_space):
        thetas = np.array([[2.0]])
        write_cycle_snapshot(
            tmp_path, 1, one_dim_space, thetas, np.zeros(1), np.ones(1),
            {"cycle": 1, "gamma_t": 1.0, "gamma_cum": 1.0, "ess": 1.0,
             "db_trace": [], "updates": 0, "acceptance_rate": 0.0,
             "hit_max": False, "seed": 1},
        )
        table = read_sample_csv(tmp_path / "cycle_001.csv")
        x_nat = table["data"][0, table["header"].index("x_natural")]
        assert x_nat == 100.0


class TestSummarize:
    def test_mean_of_three(self):
        assert summarize([1.0, 2.0, 3.0]).mean == 2.0

    def test_normal_interval_monte_carlo(self):
        samples = RNG(1).normal(size=100_000)
        summary = summarize(samples)
        lo, hi = summary.intervals[(0.025, 0.975)]
        assert abs(lo - (-1.96)) < 0.03
        assert abs(hi - 1.96) < 0.03

    def test_survival_endpoints(self):
        samples = RNG(2).normal(size=500)
        summary = summarize(samples)
        assert summary.survival(samples.min() - 1.0) == 1.0
        assert summary.survival(samples.max()) == 0.0
        assert summary.survival_values[0] <= 1.0
        assert summary.survival_values[-1] == 0.0
        assert summary.survival_grid.shape == (100,)

    def test_empty_is_contract_error(self):
        with pytest.raises(ContractError):
            summarize([])

    def test_custom_levels(self):
        samples = np.arange(101.0)
        summary = summarize(samples, levels=((0.1, 0.9),))
        lo, hi = summary.intervals[(0.1, 0.9)]
        assert lo == pytest.approx(10.0)
        assert hi == pytest.approx(90.0)


class TestCompare:
    def test_identical_sets_all_zero(self):
        a = RNG(3).normal(size=(2000, 2))
        report = compare_sample_sets(a, a.copy(), bins=50, names=["p", "q"])
        for row in report:
            assert row.ks_statistic == 0.0
            assert row.mean_gap == 0.0
            assert row.lower_gap == 0.0
            assert row.upper_gap == 0.0
            assert row.bhattacharyya == 0.0

    def test_unit_shift_detected(self):
        rng = RNG(4)
        a = rng.normal(0, 1, 100_000)
        b = rng.normal(1, 1, 100_000)
        row = compare_sample_sets(a, b, bins=100)[0]
        assert abs(row.mean_gap - 1.0) < 0.02
        assert row.ks_statistic > 0.3

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            compare_sample_sets(np.zeros((5, 2)), np.zeros((5, 3)))


def write_config(tmp_path, raw, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


class TestCLI:
    def test_run_smc_writes_snapshots_and_result(self, tmp_path):
        outdir = tmp_path / "out"
        raw = base_config(output_dir=str(outdir))
        code = cli.main(["-q", "run", str(write_config(tmp_path, raw))])
        assert code == 0
        assert (outdir / "manifest.json").exists()
        assert (outdir / "cycle_000.csv").exists()
        assert (outdir / "result.json").exists()
        result = json.loads((outdir / "result.json").read_text())
        assert result["schedule"]
        assert abs(sum(result["schedule"]) - 1.0) < 1e-9
        final = outdir / result["final_snapshot"]
        assert final.exists()

    def test_validation_error_exit_code(self, tmp_path):
        raw = base_config(smc={"n_particles": 1})
        code = cli.main(["-q", "run", str(write_config(tmp_path, raw))])
        assert code == 2

    def test_degenerate_swarm_exit_code(self, tmp_path):
        # impossible indicator bits give every particle zero likelihood
        raw = {
            "mode": "smc",
            "model": "synthetic_multi_era",
            "seed": 3,
            "priors": "psu3dice_narrow_priors",
            "likelihood": {
                "indicator": {
                    "obs_bits": [0] * 10,
                    "location_ids": [f"s{i}" for i in range(10)],
                }
            },
            "smc": {"n_particles": 40, "k": 2},
        }
        code = cli.main(["-q", "run", str(write_config(tmp_path, raw))])
        assert code == 3

    def test_run_mcmc_mode(self, tmp_path):
        outdir = tmp_path / "mcmc_out"
        raw = base_config(
            mode="mcmc",
            output_dir=str(outdir),
            mcmc={"iterations": 400, "burn_in_frac": 0.25},
        )
        code = cli.main(["-q", "run", str(write_config(tmp_path, raw))])
        assert code == 0
        assert (outdir / "chain.csv").exists()
        assert (outdir / "posterior.csv").exists()
        chain = read_sample_csv(outdir / "chain.csv")
        posterior = read_sample_csv(outdir / "posterior.csv")
        assert chain["data"].shape[0] == 401
        assert posterior["data"].shape[0] == 301

    def test_calibrate_threshold_subcommand(self, tmp_path, capsys):
        outdir = tmp_path / "thr"
        raw = base_config(output_dir=str(outdir), smc={"n_particles": 60, "k": 2,
                                                       "threshold_samples": 50})
        code = cli.main(["-q", "calibrate-threshold", str(write_config(tmp_path, raw))])
        assert code == 0
        payload = json.loads((outdir / "threshold.json").read_text())
        assert payload["epsilon"] > 0
        out = capsys.readouterr().out
        assert "stopping threshold" in out

    def test_summarize_subcommand(self, tmp_path, capsys):
        outdir = tmp_path / "out"
        raw = base_config(output_dir=str(outdir))
        assert cli.main(["-q", "run", str(write_config(tmp_path, raw))]) == 0
        result = json.loads((outdir / "result.json").read_text())
        final = outdir / result["final_snapshot"]
        code = cli.main(
            ["-q", "summarize", str(final), "--columns", "theta,sigma2_eps",
             "--output", str(tmp_path / "summary.json")]
        )
        assert code == 0
        payload = json.loads((tmp_path / "summary.json").read_text())
        assert set(payload) == {"theta", "sigma2_eps"}
        assert len(payload["theta"]["survival_grid"]) == 100

    def test_compare_subcommand(self, tmp_path, capsys):
        outdir = tmp_path / "out"
        raw = base_config(output_dir=str(outdir))
        assert cli.main(["-q", "run", str(write_config(tmp_path, raw))]) == 0
        result = json.loads((outdir / "result.json").read_text())
        final = outdir / result["final_snapshot"]
        code = cli.main(
            ["-q", "compare", str(final), str(final), "--columns", "theta",
             "--output", str(tmp_path / "cmp.json")]
        )
        assert code == 0
        payload = json.loads((tmp_path / "cmp.json").read_text())
        assert payload[0]["ks_statistic"] == 0.0

    def test_external_model_end_to_end(self, tmp_path):
        # a real subprocess model: output equals the single input parameter
        stub = tmp_path / "model.sh"
        stub.write_text(
            '#!/bin/sh\n'
            'a=$(sed -n "s/^a=//p" "$1/params.txt")\n'
            'printf \'{"scalars": {"out": %s}}\' "$a" > "$1/output.json"\n'
        )
        stub.chmod(0o755)
        outdir = tmp_path / "ext_run"
        raw = {
            "mode": "smc",
            "model": "external",
            "seed": 21,
            "output_dir": str(outdir),
            "workers": 2,
            "priors": [{"name": "a", "prior_kind": "uniform", "lower": 0, "upper": 1}],
            "likelihood": {
                "trunc_normal_terms": [
                    {"name": "out", "obs": 0.5, "sd": 0.1, "half_width": 0.45}
                ],
                "indicator": None,
            },
            "smc": {"n_particles": 16, "k": 2, "metric": 0, "bins": 20,
                    "epsilon": 1.0, "max_updates": 8},
            "external": {
                "command": [str(stub), "{workdir}"],
                "timeout": 20,
                "workdir_root": str(tmp_path / "ext_workdirs"),
            },
        }
        code = cli.main(["-q", "run", str(write_config(tmp_path, raw, "ext.json"))])
        assert code == 0
        result = json.loads((outdir / "result.json").read_text())
        assert abs(sum(result["schedule"]) - 1.0) < 1e-9
        final = read_sample_csv(outdir / result["final_snapshot"])
        a_col = final["data"][:, final["header"].index("a")]
        # posterior concentrates near the observed value
        assert abs(np.median(a_col) - 0.5) < 0.25
        # isolated workdirs were created per evaluation
        assert any((tmp_path / "ext_workdirs").rglob("params.txt"))

    def test_model_failure_storm_exit_code(self, tmp_path):
        stub = tmp_path / "broken.py"
        stub.write_text("#!/usr/bin/env python3\nraise SystemExit(1)\n")
        raw = {
            "mode": "smc",
            "model": "external",
            "seed": 22,
            "priors": [{"name": "a", "prior_kind": "uniform", "lower": 0, "upper": 1}],
            "likelihood": {
                "trunc_normal_terms": [
                    {"name": "out", "obs": 0.5, "sd": 0.1, "half_width": 0.45}
                ],
                "indicator": None,
            },
            "smc": {"n_particles": 8, "k": 2, "metric": 0},
            "external": {
                "command": ["python3", str(stub), "{workdir}"],
                "timeout": 20,
                "workdir_root": str(tmp_path / "storm_workdirs"),
            },
        }
        code = cli.main(["-q", "run", str(write_config(tmp_path, raw, "storm.json"))])
        assert code == 4

    def test_missing_columns_exit_code(self, tmp_path):
        outdir = tmp_path / "out"
        raw = base_config(output_dir=str(outdir))
        assert cli.main(["-q", "run", str(write_config(tmp_path, raw))]) == 0
        code = cli.main(
            ["-q", "summarize", str(outdir / "cycle_000.csv"), "--columns", "nope"]
        )
        assert code == 2

"""Run configuration, the two-step pipeline end to end, and the study runner."""

import numpy as np
import pytest

from hetode.datasets import generate_logistic_dataset, load_dataset, write_dataset
from hetode.pipeline import (
    McmcSettings,
    PipelineError,
    RunConfig,
    build_config,
    derive_seed,
    parse_prior,
    read_config_file,
    run_pipeline,
    run_simulation_study,
)

FAST_MCMC = {
    "mcmc.iterations": "800",
    "mcmc.burn_in": "200",
    "mcmc.chains": "2",
    "mcmc.pilot_iterations": "400",
    "mcmc.pilot_burn_in": "100",
}


def _fast_settings():
    return McmcSettings(
        iterations=800, burn_in=200, chains=1, pilot_iterations=400, pilot_burn_in=100
    )


class TestConfig:
    def test_defaults(self):
        cfg = build_config({"dataset.n": "50"})
        assert cfg.model == "logistic"
        assert cfg.mode == "hetgp"
        assert cfg.mcmc.iterations == 10000
        assert cfg.hetgp.max_iterations == 20

    def test_overrides_beat_file_values(self):
        cfg = build_config({"seed": "1", "dataset.n": "50"}, {"seed": 7})
        assert cfg.seed == 7

    def test_dotted_keys_reach_nested_settings(self):
        cfg = build_config(
            {"dataset.n": "50", "mcmc.iterations": "12300", "hetgp.max_iterations": "3"}
        )
        assert cfg.mcmc.iterations == 12300
        assert cfg.hetgp.max_iterations == 3

    def test_invalid_prior_bounds_fail_before_compute(self):
        with pytest.raises(ValueError):
            build_config({"dataset.n": "50", "prior.r": "uniform(1, 0.5)"})

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            build_config({"dataset.n": "50", "mode": "robust"})

    def test_true_sigma_needs_generated_data(self):
        with pytest.raises(ValueError):
            build_config({"mode": "true-sigma", "dataset.path": "obs.csv"})

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            build_config({"dataset.n": "50", "mcmc.walkers": "7"})

    def test_config_file_round_trip(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# comment\nseed = 3\nmcmc.iterations=900\nmcmc.burn_in = 100\n")
        values = read_config_file(p)
        cfg = build_config(values, {"dataset.n": 40})
        assert cfg.seed == 3
        assert cfg.mcmc.iterations == 900

    def test_parse_prior_forms(self):
        u = parse_prior("K", "uniform(10, 100)")
        assert (u.dist, u.transform, u.args) == ("uniform", "logit", (10.0, 100.0))
        e = parse_prior("gamma", "exponential(1)")
        assert (e.dist, e.transform) == ("exponential", "log")
        g = parse_prior("beta", "gaussian(0, 1)")
        assert (g.dist, g.transform) == ("gaussian", "log")
        with pytest.raises(ValueError):
            parse_prior("x", "cauchy(0,1)")


class TestDeriveSeed:
    def test_deterministic_and_distinct(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        seen = {derive_seed(0, s, r, m) for s in (20, 100) for r in range(3) for m in range(4)}
        assert len(seen) == 24


class TestRunPipeline:
    def _config(self, tmp_path, mode="hetgp", extra=None):
        values = {
            "dataset.n": "60",
            "mode": mode,
            "seed": "11",
            "out": str(tmp_path / mode),
            "hetgp.max_iterations": "4",
            **FAST_MCMC,
        }
        values.update(extra or {})
        return build_config(values)

    def test_hetgp_mode_artifacts_complete(self, tmp_path):
        summary = run_pipeline(self._config(tmp_path))
        out = tmp_path / "hetgp"
        manifest = dict(
            ln.split("=", 1) for ln in (out / "manifest.txt").read_text().strip().splitlines()
        )
        assert manifest["status"] == "ok"
        for name in manifest["artifacts"].split(";"):
            assert (out / name).exists(), name
        # every tunable appears in the manifest
        for key in ("mcmc.iterations", "mcmc.burn_in", "hetgp.tolerance", "seed", "mode", "model"):
            assert key in manifest
        sigma = np.loadtxt(out / "sigma_estimates.csv", delimiter=",", skiprows=1)
        assert sigma.shape == (60, 2)
        assert np.all(sigma[:, 1] > 0)
        header = (out / "posterior.csv").read_text().splitlines()[0]
        assert header == "r,K"
        assert summary["rhat"]
        band = np.loadtxt(out / "predictive_band.csv", delimiter=",", skiprows=1)
        assert np.all(band[:, 1] <= band[:, 2]) and np.all(band[:, 2] <= band[:, 3])

    def test_homoscedastic_mode_samples_sigma(self, tmp_path):
        run_pipeline(self._config(tmp_path, mode="homoscedastic"))
        header = (tmp_path / "homoscedastic" / "posterior.csv").read_text().splitlines()[0]
        assert header == "r,K,sigma"

    def test_true_sigma_mode(self, tmp_path):
        run_pipeline(self._config(tmp_path, mode="true-sigma"))
        header = (tmp_path / "true-sigma" / "posterior.csv").read_text().splitlines()[0]
        assert header == "r,K,sigma"

    def test_reproducible_byte_identical(self, tmp_path):
        cfg_a = self._config(tmp_path / "a")
        cfg_b = self._config(tmp_path / "b")
        run_pipeline(cfg_a)
        run_pipeline(cfg_b)
        for name in ("dataset.csv", "posterior.csv", "sigma_estimates.csv", "predictive_band.csv"):
            a = (tmp_path / "a" / "hetgp" / name).read_bytes()
            b = (tmp_path / "b" / "hetgp" / name).read_bytes()
            assert a == b, name

    def test_missing_dataset_fails_with_stage(self, tmp_path):
        cfg = build_config(
            {
                "dataset.path": str(tmp_path / "nope.csv"),
                "out": str(tmp_path / "fail"),
                **FAST_MCMC,
            }
        )
        with pytest.raises(PipelineError) as err:
            run_pipeline(cfg)
        assert err.value.stage == "dataset"
        manifest = (tmp_path / "fail" / "manifest.txt").read_text()
        assert "status=failed:dataset" in manifest

    def test_coral_summary_workflow(self, tmp_path):
        # summary CSV -> truncated replicate reconstruction -> richards fit
        from hetode.datasets import bundled_path

        cfg = build_config(
            {
                "model": "richards",
                "mode": "hetgp",
                "dataset.path": str(bundled_path("coral_cover_summary.csv")),
                "out": str(tmp_path / "coral"),
                "seed": "3",
                "hetgp.max_iterations": "3",
                **FAST_MCMC,
            }
        )
        run_pipeline(cfg)
        out = tmp_path / "coral"
        header = (out / "posterior.csv").read_text().splitlines()[0]
        assert header == "alpha,K,gamma"
        # replicated dataset: 5 draws per survey time, all positive
        lines = (out / "dataset.csv").read_text().strip().splitlines()
        assert lines[0] == "t,y,rep"
        values = np.array([float(ln.split(",")[1]) for ln in lines[1:]])
        assert np.all(values > 0.0)
        manifest = (out / "manifest.txt").read_text()
        assert "fixed.C0=" in manifest
        for name in ("alpha", "K", "gamma"):
            kde = np.loadtxt(out / f"kde_{name}.csv", delimiter=",", skiprows=1)
            assert np.all(kde[:, 1] >= 0.0)

    def test_csv_dataset_ingestion(self, tmp_path):
        bundle = generate_logistic_dataset(50, seed=4)
        data_path = write_dataset(bundle, tmp_path / "obs.csv")
        cfg = build_config(
            {
                "dataset.path": str(data_path),
                "mode": "homoscedastic",
                "out": str(tmp_path / "run"),
                **FAST_MCMC,
            }
        )
        summary = run_pipeline(cfg)
        back = load_dataset(tmp_path / "run" / "dataset.csv")
        assert np.array_equal(back.observations.values, bundle.observations.values)
        assert summary["acceptance"]


class TestStudy:
    def test_minimal_study_emits_rows(self, tmp_path):
        path = run_simulation_study(
            sizes=[20],
            replicates=1,
            mcmc=_fast_settings(),
            seed=5,
            out_dir=tmp_path,
            mmd_max_draws=300,
        )
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "size,replicate,method,mmd"
        assert len(lines) == 3
        for ln in lines[1:]:
            size, rep, method, mmd = ln.split(",")
            assert method in ("homoscedastic", "hetgp")
            assert float(mmd) >= 0.0
        assert (tmp_path / "study_manifest.txt").exists()

    def test_rejects_zero_replicates(self, tmp_path):
        with pytest.raises(ValueError):
            run_simulation_study([20], 0, _fast_settings(), 0, tmp_path)

    def test_cell_failure_recorded_and_study_continues(self, tmp_path):
        # size 3 cannot support the coupled variance fit; the hetgp cell
        # fails, the row stays (nan), the other method still gets scored
        path = run_simulation_study(
            sizes=[3],
            replicates=1,
            mcmc=_fast_settings(),
            seed=1,
            out_dir=tmp_path,
            mmd_max_draws=200,
        )
        rows = {ln.split(",")[2]: ln.split(",")[3] for ln in path.read_text().strip().splitlines()[1:]}
        assert rows["hetgp"] == "nan"
        assert np.isfinite(float(rows["homoscedastic"]))
        manifest = (tmp_path / "study_manifest.txt").read_text()
        assert "status=partial:1" in manifest
        assert "mode=hetgp" in manifest

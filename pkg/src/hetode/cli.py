"""Command-line surface: generate, fit-noise, infer, study, predict, r0.

Every subcommand reads an optional flat key=value config file; flags
override file values. Exit code 0 on success, 1 with a stage-tagged
message otherwise.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bayes import Chain, r0_posterior
from .datasets import load_dataset, write_dataset
from .hetgp import check_homoscedastic, fit_hetgp
from .metrics import kde_1d, kde_grid, predictive_band
from .ode import SIR_DEFAULT_DELTA, OdeModel, solve
from .pipeline import (
    McmcSettings,
    PipelineError,
    RunConfig,
    build_config,
    derive_seed,
    load_bundle,
    read_config_file,
    run_pipeline,
    run_simulation_study,
    write_manifest,
    write_table,
)


def _common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="flat key=value configuration file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument(
        "--mode", choices=["homoscedastic", "hetgp", "true-sigma"], help="likelihood mode"
    )
    p.add_argument("--model", choices=["logistic", "richards", "sir"], help="forward model")
    p.add_argument("--data", type=Path, help="dataset CSV (t,y | t,mean,sd | t,y,rep)")
    p.add_argument("--n", type=int, help="generator size (logistic synthetic data)")


def _config_from_args(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    overrides = {
        "seed": args.seed,
        "out": str(args.out) if args.out else None,
        "mode": getattr(args, "mode", None),
        "model": getattr(args, "model", None),
        "dataset.path": str(args.data) if getattr(args, "data", None) else None,
        "dataset.n": getattr(args, "n", None),
    }
    return build_config(values, overrides)


def _cmd_generate(args) -> int:
    config = _config_from_args(args)
    bundle = load_bundle(config)
    out = Path(config.out_dir)
    path = write_dataset(bundle, out / "dataset.csv")
    if bundle.truth:
        truth = {f"theta.{k}": v for k, v in bundle.truth["theta"].items()}
        truth["sigma"] = bundle.truth["sigma"]
        truth["sigma_time_scale"] = bundle.truth["sigma_time_scale"]
        write_manifest(out / "truth.txt", truth)
    print(f"wrote {path}")
    return 0


def _cmd_fit_noise(args) -> int:
    config = _config_from_args(args)
    bundle = load_bundle(config)
    data = bundle.observations
    het = fit_hetgp(data, config.hetgp)
    out = Path(config.out_dir)
    path = write_table(out / "sigma_estimates.csv", ["t", "sigma2"], [data.times, het.sigma2_hat])
    info = {
        "iterations": het.iterations,
        "converged": het.converged,
        "marginal_loglik": het.marginal_loglik,
    }
    if config.hetgp.check_hom:
        choice = check_homoscedastic(data, het)
        info["checkhom.selected"] = choice.selected
        info["checkhom.het_loglik"] = choice.het_loglik
        info["checkhom.hom_loglik"] = choice.hom_loglik
    write_manifest(out / "noise_fit.txt", info)
    print(f"wrote {path}")
    return 0


def _cmd_infer(args) -> int:
    config = _config_from_args(args)
    summary = run_pipeline(config)
    for name, rhat in summary.get("rhat", {}).items():
        print(f"rhat.{name}={rhat:.4f}")
    print(f"artifacts in {summary['out_dir']}")
    return 0


def _cmd_study(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    mcmc_kw = {
        k.split(".", 1)[1]: int(v) if "." not in str(v) else float(v)
        for k, v in values.items()
        if k.startswith("mcmc.")
    }
    if args.iterations is not None:
        mcmc_kw["iterations"] = args.iterations
    if args.burn_in is not None:
        mcmc_kw["burn_in"] = args.burn_in
    mcmc_kw.setdefault("iterations", 5000)
    mcmc_kw.setdefault("burn_in", 500)
    mcmc = McmcSettings(**mcmc_kw)
    sizes = [int(s) for s in args.sizes.split(",")]
    seed = args.seed if args.seed is not None else int(values.get("seed", 0))
    out = args.out or Path(values.get("out", "runs/study"))
    path = run_simulation_study(
        sizes,
        args.replicates,
        mcmc,
        seed,
        out,
        mmd_max_draws=args.mmd_max_draws,
        standardize=not args.no_standardize,
    )
    print(f"wrote {path}")
    return 0


def _read_posterior(path: Path) -> tuple[list[str], np.ndarray]:
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    names = lines[0].split(",")
    draws = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return names, draws


def _cmd_predict(args) -> int:
    run_dir = Path(args.run)
    names, draws = _read_posterior(run_dir / "posterior.csv")
    manifest = dict(
        ln.split("=", 1) for ln in (run_dir / "manifest.txt").read_text().strip().splitlines()
    )
    model = manifest["model"]
    mode = manifest["mode"]
    sir_step = float(manifest.get("sir_step", 0.01))
    fixed = {
        k.split(".", 1)[1]: float(v) for k, v in manifest.items() if k.startswith("fixed.")
    }
    if model == "sir":
        fixed.setdefault("delta", SIR_DEFAULT_DELTA)
    dataset = load_dataset(run_dir / "dataset.csv")
    times = np.linspace(
        dataset.observations.times[0], dataset.observations.times[-1], args.points
    )

    chain = Chain(
        draws=draws,
        draws_transformed=draws,
        accepted=len(draws),
        total=len(draws),
        burn_in=0,
        seed=0,
        param_names=tuple(names),
    )

    def theta_of(th):
        merged = {**fixed, **{k: v for k, v in th.items() if k != "sigma"}}
        merged.pop("sigma", None)
        return merged

    sim = lambda th, t: solve(OdeModel(model, theta_of(th), step=sir_step), t).observed
    if mode == "hetgp":
        sig = _read_posterior(run_dir / "sigma_estimates.csv")
        sig_t, sig_v = np.asarray(sig[1][:, 0]), np.asarray(sig[1][:, 1])
        sigma2_of = lambda th, t: np.interp(t, sig_t, sig_v)
    elif mode == "homoscedastic":
        sigma2_of = lambda th, t: np.full(t.shape, th["sigma"] ** 2)
    else:
        scale = float(manifest.get("fixed.sigma", 2.3))
        sigma2_of = lambda th, t: th.get("sigma", scale) ** 2 * t / 100.0
    band = predictive_band(
        chain, sim, sigma2_of, times, level=args.level,
        seed=derive_seed(int(manifest.get("seed", 0)), 904), max_draws=2000,
    )
    out = Path(args.out) if args.out else run_dir
    path = write_table(
        out / "predictive_band.csv",
        ["t", "lower", "median", "upper"],
        [band.times, band.lower, band.median, band.upper],
    )
    print(f"wrote {path}")
    return 0


def _cmd_r0(args) -> int:
    names, draws = _read_posterior(Path(args.draws))
    chain = Chain(
        draws=draws,
        draws_transformed=draws,
        accepted=len(draws),
        total=len(draws),
        burn_in=0,
        seed=0,
        param_names=tuple(names),
    )
    r0 = r0_posterior(chain, delta=args.delta)
    out = Path(args.out) if args.out else Path(args.draws).parent
    path = write_table(out / "r0_draws.csv", ["r0"], [r0])
    grid = kde_grid(r0)
    write_table(out / "kde_r0.csv", ["r0", "density"], [grid, kde_1d(r0, grid)])
    print(f"wrote {path}; posterior median R0 = {np.median(r0):.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetode",
        description="Two-step Bayesian ODE inference under time-varying observation noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a synthetic logistic dataset CSV")
    _common_flags(p)
    p.set_defaults(fn=_cmd_generate)

    p = sub.add_parser("fit-noise", help="step 1 only: fit the observation-variance field")
    _common_flags(p)
    p.set_defaults(fn=_cmd_fit_noise)

    p = sub.add_parser("infer", help="full two-step run, artifacts to --out")
    _common_flags(p)
    p.set_defaults(fn=_cmd_infer)

    p = sub.add_parser("study", help="simulation study comparing likelihood modes by MMD")
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--sizes", default="20,100,500", help="comma-separated dataset sizes")
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--iterations", type=int, help="MCMC iterations per cell")
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--mmd-max-draws", type=int, default=2000, dest="mmd_max_draws")
    p.add_argument("--no-standardize", action="store_true")
    p.set_defaults(fn=_cmd_study)

    p = sub.add_parser("predict", help="predictive band from a finished run directory")
    p.add_argument("--run", required=True, help="directory written by infer")
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("r0", help="basic reproduction number draws from a posterior CSV")
    p.add_argument("--draws", required=True, help="posterior CSV with beta,s0,i0 columns")
    p.add_argument("--delta", type=float, default=SIR_DEFAULT_DELTA)
    p.add_argument("--out", type=Path)
    p.set_defaults(fn=_cmd_r0)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PipelineError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error [config] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

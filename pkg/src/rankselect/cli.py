"""Command-line front end.

Subcommands: ``fit``, ``simulate``, ``path``, ``tightness`` and ``bounds``.
Exit codes: 0 success, 1 a bound check failed, 2 usage or input error,
3 numerical failure (any report is still written).
"""

import argparse
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import bounds
from .io import InputError, read_json, read_matrix, write_json, write_matrix, write_table
from .linalg import NumericalError, design_summary, singular_values
from .nnp import SolverOptions, nnp_calibrated, nnp_fit, nnp_objective, tau_theoretical
from .rsc import (
    DegenerateDesignError,
    adaptive_mu,
    adaptive_penalty_mu,
    noise_variance,
    rsc_fit,
)
from .simulate import (
    ESTIMATORS,
    ExperimentConfig,
    RngSpec,
    draw_instance,
    draw_training,
    expand_scenarios,
    fit_paths,
    run_experiment,
    tightness_study,
)

log = logging.getLogger("rankselect")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3

SUMMARY_COLUMNS = ["experiment", "m", "p", "n", "r", "q", "rho", "b", "estimator", "mse_xa",
                   "mse_a", "rank_median", "rrp", "snr", "replications", "failed"]
DETAIL_COLUMNS = ["experiment", "rho", "b", "rep", "estimator", "rank", "mse_xa", "mse_a",
                  "tuning", "converged", "nonconverged_grid_fits", "snr"]


class UsageError(Exception):
    pass


def _resolve_seed(seed):
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (2**63))
    print(f"seed: {seed}")
    return seed


def _solver_opts(args):
    return SolverOptions(max_iterations=args.max_iterations, kkt_tol_factor=args.kkt_tol)


def _load_config(name_or_path):
    """Config dict from a path, or from the bundled ``exp1``/``exp2`` by name."""
    path = Path(name_or_path)
    if not path.exists() and name_or_path in ("exp1", "exp2"):
        text = resources.files("rankselect.configs").joinpath(f"{name_or_path}.json").read_text()
        return json.loads(text)
    spec = read_json(path)
    if not isinstance(spec, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return spec


def _configs(args, spec):
    spec = dict(spec)
    overrides = {"replications": args.reps, "seed": args.seed, "grid_points": args.grid_points,
                 "validation_multiplier": args.validation_multiplier, "trim": args.trim}
    spec.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return expand_scenarios(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid experiment config: {exc}") from None


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- fit ---------------------------------------------------------------------------------


def cmd_fit(args):
    x = read_matrix(args.x)
    y = read_matrix(args.y)
    if x.shape[0] != y.shape[0]:
        raise InputError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    out = _out_dir(args.out)
    design = design_summary(x)
    m, n = y.shape
    q = design.rank_q
    report = {"method": args.method, "m": m, "p": x.shape[1], "n": n, "design_rank": q}
    status = EXIT_OK

    if args.method in ("rsc", "rsc-adaptive"):
        if args.method == "rsc":
            if args.mu is None or not args.mu > 0:
                raise UsageError("--method rsc needs a positive --mu")
            mu = args.mu
        else:
            s2 = noise_variance(design, y)
            report["s2"] = s2
            if args.penalty == "theory":
                mu = adaptive_penalty_mu(s2, n, q, args.theta, args.xi, args.delta)
            else:
                mu = adaptive_mu(s2, n, q, args.constant)
        report["mu"] = mu
        if mu > 0:
            fit = rsc_fit(x, y, mu, design=design)
            coef, rank, objective, spectrum = (fit.coefficients, fit.selected_rank, fit.objective,
                                               fit.eigenvalues)
        else:
            log.warning("penalty is zero; returning least squares")
            coef = design.pinv_gram @ (x.T @ y)
            rank = int(np.sum(singular_values(x @ coef) > 0))
            objective = float(np.sum((y - x @ coef) ** 2))
            spectrum = singular_values(design.projector @ y) ** 2
        report.update(selected_rank=rank, objective=objective, eigenvalues=spectrum)
    else:
        tau = args.tau
        if tau is None:
            sigma = math.sqrt(noise_variance(design, y))
            tau = tau_theoretical(sigma, design.top_singular_value, n, q, args.theta)
            report["tau_rule"] = "(1+theta) d1(X) S (sqrt(n)+sqrt(q))"
        if tau < 0:
            raise UsageError("--tau must be non-negative")
        if tau == 0:
            log.warning("tau = 0 is degenerate; proceeding as least squares")
        report["tau"] = tau
        fit = nnp_fit(x, y, tau, _solver_opts(args), design=design)
        report.update(iterations=fit.iterations, converged=fit.converged,
                      kkt_residual=fit.kkt_residual, nnp_rank=fit.rank)
        if args.method == "nnp":
            coef, rank, objective = fit.coefficients, fit.rank, fit.objective
        else:
            if tau == 0:
                raise UsageError("--method nnp-calibrated needs tau > 0")
            rk = nnp_calibrated(x, y, tau, design=design, nnp=fit)
            coef, rank = rk.b_k, rk.k
            objective = nnp_objective(x, y, coef, tau)
        report.update(selected_rank=rank, objective=objective,
                      singular_values=singular_values(coef))
        if not fit.converged:
            status = EXIT_NUMERICAL
    write_matrix(out / "coefficients.csv", coef)
    write_json(out / "report.json", report)
    print(f"{args.method}: rank {report['selected_rank']}, wrote {out / 'coefficients.csv'}")
    return status


# -- simulate ----------------------------------------------------------------------------


def cmd_simulate(args):
    configs = _configs(args, _load_config(args.config))
    _resolve_seed(configs[0].seed)
    estimators = tuple(args.estimators.split(",")) if args.estimators else ESTIMATORS
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise UsageError(f"unknown estimators {sorted(unknown)}")
    rows, details = [], []
    for cfg in configs:
        res, det = run_experiment(cfg, estimators, _solver_opts(args), n_jobs=args.jobs,
                                  return_details=True)
        rows.extend(res)
        for d in det:
            details.append({"experiment": cfg.experiment, "rho": cfg.rho, "b": cfg.b, **d})
        for row in res:
            print(f"{row.scenario:24s} {row.estimator:9s} MSE(XA) {row.mse_xa:8.3f} "
                  f"MSE(A) {row.mse_a:8.4f} RE {row.rank_median:5.1f} RRP {row.rrp:5.1f}%")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_table(out, [r.as_record() for r in rows], SUMMARY_COLUMNS)
    if args.details:
        write_table(args.details, details, DETAIL_COLUMNS)
    print(f"wrote {out}")
    return EXIT_NUMERICAL if any(r.failed for r in rows) else EXIT_OK


# -- path --------------------------------------------------------------------------------


def cmd_path(args):
    opts = _solver_opts(args)
    grid_points = args.grid_points or 50
    if args.x or args.y:
        if not (args.x and args.y):
            raise UsageError("--x and --y go together")
        x, y = read_matrix(args.x), read_matrix(args.y)
        if x.shape[0] != y.shape[0]:
            raise InputError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        records = fit_paths(x, y, grid_points=grid_points, opts=opts)
    else:
        cfg = _configs(args, _load_config(args.config or "exp1"))
        if len(cfg) > 1 and not args.scenario:
            raise UsageError("config has several scenarios; pick one with --scenario b,rho")
        if args.scenario:
            b, rho = (float(v) for v in args.scenario.split(","))
            cfg = [c for c in cfg if math.isclose(c.b, b) and math.isclose(c.rho, rho)]
            if not cfg:
                raise UsageError(f"no scenario with b={b:g}, rho={rho:g} in config")
        cfg = cfg[0]
        seed = _resolve_seed(cfg.seed)
        inst = draw_instance(cfg, RngSpec(seed, 0).generator())
        records = fit_paths(inst.x, inst.y, inst.a, (inst.x_val, inst.y_val), grid_points, opts)
    write_table(args.out, records, ["method", "tuning", "rank", "calibrated_rank", "mse_xa",
                                    "val_mse", "converged"])
    print(f"wrote {args.out}")
    return EXIT_OK if all(r["converged"] for r in records) else EXIT_NUMERICAL


# -- tightness ---------------------------------------------------------------------------


def cmd_tightness(args):
    seed = _resolve_seed(args.seed)
    rng = RngSpec(seed, 0).generator()
    points = tightness_study(args.runs, rng=rng, sigma=args.sigma)
    records = []
    for pt in points:
        rec = {"mu1": pt.mu1, "mu_u": pt.mu_u, "snr": pt.snr}
        rec.update(pt.params)
        records.append(rec)
    write_table(args.out, records, ["mu1", "mu_u", "snr", "experiment", "m", "p", "n", "r",
                                    "rho", "b"])
    # sandwich of the misselection probability on a fixed exp1 instance
    cfg = ExperimentConfig("exp1", 100, 25, 25, 10, 0.1, 0.3, sigma=max(args.sigma, 1e-12))
    x, a, _ = draw_training(cfg, RngSpec(seed, 1).generator())
    reports = []
    for mu in (adaptive_mu(cfg.sigma**2, cfg.n, cfg.p), singular_values(x @ a)[cfg.r - 1] ** 2):
        reports += bounds.mc_tightness_probabilities(x, a, mu, trials=args.trials,
                                                     rng=RngSpec(seed, 2).generator(),
                                                     sigma=cfg.sigma)
    report_path = Path(args.out).with_suffix(".json")
    write_json(report_path, [r.to_dict() for r in reports])
    for r in reports:
        print(r.line())
    print(f"wrote {args.out} and {report_path}")
    return EXIT_OK


# -- bounds ------------------------------------------------------------------------------

DEFAULT_SCENARIO = {"experiment": "exp1", "m": 100, "p": 25, "n": 25, "r": 10, "rho": 0.1,
                    "b": 0.3}
CONSISTENCY_SCENARIO = {"experiment": "exp2", "m": 20, "p": 100, "n": 25, "q": 10, "r": 5,
                        "rho": 0.5, "b": 0.3}


def _bound_config(args, default):
    spec = _load_config(args.config) if args.config else dict(default)
    cfgs = _configs(args, spec)
    return cfgs[0]


def _trials(args, default):
    return args.reps if args.reps is not None else default


def cmd_bounds(args):
    seed = _resolve_seed(args.seed)
    checks = list(bounds.CHECKS) if args.check == "all" else [args.check]
    reports = []
    for i, check in enumerate(checks):
        rng = RngSpec(seed, i).generator()
        if check == "lemma3":
            reports += bounds.mc_projected_noise(100, 25, 25, trials=_trials(args, 1000), rng=rng)
        elif check == "prop15":
            reports += bounds.mc_subgaussian_projected_noise(
                50, 10, 10, bounds.NoiseSpec.subgaussian(2.0), trials=_trials(args, 1000), rng=rng)
        elif check == "cor4":
            cfg = _bound_config(args, CONSISTENCY_SCENARIO)
            reports += bounds.mc_consistency(cfg, trials=_trials(args, 100), rng=rng,
                                             theta=args.theta, delta=args.delta)
        elif check in ("thm5", "thm7"):
            cfg = _bound_config(args, DEFAULT_SCENARIO)
            reports += bounds.mc_oracle_rsc(cfg, trials=_trials(args, 200), rng=rng,
                                            theta=args.theta, xi=args.xi)
        elif check == "thm9":
            cfg = _bound_config(args, DEFAULT_SCENARIO)
            reports += bounds.mc_adaptive_penalty(cfg, trials=_trials(args, 200), rng=rng,
                                                  theta=args.theta)
        elif check == "thm10":
            cfg = _bound_config(args, DEFAULT_SCENARIO)
            reports += bounds.mc_oracle_nnp(cfg, trials=_trials(args, 100), rng=rng,
                                            theta=args.theta, opts=_solver_opts(args))
        elif check == "tails":
            reports += bounds.mc_tail_lemmas(max(_trials(args, 10000), 10000), rng=rng)
    for r in reports:
        print(r.line())
    if args.out:
        write_json(args.out, [r.to_dict() for r in reports])
        print(f"wrote {args.out}")
    return EXIT_CHECK_FAILED if any(r.passed is False for r in reports) else EXIT_OK


# -- parser ------------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="rankselect", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid=True):
        p.add_argument("--seed", type=int, help="RNG seed (printed when resolved)")
        p.add_argument("--reps", type=int, help="replications or Monte Carlo trials")
        p.add_argument("--theta", type=float, default=1.0)
        p.add_argument("--xi", type=float, default=1.0)
        p.add_argument("--delta", type=float, default=0.5)
        p.add_argument("--constant", type=float, default=2.0)
        p.add_argument("--max-iterations", type=int, default=5000)
        p.add_argument("--kkt-tol", type=float, default=1e-4)
        if grid:
            p.add_argument("--grid-points", type=int)
            p.add_argument("--validation-multiplier", type=int)
            p.add_argument("--trim", type=float)

    p = sub.add_parser("fit", help="fit an estimator to CSV matrices")
    p.add_argument("--x", required=True, help="design CSV (m x p)")
    p.add_argument("--y", required=True, help="response CSV (m x n)")
    p.add_argument("--method", required=True,
                   choices=["rsc", "rsc-adaptive", "nnp", "nnp-calibrated"])
    p.add_argument("--mu", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--penalty", choices=["constant", "theory"], default="constant",
                   help="rsc-adaptive rule: constant*S^2*(n+q), or the theta/xi/delta form")
    p.add_argument("--out", required=True, help="output directory")
    common(p, grid=False)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run a simulation grid and write a summary CSV")
    p.add_argument("config", help="JSON config path, or 'exp1' / 'exp2' for the bundled ones")
    p.add_argument("--out", required=True, help="summary CSV")
    p.add_argument("--details", help="optional per-replication CSV")
    p.add_argument("--estimators", help=f"comma separated subset of {','.join(ESTIMATORS)}")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("path", help="RSC and NNP solution paths as CSV")
    p.add_argument("--config", help="JSON config or bundled name (default exp1)")
    p.add_argument("--scenario", help="'b,rho' when the config lists several")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("tightness", help="(mu1, mu_u) pairs and misselection sandwich")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--out", required=True, help="CSV; a JSON report is written beside it")
    common(p, grid=False)
    p.set_defaults(func=cmd_tightness)

    p = sub.add_parser("bounds", help="Monte Carlo checks of the probabilistic bounds")
    p.add_argument("--check", default="all", choices=["all", "thm5", *bounds.CHECKS])
    p.add_argument("--config", help="scenario JSON for the scenario-based checks")
    p.add_argument("--out", help="JSON report")
    common(p)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, UsageError, DegenerateDesignError, ValueError) as exc:
        # remaining ValueErrors come from parameter validation
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

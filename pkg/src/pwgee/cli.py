"""Command line interface: fit, cv, simulate, bench and metrics subcommands.

Math libraries are pinned to one thread before they load so that results
and report files are identical no matter how many worker processes run.
"""

import os

for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
):
    os.environ.setdefault(_var, "1")

import argparse
import json
import sys


def _add_data_options(p):
    p.add_argument("--data", required=True, help="long-format CSV file")
    p.add_argument("--response", default="y", help="response column name")
    p.add_argument("--cluster", default="cluster", help="cluster id column name")
    p.add_argument(
        "--covariates",
        default=None,
        help="comma-separated covariate columns (default: all remaining)",
    )
    p.add_argument(
        "--add-intercept",
        action="store_true",
        help="prepend an all-ones column, exempt from penalization",
    )
    p.add_argument(
        "--no-standardize",
        dest="standardize",
        action="store_false",
        help="skip centering/scaling of the covariates",
    )
    p.set_defaults(standardize=True)


def _add_model_options(p):
    p.add_argument(
        "--family", choices=("gaussian", "poisson", "binomial"), default="gaussian"
    )
    p.add_argument("--corr", choices=("indep", "exch", "ar1"), default="indep")
    p.add_argument(
        "--rho", type=float, default=None, help="pin the correlation parameter"
    )
    p.add_argument("--weighting", choices=("on", "off"), default="on")
    p.add_argument("--penalty", choices=("scad", "mcp", "lasso"), default="scad")
    p.add_argument("--scad-a", type=float, default=3.7)
    p.add_argument("--mcp-gamma", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-15)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--zero-threshold", type=float, default=1e-3)
    p.add_argument(
        "--penalty-exempt",
        default=None,
        help="comma-separated covariate indices left unpenalized",
    )


def _load_prepared(args):
    """Load, optionally standardize, optionally prepend an intercept."""
    import numpy as np

    from .dataset import ClusterData, LongitudinalDataset, load_long_csv
    from .dataset import standardize_covariates

    covs = args.covariates.split(",") if args.covariates else "all-remaining"
    data = load_long_csv(args.data, args.response, args.cluster, covs)
    means = sds = None
    if args.standardize:
        data, means, sds = standardize_covariates(data)
    exempt = []
    if args.penalty_exempt:
        exempt = [int(j) for j in args.penalty_exempt.split(",")]
    if args.add_intercept:
        clusters = tuple(
            ClusterData(c.cluster_id, c.y, np.column_stack([np.ones(c.m), c.X]))
            for c in data.clusters
        )
        names = ("_intercept",) + (data.covariate_names or ())
        data = LongitudinalDataset(clusters, names)
        exempt = [0] + [j + 1 for j in exempt]
    return data, means, sds, tuple(exempt)


def _model_pieces(args, exempt):
    from .correlation import WorkingCorrelationSpec
    from .family import FamilySpec
    from .penalty import PenaltySpec
    from .solver import FitConfig

    family = FamilySpec(args.family)
    if args.corr == "indep":
        corr = WorkingCorrelationSpec("independence")
    else:
        corr = WorkingCorrelationSpec(args.corr, args.rho)
    penalty = PenaltySpec(
        args.penalty,
        lam=getattr(args, "lam", 0.0),
        a=args.scad_a,
        gamma=args.mcp_gamma,
    )
    config = FitConfig(
        max_iter=args.max_iter,
        tol=args.tol,
        zero_threshold=args.zero_threshold,
        penalty_exempt=exempt,
    )
    return family, corr, penalty, config


def _config_echo(args):
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _fit_to_json(fit, data, args, means, sds, exempt):
    import numpy as np

    beta = fit.beta_hat
    out = {
        "label": args.label,
        "p": int(data.p),
        "n": int(data.n),
        "beta": {str(j): float(beta[j]) for j in fit.active_set},
        "active_set": [int(j) for j in fit.active_set],
        "iterations": fit.iterations,
        "converged": fit.converged,
        "final_score_norm": fit.final_score_norm,
        "rho_hat": fit.rho_hat,
        "lambda": fit.lam,
        "diagnostics": {
            "n_variance_floor": fit.n_variance_floor,
            "n_step_halvings": fit.n_step_halvings,
        },
        "config": _config_echo(args),
    }
    if means is not None:
        out["standardization"] = {
            "means": [float(v) for v in means],
            "sds": [float(v) for v in sds],
        }
        if args.add_intercept:
            # eta = b0 + sum_j b_j (x_j - m_j)/s_j back on the raw scale
            coef = beta[1:] / sds
            intercept = beta[0] - float(np.sum(beta[1:] * means / sds))
            orig = {"_intercept": float(intercept)}
            names = data.covariate_names[1:]
            for name, value in zip(names, coef):
                if value != 0.0:
                    orig[name] = float(value)
            out["beta_original_scale"] = orig
    return out


def _cmd_fit(args):
    data, means, sds, exempt = _load_prepared(args)
    args.lam = args.lambda_
    family, corr, penalty, config = _model_pieces(args, exempt)
    from .solver import fit_pwgee

    fit = fit_pwgee(
        data,
        family,
        corr,
        penalty,
        config=config,
        weighting=args.weighting == "on",
        seed=args.seed,
    )
    payload = _fit_to_json(fit, data, args, means, sds, exempt)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out}  (active set size {len(fit.active_set)})")
    return 0


def _cmd_cv(args):
    data, _, _, exempt = _load_prepared(args)
    family, corr, penalty, config = _model_pieces(args, exempt)
    from .tuning import cv_select

    grid = None
    if args.lambdas:
        grid = [float(v) for v in args.lambdas.split(",")]
    res = cv_select(
        data,
        family,
        corr,
        penalty,
        grid=grid,
        config=config,
        seed=args.seed,
        weighting=args.weighting == "on",
    )
    os.makedirs(args.out_dir, exist_ok=True)
    curve_path = os.path.join(args.out_dir, "cv_curve.csv")
    with open(curve_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("lambda,fold,loss\n")
        for lam, fold, loss in res.curve:
            fh.write(f"{lam:.17g},{fold},{loss:.17g}\n")
    selected_path = os.path.join(args.out_dir, "selected.json")
    with open(selected_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "lambda_star": res.lambda_star,
                "lambdas": [float(v) for v in res.lambdas],
                "total_loss": [float(v) for v in res.total_loss],
                "config": _config_echo(args),
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    from .plots import save_cv_curve_figure

    figure_path = os.path.join(args.out_dir, "cv_curve.png")
    save_cv_curve_figure(res.curve, res.lambda_star, figure_path)
    print(f"selected lambda {res.lambda_star:.6g}; wrote {args.out_dir}")
    return 0


def _cmd_simulate(args):
    from dataclasses import replace

    from .dataset import write_long_csv
    from .simgen import ScenarioSpec, gen_dataset, replicate_seed

    spec = ScenarioSpec(example=args.example, n=args.n, p=args.p, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for rep in range(args.reps):
        data = gen_dataset(replace(spec, seed=replicate_seed(args.seed, rep)))
        write_long_csv(data, os.path.join(args.out, f"rep_{rep:03d}.csv"))
    with open(os.path.join(args.out, "scenario.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "example": spec.example,
                "n": spec.n,
                "p": spec.p,
                "reps": args.reps,
                "master_seed": args.seed,
                "family": spec.family_kind,
                "beta_star": [float(v) for v in spec.beta_star],
                "true_support": list(spec.true_support),
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    print(f"wrote {args.reps} replicate CSVs to {args.out}")
    return 0


def _cmd_bench(args):
    from .bench import load_config, run_experiment, write_outputs, format_text_table

    grid = load_config(args.config)
    result = run_experiment(grid, jobs=args.jobs)
    paths = write_outputs(result, args.out_dir, make_figure=not args.no_figure)
    sys.stdout.write(format_text_table(result.summary, result.sd_degenerate))
    print(f"wrote {', '.join(sorted(paths))} in {args.out_dir}")
    return 0


def _cmd_metrics(args):
    import numpy as np

    from .bench import format_text_table, write_summary_csv
    from .metrics import SelectionTruth, mse, selection_metrics

    with open(args.truth, "r", encoding="utf-8") as fh:
        truth_spec = json.load(fh)
    truth = SelectionTruth(np.asarray(truth_spec["beta_star"], dtype=float))

    groups = {}
    for path in args.results:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        beta = np.zeros(int(payload["p"]))
        for j, v in payload["beta"].items():
            beta[int(j)] = float(v)
        groups.setdefault(payload.get("label") or "fit", []).append(beta)

    summary = []
    for label in sorted(groups):
        betas = groups[label]
        tps, fps, crs = zip(*(selection_metrics(b, truth) for b in betas))
        row = {"method": label, "n_reps": len(betas), "n_failed": 0}
        for key, vals in (("tp", tps), ("fp", fps), ("cr", crs)):
            arr = np.asarray(vals, dtype=float)
            row[f"{key}_mean"] = float(arr.mean())
            row[f"{key}_sd"] = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        errs = [float(np.sum((b - truth.beta_star) ** 2)) for b in betas]
        row["mse_mean"] = mse(betas, truth.beta_star)
        row["mse_sd"] = (
            float(np.std(errs, ddof=1)) if len(errs) > 1 else 0.0
        )
        summary.append(row)
    sys.stdout.write(format_text_table(summary, sd_degenerate=False))
    if args.out:
        write_summary_csv(summary, args.out)
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwgee",
        description=(
            "Penalized weighted generalized estimating equations for "
            "clustered data with informative cluster size"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one model at a fixed lambda")
    _add_data_options(p_fit)
    _add_model_options(p_fit)
    p_fit.add_argument("--lambda", dest="lambda_", type=float, required=True)
    p_fit.add_argument("--label", default=None, help="label stored in the output")
    p_fit.add_argument("--out", required=True, help="result JSON path")
    p_fit.set_defaults(func=_cmd_fit)

    p_cv = sub.add_parser("cv", help="select lambda by fourfold cross-validation")
    _add_data_options(p_cv)
    _add_model_options(p_cv)
    p_cv.add_argument(
        "--lambdas", default=None, help="comma-separated grid (default: automatic)"
    )
    p_cv.add_argument("--out-dir", required=True)
    p_cv.set_defaults(func=_cmd_cv)

    p_sim = sub.add_parser("simulate", help="write benchmark scenario datasets")
    p_sim.add_argument("--example", type=int, required=True, choices=(1, 2, 3, 4))
    p_sim.add_argument("--n", type=int, default=200)
    p_sim.add_argument("--p", type=int, default=500)
    p_sim.add_argument("--reps", type=int, default=100)
    p_sim.add_argument("--seed", type=int, default=42)
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=_cmd_simulate)

    p_bench = sub.add_parser("bench", help="run a replicated method-grid benchmark")
    p_bench.add_argument("--config", required=True, help="grid config JSON")
    p_bench.add_argument("--out-dir", required=True)
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.add_argument("--no-figure", action="store_true")
    p_bench.set_defaults(func=_cmd_bench)

    p_met = sub.add_parser("metrics", help="summarize fit-result JSON files")
    p_met.add_argument("--results", nargs="+", required=True)
    p_met.add_argument("--truth", required=True, help="JSON with beta_star")
    p_met.add_argument("--out", default=None, help="summary CSV path")
    p_met.set_defaults(func=_cmd_metrics)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

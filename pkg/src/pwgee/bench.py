"""Replicated benchmark runner: scenario x method grid, aggregated tables.

Every replicate generates one dataset and runs every method on it (a
paired design, asserted by dataset hash), so method comparisons share the
sampling noise.  Penalized methods select lambda by fourfold
cross-validation per replicate; oracle methods fit the true support
without a penalty.  Failed fits are excluded from the aggregates and
counted, never silently dropped.

Replicates are independent jobs with seeds derived from (master seed,
replicate index); results are reduced in replicate order, so the output
is identical no matter how many workers ran.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .correlation import WorkingCorrelationSpec, canonical_kind
from .family import FamilySpec
from .metrics import SelectionTruth, selection_metrics
from .penalty import PenaltySpec
from .simgen import ScenarioSpec, gen_dataset, replicate_seed
from .solver import FitConfig, FitError, fit_pwgee, fit_wgee_oracle
from .tuning import cv_select


@dataclass(frozen=True)
class MethodSpec:
    """One column of the method grid.

    ``oracle=True`` fits the true support unpenalized; otherwise
    ``penalty`` is tuned by cross-validation.  ``weighting`` switches the
    cluster-size correction on or off.
    """

    label: str
    weighting: bool
    corr: str
    penalty: str = "scad"
    oracle: bool = False
    rho: float | None = None
    scad_a: float = 3.7
    mcp_gamma: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "corr", canonical_kind(self.corr))

    def corr_spec(self) -> WorkingCorrelationSpec:
        if self.corr == "independence":
            return WorkingCorrelationSpec("independence")
        return WorkingCorrelationSpec(self.corr, self.rho)

    def penalty_template(self) -> PenaltySpec:
        return PenaltySpec(self.penalty, lam=0.0, a=self.scad_a, gamma=self.mcp_gamma)


@dataclass(frozen=True)
class ExperimentGrid:
    scenario: ScenarioSpec
    methods: tuple[MethodSpec, ...]
    reps: int
    master_seed: int = 0
    cv_grid_size: int = 25
    cv_min_ratio: float = 0.01
    fit_config: FitConfig = FitConfig()

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError("method labels must be unique")


def grid_from_json(config: dict) -> ExperimentGrid:
    """Build a grid from the structured config accepted by the CLI."""
    sc = config["scenario"]
    scenario = ScenarioSpec(
        example=int(sc["example"]),
        n=int(sc.get("n", 200)),
        p=int(sc.get("p", 500)),
        rho_gen=float(sc.get("rho_gen", 0.5)),
    )
    methods = []
    for m in config["methods"]:
        methods.append(
            MethodSpec(
                label=m["label"],
                weighting=str(m.get("weighting", "on")).lower() in ("on", "true", "1"),
                corr=m.get("corr", "indep"),
                penalty=m.get("penalty", "scad"),
                oracle=bool(m.get("oracle", False)),
                rho=m.get("rho"),
                scad_a=float(m.get("scad_a", 3.7)),
                mcp_gamma=float(m.get("mcp_gamma", 3.0)),
            )
        )
    cv = config.get("cv", {})
    return ExperimentGrid(
        scenario=scenario,
        methods=tuple(methods),
        reps=int(config["reps"]),
        master_seed=int(config.get("master_seed", 0)),
        cv_grid_size=int(cv.get("grid_size", 25)),
        cv_min_ratio=float(cv.get("min_ratio", 0.01)),
    )


def _fit_seed(master_seed: int, rep: int, method_index: int) -> int:
    ss = np.random.SeedSequence(
        [int(master_seed) & 0xFFFFFFFF, int(rep), int(method_index), 0x5EED]
    )
    return int(ss.generate_state(1, np.uint64)[0])


def _run_replicate(grid: ExperimentGrid, rep: int) -> list[dict]:
    scenario = replace(grid.scenario, seed=replicate_seed(grid.master_seed, rep))
    data = gen_dataset(scenario)
    dhash = data.content_hash()
    family = FamilySpec(scenario.family_kind)
    truth = SelectionTruth(scenario.beta_star)
    records = []
    for mi, method in enumerate(grid.methods):
        seed = _fit_seed(grid.master_seed, rep, mi)
        rec = {
            "rep": rep,
            "method": method.label,
            "dataset_hash": dhash,
            "failed": False,
            "lambda_star": float("nan"),
            "tp": None,
            "fp": None,
            "cr": None,
            "sqerr": float("nan"),
            "converged": False,
            "iterations": 0,
            "final_score_norm": float("nan"),
        }
        try:
            if method.oracle:
                fit = fit_wgee_oracle(
                    data,
                    scenario.true_support,
                    family,
                    method.corr_spec(),
                    config=grid.fit_config,
                    weighting=method.weighting,
                    seed=seed,
                )
                rec["lambda_star"] = 0.0
            else:
                cv = cv_select(
                    data,
                    family,
                    method.corr_spec(),
                    method.penalty_template(),
                    grid=None,
                    config=grid.fit_config,
                    seed=seed,
                    weighting=method.weighting,
                )
                fit = fit_pwgee(
                    data,
                    family,
                    method.corr_spec(),
                    replace(method.penalty_template(), lam=cv.lambda_star),
                    config=grid.fit_config,
                    weighting=method.weighting,
                    seed=seed,
                )
                rec["lambda_star"] = cv.lambda_star
                tp, fp, cr = selection_metrics(fit.beta_hat, truth)
                rec.update(tp=tp, fp=fp, cr=cr)
            rec["sqerr"] = float(np.sum((fit.beta_hat - truth.beta_star) ** 2))
            rec["converged"] = fit.converged
            rec["iterations"] = fit.iterations
            rec["final_score_norm"] = fit.final_score_norm
        except FitError as err:
            rec["failed"] = True
            rec["error"] = str(err)
        records.append(rec)
    return records


@dataclass(frozen=True)
class BenchResult:
    summary: list
    replicates: list
    sd_degenerate: bool


def _mean_sd(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1))


def run_experiment(grid: ExperimentGrid, jobs: int = 1) -> BenchResult:
    """Run the full replicate x method grid and aggregate."""
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_replicate, [grid] * grid.reps, range(grid.reps)))
    else:
        chunks = [_run_replicate(grid, r) for r in range(grid.reps)]

    replicates = [rec for chunk in chunks for rec in chunk]
    for chunk in chunks:
        hashes = {rec["dataset_hash"] for rec in chunk}
        assert len(hashes) == 1, "methods within a replicate saw different data"

    summary = []
    for method in grid.methods:
        recs = [r for r in replicates if r["method"] == method.label]
        ok = [r for r in recs if not r["failed"]]
        n_failed = len(recs) - len(ok)
        row = {
            "method": method.label,
            "n_reps": len(recs),
            "n_failed": n_failed,
            "oracle": method.oracle,
        }
        if method.oracle:
            row.update(
                tp_mean=None, tp_sd=None, fp_mean=None, fp_sd=None,
                cr_mean=None, cr_sd=None,
            )
        else:
            for key in ("tp", "fp", "cr"):
                mean, sd = _mean_sd([r[key] for r in ok])
                row[f"{key}_mean"], row[f"{key}_sd"] = mean, sd
        mse_mean, mse_sd = _mean_sd([r["sqerr"] for r in ok])
        row["mse_mean"], row["mse_sd"] = mse_mean, mse_sd
        summary.append(row)
    return BenchResult(
        summary=summary, replicates=replicates, sd_degenerate=grid.reps == 1
    )


def _fmt(value, decimals: int) -> str:
    return "-" if value is None else f"{value:.{decimals}f}"


def format_text_table(summary, sd_degenerate: bool = False) -> str:
    """Aligned mean(sd) table in the usual benchmark layout."""
    header = ["Approaches", "TP", "FP", "CR", "MSE"]
    rows = [header]
    for row in summary:
        cells = [row["method"]]
        for key, dec in (("tp", 2), ("fp", 2), ("cr", 2), ("mse", 3)):
            mean, sd = row[f"{key}_mean"], row[f"{key}_sd"]
            if mean is None:
                cells.append("-")
            else:
                cells.append(f"{_fmt(mean, dec)}({_fmt(sd, dec)})")
        if row["n_failed"]:
            cells[-1] += f" [{row['n_failed']} failed]"
        rows.append(cells)
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    if sd_degenerate:
        lines.append("note: single replicate, sd columns are degenerate zeros")
    return "\n".join(lines) + "\n"


_SUMMARY_COLUMNS = (
    "method", "tp_mean", "tp_sd", "fp_mean", "fp_sd", "cr_mean", "cr_sd",
    "mse_mean", "mse_sd", "n_reps", "n_failed",
)

_REPLICATE_COLUMNS = (
    "rep", "method", "tp", "fp", "cr", "sqerr", "lambda_star",
    "converged", "iterations", "final_score_norm", "failed", "dataset_hash",
)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_summary_csv(summary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(_SUMMARY_COLUMNS) + "\n")
        for row in summary:
            fh.write(",".join(_csv_cell(row[c]) for c in _SUMMARY_COLUMNS) + "\n")


def write_replicates_csv(replicates, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(_REPLICATE_COLUMNS) + "\n")
        for rec in replicates:
            fh.write(",".join(_csv_cell(rec[c]) for c in _REPLICATE_COLUMNS) + "\n")


def write_outputs(result: BenchResult, out_dir, make_figure: bool = True) -> dict:
    """Write table.csv, replicates.csv, table.txt and the summary figure."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "table_csv": os.path.join(out_dir, "table.csv"),
        "replicates_csv": os.path.join(out_dir, "replicates.csv"),
        "table_txt": os.path.join(out_dir, "table.txt"),
    }
    write_summary_csv(result.summary, paths["table_csv"])
    write_replicates_csv(result.replicates, paths["replicates_csv"])
    with open(paths["table_txt"], "w", encoding="utf-8") as fh:
        fh.write(format_text_table(result.summary, result.sd_degenerate))
    if make_figure:
        from .plots import save_benchmark_figure

        paths["figure"] = os.path.join(out_dir, "benchmark.png")
        save_benchmark_figure(result.summary, paths["figure"])
    return paths


def load_config(path) -> ExperimentGrid:
    with open(path, "r", encoding="utf-8") as fh:
        return grid_from_json(json.load(fh))

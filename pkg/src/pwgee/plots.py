"""Figure rendering for the report paths (written next to the CSV output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_cv_curve_figure(curve, lambda_star: float, path) -> None:
    """Held-out loss against lambda: per-fold points and the summed curve."""
    lams = sorted({row[0] for row in curve}, reverse=True)
    totals = []
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for lam in lams:
        losses = [row[2] for row in curve if row[0] == lam]
        ax.plot([lam] * len(losses), losses, "o", color="0.6", ms=3, zorder=1)
        totals.append(sum(losses))
    ax.plot(lams, totals, "-o", color="C0", ms=4, label="summed over folds", zorder=2)
    ax.axvline(lambda_star, color="C3", ls="--", lw=1, label=f"selected {lambda_star:.4g}")
    ax.set_xscale("log")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("held-out loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_benchmark_figure(summary, path) -> None:
    """Bar panels for MSE (with sd whiskers) and FP by method."""
    labels = [row["method"] for row in summary]
    x = np.arange(len(labels))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.0, 4.0))

    mse = [row["mse_mean"] for row in summary]
    mse_sd = [row["mse_sd"] if row["mse_sd"] is not None else 0.0 for row in summary]
    ax1.bar(x, mse, yerr=mse_sd, color="C0", capsize=3)
    ax1.set_ylabel("MSE")
    ax1.set_xticks(x)
    ax1.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)

    sel = [(i, row) for i, row in enumerate(summary) if row.get("fp_mean") is not None]
    if sel:
        xs = [i for i, _ in sel]
        fp = [row["fp_mean"] for _, row in sel]
        fp_sd = [row["fp_sd"] for _, row in sel]
        ax2.bar(xs, fp, yerr=fp_sd, color="C1", capsize=3)
    ax2.set_ylabel("false positives")
    ax2.set_xticks(x)
    ax2.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

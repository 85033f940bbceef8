"""Figure rendering for the CLI report paths.

Each function writes one PNG next to the delimited output it illustrates.
The CSV files remain the primary interface; figures are a convenience and
can be suppressed with --no-plot.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .curve import ForwardCurve


def plot_curve(curve: ForwardCurve, path, schedules=None, title: str | None = None) -> None:
    """Forward rates vs years to maturity, with cash-flow markers."""
    fig, ax = plt.subplots(figsize=(9, 5))
    t = curve.grid.stage_start_times()
    ax.plot(t, curve.f, lw=1.2)
    if schedules:
        ymax = float(np.max(curve.f))
        ymin = min(0.0, float(np.min(curve.f)))
        for sched in schedules:
            times = t[sched.stages - 1]
            heights = np.where(sched.alphas >= 1.0, 0.9, 0.2) * max(ymax, 1e-6)
            ax.vlines(times, ymin, ymin + heights, colors="gray", lw=0.6, alpha=0.6)
    ax.axhline(0.0, color="black", lw=0.6)
    ax.set_xlabel("years")
    ax.set_ylabel("forward rate (1/yr)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_convergence(rows: list[dict], path) -> None:
    """Objective and constraint error per Newton iteration (log scale)."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    by_date: dict[str, list[dict]] = {}
    for row in rows:
        by_date.setdefault(row["date"], []).append(row)
    for day, recs in sorted(by_date.items()):
        iters = [r["iteration"] for r in recs]
        ax1.semilogy(iters, [max(r["w"], 1e-300) for r in recs], marker="o", ms=3, label=day)
        ax2.semilogy(iters, [max(r["eps"], 1e-300) for r in recs], marker="o", ms=3, label=day)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("W")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("max constraint error")
    if len(by_date) > 1:
        ax1.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_loo_aggregates(rows: list[dict], path) -> None:
    """Mean |error| and mean error vs sqrt(gamma/phi), one panel per spread."""
    spreads = sorted({row["spread"] for row in rows})
    fig, axes = plt.subplots(2, max(len(spreads), 1), figsize=(4.2 * max(len(spreads), 1), 7),
                             squeeze=False)
    for col, spread in enumerate(spreads):
        sub = [r for r in rows if r["spread"] == spread]
        bonds = sorted({r["bond"] for r in sub})
        for bond in bonds:
            pts = sorted((r for r in sub if r["bond"] == bond),
                         key=lambda r: r["sqrt_gamma_over_phi"])
            x = [min(r["sqrt_gamma_over_phi"], 1e6) for r in pts]
            abs_err = [r["mean_abs_rel_error"] for r in pts]
            sgn_err = [r["mean_rel_error"] for r in pts]
            axes[0][col].plot(x, abs_err, marker="o", ms=3, label=bond)
            axes[1][col].plot(x, sgn_err, marker="o", ms=3, label=bond)
        axes[0][col].set_title(f"spread {spread:g}")
        axes[0][col].set_ylabel("mean |rel error|")
        axes[1][col].set_ylabel("mean rel error")
        axes[1][col].set_xlabel("sqrt(gamma/phi) (1/yr)")
        axes[1][col].axhline(0.0, color="black", lw=0.6)
    axes[0][0].legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_scenario_grid(named_curves: list[tuple[str, ForwardCurve]], path) -> None:
    """Small-multiples view of the scenario suite's curves."""
    count = len(named_curves)
    cols = 2
    rows = (count + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(10, 2.8 * rows), squeeze=False)
    for k, (label, curve) in enumerate(named_curves):
        ax = axes[k // cols][k % cols]
        ax.plot(curve.grid.stage_start_times(), curve.f, lw=1.0)
        ax.axhline(0.0, color="black", lw=0.6)
        ax.set_title(label, fontsize=8)
    for k in range(count, rows * cols):
        axes[k // cols][k % cols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)

"""Figure rendering for the CLI report path.

Each function takes the same rows that are written to CSV and saves one PNG.
PNG metadata is stripped so repeated runs produce identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .core import QUANTITIES  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_strata(rows: list[dict], path, quantity: str = "alpha"):
    """Point estimate, uplift and Fréchet bounds against the true value, per stratum."""
    rows = [r for r in rows if r["quantity"] == quantity]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if rows:
        truth = [r["mean_truth"] for r in rows]
        ax.plot(truth, truth, "o", mfc="none", color="k", label="true value")
        ax.plot(truth, [r["mean_point"] for r in rows], "x", color="C3", label="point estimate")
        for i, r in enumerate(rows):
            x = r["mean_truth"]
            ax.vlines(x, r["mean_uplift_lower"], r["mean_uplift_upper"], color="C0", lw=2,
                      label="uplift bounds" if i == 0 else None)
            ax.vlines(x + 0.01, r["mean_frechet_lower"], r["mean_frechet_upper"], color="C1", lw=1,
                      linestyles="--", label="Fréchet bounds" if i == 0 else None)
    ax.set_xlabel(f"true {quantity}")
    ax.set_ylabel(f"estimate of {quantity}")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    if rows:
        ax.legend(loc="upper left", frameon=False)
    _save(fig, path)


def plot_phi_histogram(rows: list[dict], path):
    fig, ax = plt.subplots(figsize=(6, 4))
    lefts = [r["bin_lower"] for r in rows]
    widths = [r["bin_upper"] - r["bin_lower"] for r in rows]
    ax.bar(lefts, [r["runs"] for r in rows], width=widths, align="edge", color="C0", edgecolor="white")
    ax.set_xlabel("expected point-estimator bias per run")
    ax.set_ylabel("runs")
    _save(fig, path)


_SWEEP_X = {
    "A": ("entropy_mean", "conditional entropy (nats)"),
    "N": ("value", "evaluation set size N"),
    "v": ("value", "binomial size v (model variance ~ 1/v)"),
}


def plot_sweep(rows: list[dict], path):
    axis = rows[0]["axis"]
    xkey, xlabel = _SWEEP_X[axis]
    x = [r[xkey] for r in rows]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    span = [r["span_mean"] for r in rows]
    sd = [r["span_std"] for r in rows]
    a1.errorbar(x, span, yerr=sd, marker="o", capsize=3)
    a1.set_xlabel(xlabel)
    a1.set_ylabel("uplift bounds span")
    err = [r["abs_error_mean"] for r in rows]
    esd = [r["abs_error_std"] for r in rows]
    a2.errorbar(x, err, yerr=esd, marker="o", capsize=3, label="|point estimate - truth|")
    a2.plot(x, [abs(r["expected_phi"]) for r in rows], "k--", label="|expected bias|")
    a2.set_xlabel(xlabel)
    a2.set_ylabel("error of beta point estimate")
    a2.legend(frameon=False)
    if axis in ("N", "v"):
        a1.set_xscale("log")
        a2.set_xscale("log")
    _save(fig, path)


def plot_bounds(report: dict, path):
    """Point estimate with uplift and Fréchet intervals, one panel per quantity."""
    fig, axes = plt.subplots(1, 4, figsize=(12, 3.5))
    for ax, q in zip(axes, QUANTITIES):
        k = q.value
        ub = report["uplift_bounds"][k]
        fr = report["frechet_bounds"][k]
        ax.vlines(0, fr["lower"], fr["upper"], color="C1", lw=2, linestyles="--", label="Fréchet")
        ax.vlines(1, ub["lower"], ub["upper"], color="C0", lw=3, label="uplift")
        ax.plot([1], [report["point"][k]], "x", color="C3", ms=9, label="point")
        ax.set_xlim(-0.7, 1.7)
        ax.set_xticks([])
        ax.set_title(f"{k} ({q.category})", fontsize=10)
    axes[0].legend(frameon=False, fontsize=8)
    _save(fig, path)

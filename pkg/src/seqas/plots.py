"""Static figures rendered next to the CSV reports.

Every figure is written as an SVG whose name ends with a short hash of
the experiment config, so re-runs of the same config overwrite their own
files and nothing else.  The plotted arrays are returned so callers (and
tests) can check them against the CSV output.
"""

from __future__ import annotations

import logging
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import RegressionReport, ReliabilityReport

__all__ = ["emit_plots"]

log = logging.getLogger(__name__)


def emit_plots(report, out_dir) -> dict:
    """Render the report's figures into ``out_dir``.

    Returns {filename: {series name: array}} describing exactly what was
    drawn.  Empty or all-NaN series are skipped with a warning.
    """
    os.makedirs(out_dir, exist_ok=True)
    if isinstance(report, RegressionReport):
        return _regression_plots(report, out_dir)
    if isinstance(report, ReliabilityReport):
        return _reliability_plots(report, out_dir)
    raise TypeError(f"no plots defined for {type(report).__name__}")


def _save(fig, path):
    fig.savefig(path, format="svg")
    plt.close(fig)


def _convergence_plot(values, rep_ids, ylabel, path):
    iterations = np.arange(values.shape[1])
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    data = {"iteration": iterations}
    for i, rep in enumerate(rep_ids):
        ax.plot(iterations, values[i], color="steelblue", alpha=0.35, lw=1.0)
        data[f"rep_{rep}"] = values[i].copy()
    mean = np.nanmean(values, axis=0)
    ax.plot(iterations, mean, color="crimson", lw=2.0, label="mean")
    data["mean"] = mean
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    if np.nanmin(values) > 0:
        ax.set_yscale("log")
    ax.legend(loc="best")
    fig.tight_layout()
    _save(fig, path)
    return data


def _box_plot(series, labels, ylabel, path):
    fig, ax = plt.subplots(figsize=(4.0, 4.0))
    ax.boxplot(series, tick_labels=labels)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    _save(fig, path)
    return {label: np.asarray(vals) for label, vals in zip(labels, series)}


def _usable(values) -> bool:
    return values.size > 0 and not np.all(np.isnan(values))


def _regression_plots(report: RegressionReport, out_dir) -> dict:
    tag = report.config.config_hash()
    out = {}
    for name, values in (("rmse", report.rmse), ("fsa", report.fsa)):
        if not _usable(values):
            log.warning("skipping %s plots: no data", name)
            continue
        fname = f"convergence_{name}_{tag}.svg"
        out[fname] = _convergence_plot(
            values, report.rep_ids, name, os.path.join(out_dir, fname)
        )
        finals = values[:, -1]
        finals = finals[~np.isnan(finals)]
        if finals.size:
            bname = f"box_final_{name}_{tag}.svg"
            out[bname] = _box_plot(
                [finals], [f"final {name}"], name, os.path.join(out_dir, bname)
            )
    return out


def _reliability_plots(report: ReliabilityReport, out_dir) -> dict:
    tag = report.config.config_hash()
    out = {}
    if not _usable(report.p_hats):
        log.warning("skipping reliability plots: no estimates")
        return out
    fname = f"box_p_hat_{tag}.svg"
    fig, ax = plt.subplots(figsize=(4.0, 4.0))
    ax.boxplot([report.p_hats], tick_labels=[report.method])
    if report.p_f_true:
        ax.axhline(report.p_f_true, color="crimson", ls="--", lw=1.0, label="true")
        ax.legend(loc="best")
    ax.set_ylabel("estimated failure probability")
    if np.all(report.p_hats > 0):
        ax.set_yscale("log")
    fig.tight_layout()
    _save(fig, os.path.join(out_dir, fname))
    out[fname] = {"p_hat": report.p_hats.copy()}

    cname = f"box_cost_{tag}.svg"
    out[cname] = _box_plot(
        [report.costs], [report.method], "simulator evaluations",
        os.path.join(out_dir, cname),
    )
    return out

"""Command-line interface.

Every subcommand reads a YAML experiment config (see
:class:`seqas.harness.ExperimentConfig`) and writes CSV reports, SVG
figures and a config echo into the output directory.  ``--seed``,
``--reps`` and ``--out`` override the corresponding config fields;
``--jobs`` sets the repetition worker pool size.
"""

from __future__ import annotations

import logging
import os

import click
import numpy as np

from .gp import TrainConfig, fit_gp, save_gp_model
from .harness import (
    ExperimentConfig,
    rep_seed,
    run_regression_benchmark,
    run_reliability_study,
    write_atomic,
    _make_rep_problem,
    _rows_to_csv,
    _fmt,
)
from .plots import emit_plots
from .rare_event import crude_mc
from .subspace import normalized_rmse, seq_ok_as

log = logging.getLogger(__name__)


def _load_config(config_path, seed, out, reps) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(config_path)
    if seed is not None:
        cfg.base_seed = seed
    if out is not None:
        cfg.out_dir = out
    if reps is not None:
        cfg.repetitions = reps
    return cfg


config_opt = click.option(
    "--config", "config_path", required=True, type=click.Path(exists=True),
    help="experiment config file (YAML)",
)
seed_opt = click.option("--seed", type=click.IntRange(min=0), default=None,
                        help="override the config base seed")
out_opt = click.option("--out", type=click.Path(), default=None,
                       help="override the output directory")
reps_opt = click.option("--reps", type=click.IntRange(min=1), default=None,
                        help="override the repetition count")
jobs_opt = click.option("--jobs", type=click.IntRange(min=1), default=1,
                        help="repetition worker pool size")


@click.group()
def main():
    """Surrogate-based active-subspace estimation and rare-event studies."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")


@main.command()
@config_opt
@seed_opt
@out_opt
def fit(config_path, seed, out):
    """Fit one kriging surrogate to a sampled design and save it."""
    cfg = _load_config(config_path, seed, out, None)
    root = rep_seed(cfg.base_seed, 0)
    prob_ss, design_ss, val_ss, fit_ss = root.spawn(4)
    problem = _make_rep_problem(cfg, prob_ss)
    method = cfg.method
    n_train = int(method.get("n_train") or 5 * problem.dim)
    n_val = int(method.get("n_validation", 1000))

    rng = np.random.default_rng(design_ss)
    X = rng.standard_normal((n_train, problem.dim))
    y = problem.eval_batch(X)
    model = fit_gp(X, y, TrainConfig(
        n_starts=int(method.get("restarts", 5)), seed=fit_ss,
    ))
    val_rng = np.random.default_rng(val_ss)
    X_val = val_rng.standard_normal((n_val, problem.dim))
    rmse = normalized_rmse(model.predict(X_val), problem.eval_batch(X_val))

    os.makedirs(cfg.out_dir, exist_ok=True)
    cfg.to_file(os.path.join(cfg.out_dir, "config.echo"))
    save_gp_model(model, os.path.join(cfg.out_dir, "gp_model.json"))
    write_atomic(
        os.path.join(cfg.out_dir, "fit_summary.csv"),
        _rows_to_csv(
            ["problem", "n_train", "dim", "log_marginal_likelihood", "rmse"],
            [[problem.name, n_train, problem.dim,
              _fmt(model.log_marginal_likelihood), _fmt(rmse)]],
        ),
    )
    click.echo(f"model saved to {cfg.out_dir}/gp_model.json (rmse {rmse:.4g})")


@main.command()
@config_opt
@seed_opt
@out_opt
def seqokas(config_path, seed, out):
    """One sequential subspace run; writes the iteration history CSV."""
    cfg = _load_config(config_path, seed, out, None)
    root = rep_seed(cfg.base_seed, 0)
    prob_ss, design_ss, val_ss, seq_ss = root.spawn(4)
    problem = _make_rep_problem(cfg, prob_ss)
    method = cfg.method
    n_train = int(method.get("n_train") or 5 * problem.dim)
    n_val = int(method.get("n_validation", 1000))

    rng = np.random.default_rng(design_ss)
    X = rng.standard_normal((n_train, problem.dim))
    y = problem.eval_batch(X)
    val_rng = np.random.default_rng(val_ss)
    X_val = val_rng.standard_normal((n_val, problem.dim))
    y_val = problem.eval_batch(X_val)

    history = seq_ok_as(
        X,
        y,
        int(method.get("K", 50)),
        n_mc_samples=int(method.get("M", 10_000)),
        train_config=TrainConfig(
            n_starts=int(method.get("restarts", 5)),
        ),
        later_starts=int(method.get("later_starts", 2)),
        validation=(X_val, y_val),
        w_true=problem.w_true,
        seed=seq_ss,
        keep_models="none",
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    cfg.to_file(os.path.join(cfg.out_dir, "config.echo"))
    gap_rank = problem.w_true.shape[1] if problem.w_true is not None else None
    history.to_csv(os.path.join(cfg.out_dir, "history.csv"), gap_rank=gap_rank)
    final = history.final
    click.echo(
        f"finished after {len(history) - 1} rotations: "
        f"rmse {final.rmse:.4g}, fsa {final.fsa:.4g}"
    )


@main.command()
@config_opt
@seed_opt
@out_opt
@reps_opt
@jobs_opt
def benchmark(config_path, seed, out, reps, jobs):
    """Repeated regression benchmark with convergence reports."""
    cfg = _load_config(config_path, seed, out, reps)
    report = run_regression_benchmark(cfg, jobs=jobs)
    paths = report.write(cfg.out_dir)
    figures = emit_plots(report, cfg.out_dir)
    click.echo(f"wrote {paths['summary']} and {len(figures)} figures")


@main.command("rare-event")
@config_opt
@seed_opt
@out_opt
@reps_opt
@jobs_opt
def rare_event_cmd(config_path, seed, out, reps, jobs):
    """Repeated rare-event estimation with the four summary metrics."""
    cfg = _load_config(config_path, seed, out, reps)
    report = run_reliability_study(cfg, jobs=jobs)
    paths = report.write(cfg.out_dir)
    figures = emit_plots(report, cfg.out_dir)
    m = report.metrics
    click.echo(
        f"mean cost {m.mean_cost:.1f} +- {m.cost_2sd:.1f}, "
        f"rel bias {m.relative_bias:.4g}, cov {m.cov:.4g}"
    )
    click.echo(f"wrote {paths['summary']} and {len(figures)} figures")


@main.command("crude-mc")
@config_opt
@seed_opt
@out_opt
def crude_mc_cmd(config_path, seed, out):
    """Plain Monte Carlo baseline for a reliability problem."""
    cfg = _load_config(config_path, seed, out, None)
    root = rep_seed(cfg.base_seed, 0)
    prob_ss, mc_ss = root.spawn(2)
    problem = _make_rep_problem(cfg, prob_ss)
    n = int(cfg.method.get("N", 1_000_000))
    record = crude_mc(problem, n, seed=mc_ss)

    os.makedirs(cfg.out_dir, exist_ok=True)
    cfg.to_file(os.path.join(cfg.out_dir, "config.echo"))
    rel_bias = ""
    if problem.p_f_true:
        rel_bias = _fmt((problem.p_f_true - record.p_hat) / problem.p_f_true)
    write_atomic(
        os.path.join(cfg.out_dir, "summary.csv"),
        _rows_to_csv(
            ["method", "mean_cost", "cost_2sd", "rel_bias", "cov", "rel_rmse"],
            [["crude_mc", _fmt(record.n_evals_total), _fmt(0.0), rel_bias,
              _fmt(record.standard_error / record.p_hat if record.p_hat else float("nan")),
              ""]],
        ),
    )
    click.echo(
        f"p_hat {record.p_hat:.6g} (standard error {record.standard_error:.3g}) "
        f"from {record.n_evals_total} evaluations"
    )


if __name__ == "__main__":
    main()

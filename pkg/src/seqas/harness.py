"""Experiment orchestration: config files, seeded repetition runs,
metric aggregation and CSV reports.

Repetition i always derives its random state as
``numpy.random.SeedSequence(base_seed, spawn_key=(i,))``, so runs are
reproducible and independent of how repetitions are scheduled.  Report
files are written atomically (temp file plus rename) with a fixed float
format, so identical configs produce byte-identical CSVs.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .gp import TrainConfig
from .problems import make_problem
from .rare_event import ICEConfig, run_ice_seqokas
from .subspace import seq_ok_as

__all__ = [
    "ExperimentConfig",
    "ReliabilityMetrics",
    "RegressionReport",
    "ReliabilityReport",
    "rep_seed",
    "reliability_metrics",
    "run_regression_benchmark",
    "run_reliability_study",
    "write_atomic",
]

log = logging.getLogger(__name__)

EXPERIMENT_KINDS = ("regression_benchmark", "reliability")


def rep_seed(base_seed: int, rep: int) -> np.random.SeedSequence:
    """Seed stream for repetition ``rep``: SeedSequence(base, spawn_key=(rep,))."""
    return np.random.SeedSequence(base_seed, spawn_key=(rep,))


@dataclass
class ExperimentConfig:
    """A benchmark or reliability experiment: problem, method parameters,
    repetition count, base seed and output directory.

    The file format is YAML with nested ``problem`` and ``method``
    sections; round-trips are lossless.
    """

    kind: str
    problem: dict
    method: dict = field(default_factory=dict)
    repetitions: int = 1
    base_seed: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"kind must be one of {EXPERIMENT_KINDS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if "name" not in self.problem:
            raise ValueError("problem section must carry a 'name'")
        for key, value in self.method.items():
            if key in ("K", "K_inner"):
                if value is not None and value < 0:
                    raise ValueError(f"method budget {key} must be >= 0")
            elif key.startswith("n_") or key in ("M", "N", "N_IS"):
                if value is not None and value <= 0:
                    raise ValueError(f"method budget {key} must be positive")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "problem": dict(self.problem),
            "method": dict(self.method),
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {"kind", "problem", "method", "repetitions", "base_seed", "out_dir"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a mapping")
        return cls.from_dict(data)

    def to_file(self, path) -> None:
        write_atomic(path, yaml.safe_dump(self.to_dict(), sort_keys=True))

    def config_hash(self, length: int = 10) -> str:
        canonical = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:length]


def write_atomic(path, text: str) -> None:
    """Write text to ``path`` through a temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".12g")


def _rows_to_csv(header, rows) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


@dataclass(frozen=True)
class ReliabilityMetrics:
    """The four summary metrics over repeated probability estimates."""

    relative_bias: float
    cov: float
    relative_rmse: float
    mean_cost: float
    cost_2sd: float


def reliability_metrics(p_hats, costs, p_f_true: Optional[float]) -> ReliabilityMetrics:
    """Aggregate repeated estimates.

    relative bias (P_f - mean(P)) / P_f, coefficient of variation
    std(P)/mean(P) (sample std), relative RMSE
    sqrt(RB^2 + CoV^2 (mean(P)/P_f)^2), and cost mean with a 2-standard-
    deviation band.  Bias and RMSE are NaN when the truth is unknown.
    """
    p = np.asarray(p_hats, dtype=float)
    c = np.asarray(costs, dtype=float)
    if p.size < 1:
        raise ValueError("no estimates to aggregate")
    mean_p = float(p.mean())
    cov = float(p.std(ddof=1) / mean_p) if p.size > 1 and mean_p > 0 else 0.0
    if p_f_true is not None and p_f_true > 0:
        rb = (p_f_true - mean_p) / p_f_true
        rel_rmse = math.sqrt(rb**2 + cov**2 * (mean_p / p_f_true) ** 2)
    else:
        rb = math.nan
        rel_rmse = math.nan
    cost_sd = float(c.std(ddof=1)) if c.size > 1 else 0.0
    return ReliabilityMetrics(
        relative_bias=float(rb),
        cov=cov,
        relative_rmse=float(rel_rmse),
        mean_cost=float(c.mean()),
        cost_2sd=2.0 * cost_sd,
    )


@dataclass
class RegressionReport:
    """Per-repetition, per-iteration RMSE/FSA curves plus aggregates."""

    config: ExperimentConfig
    rmse: np.ndarray  # (reps, K+1)
    fsa: np.ndarray  # (reps, K+1)
    rep_ids: list

    @property
    def n_iterations(self) -> int:
        return self.rmse.shape[1] - 1

    def per_rep_csv(self) -> str:
        rows = []
        for i, rep in enumerate(self.rep_ids):
            for k in range(self.rmse.shape[1]):
                rows.append([rep, k, _fmt(self.rmse[i, k]), _fmt(self.fsa[i, k])])
        return _rows_to_csv(["rep", "iteration", "rmse", "fsa"], rows)

    def summary_csv(self) -> str:
        rows = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for k in range(self.rmse.shape[1]):
                rows.append(
                    [
                        k,
                        _fmt(np.nanmean(self.rmse[:, k])),
                        _fmt(np.nanstd(self.rmse[:, k], ddof=1) if self.rmse.shape[0] > 1 else 0.0),
                        _fmt(np.nanmean(self.fsa[:, k])),
                        _fmt(np.nanstd(self.fsa[:, k], ddof=1) if self.fsa.shape[0] > 1 else 0.0),
                    ]
                )
        return _rows_to_csv(
            ["iteration", "mean_rmse", "sd_rmse", "mean_fsa", "sd_fsa"], rows
        )

    def write(self, out_dir) -> dict:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "config": os.path.join(out_dir, "config.echo"),
            "per_rep": os.path.join(out_dir, "per_rep.csv"),
            "summary": os.path.join(out_dir, "summary.csv"),
        }
        self.config.to_file(paths["config"])
        write_atomic(paths["per_rep"], self.per_rep_csv())
        write_atomic(paths["summary"], self.summary_csv())
        return paths


@dataclass
class ReliabilityReport:
    """Per-repetition probability estimates and the four summary metrics."""

    config: ExperimentConfig
    p_hats: np.ndarray
    costs: np.ndarray
    n_levels: np.ndarray
    converged: np.ndarray
    rep_ids: list
    p_f_true: Optional[float]
    method: str = "ice_seqokas"

    @property
    def metrics(self) -> ReliabilityMetrics:
        return reliability_metrics(self.p_hats, self.costs, self.p_f_true)

    def per_rep_csv(self) -> str:
        rows = [
            [
                rep,
                _fmt(self.p_hats[i]),
                _fmt(self.costs[i]),
                int(self.n_levels[i]),
                int(self.converged[i]),
            ]
            for i, rep in enumerate(self.rep_ids)
        ]
        return _rows_to_csv(["rep", "p_hat", "cost", "n_levels", "converged"], rows)

    def summary_csv(self) -> str:
        m = self.metrics
        rows = [
            [
                self.method,
                _fmt(m.mean_cost),
                _fmt(m.cost_2sd),
                _fmt(m.relative_bias),
                _fmt(m.cov),
                _fmt(m.relative_rmse),
            ]
        ]
        return _rows_to_csv(
            ["method", "mean_cost", "cost_2sd", "rel_bias", "cov", "rel_rmse"], rows
        )

    def write(self, out_dir) -> dict:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "config": os.path.join(out_dir, "config.echo"),
            "per_rep": os.path.join(out_dir, "per_rep.csv"),
            "summary": os.path.join(out_dir, "summary.csv"),
        }
        self.config.to_file(paths["config"])
        write_atomic(paths["per_rep"], self.per_rep_csv())
        write_atomic(paths["summary"], self.summary_csv())
        return paths


def _train_config_from_method(method: dict, seed=None) -> TrainConfig:
    return TrainConfig(
        n_starts=int(method.get("restarts", 5)),
        maxiter=int(method.get("gp_maxiter", 200)),
        optimize_nugget=bool(method.get("optimize_nugget", True)),
        seed=seed,
    )


def _make_rep_problem(cfg: ExperimentConfig, problem_ss):
    params = {k: v for k, v in cfg.problem.items() if k != "name"}
    name = cfg.problem["name"]
    if name == "quadratic_ridge":
        params.setdefault("seed", problem_ss)
    return make_problem(name, **params)


def _regression_rep(cfg: ExperimentConfig, rep: int):
    root = rep_seed(cfg.base_seed, rep)
    prob_ss, design_ss, val_ss, seq_ss = root.spawn(4)
    problem = _make_rep_problem(cfg, prob_ss)
    d = problem.dim
    method = cfg.method
    n_train = int(method.get("n_train") or 5 * d)
    n_val = int(method.get("n_validation", 1000))
    k_iters = int(method.get("K", 50))

    design_rng = np.random.default_rng(design_ss)
    X = design_rng.standard_normal((n_train, d))
    y = problem.eval_batch(X)
    val_rng = np.random.default_rng(val_ss)
    X_val = val_rng.standard_normal((n_val, d))
    y_val = problem.eval_batch(X_val)

    history = seq_ok_as(
        X,
        y,
        k_iters,
        n_mc_samples=int(method.get("M", 10_000)),
        train_config=_train_config_from_method(method),
        later_starts=int(method.get("later_starts", 2)),
        validation=(X_val, y_val),
        w_true=problem.w_true,
        seed=seq_ss,
        keep_models="none",
    )
    rmse = history.rmse_series()
    fsa_vals = history.fsa_series()
    full = np.full(k_iters + 1, np.nan)
    out_rmse, out_fsa = full.copy(), full.copy()
    out_rmse[: rmse.size] = rmse
    out_fsa[: fsa_vals.size] = fsa_vals
    return out_rmse, out_fsa


def _run_reps(cfg: ExperimentConfig, worker, jobs: int):
    """Run ``worker(cfg, rep)`` for every repetition, recording failures.

    Failed repetitions are excluded with a warning; the run errors out
    when at least half fail.
    """
    results = {}
    failures = {}

    def run_one(rep):
        try:
            return rep, worker(cfg, rep), None
        except Exception as exc:  # noqa: BLE001 - recorded and re-raised in bulk
            return rep, None, exc

    if jobs > 1:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=jobs)(
            delayed(run_one)(rep) for rep in range(cfg.repetitions)
        )
    else:
        outcomes = [run_one(rep) for rep in range(cfg.repetitions)]

    for rep, value, exc in outcomes:
        if exc is None:
            results[rep] = value
        else:
            failures[rep] = exc
            log.warning("repetition %d failed: %s", rep, exc)
    if len(failures) * 2 >= cfg.repetitions and failures:
        raise RuntimeError(
            f"{len(failures)} of {cfg.repetitions} repetitions failed; "
            f"first failure: {failures[min(failures)]}"
        )
    return results


def run_regression_benchmark(cfg: ExperimentConfig, jobs: int = 1) -> RegressionReport:
    """Repeated sequential-surrogate runs on a regression benchmark
    problem, recording per-iteration RMSE and subspace angle."""
    if cfg.kind != "regression_benchmark":
        raise ValueError("config kind must be 'regression_benchmark'")
    results = _run_reps(cfg, _regression_rep, jobs)
    reps = sorted(results)
    k_iters = int(cfg.method.get("K", 50))
    rmse = np.full((len(reps), k_iters + 1), np.nan)
    fsa = np.full((len(reps), k_iters + 1), np.nan)
    for i, rep in enumerate(reps):
        rmse[i], fsa[i] = results[rep]
    return RegressionReport(config=cfg, rmse=rmse, fsa=fsa, rep_ids=reps)


def _reliability_rep(cfg: ExperimentConfig, rep: int):
    root = rep_seed(cfg.base_seed, rep)
    prob_ss, run_ss = root.spawn(2)
    problem = _make_rep_problem(cfg, prob_ss)
    method = cfg.method
    ice = ICEConfig(
        n_per_level=int(method.get("N", 250)),
        n_final=(int(method["N_IS"]) if method.get("N_IS") else None),
        delta_target=float(method.get("delta_target", 1.5)),
        max_levels=int(method.get("max_levels", 12)),
        k_inner=int(method.get("K_inner", 5)),
        smoother=str(method.get("smoother", "logistic")),
        r_max=int(method.get("r_max", 5)),
        n_train_cap=int(method.get("n_train_cap", 1000)),
        n_mc_subspace=int(method.get("M", 4_000)),
        train=_train_config_from_method(
            {
                **method,
                "restarts": method.get("restarts", 3),
                "gp_maxiter": method.get("gp_maxiter", 80),
            }
        ),
        later_starts=int(method.get("later_starts", 0)),
        later_level_starts=int(method.get("later_level_starts", 1)),
    )
    record = run_ice_seqokas(problem, ice, seed=run_ss)
    return record.p_hat, record.n_evals_total, len(record.levels), record.converged


def run_reliability_study(cfg: ExperimentConfig, jobs: int = 1) -> ReliabilityReport:
    """Repeated rare-event estimation runs with the four summary metrics."""
    if cfg.kind != "reliability":
        raise ValueError("config kind must be 'reliability'")
    results = _run_reps(cfg, _reliability_rep, jobs)
    reps = sorted(results)
    p_hats = np.array([results[r][0] for r in reps])
    costs = np.array([results[r][1] for r in reps], dtype=float)
    n_levels = np.array([results[r][2] for r in reps])
    converged = np.array([results[r][3] for r in reps], dtype=bool)
    probe = _make_rep_problem(cfg, rep_seed(cfg.base_seed, 0).spawn(1)[0])
    return ReliabilityReport(
        config=cfg,
        p_hats=p_hats,
        costs=costs,
        n_levels=n_levels,
        converged=converged,
        rep_ids=reps,
        p_f_true=probe.p_f_true,
    )

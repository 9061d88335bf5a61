"""Rare-event failure-probability estimation by adaptive smoothed
importance sampling with low-dimensional cross-entropy fitting.

The driver tempers a sequence of biasing densities parametrized by a
decreasing smoothing temperature.  At every level it draws from the
previous density, evaluates the limit state, picks the next temperature
by targeting the coefficient of variation of the level weights, fits a
rotated kriging surrogate to all evaluations so far (no extra simulator
calls), estimates the smoothed-indicator Fisher matrix by self-normalized
importance sampling of the surrogate's log-gradient, reduces to the
dominant eigenvectors, and fits a Gaussian to the projected weighted
sample.  The final density feeds a standard importance-sampling estimate
of the failure probability.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .gp import TrainConfig
from .problems import Problem
from .smoothing import (
    LOG_FLOOR,
    SmoothingConfig,
    log_smooth_indicator,
    log_smooth_indicator_grad_factor,
    smooth_indicator,
    estimate_H_eps,
)
from .subspace import seq_ok_as

__all__ = [
    "DegeneratePopulationError",
    "DegenerateFitError",
    "LiftedGaussian",
    "lifted_gaussian",
    "standard_normal_density",
    "sn_weights",
    "adapt_epsilon",
    "ce_gaussian_fit",
    "ICEConfig",
    "ISLevelState",
    "EstimateRecord",
    "run_ice_seqokas",
    "crude_mc",
    "importance_sampling_estimate",
]

LOG_2PI = math.log(2.0 * math.pi)


class DegeneratePopulationError(RuntimeError):
    """All importance weights vanished; the population carries no signal."""


class DegenerateFitError(RuntimeError):
    """Too little effective sample size to fit the biasing density."""


@dataclass(frozen=True)
class LiftedGaussian:
    """Gaussian N(mean, cov) on the span of W, standard normal on the
    orthogonal complement.

    Equivalently N(W mean, W cov W^T + (I - W W^T)) on R^d; log-density
    and sampling split exactly along the two orthogonal blocks.
    """

    W: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    _chol: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def rank(self) -> int:
        return self.W.shape[1]

    def logpdf(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}")
        Z = X @ self.W
        resid = X - Z @ self.W.T
        diff = Z - self.mean
        sol = _solve_lower(self._chol, diff.T).T
        quad = np.einsum("ij,ij->i", sol, sol)
        logdet_half = float(np.sum(np.log(np.diag(self._chol))))
        lp_low = -0.5 * quad - logdet_half - 0.5 * self.rank * LOG_2PI
        lp_perp = -0.5 * np.einsum("ij,ij->i", resid, resid) - 0.5 * (
            self.dim - self.rank
        ) * LOG_2PI
        return lp_low + lp_perp

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = self.mean + rng.standard_normal((n, self.rank)) @ self._chol.T
        u = rng.standard_normal((n, self.dim))
        return z @ self.W.T + (u - (u @ self.W) @ self.W.T)


def _solve_lower(L, B):
    from scipy.linalg import solve_triangular

    return solve_triangular(L, B, lower=True, check_finite=False)


def lifted_gaussian(W, mean, cov) -> LiftedGaussian:
    """Build the biasing density from an orthonormal reduction matrix and
    low-dimensional Gaussian parameters."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError("W must be 2-D")
    d, r = W.shape
    if np.linalg.norm(W.T @ W - np.eye(r)) > 1e-8:
        raise ValueError("W must have orthonormal columns")
    mean = np.asarray(mean, dtype=float).ravel()
    cov = np.asarray(cov, dtype=float)
    if mean.size != r or cov.shape != (r, r):
        raise ValueError("mean and cov must match the column count of W")
    cov = 0.5 * (cov + cov.T)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    return LiftedGaussian(W=W, mean=mean, cov=cov, _chol=chol)


def standard_normal_density(d: int) -> LiftedGaussian:
    """The input density itself, as the trivial lifted Gaussian."""
    W = np.zeros((d, 1))
    W[0, 0] = 1.0
    return LiftedGaussian(W=W, mean=np.zeros(1), cov=np.eye(1), _chol=np.eye(1))


def standard_normal_logpdf(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return -0.5 * np.einsum("ij,ij->i", X, X) - 0.5 * X.shape[1] * LOG_2PI


def sn_weights(samples, f_values, smoothing: SmoothingConfig, prev_density) -> np.ndarray:
    """Unnormalized level weights L_eps(x) q(x) / pi_prev(x).

    Computed in log space and exponentiated after subtracting the largest
    log-weight, so the returned weights are finite, non-negative and
    defined up to a positive scale (all downstream uses self-normalize).
    ``prev_density=None`` means the previous density is q itself.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    f = np.asarray(f_values, dtype=float).ravel()
    if f.size != X.shape[0]:
        raise ValueError("samples and f_values disagree on length")
    log_L = np.asarray(log_smooth_indicator(-f, smoothing), dtype=float)
    if prev_density is None:
        log_base = np.zeros(f.size)
    else:
        log_base = standard_normal_logpdf(X) - prev_density.logpdf(X)
    log_w = log_L + log_base
    if not np.all(np.isfinite(log_base)):
        raise ValueError("previous-density log-pdf must be finite at all samples")
    top = np.max(log_w)
    if not np.isfinite(top):
        raise DegeneratePopulationError("all level weights underflowed to zero")
    return np.exp(np.maximum(log_w - top, LOG_FLOOR))


def _weight_cov(log_w: np.ndarray) -> float:
    """Coefficient of variation of weights given up to an additive
    log-constant (population standard deviation over mean)."""
    top = np.max(log_w)
    if not np.isfinite(top):
        return math.inf
    w = np.exp(np.maximum(log_w - top, LOG_FLOOR))
    mean = float(w.mean())
    if mean <= 0:
        return math.inf
    return float(w.std() / mean)


def adapt_epsilon(
    f_values,
    log_prev_weights_base,
    delta_target: float,
    *,
    eps_prev: float = math.inf,
    variant: str = "logistic",
    bracket_rel_lo: float = 1e-6,
    max_bisect: int = 80,
) -> tuple:
    """Pick the next smoothing temperature by weight-CoV targeting.

    Bisects log(eps) on [bracket_rel_lo * scale, eps_prev] for the value
    where the coefficient of variation of the level weights
    h_eps(-f) * exp(base) reaches ``delta_target``; the CoV is
    non-increasing in eps.  Returns ``(eps, saturated)`` where
    ``saturated`` is True when even the sharpest bracketed smoothing
    keeps the CoV below target.
    """
    f = np.asarray(f_values, dtype=float).ravel()
    base = np.asarray(log_prev_weights_base, dtype=float)
    if base.ndim == 0:
        base = np.full(f.size, float(base))
    if base.size != f.size:
        raise ValueError("f_values and log_prev_weights_base disagree on length")
    if f.size < 10:
        raise ValueError("at least 10 samples are required to adapt epsilon")
    if delta_target <= 0:
        raise ValueError("delta_target must be positive")

    scale = float(np.std(f))
    if scale <= 0:
        scale = max(1.0, float(np.abs(f).max()))
    lo = bracket_rel_lo * scale
    hi = eps_prev if math.isfinite(eps_prev) else 10.0 * max(
        float(np.abs(f).max()), scale
    )
    hi = max(hi, lo * (1 + 1e-12))

    def cov_at(eps: float) -> float:
        cfg = SmoothingConfig(variant=variant, epsilon=eps)
        return _weight_cov(np.asarray(log_smooth_indicator(-f, cfg)) + base)

    if cov_at(lo) < delta_target:
        return lo, True
    if cov_at(hi) >= delta_target:
        return hi, False

    log_lo, log_hi = math.log(lo), math.log(hi)
    for _ in range(max_bisect):
        log_mid = 0.5 * (log_lo + log_hi)
        if cov_at(math.exp(log_mid)) >= delta_target:
            log_lo = log_mid  # CoV still above target: smooth more
        else:
            log_hi = log_mid
    return math.exp(0.5 * (log_lo + log_hi)), False


def ce_gaussian_fit(z_samples, weights, *, min_ess: Optional[float] = None) -> tuple:
    """Weighted Gaussian fit (cross-entropy update) in the reduced space.

    Returns the weighted mean and covariance (normalized by the weight
    sum), symmetrized and with its eigenvalues floored at 1e-6 times the
    largest so the result stays usable as a sampling covariance.
    ``min_ess`` defaults to r + 2; pass 0 to skip the check.
    """
    Z = np.atleast_2d(np.asarray(z_samples, dtype=float))
    w = np.asarray(weights, dtype=float).ravel()
    n, r = Z.shape
    if w.size != n:
        raise ValueError("z_samples and weights disagree on length")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    total = float(w.sum())
    if total <= 0:
        raise DegeneratePopulationError("all weights are zero")
    ess = total**2 / float((w**2).sum())
    threshold = (r + 2) if min_ess is None else min_ess
    if ess < threshold:
        raise DegenerateFitError(
            f"effective sample size {ess:.2f} < {threshold}; "
            "increase the per-level sample count"
        )
    wn = w / total
    mean = wn @ Z
    D = Z - mean
    cov = (D * wn[:, None]).T @ D
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    top = float(vals.max())
    if top <= 0:
        cov = 1e-12 * np.eye(r)
    else:
        vals = np.clip(vals, 1e-6 * top, None)
        cov = (vecs * vals) @ vecs.T
        cov = 0.5 * (cov + cov.T)
    return mean, cov


@dataclass
class ICEConfig:
    """Driver settings.

    ``n_per_level`` points are drawn and evaluated per level and
    ``n_final`` more for the final estimate, so the total simulator cost
    is levels * n_per_level + n_final exactly.  ``surrogate_target``
    selects what the kriging surrogate models: "f" (default) fits the raw
    limit-state values and composes the smoother's log-gradient
    analytically, "smoothed" fits the smoothed indicator values directly
    and takes the log-gradient of the (positivity-floored) posterior
    mean.

    Surrogate training budget: the first level runs the full
    ``train.n_starts`` multi-start; later levels warm-start from the
    previous level's optimum plus ``later_level_starts`` fresh starts,
    and the inner re-rotation fits warm-start plus ``later_starts``
    fresh starts.
    """

    n_per_level: int = 250
    n_final: Optional[int] = None
    delta_target: float = 1.5
    max_levels: int = 12
    k_inner: int = 5
    smoother: str = "logistic"
    r_max: int = 5
    energy_threshold: float = 0.95
    surrogate_target: str = "f"
    n_train_cap: int = 1000
    cap_keep_fraction: float = 0.2
    n_mc_subspace: int = 4_000
    stop_floor: float = 1e-300
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(n_starts=3, maxiter=80)
    )
    later_starts: int = 0
    later_level_starts: int = 1

    def __post_init__(self):
        if self.n_per_level < 50:
            raise ValueError("n_per_level must be >= 50")
        if self.n_final is not None and self.n_final < 1:
            raise ValueError("n_final must be positive")
        if self.delta_target <= 0 or self.max_levels < 1 or self.k_inner < 0:
            raise ValueError("delta_target, max_levels and k_inner must be positive")
        if self.r_max < 1 or not 0 < self.energy_threshold <= 1:
            raise ValueError("r_max must be >= 1 and energy_threshold in (0, 1]")
        if self.surrogate_target not in ("f", "smoothed"):
            raise ValueError("surrogate_target must be 'f' or 'smoothed'")


@dataclass
class ISLevelState:
    """One level of the driver: its temperature, reduction matrix, fitted
    Gaussian, samples, weights and running evaluation count."""

    level_index: int
    epsilon: float
    W_r: np.ndarray
    gauss_mean: np.ndarray
    gauss_cov: np.ndarray
    samples: np.ndarray
    f_values: np.ndarray
    weights: np.ndarray
    cumulative_evals: int
    ess: float
    weight_cov: float
    stop_cov: float
    saturated: bool = False

    def summary(self) -> dict:
        return {
            "level": self.level_index,
            "epsilon": self.epsilon,
            "r_j": int(self.W_r.shape[1]),
            "ess": self.ess,
            "weight_cov": self.weight_cov,
            "evals_cumulative": self.cumulative_evals,
        }


@dataclass
class EstimateRecord:
    """Result of a rare-event estimation run."""

    p_hat: float
    n_evals_total: int
    levels: list
    n_final: int
    seed: Optional[int]
    method: str
    converged: bool = True
    no_failures: bool = False
    standard_error: Optional[float] = None

    def levels_to_csv(self, path) -> None:
        """Write `level,epsilon,r_j,ess,weight_cov,evals_cumulative`."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["level", "epsilon", "r_j", "ess", "weight_cov", "evals_cumulative"]
            )
            for lvl in self.levels:
                row = lvl.summary() if isinstance(lvl, ISLevelState) else lvl
                writer.writerow(
                    [
                        row["level"],
                        format(row["epsilon"], ".12g"),
                        row["r_j"],
                        format(row["ess"], ".12g"),
                        format(row["weight_cov"], ".12g"),
                        row["evals_cumulative"],
                    ]
                )

    def to_json_file(self, path) -> None:
        payload = {
            "method": self.method,
            "p_hat": self.p_hat,
            "n_evals_total": self.n_evals_total,
            "n_final": self.n_final,
            "seed": self.seed,
            "converged": self.converged,
            "no_failures": self.no_failures,
            "standard_error": self.standard_error,
            "levels": [
                lvl.summary() if isinstance(lvl, ISLevelState) else lvl
                for lvl in self.levels
            ],
        }
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
        os.replace(tmp, path)


def _select_rank(eigenvalues: np.ndarray, threshold: float, r_max: int) -> int:
    """Smallest rank holding ``threshold`` of the spectral energy, capped."""
    total = float(eigenvalues.sum())
    if total <= 0:
        return 1
    cum = np.cumsum(eigenvalues) / total
    r = int(np.searchsorted(cum, threshold) + 1)
    return min(max(r, 1), r_max, eigenvalues.size)


def _cap_training_set(X, f, log_w, cap, keep_fraction, rng):
    """Keep the ``cap`` highest-weight points plus a random slice of the
    rest (kriging cost grows cubically with the training size)."""
    n = X.shape[0]
    if n <= cap:
        return X, f
    order = np.argsort(log_w)[::-1]
    keep = list(order[:cap])
    rest = order[cap:]
    n_extra = int(round(keep_fraction * rest.size))
    if n_extra > 0:
        keep.extend(rng.choice(rest, size=n_extra, replace=False))
    keep = np.sort(np.asarray(keep))
    return X[keep], f[keep]


def run_ice_seqokas(problem: Problem, cfg: Optional[ICEConfig] = None, seed=None) -> EstimateRecord:
    """Adaptive smoothed importance sampling with surrogate-based
    dimension reduction; returns the failure-probability estimate with
    exact evaluation accounting.  Deterministic given the seed."""
    cfg = cfg if cfg is not None else ICEConfig()
    d = problem.dim
    n_final = cfg.n_final if cfg.n_final is not None else cfg.n_per_level
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seed_int = None if seed is None or isinstance(seed, np.random.SeedSequence) else int(seed)
    kids = ss.spawn(3)
    rng = np.random.default_rng(kids[0])
    seq_seeds = kids[1].spawn(cfg.max_levels)
    cap_rng = np.random.default_rng(kids[2])

    evals_before = problem.n_evals
    density = None  # previous-level density; None means q itself
    eps_prev = math.inf
    train_X = np.empty((0, d))
    train_f = np.empty(0)
    warm = None
    levels = []
    converged = False

    for j in range(1, cfg.max_levels + 1):
        # (a) sample the previous density and evaluate the limit state
        if density is None:
            Xj = rng.standard_normal((cfg.n_per_level, d))
        else:
            Xj = density.sample(rng, cfg.n_per_level)
        fj = problem.eval_batch(Xj)

        # (b) the training set accumulates every evaluation made so far
        train_X = np.vstack([train_X, Xj])
        train_f = np.concatenate([train_f, fj])

        # (c) next temperature by weight-CoV targeting
        if density is None:
            log_base = np.zeros(cfg.n_per_level)
        else:
            log_base = standard_normal_logpdf(Xj) - density.logpdf(Xj)
        eps_j, saturated = adapt_epsilon(
            fj,
            log_base,
            cfg.delta_target,
            eps_prev=eps_prev,
            variant=cfg.smoother,
        )
        smoothing = SmoothingConfig(variant=cfg.smoother, epsilon=eps_j)

        # (d) rotated surrogate on the accumulated evaluations
        log_w_all = np.asarray(log_smooth_indicator(-train_f, smoothing))
        if density is not None:
            log_w_all = log_w_all + standard_normal_logpdf(train_X) - density.logpdf(train_X)
        X_fit, f_fit = _cap_training_set(
            train_X, train_f, log_w_all, cfg.n_train_cap, cfg.cap_keep_fraction, cap_rng
        )
        if cfg.surrogate_target == "f":
            targets = f_fit
        else:
            targets = np.asarray(smooth_indicator(-f_fit, smoothing))
        if warm is None:
            train_cfg = cfg.train
        else:
            train_cfg = replace(
                cfg.train, n_starts=cfg.later_level_starts, init_hyperparams=warm
            )
        history = seq_ok_as(
            X_fit,
            targets,
            cfg.k_inner,
            n_mc_samples=cfg.n_mc_subspace,
            train_config=train_cfg,
            later_starts=cfg.later_starts,
            seed=seq_seeds[j - 1],
            keep_models="final",
            final_spectrum=False,
        )
        model = history.final.model
        W_k = history.final.state.W
        warm = model.hyperparams

        # (e) smoothed Fisher matrix by self-normalized IS over this level
        grad_log_L = _surrogate_grad_log_L(model, W_k, Xj, smoothing, cfg.surrogate_target)
        w_level = sn_weights(Xj, fj, smoothing, density)
        H_eps = estimate_H_eps(Xj, grad_log_L, w_level)

        # (f) reduction rank by spectral energy
        r_j = _select_rank(H_eps.eigenvalues, cfg.energy_threshold, cfg.r_max)
        W_r = H_eps.eigenvectors[:, :r_j]

        # (g) cross-entropy Gaussian fit in the projected space
        mean_j, cov_j = ce_gaussian_fit(Xj @ W_r, w_level)
        density = lifted_gaussian(W_r, mean_j, cov_j)
        eps_prev = eps_j

        # (h) stop when the indicator/smoother ratio stabilizes
        L_j = np.asarray(smooth_indicator(-fj, smoothing))
        mask = L_j >= cfg.stop_floor
        indicator = (fj <= 0).astype(float)
        stop_cov = math.inf
        if np.any(mask):
            ratio = indicator[mask] / L_j[mask]
            mean_ratio = float(ratio.mean())
            if mean_ratio > 0:
                stop_cov = float(ratio.std() / mean_ratio)

        wsum = float(w_level.sum())
        levels.append(
            ISLevelState(
                level_index=j,
                epsilon=eps_j,
                W_r=W_r,
                gauss_mean=mean_j,
                gauss_cov=cov_j,
                samples=Xj,
                f_values=fj,
                weights=w_level,
                cumulative_evals=problem.n_evals - evals_before,
                ess=wsum**2 / float((w_level**2).sum()),
                weight_cov=float(w_level.std() / w_level.mean()),
                stop_cov=stop_cov,
                saturated=saturated,
            )
        )
        if stop_cov <= cfg.delta_target or saturated:
            converged = True
            break

    # final importance-sampling estimate from the last fitted density
    p_hat, std_err, n_fail = _final_estimate(problem, density, n_final, rng)
    return EstimateRecord(
        p_hat=p_hat,
        n_evals_total=problem.n_evals - evals_before,
        levels=levels,
        n_final=n_final,
        seed=seed_int,
        method="ice_seqokas",
        converged=converged,
        no_failures=n_fail == 0,
        standard_error=std_err,
    )


def _surrogate_grad_log_L(model, W_k, X, smoothing, surrogate_target):
    """Gradient of log L_eps at rows of X through the rotated surrogate."""
    Z = X @ W_k
    grad_m = model.predict_grad(Z) @ W_k.T
    if surrogate_target == "f":
        m = model.predict(Z)
        factor = np.asarray(log_smooth_indicator_grad_factor(-m, smoothing))
        return -factor[:, None] * grad_m
    m = np.maximum(model.predict(Z), 1e-12)
    return grad_m / m[:, None]


def _final_estimate(problem, density, n_final, rng):
    if density is None:
        X = rng.standard_normal((n_final, problem.dim))
        log_ratio = np.zeros(n_final)
    else:
        X = density.sample(rng, n_final)
        log_ratio = standard_normal_logpdf(X) - density.logpdf(X)
    f = problem.eval_batch(X)
    failed = f <= 0
    terms = np.where(failed, np.exp(np.maximum(log_ratio, LOG_FLOOR)), 0.0)
    p_hat = float(terms.mean())
    std_err = float(terms.std(ddof=1) / math.sqrt(n_final)) if n_final > 1 else None
    return min(p_hat, 1.0), std_err, int(failed.sum())


def importance_sampling_estimate(problem: Problem, density, n: int, seed=None):
    """Standalone final-stage estimator: sample ``density`` (or q when
    None), weight by q over the density, average the failure indicator."""
    rng = np.random.default_rng(seed)
    return _final_estimate(problem, density, n, rng)


def crude_mc(
    problem: Problem,
    n: int,
    seed=None,
    batch_size: int = 200_000,
) -> EstimateRecord:
    """Plain Monte Carlo failure-probability estimate with its binomial
    standard error."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    evals_before = problem.n_evals
    n_fail = 0
    done = 0
    while done < n:
        m = min(batch_size, n - done)
        X = rng.standard_normal((m, problem.dim))
        n_fail += int(np.count_nonzero(problem.eval_batch(X) <= 0))
        done += m
    p_hat = n_fail / n
    std_err = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)
    seed_int = None if seed is None or isinstance(seed, np.random.SeedSequence) else int(seed)
    return EstimateRecord(
        p_hat=p_hat,
        n_evals_total=problem.n_evals - evals_before,
        levels=[],
        n_final=n,
        seed=seed_int,
        method="crude_mc",
        converged=True,
        no_failures=n_fail == 0,
        standard_error=std_err,
    )

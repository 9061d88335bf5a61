"""Ordinary-kriging Gaussian process regression with anisotropic RBF kernels.

The model is a GP with a constant trend estimated by generalized least
squares (the trend is profiled out of the marginal likelihood), a
squared-exponential kernel with one lengthscale per input dimension, and
a nugget term on the kernel diagonal.  Hyperparameters are trained by
multi-start quasi-Newton maximization of the profiled log marginal
likelihood with analytic gradients.

All public interfaces operate in the caller's coordinates.  Training
internally standardizes the inputs per dimension (which for this kernel
is exactly a rescaling of the lengthscales) so that initialization
ranges are meaningful across problems.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import cho_solve
from scipy.linalg.lapack import dpotrf, dpotri
from scipy.optimize import minimize

__all__ = [
    "FactorizationError",
    "TrainingError",
    "GPHyperparams",
    "TrainConfig",
    "GPModel",
    "kernel_eval",
    "kernel_matrix",
    "log_marginal_likelihood",
    "fit_gp",
    "posterior_mean",
    "posterior_mean_grad",
    "save_gp_model",
    "load_gp_model",
]

LOG_2PI = math.log(2.0 * math.pi)

SeedLike = Union[int, np.random.SeedSequence, None]


class FactorizationError(RuntimeError):
    """The kernel matrix could not be Cholesky-factored at the given nugget."""


class TrainingError(RuntimeError):
    """Hyperparameter training failed.

    ``nugget_ladder`` records the nugget values attempted before giving up.
    """

    def __init__(self, message: str, nugget_ladder: Sequence[float] = ()):
        super().__init__(message)
        self.nugget_ladder = tuple(nugget_ladder)


@dataclass(frozen=True)
class GPHyperparams:
    """Kernel hyperparameters: one lengthscale per dimension, a signal
    variance and a nugget (noise variance on the kernel diagonal)."""

    lengthscales: np.ndarray
    signal_variance: float
    nugget: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("lengthscales must be a non-empty 1-D array")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("lengthscales must be strictly positive and finite")
        if not (np.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise ValueError("signal_variance must be strictly positive and finite")
        if not (np.isfinite(self.nugget) and self.nugget >= 0):
            raise ValueError("nugget must be non-negative and finite")

    @property
    def dim(self) -> int:
        return self.lengthscales.size


@dataclass
class TrainConfig:
    """Settings for :func:`fit_gp`.

    ``n_starts`` initializations are used: one seeded by an isotropic
    warm-up at the pairwise-distance scale, the rest drawn log-uniformly
    with lengthscales in ``lengthscale_init_range`` times the
    per-dimension input range and signal variance in
    ``signal_init_range`` times the target variance.  If
    ``init_hyperparams`` is given it is used as one additional start,
    which lets callers warm-start from a previous fit.

    The nugget is optimized jointly with the other hyperparameters unless
    ``optimize_nugget`` is False, in which case it is held at ``nugget``
    (absolute value; defaults to the floor).  The floor and the escalation
    cap are relative to the target variance.
    """

    n_starts: int = 5
    maxiter: int = 200
    grad_tol: float = 1e-6
    optimize_nugget: bool = True
    nugget: Optional[float] = None
    nugget_floor_rel: float = 1e-8
    nugget_cap_rel: float = 1e-2
    lengthscale_init_range: tuple = (0.05, 5.0)
    signal_init_range: tuple = (0.1, 10.0)
    init_hyperparams: Optional[GPHyperparams] = None
    seed: SeedLike = None


@dataclass(frozen=True)
class GPModel:
    """A trained ordinary-kriging model.

    ``kernel_factor`` is the lower Cholesky factor of K + nugget*I on the
    training inputs and ``prediction_weights`` equals K^{-1}(y - trend*1).
    Instances are immutable and safe to share across threads for
    prediction.
    """

    train_inputs: np.ndarray
    train_targets: np.ndarray
    hyperparams: GPHyperparams
    trend_coeff: float
    kernel_factor: np.ndarray
    prediction_weights: np.ndarray
    log_marginal_likelihood: float
    seed: Optional[int] = None

    @property
    def n_train(self) -> int:
        return self.train_inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.train_inputs.shape[1]

    @classmethod
    def from_training_data(
        cls,
        inputs: np.ndarray,
        targets: np.ndarray,
        hyperparams: GPHyperparams,
        seed: Optional[int] = None,
    ) -> "GPModel":
        """Build the model state (factor, trend, weights) for fixed
        hyperparameters."""
        X = _as_2d(inputs)
        y = np.asarray(targets, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError("inputs and targets disagree on sample count")
        if X.shape[1] != hyperparams.dim:
            raise ValueError("input dimension does not match lengthscale count")
        K = kernel_matrix(X, None, hyperparams, include_nugget=True)
        L = _chol_lower(K)
        ones = np.ones(y.size)
        a = cho_solve((L, True), y, check_finite=False)
        b = cho_solve((L, True), ones, check_finite=False)
        trend = float(ones @ a) / float(ones @ b)
        alpha = a - trend * b
        resid = y - trend
        lml = (
            -0.5 * float(resid @ alpha)
            - float(np.sum(np.log(np.diag(L))))
            - 0.5 * y.size * LOG_2PI
        )
        return cls(
            train_inputs=X.copy(),
            train_targets=y.copy(),
            hyperparams=hyperparams,
            trend_coeff=trend,
            kernel_factor=L,
            prediction_weights=alpha,
            log_marginal_likelihood=lml,
            seed=seed,
        )

    def predict(self, x: np.ndarray, chunk_size: int = 4096) -> np.ndarray:
        """Posterior mean at query rows of ``x`` (m, d) -> (m,)."""
        Xq = _as_2d(x)
        if Xq.shape[1] != self.dim:
            raise ValueError("query dimension does not match the model")
        out = np.empty(Xq.shape[0])
        for lo in range(0, Xq.shape[0], chunk_size):
            hi = min(lo + chunk_size, Xq.shape[0])
            Kc = kernel_matrix(Xq[lo:hi], self.train_inputs, self.hyperparams)
            out[lo:hi] = self.trend_coeff + Kc @ self.prediction_weights
        return out

    def predict_grad(self, x: np.ndarray, chunk_size: int = 4096) -> np.ndarray:
        """Gradient of the posterior mean at query rows, (m, d) -> (m, d)."""
        Xq = _as_2d(x)
        if Xq.shape[1] != self.dim:
            raise ValueError("query dimension does not match the model")
        inv_ls2 = 1.0 / self.hyperparams.lengthscales**2
        out = np.empty_like(Xq)
        for lo in range(0, Xq.shape[0], chunk_size):
            hi = min(lo + chunk_size, Xq.shape[0])
            Kc = kernel_matrix(Xq[lo:hi], self.train_inputs, self.hyperparams)
            A = Kc * self.prediction_weights  # (m, n)
            row = A.sum(axis=1)
            out[lo:hi] = -(Xq[lo:hi] * row[:, None] - A @ self.train_inputs) * inv_ls2
        return out


def _as_2d(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("expected a vector or a 2-D array of row vectors")
    return arr


def _chol_lower(K: np.ndarray) -> np.ndarray:
    c, info = dpotrf(K, lower=1, overwrite_a=0)
    if info != 0:
        raise FactorizationError(f"Cholesky factorization failed (info={info})")
    return np.tril(c)


def kernel_eval(x: np.ndarray, x2: np.ndarray, h: GPHyperparams) -> float:
    """Anisotropic squared-exponential kernel between two points."""
    a = np.asarray(x, dtype=float).ravel()
    b = np.asarray(x2, dtype=float).ravel()
    if a.size != h.dim or b.size != h.dim:
        raise ValueError("point dimension does not match lengthscale count")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("kernel inputs must be finite")
    z = (a - b) / h.lengthscales
    return float(h.signal_variance * np.exp(-0.5 * float(z @ z)))


def kernel_matrix(
    X1: np.ndarray,
    X2: Optional[np.ndarray],
    h: GPHyperparams,
    include_nugget: bool = False,
) -> np.ndarray:
    """Kernel matrix between row sets.  ``X2=None`` means the symmetric
    matrix on ``X1`` (only then may the nugget be added)."""
    A = _as_2d(X1) / h.lengthscales
    if X2 is None:
        sq = np.einsum("ij,ij->i", A, A)
        D = sq[:, None] + sq[None, :] - 2.0 * (A @ A.T)
        np.maximum(D, 0.0, out=D)
        np.fill_diagonal(D, 0.0)
        K = h.signal_variance * np.exp(-0.5 * D)
        if include_nugget:
            K[np.diag_indices_from(K)] += h.nugget
        return K
    if include_nugget:
        raise ValueError("nugget only applies to the symmetric training matrix")
    B = _as_2d(X2) / h.lengthscales
    sqa = np.einsum("ij,ij->i", A, A)
    sqb = np.einsum("ij,ij->i", B, B)
    D = sqa[:, None] + sqb[None, :] - 2.0 * (A @ B.T)
    np.maximum(D, 0.0, out=D)
    return h.signal_variance * np.exp(-0.5 * D)


def _lml_and_grad(X: np.ndarray, y: np.ndarray, ell, sig2, nugget, want_grad=True):
    """Profiled log marginal likelihood and its gradient.

    Gradient entries are with respect to (log ell_1..d, log sig2, log nugget).
    Raises FactorizationError if K + nugget*I is not numerically SPD.
    """
    n, d = X.shape
    Z = X / ell
    sq = np.einsum("ij,ij->i", Z, Z)
    D = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    C = sig2 * np.exp(-0.5 * D)
    K = C.copy()
    K[np.diag_indices_from(K)] += nugget

    cfac, info = dpotrf(K, lower=1, overwrite_a=1)
    if info != 0:
        raise FactorizationError(f"Cholesky factorization failed (info={info})")

    ones = np.ones(n)
    a = cho_solve((cfac, True), y, check_finite=False)
    b = cho_solve((cfac, True), ones, check_finite=False)
    denom = float(ones @ b)
    if denom <= 0 or not np.isfinite(denom):
        raise FactorizationError("degenerate trend normalization")
    trend = float(ones @ a) / denom
    alpha = a - trend * b
    resid = y - trend
    logdet_half = float(np.sum(np.log(np.diag(cfac))))
    lml = -0.5 * float(resid @ alpha) - logdet_half - 0.5 * n * LOG_2PI
    if not want_grad:
        return lml, None, trend, alpha

    # S = alpha alpha^T - K^{-1}; the trend's dependence on the
    # hyperparameters drops out because 1^T K^{-1} resid = 0 at the GLS
    # optimum.
    kinv_tri, info = dpotri(cfac, lower=1)
    if info != 0:
        raise FactorizationError(f"inverse from factor failed (info={info})")
    Kinv = kinv_tri + np.tril(kinv_tri, -1).T
    S = np.outer(alpha, alpha) - Kinv
    T = S * C
    grad = np.empty(d + 2)
    # d/dlog ell_k: 0.5 * sum_ij T_ij (x_ik - x_jk)^2 / ell_k^2
    row = T.sum(axis=1)
    V = T @ X
    grad[:d] = (row @ (X * X) - np.einsum("ij,ij->j", X, V)) / ell**2
    grad[d] = 0.5 * float(T.sum())
    grad[d + 1] = 0.5 * nugget * (float(alpha @ alpha) - float(np.trace(Kinv)))
    return lml, grad, trend, alpha


def _profiled_lml_and_grad(X: np.ndarray, y: np.ndarray, ell, eta):
    """Log marginal likelihood with trend and signal variance profiled out.

    ``eta`` is the nugget-to-signal ratio; the correlation matrix is
    R + eta*I and the ML signal variance sigma2 = r^T (R+eta I)^{-1} r / n
    is substituted analytically.  Returns (lml, grad over (log ell, log
    eta), trend, sigma2).  Optimizing this concentrated form is much
    better conditioned than the joint objective: the signal-variance
    coordinate otherwise dominates the gradient and can throw the line
    search into a spike-interpolant basin.
    """
    n, d = X.shape
    Z = X / ell
    sq = np.einsum("ij,ij->i", Z, Z)
    D = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    R = np.exp(-0.5 * D)
    K = R.copy()
    K[np.diag_indices_from(K)] += eta

    cfac, info = dpotrf(K, lower=1, overwrite_a=1)
    if info != 0:
        raise FactorizationError(f"Cholesky factorization failed (info={info})")
    ones = np.ones(n)
    a = cho_solve((cfac, True), y, check_finite=False)
    b = cho_solve((cfac, True), ones, check_finite=False)
    denom = float(ones @ b)
    if denom <= 0 or not np.isfinite(denom):
        raise FactorizationError("degenerate trend normalization")
    trend = float(ones @ a) / denom
    alpha = a - trend * b
    resid = y - trend
    sigma2 = float(resid @ alpha) / n
    if sigma2 <= 0 or not np.isfinite(sigma2):
        raise FactorizationError("non-positive profiled signal variance")
    logdet_half = float(np.sum(np.log(np.diag(cfac))))
    lml = -0.5 * n * math.log(sigma2) - logdet_half - 0.5 * n * (1.0 + LOG_2PI)

    kinv_tri, info = dpotri(cfac, lower=1)
    if info != 0:
        raise FactorizationError(f"inverse from factor failed (info={info})")
    Kinv = kinv_tri + np.tril(kinv_tri, -1).T
    S = np.outer(alpha, alpha) / sigma2 - Kinv
    T = S * R
    grad = np.empty(d + 1)
    row = T.sum(axis=1)
    V = T @ X
    grad[:d] = (row @ (X * X) - np.einsum("ij,ij->j", X, V)) / ell**2
    grad[d] = 0.5 * eta * (float(alpha @ alpha) / sigma2 - float(np.trace(Kinv)))
    return lml, grad, trend, sigma2


def log_marginal_likelihood(inputs, targets, h: GPHyperparams):
    """Profiled log marginal likelihood and gradient for fixed data.

    Returns ``(value, grad)`` where ``grad`` is with respect to the log
    hyperparameters, ordered as (log lengthscales..., log signal variance,
    log nugget).
    """
    X = _as_2d(inputs)
    y = np.asarray(targets, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("inputs and targets disagree on sample count")
    if X.shape[1] != h.dim:
        raise ValueError("input dimension does not match lengthscale count")
    value, grad, _, _ = _lml_and_grad(
        X, y, h.lengthscales, h.signal_variance, h.nugget
    )
    return value, grad


def _draw_starts(rng, d, ranges, vscale, cfg: TrainConfig, floor: float):
    """Random log-space initializations per the configured ranges."""
    starts = []
    lo_l, hi_l = cfg.lengthscale_init_range
    lo_s, hi_s = cfg.signal_init_range
    for _ in range(max(cfg.n_starts - 1, 0)):
        ell = np.exp(
            np.log(lo_l * ranges)
            + rng.random(d) * (np.log(hi_l * ranges) - np.log(lo_l * ranges))
        )
        sig2 = math.exp(
            math.log(lo_s * vscale)
            + rng.random() * (math.log(hi_s * vscale) - math.log(lo_s * vscale))
        )
        tau = math.exp(
            math.log(max(1e-7 * vscale, floor))
            + rng.random() * (math.log(1e-3 * vscale) - math.log(max(1e-7 * vscale, floor)))
        )
        starts.append((ell, sig2, max(tau, floor)))
    return starts


def fit_gp(inputs, targets, cfg: Optional[TrainConfig] = None) -> GPModel:
    """Train an ordinary-kriging model by multi-start likelihood maximization.

    Raises TrainingError if no start yields a finite likelihood even after
    escalating the nugget floor, carrying the attempted nugget ladder.
    """
    cfg = cfg if cfg is not None else TrainConfig()
    X = _as_2d(inputs)
    y = np.asarray(targets, dtype=float).ravel()
    n, d = X.shape
    if n < 3:
        raise ValueError("at least 3 training points are required")
    if y.size != n:
        raise ValueError("inputs and targets disagree on sample count")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")

    var_y = float(np.var(y))
    vscale = var_y if var_y > 0 else 1.0

    # Standardize inputs; for this kernel that is exactly a per-dimension
    # lengthscale rescaling, undone before the model is returned.
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (X - mu) / sd
    ranges = Xs.max(axis=0) - Xs.min(axis=0)
    ranges = np.where(ranges > 0, ranges, 1.0)

    rng = np.random.default_rng(cfg.seed)
    floor = cfg.nugget_floor_rel * vscale
    cap = cfg.nugget_cap_rel * vscale
    fixed_nugget = None
    if not cfg.optimize_nugget:
        fixed_nugget = cfg.nugget if cfg.nugget is not None else floor

    starts = _draw_starts(rng, d, ranges, vscale, cfg, max(floor, 1e-300))
    if cfg.init_hyperparams is not None:
        h0 = cfg.init_hyperparams
        if h0.dim != d:
            raise ValueError("init_hyperparams dimension does not match inputs")
        starts.insert(
            0,
            (h0.lengthscales / sd, h0.signal_variance, max(h0.nugget, floor)),
        )
    if not starts and cfg.n_starts < 1:
        raise ValueError("n_starts must be >= 1 when no warm start is given")

    ladder = []
    include_wide = cfg.n_starts >= 1
    while True:
        best = _optimize_starts(
            Xs, y, starts, vscale, floor, fixed_nugget, cfg, include_wide
        )
        if best is not None:
            break
        ladder.append(fixed_nugget if fixed_nugget is not None else floor)
        floor = max(floor * 10.0, 1e-12 * vscale)
        if fixed_nugget is not None:
            fixed_nugget = max(fixed_nugget * 10.0, floor)
        if floor > cap and (fixed_nugget is None or fixed_nugget > cap):
            raise TrainingError(
                "no finite likelihood at any start after nugget escalation",
                nugget_ladder=ladder,
            )

    ell_s, sig2, tau = best
    h = GPHyperparams(
        lengthscales=ell_s * sd, signal_variance=sig2, nugget=tau
    )
    seed_int = int(rng.integers(2**31 - 1))
    try:
        return GPModel.from_training_data(X, y, h, seed=seed_int)
    except FactorizationError as exc:  # pragma: no cover - opt succeeded there
        raise TrainingError(str(exc), nugget_ladder=ladder) from exc


_LS_LOG_BOUNDS = (math.log(1e-3), math.log(1e4))


def _wide_start_preopt(objective, d, eta_bounds, options):
    """Bounded warm-up from the sqrt(2 d) pairwise-distance scale.

    The anisotropic likelihood in high dimension has a spike-interpolant
    basin (every lengthscale tiny, posterior flat away from the data)
    that a cold-start line search can jump into.  This pass raises the
    lengthscale floor to an eighth of the distance scale, which walls off
    that basin while leaving the structured optima reachable; the result
    is then re-optimized under the full bounds by the caller.
    """
    wide = math.sqrt(2.0 * d)
    lo = math.log(max(wide / 8.0, 1e-3))
    bounds = [(lo, _LS_LOG_BOUNDS[1])] * d + [eta_bounds]
    theta0 = np.concatenate([np.full(d, math.log(wide)), [eta_bounds[0]]])
    theta0[-1] = min(max(math.log(1e-4), eta_bounds[0]), eta_bounds[1])
    res = minimize(
        objective, theta0, jac=True, method="L-BFGS-B",
        bounds=bounds, options=options,
    )
    return np.exp(res.x[:d]), math.exp(res.x[d])


def _optimize_starts(Xs, y, starts, vscale, floor, fixed_nugget, cfg: TrainConfig,
                     include_wide: bool):
    """Run L-BFGS-B from every start; return the best (ell, sig2, nugget)
    in standardized coordinates, or None if every start failed.

    With a free nugget the concentrated objective over (log lengthscales,
    log nugget-to-signal ratio) is used and the signal variance recovered
    analytically; with a fixed nugget the joint (log lengthscales, log
    signal variance) objective is optimized directly.  When
    ``include_wide`` is set, one start comes from the isotropic warm-up.
    """
    n, d = Xs.shape
    opt_nugget = fixed_nugget is None
    options = {
        "maxiter": cfg.maxiter,
        "gtol": cfg.grad_tol,
        "ftol": 1e-12,
        "maxls": 40,
    }

    best_val = np.inf
    best_theta = None

    if opt_nugget:
        eta_lo = max(floor / vscale, 1e-300)
        eta_bounds = (math.log(eta_lo), math.log(10.0))
        bounds = [_LS_LOG_BOUNDS] * d + [eta_bounds]
        lb = np.array([b[0] for b in bounds])
        ub = np.array([b[1] for b in bounds])

        def objective(theta):
            try:
                lml, grad, _, _ = _profiled_lml_and_grad(
                    Xs, y, np.exp(theta[:d]), math.exp(theta[d])
                )
            except FactorizationError:
                return 1e25, np.zeros_like(theta)
            if not np.isfinite(lml):
                return 1e25, np.zeros_like(theta)
            return -lml, -grad

        if include_wide:
            ell_w, eta_w = _wide_start_preopt(objective, d, eta_bounds, options)
            starts = [(ell_w, 1.0, eta_w)] + starts

        for ell0, sig20, tau0 in starts:
            eta0 = min(max(tau0 / sig20, eta_lo), 10.0)
            theta0 = np.clip(
                np.concatenate([np.log(ell0), [math.log(eta0)]]), lb, ub
            )
            res = minimize(
                objective, theta0, jac=True, method="L-BFGS-B",
                bounds=bounds, options=options,
            )
            if np.isfinite(res.fun) and res.fun < min(best_val, 1e24):
                best_val = res.fun
                best_theta = res.x
        if best_theta is None:
            return None
        ell = np.exp(best_theta[:d])
        eta = math.exp(best_theta[d])
        _, _, _, sigma2 = _profiled_lml_and_grad(Xs, y, ell, eta)
        return ell, sigma2, max(sigma2 * eta, floor)

    if include_wide:
        starts = [(np.full(d, math.sqrt(2.0 * d)), vscale, fixed_nugget)] + starts
    bounds = [_LS_LOG_BOUNDS] * d + [(math.log(1e-9 * vscale), math.log(1e9 * vscale))]
    lb = np.array([b[0] for b in bounds])
    ub = np.array([b[1] for b in bounds])

    def objective(theta):
        try:
            lml, grad, _, _ = _lml_and_grad(
                Xs, y, np.exp(theta[:d]), math.exp(theta[d]), fixed_nugget
            )
        except FactorizationError:
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(lml):
            return 1e25, np.zeros_like(theta)
        return -lml, -grad[:-1]

    for ell0, sig20, _tau0 in starts:
        theta0 = np.clip(np.concatenate([np.log(ell0), [math.log(sig20)]]), lb, ub)
        res = minimize(
            objective, theta0, jac=True, method="L-BFGS-B",
            bounds=bounds, options=options,
        )
        if np.isfinite(res.fun) and res.fun < min(best_val, 1e24):
            best_val = res.fun
            best_theta = res.x
    if best_theta is None:
        return None
    return np.exp(best_theta[:d]), math.exp(best_theta[d]), fixed_nugget


def posterior_mean(model: GPModel, x) -> float:
    """Posterior mean at a single point."""
    return float(model.predict(np.asarray(x, dtype=float)[None, :])[0])


def posterior_mean_grad(model: GPModel, x) -> np.ndarray:
    """Gradient of the posterior mean at a single point."""
    return model.predict_grad(np.asarray(x, dtype=float)[None, :])[0]


GP_FILE_FORMAT = "seqas-gp-model-v1"


def save_gp_model(model: GPModel, path) -> None:
    """Serialize a model to a self-describing JSON file."""
    payload = {
        "format": GP_FILE_FORMAT,
        "n_train": model.n_train,
        "dim": model.dim,
        "lengthscales": model.hyperparams.lengthscales.tolist(),
        "signal_variance": model.hyperparams.signal_variance,
        "nugget": model.hyperparams.nugget,
        "trend_coeff": model.trend_coeff,
        "log_marginal_likelihood": model.log_marginal_likelihood,
        "seed": model.seed,
        "train_inputs": model.train_inputs.tolist(),
        "train_targets": model.train_targets.tolist(),
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_gp_model(path) -> GPModel:
    """Rebuild a model from :func:`save_gp_model` output."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != GP_FILE_FORMAT:
        raise ValueError(f"unrecognized model file format: {payload.get('format')!r}")
    h = GPHyperparams(
        lengthscales=np.asarray(payload["lengthscales"], dtype=float),
        signal_variance=float(payload["signal_variance"]),
        nugget=float(payload["nugget"]),
    )
    return GPModel.from_training_data(
        np.asarray(payload["train_inputs"], dtype=float),
        np.asarray(payload["train_targets"], dtype=float),
        h,
        seed=payload.get("seed"),
    )

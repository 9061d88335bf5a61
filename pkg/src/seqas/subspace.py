"""Active-subspace estimation from surrogate gradients.

The gradient covariance matrix H = E_q[grad f grad f^T] is estimated by
Monte Carlo over the input density using gradients of a kriging
posterior mean, so no simulator gradients (and no extra simulator calls)
are needed.  A single rotate-and-refit pass and its sequential version
(iteratively re-estimating the subspace from a GP retrained in the
rotated coordinates) are provided, together with the first-subspace-angle
and normalized-RMSE quality metrics.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import eigh, null_space

from .gp import GPHyperparams, GPModel, TrainConfig, TrainingError, fit_gp

__all__ = [
    "RankDeficiencyError",
    "RotationState",
    "ASEstimate",
    "SeqIterationRecord",
    "SeqOKASHistory",
    "estimate_H",
    "dominant_eigvecs",
    "fsa",
    "normalized_rmse",
    "ok_as",
    "seq_ok_as",
]


class RankDeficiencyError(RuntimeError):
    """The estimated gradient covariance is numerically zero."""


ORTHO_TOL = 1e-6


def _check_orthonormal(W: np.ndarray, name: str = "matrix", tol: float = ORTHO_TOL):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError(f"{name} must be 2-D")
    gram = W.T @ W
    if np.linalg.norm(gram - np.eye(W.shape[1])) > tol:
        raise ValueError(f"{name} does not have orthonormal columns")
    return W


@dataclass(frozen=True)
class RotationState:
    """Rotation/projection matrix W with r orthonormal columns at one
    iteration of the sequential loop."""

    W: np.ndarray
    r: int
    iteration_index: int

    def __post_init__(self):
        W = _check_orthonormal(self.W, "rotation", tol=1e-8)
        object.__setattr__(self, "W", W)
        if not (1 <= self.r <= W.shape[0]) or W.shape[1] != self.r:
            raise ValueError("column count r must be in [1, d] and match W")
        if self.iteration_index < 0:
            raise ValueError("iteration_index must be >= 0")

    @classmethod
    def identity(cls, d: int) -> "RotationState":
        return cls(W=np.eye(d), r=d, iteration_index=0)


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive."""
    V = vectors.copy()
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


@dataclass(frozen=True)
class ASEstimate:
    """A symmetric PSD matrix with its eigendecomposition sorted by
    descending eigenvalue and a deterministic column-sign convention."""

    H: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def from_matrix(cls, H: np.ndarray) -> "ASEstimate":
        H = np.asarray(H, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("H must be square")
        scale = np.linalg.norm(H)
        if scale > 0 and np.linalg.norm(H - H.T) > 1e-10 * scale:
            raise ValueError("H is not symmetric")
        Hs = 0.5 * (H + H.T)
        vals, vecs = eigh(Hs)
        order = np.argsort(vals)[::-1]
        return cls(
            H=Hs,
            eigenvalues=vals[order],
            eigenvectors=_sign_fix(vecs[:, order]),
        )

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def is_degenerate(self, abs_floor: float = 0.0) -> bool:
        """True when the matrix is zero to within machine noise.

        ``abs_floor`` supplies a problem-scale threshold (for example
        based on the target spread over a lengthscale) below which the
        trace is considered numerically flat.
        """
        trace = float(np.trace(self.H))
        return trace <= max(abs_floor, 0.0)


def estimate_H(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    sampler: Callable[[int], np.ndarray],
    n_samples: int,
    chunk_size: int = 4096,
) -> ASEstimate:
    """Monte Carlo estimate of the gradient covariance matrix.

    ``grad_fn`` maps an (m, d) batch of points to their (m, d) gradients
    and ``sampler(m)`` draws m points from the input density.  The result
    is (1/M) sum_j g(x_j) g(x_j)^T, which is PSD by construction.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    H = None
    done = 0
    while done < n_samples:
        m = min(chunk_size, n_samples - done)
        X = np.atleast_2d(np.asarray(sampler(m), dtype=float))
        if X.shape[0] != m:
            raise ValueError("sampler returned an unexpected number of rows")
        G = np.atleast_2d(np.asarray(grad_fn(X), dtype=float))
        if G.shape != X.shape:
            raise ValueError("grad_fn must return one gradient row per sample")
        bad = ~np.all(np.isfinite(G), axis=1)
        if np.any(bad):
            first = int(np.flatnonzero(bad)[0]) + done
            raise ValueError(f"non-finite gradient at sample index {first}")
        if H is None:
            if n_samples < X.shape[1]:
                warnings.warn(
                    "fewer Monte Carlo samples than input dimensions; "
                    "the covariance estimate will be rank deficient",
                    stacklevel=2,
                )
            H = np.zeros((X.shape[1], X.shape[1]))
        H += G.T @ G
        done += m
    H /= n_samples
    return ASEstimate.from_matrix(H)


def dominant_eigvecs(est: ASEstimate, r: int) -> np.ndarray:
    """First r eigenvector columns (descending eigenvalues, sign-fixed)."""
    if not 1 <= r <= est.dim:
        raise ValueError(f"r must be in [1, {est.dim}], got {r}")
    return est.eigenvectors[:, :r].copy()


def fsa(w_est: np.ndarray, w_true: np.ndarray) -> float:
    """First subspace angle metric ||w_est^T w_true_perp||_F.

    Zero when the spanned subspaces coincide; invariant to the choice of
    orthonormal complement basis and to column sign flips.
    """
    W1 = _check_orthonormal(np.asarray(w_est, dtype=float), "w_est")
    W2 = _check_orthonormal(np.asarray(w_true, dtype=float), "w_true")
    if W1.shape != W2.shape:
        raise ValueError("w_est and w_true must have the same shape")
    d, r = W2.shape
    if r == d:
        return 0.0
    comp = null_space(W2.T)
    return float(np.linalg.norm(W1.T @ comp))


def normalized_rmse(predictions: np.ndarray, truths: np.ndarray) -> float:
    """Root mean square error divided by the range of the truths."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truths, dtype=float).ravel()
    if p.size != t.size:
        raise ValueError("predictions and truths must have equal length")
    if t.size < 2:
        raise ValueError("at least 2 validation points are required")
    span = float(t.max() - t.min())
    if span <= 0:
        raise ValueError("constant truths give a zero normalization range")
    return float(np.sqrt(np.mean((p - t) ** 2)) / span)


@dataclass
class SeqIterationRecord:
    """State and diagnostics for one iteration of the sequential loop.

    ``eigenvalues`` is the spectrum of the gradient covariance estimated
    from this iteration's surrogate (the matrix whose dominant
    eigenvectors define the next rotation).
    """

    state: RotationState
    model: Optional[GPModel]
    rmse: float = math.nan
    fsa: float = math.nan
    eigenvalues: Optional[np.ndarray] = None


@dataclass
class SeqOKASHistory:
    """Per-iteration records 0..K of a sequential run."""

    records: list = field(default_factory=list)
    rank_deficient: bool = False

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final(self) -> SeqIterationRecord:
        return self.records[-1]

    def rmse_series(self) -> np.ndarray:
        return np.array([rec.rmse for rec in self.records])

    def fsa_series(self) -> np.ndarray:
        return np.array([rec.fsa for rec in self.records])

    def to_csv(self, path, gap_rank: Optional[int] = None) -> None:
        """Write `iteration,rmse,fsa,top_eigenvalue,eigenvalue_ratio_r`.

        ``eigenvalue_ratio_r`` is the spectral gap lambda_{r+1}/lambda_r at
        rank ``gap_rank`` (default: the rotation's column count, capped at
        d-1).  Missing values are written as empty fields.
        """
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iteration", "rmse", "fsa", "top_eigenvalue", "eigenvalue_ratio_r"]
            )
            for rec in self.records:
                top = ""
                ratio = ""
                if rec.eigenvalues is not None and rec.eigenvalues.size:
                    vals = rec.eigenvalues
                    top = _fmt(vals[0])
                    r = gap_rank if gap_rank is not None else rec.state.r
                    r = min(max(r, 1), vals.size - 1) if vals.size > 1 else 0
                    if r >= 1 and vals[r - 1] > 0:
                        ratio = _fmt(vals[r] / vals[r - 1])
                writer.writerow(
                    [
                        rec.state.iteration_index,
                        _fmt(rec.rmse),
                        _fmt(rec.fsa),
                        top,
                        ratio,
                    ]
                )


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), ".12g")


def _degeneracy_floor(model: GPModel) -> float:
    """Trace threshold below which the surrogate is flat to machine noise."""
    spread = float(np.std(model.train_targets))
    ls_min = float(np.min(model.hyperparams.lengthscales))
    if spread <= 0 or ls_min <= 0:
        return 0.0
    return 1e-14 * (spread / ls_min) ** 2


def _warm_hyperparams(
    h: GPHyperparams, r_new: int
) -> GPHyperparams:
    """Adapt a previous optimum to a new working dimension."""
    ls = h.lengthscales
    if ls.size == r_new:
        return h
    if ls.size > r_new:
        ls_new = ls[:r_new]
    else:
        fill = float(np.exp(np.mean(np.log(ls))))
        ls_new = np.concatenate([ls, np.full(r_new - ls.size, fill)])
    return GPHyperparams(ls_new, h.signal_variance, h.nugget)


def seq_ok_as(
    inputs,
    targets,
    n_iterations: int,
    *,
    truncation: Optional[Sequence[int]] = None,
    n_mc_samples: int = 10_000,
    train_config: Optional[TrainConfig] = None,
    later_starts: int = 2,
    warm_start: bool = True,
    validation: Optional[tuple] = None,
    w_true: Optional[np.ndarray] = None,
    sampler: Optional[Callable[[int], np.ndarray]] = None,
    initial_rotation: Optional[np.ndarray] = None,
    seed=None,
    keep_models: str = "all",
    final_spectrum: bool = True,
) -> SeqOKASHistory:
    """Sequential subspace re-estimation with rotated kriging surrogates.

    At each iteration k a GP is fitted to {W_k^T x_i, y_i}, the gradient
    covariance of the pulled-back posterior mean x -> W_k grad m(W_k^T x)
    is sampled over the input density, and W_{k+1} is set to its dominant
    eigenvectors (all d of them under the default pure-rotation schedule;
    ``truncation`` may prescribe a different column count per iteration).
    The target function is never evaluated; only the supplied training
    and validation values are used.

    Returns a history with records for iterations 0 through K, each
    holding the rotation state, the fitted surrogate (per ``keep_models``:
    "all", "final" or "none"), the validation RMSE and the subspace angle
    against ``w_true`` when those inputs are supplied, and the surrogate
    gradient-covariance spectrum (``final_spectrum=False`` skips the
    spectrum of the last record, which drives no rotation).
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    n, d = X.shape
    if n_iterations < 0:
        raise ValueError("n_iterations must be >= 0")
    if keep_models not in ("all", "final", "none"):
        raise ValueError("keep_models must be 'all', 'final' or 'none'")
    schedule = _resolve_schedule(truncation, n_iterations, d)
    base_cfg = train_config if train_config is not None else TrainConfig()

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    kids = ss.spawn(n_iterations + 2)
    mc_rng = np.random.default_rng(kids[-1])
    if sampler is None:
        sampler = lambda m: mc_rng.standard_normal((m, d))  # noqa: E731

    if initial_rotation is None:
        state = RotationState.identity(d)
        if schedule[0] != d:
            raise ValueError("iteration 0 uses the identity rotation with r_0 = d")
    else:
        W0 = _check_orthonormal(np.asarray(initial_rotation, dtype=float), "initial_rotation")
        state = RotationState(W=W0, r=W0.shape[1], iteration_index=0)
        if truncation is not None and schedule[0] != state.r:
            raise ValueError("truncation schedule r_0 must match the initial rotation")

    if w_true is not None:
        w_true = _check_orthonormal(np.asarray(w_true, dtype=float), "w_true")
    if validation is not None:
        X_val = np.atleast_2d(np.asarray(validation[0], dtype=float))
        y_val = np.asarray(validation[1], dtype=float).ravel()

    history = SeqOKASHistory()
    prev_h: Optional[GPHyperparams] = None
    for k in range(n_iterations + 1):
        cfg_k = _iteration_config(base_cfg, kids[k], prev_h, k, later_starts, warm_start)
        model = _fit_at_rotation(X, y, state, cfg_k, history, n_iterations)
        prev_h = model.hyperparams

        rec = SeqIterationRecord(state=state, model=model)
        if validation is not None:
            rec.rmse = normalized_rmse(model.predict(X_val @ state.W), y_val)
        if w_true is not None:
            r_cmp = min(w_true.shape[1], state.r)
            rec.fsa = fsa(state.W[:, :r_cmp], w_true[:, :r_cmp])

        W_k = state.W

        def pullback_grad(pts, model=model, W_k=W_k):
            return model.predict_grad(pts @ W_k) @ W_k.T

        stopping = k == n_iterations
        if stopping and not final_spectrum:
            history.records.append(rec)
            break
        est = estimate_H(pullback_grad, sampler, n_mc_samples)
        rec.eigenvalues = est.eigenvalues.copy()
        if not stopping and est.is_degenerate(_degeneracy_floor(model)):
            history.rank_deficient = True
            stopping = True
        if keep_models == "none" or (keep_models == "final" and not stopping):
            rec.model = None
        history.records.append(rec)
        if stopping:
            break
        r_next = schedule[k + 1]
        state = RotationState(
            W=dominant_eigvecs(est, r_next), r=r_next, iteration_index=k + 1
        )
    return history


def _resolve_schedule(truncation, n_iterations, d):
    if truncation is None:
        return [d] * (n_iterations + 1)
    schedule = list(truncation)
    if len(schedule) != n_iterations + 1:
        raise ValueError("truncation schedule must list r_k for k = 0..K")
    for r in schedule:
        if not 1 <= r <= d:
            raise ValueError("every r_k must be in [1, d]")
    return schedule


def _iteration_config(base, seed_k, prev_h, k, later_starts, warm_start):
    if k == 0 or not warm_start or prev_h is None:
        return replace(base, seed=seed_k)
    return replace(
        base,
        seed=seed_k,
        n_starts=later_starts,
        init_hyperparams=prev_h,
    )


def _fit_at_rotation(X, y, state, cfg, history, n_iterations):
    if cfg.init_hyperparams is not None and cfg.init_hyperparams.dim != state.r:
        cfg.init_hyperparams = _warm_hyperparams(cfg.init_hyperparams, state.r)
    try:
        return fit_gp(X @ state.W, y, cfg)
    except TrainingError as exc:
        raise TrainingError(
            f"surrogate training failed at iteration {state.iteration_index} "
            f"of {n_iterations} (partial history length {len(history)})",
            nugget_ladder=exc.nugget_ladder,
        ) from exc


def ok_as(
    inputs,
    targets,
    r: int,
    n_mc_samples: int = 10_000,
    *,
    train_config: Optional[TrainConfig] = None,
    seed=None,
) -> tuple:
    """Single rotate-and-refit pass: fit a GP, estimate the gradient
    covariance, rotate onto its top ``r`` eigenvectors and refit.

    Returns ``(W, model)`` with W of shape (d, r) and the GP trained on
    the projected inputs.  Raises RankDeficiencyError when the surrogate
    gradient covariance is numerically zero (for example for constant
    targets).
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    d = X.shape[1]
    if not 1 <= r <= d:
        raise ValueError(f"r must be in [1, {d}], got {r}")
    history = seq_ok_as(
        inputs,
        targets,
        1,
        truncation=[d, r],
        n_mc_samples=n_mc_samples,
        train_config=train_config,
        seed=seed,
        keep_models="all",
    )
    if history.rank_deficient or len(history) < 2:
        raise RankDeficiencyError(
            "gradient covariance is numerically rank deficient; "
            "no informative rotation exists"
        )
    final = history.final
    return final.state.W, final.model

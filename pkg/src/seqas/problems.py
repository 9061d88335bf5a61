"""Benchmark problems with known structure.

All problems live on standard-normal input space (an isoprobabilistic
transform is assumed to have been applied upstream; a transform
descriptor hook is carried for bookkeeping).  Evaluations are counted
exactly, one increment per input row, under a lock so the counter stays
correct for concurrent callers.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

__all__ = [
    "Problem",
    "make_quadratic_ridge",
    "quadratic_reliability",
    "linear_limit_state",
    "make_problem",
    "PROBLEM_REGISTRY",
]


@dataclass
class Problem:
    """A limit-state/objective function with input dimension, counted
    evaluations and optional ground truth.

    ``w_true`` (orthonormal columns spanning the true active subspace),
    ``p_f_true`` and ``threshold`` are present where the construction
    makes them known.  ``true_grad`` evaluates the exact gradient on a
    batch for problems where it is available; it is ground truth for
    validation, not part of the estimation path.
    """

    name: str
    dim: int
    _fn: Callable[[np.ndarray], np.ndarray]
    input_space: str = "standard_normal"
    transform: Optional[str] = None
    w_true: Optional[np.ndarray] = None
    p_f_true: Optional[float] = None
    threshold: Optional[float] = None
    true_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    noise_sd: float = 0.0
    _noise_rng: Optional[np.random.Generator] = None
    _count: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.w_true is not None:
            W = np.asarray(self.w_true, dtype=float)
            gram = W.T @ W
            if np.linalg.norm(gram - np.eye(W.shape[1])) > 1e-8:
                raise ValueError("w_true must have orthonormal columns")
            self.w_true = W

    @property
    def n_evals(self) -> int:
        return self._count

    def reset_counter(self) -> None:
        with self._lock:
            self._count = 0

    def eval(self, x) -> float:
        """Evaluate one point (counts as one call)."""
        return float(self.eval_batch(np.asarray(x, dtype=float)[None, :])[0])

    def eval_batch(self, X) -> np.ndarray:
        """Evaluate (N, d) rows; counts N calls."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {X.shape[1]}")
        values = np.asarray(self._fn(X), dtype=float)
        with self._lock:
            self._count += X.shape[0]
            if self.noise_sd > 0:
                values = values + self._noise_rng.normal(
                    0.0, self.noise_sd, size=values.shape
                )
        return values

    def noiseless(self) -> "Problem":
        """A copy with observation noise disabled and a fresh counter."""
        return Problem(
            name=self.name,
            dim=self.dim,
            _fn=self._fn,
            input_space=self.input_space,
            transform=self.transform,
            w_true=None if self.w_true is None else self.w_true.copy(),
            p_f_true=self.p_f_true,
            threshold=self.threshold,
            true_grad=self.true_grad,
            noise_sd=0.0,
        )


def _haar_orthonormal(d: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal d x r matrix with Haar-distributed column span."""
    M = rng.standard_normal((d, r))
    Q, R = np.linalg.qr(M)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def make_quadratic_ridge(
    d: int, r: int, seed=None, noise_sd: float = 0.05
) -> Problem:
    """Random quadratic ridge: z^T A z + b z + c (+ noise) with z the
    projection of x onto a random r-dimensional subspace.

    A, b and c have independent standard-normal entries; the observation
    noise is re-sampled per evaluation from a problem-owned stream.
    """
    if not 1 <= r <= d:
        raise ValueError(f"r must be in [1, {d}], got {r}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    param_ss, noise_ss = ss.spawn(2)
    rng = np.random.default_rng(param_ss)
    A = rng.standard_normal((r, r))
    b = rng.standard_normal(r)
    c = float(rng.standard_normal())
    W = _haar_orthonormal(d, r, rng)
    A_sym = A + A.T  # gradient of z^T A z is (A + A^T) z

    def fn(X, W=W, A=A, b=b, c=c):
        Z = X @ W
        return np.einsum("ij,jk,ik->i", Z, A, Z) + Z @ b + c

    def grad(X, W=W, A_sym=A_sym, b=b):
        Z = X @ W
        return (Z @ A_sym.T + b) @ W.T

    return Problem(
        name=f"quadratic_ridge(d={d},r={r})",
        dim=d,
        _fn=fn,
        w_true=W,
        true_grad=grad,
        noise_sd=noise_sd,
        _noise_rng=np.random.default_rng(noise_ss),
    )


def quadratic_reliability(d: int = 100) -> Problem:
    """Limit state g(x) = 4 + (5/4)(x1 - x2)^2 - (1/sqrt(d)) sum_i x_i
    with failure {g <= 0} and a 2-dimensional active subspace.

    For d = 100 the failure probability is 6.62e-6 (confirmed here by a
    large crude Monte Carlo run and by 1-D quadrature over the two
    sufficient statistics).
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    inv_sqrt_d = 1.0 / np.sqrt(d)

    def fn(X, inv_sqrt_d=inv_sqrt_d):
        return 4.0 + 1.25 * (X[:, 0] - X[:, 1]) ** 2 - inv_sqrt_d * X.sum(axis=1)

    def grad(X, d=d, inv_sqrt_d=inv_sqrt_d):
        G = np.full(X.shape, -inv_sqrt_d)
        t = 2.5 * (X[:, 0] - X[:, 1])
        G[:, 0] += t
        G[:, 1] -= t
        return G

    w1 = np.zeros(d)
    w1[0], w1[1] = 1.0, -1.0
    w1 /= np.sqrt(2.0)
    w2 = np.full(d, inv_sqrt_d)
    W = np.column_stack([w1, w2])

    return Problem(
        name=f"quadratic_reliability(d={d})",
        dim=d,
        _fn=fn,
        w_true=W,
        p_f_true=6.62e-6 if d == 100 else None,
        threshold=4.0,
        true_grad=grad,
    )


def linear_limit_state(d: int, beta: float) -> Problem:
    """Limit state g(x) = beta - (1/sqrt(d)) sum_i x_i; the failure
    probability is exactly Phi(-beta)."""
    if not np.isfinite(beta):
        raise ValueError("beta must be finite")
    inv_sqrt_d = 1.0 / np.sqrt(d)

    def fn(X, beta=beta, inv_sqrt_d=inv_sqrt_d):
        return beta - inv_sqrt_d * X.sum(axis=1)

    def grad(X, inv_sqrt_d=inv_sqrt_d):
        return np.full(X.shape, -inv_sqrt_d)

    return Problem(
        name=f"linear_limit_state(d={d},beta={beta:g})",
        dim=d,
        _fn=fn,
        w_true=np.full((d, 1), inv_sqrt_d),
        p_f_true=float(norm.cdf(-beta)),
        threshold=float(beta),
        true_grad=grad,
    )


PROBLEM_REGISTRY = {
    "quadratic_ridge": make_quadratic_ridge,
    "quadratic_reliability": quadratic_reliability,
    "linear_limit_state": linear_limit_state,
}


def make_problem(name: str, **params) -> Problem:
    """Instantiate a registered problem by name."""
    try:
        factory = PROBLEM_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(PROBLEM_REGISTRY))
        raise ValueError(f"unknown problem {name!r}; known problems: {known}") from None
    return factory(**params)

"""Smooth approximations of the failure indicator and the weighted
gradient-covariance estimator built on them.

Two sigmoid families approximate the Heaviside step t -> 1[t >= 0]: the
squared normal CDF (Phi(t / (eps*sqrt(2)))^2, evaluated through the CDF
identity rather than by quadrature) and the logistic 0.5*(1 +
tanh(t/eps)).  Both sharpen to the indicator as eps -> 0 and admit
stable log-space evaluation deep in the tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .subspace import ASEstimate

__all__ = [
    "SmoothingConfig",
    "smooth_indicator",
    "log_smooth_indicator",
    "log_smooth_indicator_grad_factor",
    "estimate_H_eps",
]

VARIANTS = ("cdf_squared", "logistic")

# Lower clamp applied to log-values before exponentiation in weight
# computations; keeps weights representable without materially changing
# any self-normalized quantity.
LOG_FLOOR = -700.0

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SmoothingConfig:
    """A smoother family and its temperature.  ``epsilon=inf`` is the
    fully-smoothed sentinel (a constant function of t)."""

    variant: str = "logistic"
    epsilon: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not self.epsilon > 0 or math.isnan(self.epsilon):
            raise ValueError("epsilon must be positive")


def _scaled(t, cfg: SmoothingConfig):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("smoother argument must be finite")
    if math.isinf(cfg.epsilon):
        return np.zeros_like(t)
    return t / cfg.epsilon


def smooth_indicator(t, cfg: SmoothingConfig):
    """Sigmoid approximation of 1[t >= 0]; strictly increasing in t,
    valued in (0, 1)."""
    u = _scaled(t, cfg)
    if cfg.variant == "logistic":
        out = 0.5 * (1.0 + np.tanh(u))
    else:
        out = np.exp(2.0 * log_ndtr(u / math.sqrt(2.0)))
    return out if out.ndim else float(out)


def log_smooth_indicator(t, cfg: SmoothingConfig):
    """log of :func:`smooth_indicator`, stable for t far below -epsilon."""
    u = _scaled(t, cfg)
    if cfg.variant == "logistic":
        # log sigmoid(2u) = -log(1 + exp(-2u))
        out = -np.logaddexp(0.0, -2.0 * u)
    else:
        out = 2.0 * log_ndtr(u / math.sqrt(2.0))
    return out if out.ndim else float(out)


def log_smooth_indicator_grad_factor(t, cfg: SmoothingConfig):
    """d/dt log h(t): strictly positive, vanishing as t -> +inf.

    The gradient of log L(x) with L(x) = h(-f(x)) is minus this factor
    evaluated at t = -f(x), times grad f(x).
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("smoother argument must be finite")
    if math.isinf(cfg.epsilon):
        out = np.zeros_like(t)
        return out if out.ndim else float(out)
    u = t / cfg.epsilon
    if cfg.variant == "logistic":
        # (1 - tanh(u))/eps written as 2*sigmoid(-2u)/eps
        out = (2.0 / cfg.epsilon) * np.exp(-np.logaddexp(0.0, 2.0 * u))
    else:
        v = u / math.sqrt(2.0)
        log_phi = -0.5 * v * v - _HALF_LOG_2PI
        out = (2.0 / (cfg.epsilon * math.sqrt(2.0))) * np.exp(log_phi - log_ndtr(v))
    return out if out.ndim else float(out)


def estimate_H_eps(samples, grad_log_L, weights) -> ASEstimate:
    """Self-normalized importance-sampling estimate of the weighted
    gradient covariance sum_i w_i g_i g_i^T / sum_i w_i.

    ``grad_log_L`` holds the gradient rows evaluated at ``samples``;
    the result is invariant to rescaling all weights by a positive
    constant.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    G = np.atleast_2d(np.asarray(grad_log_L, dtype=float))
    w = np.asarray(weights, dtype=float).ravel()
    if G.shape[0] != X.shape[0] or w.size != X.shape[0]:
        raise ValueError("samples, gradients and weights disagree on length")
    if G.shape[1] != X.shape[1]:
        raise ValueError("gradient rows must match the sample dimension")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    total = float(w.sum())
    if total <= 0:
        raise ValueError("degenerate IS population: all weights are zero")
    if not np.all(np.isfinite(G)):
        raise ValueError("gradients must be finite")
    Gw = G * np.sqrt(w / total)[:, None]
    return ASEstimate.from_matrix(Gw.T @ Gw)

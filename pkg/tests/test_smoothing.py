import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqas.smoothing import (
    SmoothingConfig,
    estimate_H_eps,
    log_smooth_indicator,
    log_smooth_indicator_grad_factor,
    smooth_indicator,
)
from seqas.subspace import estimate_H


class TestSmoothIndicator:
    def test_cdf_squared_at_zero(self):
        cfg = SmoothingConfig("cdf_squared", 0.7)
        assert smooth_indicator(0.0, cfg) == pytest.approx(0.25, rel=1e-12)

    def test_logistic_at_zero(self):
        cfg = SmoothingConfig("logistic", 2.3)
        assert smooth_indicator(0.0, cfg) == pytest.approx(0.5, rel=1e-12)

    def test_logistic_saturates(self):
        cfg = SmoothingConfig("logistic", 1.0)
        assert smooth_indicator(40.0, cfg) == pytest.approx(1.0, abs=1e-12)

    def test_strictly_increasing_on_grid(self):
        t = np.linspace(-20, 20, 10_000)
        for variant in ("logistic", "cdf_squared"):
            vals = smooth_indicator(t, SmoothingConfig(variant, 1.3))
            assert np.all(np.diff(vals) >= 0)
            # strict wherever double precision can resolve the increment
            interior = (vals[:-1] > 1e-12) & (vals[1:] < 1.0 - 1e-12)
            assert np.all(np.diff(vals)[interior] > 0)
            # and the log form is strictly increasing over the whole grid
            logs = log_smooth_indicator(t, SmoothingConfig(variant, 1.3))
            assert np.all(np.diff(logs) > 0)
            assert np.all(vals > 0) and np.all(vals <= 1.0)

    def test_pointwise_convergence_to_indicator(self):
        for variant in ("logistic", "cdf_squared"):
            for t in (-2.0, -0.5, 0.5, 2.0):
                eps = abs(t) / 5.0
                val = smooth_indicator(t, SmoothingConfig(variant, eps))
                assert abs(val - (1.0 if t >= 0 else 0.0)) <= 0.01

    def test_infinite_epsilon_sentinel_is_constant(self):
        cfg = SmoothingConfig("logistic", math.inf)
        vals = smooth_indicator(np.array([-5.0, 0.0, 7.0]), cfg)
        np.testing.assert_allclose(vals, 0.5)
        cfg2 = SmoothingConfig("cdf_squared", math.inf)
        np.testing.assert_allclose(
            smooth_indicator(np.array([-5.0, 7.0]), cfg2), 0.25
        )

    def test_log_matches_direct_value(self):
        t = np.linspace(-5, 5, 101)
        for variant in ("logistic", "cdf_squared"):
            cfg = SmoothingConfig(variant, 0.8)
            # the direct tanh form loses a few digits to cancellation in
            # the left tail; the log path is the more accurate of the two
            np.testing.assert_allclose(
                np.exp(log_smooth_indicator(t, cfg)),
                smooth_indicator(t, cfg),
                rtol=1e-9,
            )

    def test_log_stable_deep_negative(self):
        cfg = SmoothingConfig("logistic", 1.0)
        assert log_smooth_indicator(-500.0, cfg) == pytest.approx(-1000.0, rel=1e-9)
        cfg2 = SmoothingConfig("cdf_squared", 1.0)
        val = log_smooth_indicator(-100.0, cfg2)
        assert np.isfinite(val) and val < -1000

    def test_rejects_nonfinite_argument(self):
        with pytest.raises(ValueError):
            smooth_indicator(np.inf, SmoothingConfig("logistic", 1.0))

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            SmoothingConfig("sigmoid", 1.0)
        with pytest.raises(ValueError):
            SmoothingConfig("logistic", 0.0)


class TestGradFactor:
    def test_logistic_closed_form(self):
        cfg = SmoothingConfig("logistic", 1.0)
        assert log_smooth_indicator_grad_factor(0.0, cfg) == pytest.approx(1.0)
        eps = 0.6
        t = np.linspace(-4, 4, 41)
        expected = (1.0 - np.tanh(t / eps)) / eps
        got = log_smooth_indicator_grad_factor(t, SmoothingConfig("logistic", eps))
        np.testing.assert_allclose(got, expected, rtol=1e-10)

    @pytest.mark.parametrize("variant", ["logistic", "cdf_squared"])
    def test_matches_finite_differences(self, variant):
        eps = 1.4
        cfg = SmoothingConfig(variant, eps)
        ts = np.linspace(-10 * eps, 10 * eps, 81)
        h = 1e-6 * eps
        fd = (
            np.asarray(log_smooth_indicator(ts + h, cfg))
            - np.asarray(log_smooth_indicator(ts - h, cfg))
        ) / (2 * h)
        got = log_smooth_indicator_grad_factor(ts, cfg)
        np.testing.assert_allclose(got, fd, rtol=1e-6, atol=1e-12)

    @pytest.mark.parametrize("variant", ["logistic", "cdf_squared"])
    def test_fd_agreement_wherever_representable(self, variant):
        # relative 1e-5 agreement anywhere the smoother itself is > 1e-300
        cfg = SmoothingConfig(variant, 0.5)
        ts = np.linspace(-18, 18, 60)  # h > 1e-300 throughout this range
        h = 1e-7
        fd = (
            np.asarray(log_smooth_indicator(ts + h, cfg))
            - np.asarray(log_smooth_indicator(ts - h, cfg))
        ) / (2 * h)
        got = log_smooth_indicator_grad_factor(ts, cfg)
        np.testing.assert_allclose(got, fd, rtol=1e-5)

    @pytest.mark.parametrize("variant", ["logistic", "cdf_squared"])
    def test_saturation(self, variant):
        cfg = SmoothingConfig(variant, 1.0)
        assert log_smooth_indicator_grad_factor(50.0, cfg) <= 1e-10
        assert np.all(
            np.asarray(
                log_smooth_indicator_grad_factor(np.linspace(-9, 9, 50), cfg)
            )
            > 0
        )


class TestEstimateHEps:
    def test_uniform_weights_match_plain_average(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((40, 3))
        G = rng.standard_normal((40, 3))
        weighted = estimate_H_eps(X, G, np.ones(40))
        idx = [0]

        def grad_fn(P):
            lo = idx[0]
            idx[0] += P.shape[0]
            return G[lo : idx[0]]

        plain = estimate_H(grad_fn, lambda m: X[: m], 40)
        np.testing.assert_allclose(weighted.H, plain.H, atol=1e-12)

    def test_single_nonzero_weight(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((10, 2))
        G = rng.standard_normal((10, 2))
        w = np.zeros(10)
        w[4] = 2.7
        est = estimate_H_eps(X, G, w)
        np.testing.assert_allclose(est.H, np.outer(G[4], G[4]), atol=1e-12)

    def test_direct_summation_oracle(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((5, 3))
        G = rng.standard_normal((5, 3))
        w = rng.uniform(0.1, 2.0, 5)
        expected = np.zeros((3, 3))
        for i in range(5):
            expected += w[i] * np.outer(G[i], G[i])
        expected /= w.sum()
        est = estimate_H_eps(X, G, w)
        np.testing.assert_allclose(est.H, expected, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(scale=st.floats(min_value=1e-6, max_value=1e6))
    def test_scale_invariance(self, scale):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((12, 2))
        G = rng.standard_normal((12, 2))
        w = rng.uniform(0.0, 1.0, 12)
        w[0] = 0.5
        base = estimate_H_eps(X, G, w)
        scaled = estimate_H_eps(X, G, w * scale)
        np.testing.assert_allclose(scaled.H, base.H, atol=1e-12 * max(1, scale))

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ValueError, match="degenerate IS population"):
            estimate_H_eps(np.zeros((4, 2)), np.ones((4, 2)), np.zeros(4))

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            estimate_H_eps(np.zeros((3, 2)), np.ones((3, 2)), np.array([1.0, -0.1, 0.2]))

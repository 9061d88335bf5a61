import numpy as np
import pytest

from seqas.gp import TrainConfig
from seqas.problems import make_quadratic_ridge
from seqas.subspace import (
    ASEstimate,
    RankDeficiencyError,
    RotationState,
    dominant_eigvecs,
    estimate_H,
    fsa,
    normalized_rmse,
    ok_as,
    seq_ok_as,
)


def _power_iteration_eig(H, n_vecs, iters=10_000, seed=0):
    """Brute-force dominant eigenpairs by power iteration with deflation;
    independent of any library eigensolver."""
    rng = np.random.default_rng(seed)
    H = H.astype(float).copy()
    d = H.shape[0]
    vals, vecs = [], []
    for _ in range(n_vecs):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        for _ in range(iters):
            w = H @ v
            norm = np.linalg.norm(w)
            if norm == 0:
                break
            v_new = w / norm
            if np.linalg.norm(v_new - v) < 1e-14 or np.linalg.norm(v_new + v) < 1e-14:
                v = v_new
                break
            v = v_new
        lam = float(v @ H @ v)
        vals.append(lam)
        vecs.append(v.copy())
        H -= lam * np.outer(v, v)
    return np.array(vals), np.column_stack(vecs)


class TestEstimateH:
    def test_linear_function_rank_one(self):
        b = np.array([2.0, -1.0, 0.5])
        grad_fn = lambda X: np.tile(b, (X.shape[0], 1))  # noqa: E731
        rng = np.random.default_rng(0)
        est = estimate_H(grad_fn, lambda m: rng.standard_normal((m, 3)), 500)
        np.testing.assert_allclose(est.H, np.outer(b, b), atol=1e-12)
        assert est.eigenvalues[0] == pytest.approx(float(b @ b), rel=1e-12)
        top = est.eigenvectors[:, 0]
        unit = b / np.linalg.norm(b)
        assert min(np.linalg.norm(top - unit), np.linalg.norm(top + unit)) < 1e-10

    def test_constant_function_zero(self):
        rng = np.random.default_rng(1)
        est = estimate_H(
            lambda X: np.zeros_like(X), lambda m: rng.standard_normal((m, 4)), 200
        )
        np.testing.assert_array_equal(est.H, np.zeros((4, 4)))

    def test_quadratic_analytic_expectation(self):
        # f(x) = x^T A x with A symmetric and x ~ N(0, I) has gradient
        # covariance E[(2Ax)(2Ax)^T] = 4 A^2
        rng = np.random.default_rng(2)
        A = rng.standard_normal((5, 5))
        A = 0.5 * (A + A.T)
        grad_fn = lambda X: 2.0 * X @ A  # noqa: E731
        sampler_rng = np.random.default_rng(3)
        est = estimate_H(
            grad_fn, lambda m: sampler_rng.standard_normal((m, 5)), 100_000
        )
        expected = 4.0 * A @ A
        rel = np.linalg.norm(est.H - expected) / np.linalg.norm(expected)
        assert rel <= 0.05

    def test_psd_up_to_roundoff(self):
        rng = np.random.default_rng(4)
        grad_fn = lambda X: np.sin(X) + X**2  # noqa: E731
        est = estimate_H(grad_fn, lambda m: rng.standard_normal((m, 6)), 2000)
        assert est.eigenvalues[-1] >= -1e-10 * max(est.eigenvalues[0], 1e-300)

    def test_nonfinite_gradient_identified(self):
        def grad_fn(X):
            G = np.ones_like(X)
            G[3, 0] = np.nan
            return G

        rng = np.random.default_rng(5)
        with pytest.raises(ValueError, match="sample index 3"):
            estimate_H(grad_fn, lambda m: rng.standard_normal((m, 2)), 10)

    def test_warns_when_undersampled(self):
        rng = np.random.default_rng(6)
        with pytest.warns(UserWarning):
            estimate_H(
                lambda X: X, lambda m: rng.standard_normal((m, 10)), 5
            )


class TestDominantEigvecs:
    def test_diagonal_case(self):
        est = ASEstimate.from_matrix(np.diag([3.0, 1.0, 2.0]))
        W = dominant_eigvecs(est, 1)
        np.testing.assert_allclose(W[:, 0], [1.0, 0.0, 0.0], atol=1e-12)

    def test_rank_one_case(self):
        b = np.array([1.0, 1.0]) / np.sqrt(2.0)
        est = ASEstimate.from_matrix(np.outer(b, b))
        W = dominant_eigvecs(est, 1)
        np.testing.assert_allclose(W[:, 0], b, atol=1e-12)

    def test_matches_power_iteration_oracle(self):
        rng = np.random.default_rng(7)
        M = rng.standard_normal((6, 6))
        H = M @ M.T  # PSD with distinct eigenvalues almost surely
        est = ASEstimate.from_matrix(H)
        vals, vecs = _power_iteration_eig(H, 6)
        np.testing.assert_allclose(est.eigenvalues, vals, rtol=1e-8)
        for i in range(6):
            v, w = vecs[:, i], est.eigenvectors[:, i]
            assert min(np.linalg.norm(v - w), np.linalg.norm(v + w)) < 1e-6

    def test_range_check(self):
        est = ASEstimate.from_matrix(np.eye(3))
        with pytest.raises(ValueError):
            dominant_eigvecs(est, 0)
        with pytest.raises(ValueError):
            dominant_eigvecs(est, 4)

    def test_sign_convention(self):
        est = ASEstimate.from_matrix(np.diag([2.0, 1.0]))
        W = dominant_eigvecs(est, 2)
        idx = np.argmax(np.abs(W), axis=0)
        assert np.all(W[idx, np.arange(2)] > 0)


class TestFSA:
    def test_identical_subspaces(self):
        rng = np.random.default_rng(8)
        W, _ = np.linalg.qr(rng.standard_normal((5, 2)))
        assert fsa(W, W) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_case(self):
        e1 = np.array([[1.0], [0.0]])
        e2 = np.array([[0.0], [1.0]])
        assert fsa(e2, e1) == pytest.approx(1.0, rel=1e-12)

    def test_45_degrees(self):
        e1 = np.array([[1.0], [0.0]])
        diag = np.array([[1.0], [1.0]]) / np.sqrt(2.0)
        assert fsa(diag, e1) == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-12)

    def test_complement_identity(self):
        # ||W_est^T W_perp||_F^2 = r - ||W_est^T W_true||_F^2
        rng = np.random.default_rng(9)
        for _ in range(5):
            W1, _ = np.linalg.qr(rng.standard_normal((7, 3)))
            W2, _ = np.linalg.qr(rng.standard_normal((7, 3)))
            expected = np.sqrt(3 - np.linalg.norm(W1.T @ W2) ** 2)
            assert fsa(W1, W2) == pytest.approx(expected, abs=1e-10)

    def test_invariant_to_in_subspace_rotation(self):
        rng = np.random.default_rng(10)
        W1, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        W2, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        theta = 0.7
        R = np.array(
            [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        )
        assert fsa(W1 @ R, W2) == pytest.approx(fsa(W1, W2), abs=1e-10)
        assert fsa(W1, W2 @ R) == pytest.approx(fsa(W1, W2), abs=1e-10)

    def test_full_rank_is_zero(self):
        rng = np.random.default_rng(11)
        Q1, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        Q2, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        assert fsa(Q1, Q2) == 0.0

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            fsa(np.ones((3, 1)), np.eye(3)[:, :1])


class TestNormalizedRMSE:
    def test_perfect_predictions(self):
        t = np.array([0.0, 1.0, 3.0])
        assert normalized_rmse(t, t) == 0.0

    def test_arithmetic_case(self):
        assert normalized_rmse(np.array([1.0, 3.0]), np.array([0.0, 2.0])) == 0.5

    def test_independent_formula(self):
        rng = np.random.default_rng(12)
        p, t = rng.standard_normal(50), rng.standard_normal(50)
        direct = np.sqrt(np.sum((p - t) ** 2) / 50) / (np.max(t) - np.min(t))
        assert normalized_rmse(p, t) == pytest.approx(direct, abs=1e-12)

    def test_constant_truths_rejected(self):
        with pytest.raises(ValueError):
            normalized_rmse(np.array([1.0, 2.0]), np.array([3.0, 3.0]))


class TestRotationState:
    def test_identity(self):
        st = RotationState.identity(4)
        assert st.r == 4 and st.iteration_index == 0
        np.testing.assert_array_equal(st.W, np.eye(4))

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            RotationState(W=np.ones((3, 2)), r=2, iteration_index=0)


def _ridge_data(d, r, n, seed, noise=0.0):
    problem = make_quadratic_ridge(d, r, seed=seed, noise_sd=noise)
    rng = np.random.default_rng(seed + 1)
    X = rng.standard_normal((n, d))
    y = problem.eval_batch(X)
    return problem, X, y


class TestSeqOkAs:
    def test_zero_iterations_history(self):
        _, X, y = _ridge_data(4, 1, 30, seed=0)
        hist = seq_ok_as(X, y, 0, train_config=TrainConfig(n_starts=2), seed=1)
        assert len(hist) == 1
        assert hist.records[0].state.iteration_index == 0
        np.testing.assert_array_equal(hist.records[0].state.W, np.eye(4))
        assert hist.records[0].model is not None

    def test_rotations_stay_orthogonal(self):
        _, X, y = _ridge_data(5, 1, 40, seed=2)
        hist = seq_ok_as(
            X, y, 3, train_config=TrainConfig(n_starts=2), seed=3,
            n_mc_samples=2000, keep_models="none",
        )
        for rec in hist.records:
            W = rec.state.W
            assert np.linalg.norm(W.T @ W - np.eye(W.shape[1])) <= 1e-8

    def test_never_calls_the_target(self):
        problem, X, y = _ridge_data(4, 1, 30, seed=4)
        before = problem.n_evals
        seq_ok_as(
            X, y, 2, train_config=TrainConfig(n_starts=2), seed=5,
            n_mc_samples=1000, keep_models="none",
        )
        assert problem.n_evals == before

    def test_linear_ridge_recovers_direction(self):
        # f(x) = b.x: one pass should land near the known direction
        d = 10
        rng = np.random.default_rng(6)
        b = rng.standard_normal(d)
        X = rng.standard_normal((5 * d, d))
        y = X @ b
        W, model = ok_as(X, y, 1, n_mc_samples=4000,
                         train_config=TrainConfig(n_starts=3), seed=7)
        angle = fsa(W, (b / np.linalg.norm(b))[:, None])
        assert angle <= 0.2
        assert model.dim == 1

    def test_constant_targets_rank_deficient(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((20, 3))
        y = np.full(20, 1.5)
        with pytest.raises(RankDeficiencyError):
            ok_as(X, y, 1, n_mc_samples=500,
                  train_config=TrainConfig(n_starts=2), seed=9)

    def test_ok_as_comparison_records_both_rmse(self):
        # one rotation with r=d: history carries the unrotated and the
        # rotated surrogate scores for comparison
        problem, X, y = _ridge_data(4, 1, 40, seed=10)
        rng = np.random.default_rng(11)
        Xv = rng.standard_normal((200, 4))
        yv = problem.eval_batch(Xv)
        hist = seq_ok_as(
            X, y, 1, train_config=TrainConfig(n_starts=2), seed=12,
            n_mc_samples=2000, validation=(Xv, yv),
        )
        assert len(hist) == 2
        assert np.isfinite(hist.records[0].rmse)
        assert np.isfinite(hist.records[1].rmse)

    def test_rotation_equivariance_with_matched_seeds(self):
        # rotating the problem, the initial rotation and the H sampler by
        # the same orthogonal matrix leaves the subspace-angle sequence
        # unchanged
        d, n, K = 4, 40, 2
        problem, X, y = _ridge_data(d, 1, n, seed=13)
        rng_q = np.random.default_rng(14)
        Q, _ = np.linalg.qr(rng_q.standard_normal((d, d)))

        draws = [np.random.default_rng(15), np.random.default_rng(15)]
        sampler_a = lambda m: draws[0].standard_normal((m, d))  # noqa: E731
        sampler_b = lambda m: draws[1].standard_normal((m, d)) @ Q.T  # noqa: E731

        cfg = TrainConfig(n_starts=2)
        hist_a = seq_ok_as(
            X, y, K, train_config=cfg, seed=16, n_mc_samples=1000,
            w_true=problem.w_true, sampler=sampler_a, keep_models="none",
        )
        hist_b = seq_ok_as(
            X @ Q.T, y, K, train_config=cfg, seed=16, n_mc_samples=1000,
            w_true=Q @ problem.w_true, sampler=sampler_b,
            initial_rotation=Q, keep_models="none",
        )
        np.testing.assert_allclose(
            hist_a.fsa_series(), hist_b.fsa_series(), atol=1e-6
        )

    def test_monotone_trend_on_linear_ridge(self):
        # statistical property: median subspace angle does not increase
        # from the first rotation to the fifth
        d, n = 8, 40
        first, fifth = [], []
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            b = rng.standard_normal(d)
            X = rng.standard_normal((n, d))
            y = X @ b
            w_true = (b / np.linalg.norm(b))[:, None]
            hist = seq_ok_as(
                X, y, 5, train_config=TrainConfig(n_starts=2), seed=seed,
                n_mc_samples=2000, w_true=w_true, keep_models="none",
            )
            series = hist.fsa_series()
            first.append(series[1])
            fifth.append(series[5])
        assert np.median(fifth) <= np.median(first) + 1e-12

    def test_history_csv_export(self, tmp_path):
        problem, X, y = _ridge_data(4, 1, 30, seed=20)
        rng = np.random.default_rng(21)
        Xv = rng.standard_normal((100, 4))
        yv = problem.eval_batch(Xv)
        hist = seq_ok_as(
            X, y, 1, train_config=TrainConfig(n_starts=2), seed=22,
            n_mc_samples=1000, validation=(Xv, yv), w_true=problem.w_true,
        )
        path = tmp_path / "history.csv"
        hist.to_csv(path, gap_rank=1)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iteration,rmse,fsa,top_eigenvalue,eigenvalue_ratio_r"
        assert len(lines) == len(hist) + 1
        first = lines[1].split(",")
        assert first[0] == "0"
        assert float(first[1]) == pytest.approx(hist.records[0].rmse, rel=1e-10)

    def test_truncation_schedule_validation(self):
        _, X, y = _ridge_data(3, 1, 20, seed=23)
        with pytest.raises(ValueError):
            seq_ok_as(X, y, 1, truncation=[3], train_config=TrainConfig(n_starts=1))
        with pytest.raises(ValueError):
            seq_ok_as(
                X, y, 1, truncation=[2, 1], train_config=TrainConfig(n_starts=1)
            )

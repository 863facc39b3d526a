import numpy as np
import pytest

from gpdeform.errors import DegenerateGeometryError, SizeGuardError
from gpdeform.gp import (
    KernelSpec,
    build_gram,
    fit_gp_axis,
    fit_tps,
    predict_covariance,
    predict_mean,
    predict_variance,
    prior_model,
    tps_predict,
)


def kernel_oracle(kernel, a, b):
    h = np.linalg.norm(np.asarray(a, float) - np.asarray(b, float))
    if kernel.family == "gaussian":
        return kernel.sill * np.exp(-(h * h) / kernel.param)
    return kernel.sill * np.exp(-h / kernel.param)


def dense_gp_oracle(kernel, X, y, X_star):
    """Posterior mean/variance/covariance by explicit matrix inverse."""
    n = X.shape[0]
    K = np.array([[kernel_oracle(kernel, X[i], X[j]) for j in range(n)] for i in range(n)])
    K_reg_inv = np.linalg.inv(K + kernel.nugget * np.eye(n))
    Ks = np.array([[kernel_oracle(kernel, X[i], xs) for xs in X_star] for i in range(n)])
    Kss = np.array([[kernel_oracle(kernel, a, b) for b in X_star] for a in X_star])
    mean = Ks.T @ K_reg_inv @ y
    cov = Kss - Ks.T @ K_reg_inv @ Ks
    return mean, np.diag(cov), cov


class TestBuildGram:
    def test_single_point(self):
        k = KernelSpec("gaussian", 2.5, 30.0)
        K = build_gram(k, [[0, 0, 0]])
        assert K.shape == (1, 1)
        assert K[0, 0] == pytest.approx(2.5)

    def test_two_points_direct_formula(self):
        k = KernelSpec("gaussian", 1.0, 1.0)
        h = 1.7
        K = build_gram(k, [[0, 0, 0], [h, 0, 0]])
        assert K[0, 1] == pytest.approx(np.exp(-h * h), abs=1e-15)

    def test_matches_double_loop_oracle(self, rng):
        X = rng.uniform(0, 40, (5, 3))
        for family, param in (("gaussian", 120.0), ("exponential", 11.0)):
            k = KernelSpec(family, 3.2, param, nugget=0.1)
            K = build_gram(k, X)
            oracle = np.array(
                [[kernel_oracle(k, X[i], X[j]) for j in range(5)] for i in range(5)]
            )
            np.testing.assert_allclose(K, oracle, atol=1e-14)
            np.testing.assert_allclose(K, K.T)


class TestFitPredict:
    def test_single_observation_alpha(self):
        k = KernelSpec("gaussian", 1.0, 100.0, nugget=0.0)
        model = fit_gp_axis(k, [[0, 0, 0]], [2.0])
        np.testing.assert_allclose(model.alpha, [2.0])

    def test_all_zero_observations(self, rng):
        k = KernelSpec("gaussian", 1.0, 100.0)
        X = rng.uniform(0, 20, (7, 3))
        model = fit_gp_axis(k, X, np.zeros(7))
        np.testing.assert_allclose(model.alpha, 0.0, atol=1e-14)

    def test_alpha_matches_dense_solve_oracle(self, rng):
        k = KernelSpec("gaussian", 2.0, 200.0, nugget=0.05)
        X = rng.uniform(0, 50, (10, 3))
        y = rng.normal(0, 1, 10)
        model = fit_gp_axis(k, X, y)
        K_reg = build_gram(k, X) + k.nugget * np.eye(10)
        alpha_oracle = np.linalg.solve(K_reg, y)
        np.testing.assert_allclose(model.alpha, alpha_oracle, rtol=1e-8)

    def test_chol_reconstructs_gram(self, rng):
        k = KernelSpec("exponential", 1.5, 10.0, nugget=0.01)
        X = rng.uniform(0, 30, (8, 3))
        model = fit_gp_axis(k, X, rng.normal(size=8))
        K_reg = build_gram(k, X) + (k.nugget + model.jitter) * np.eye(8)
        rel = np.linalg.norm(model.chol @ model.chol.T - K_reg) / np.linalg.norm(K_reg)
        assert rel < 1e-8

    def test_interpolation_at_training_points(self, rng):
        k = KernelSpec("gaussian", 1.0, 150.0, nugget=0.0)
        X = rng.uniform(0, 60, (12, 3))
        y = rng.normal(0, 2, 12)
        model = fit_gp_axis(k, X, y)
        np.testing.assert_allclose(predict_mean(model, X), y, atol=1e-8)
        assert np.all(predict_variance(model, X) <= 1e-8)

    def test_prior_reversion_far_away(self):
        k = KernelSpec("gaussian", 0.8, 12.0, nugget=0.0)
        model = fit_gp_axis(k, [[0, 0, 0], [3, 0, 0]], [1.0, -2.0])
        far = [[10 * k.effective_range, 0, 0]]
        assert abs(predict_mean(model, far)[0]) < 1e-6
        assert abs(predict_variance(model, far)[0] - k.sill) < 1e-6

    def test_single_landmark_closed_form(self):
        # K*^T K^-1 = exp(-h^2/a) independent of the sill
        for sill in (0.5, 1.0, 7.0):
            k = KernelSpec("gaussian", sill, 50.0, nugget=0.0)
            model = fit_gp_axis(k, [[0, 0, 0]], [2.0])
            h = 4.2
            got = predict_mean(model, [[h, 0, 0]])[0]
            assert got == pytest.approx(2.0 * np.exp(-h * h / 50.0), rel=1e-12)

    def test_two_landmark_variance_oracle(self):
        k = KernelSpec("gaussian", 1.3, 40.0, nugget=0.0)
        X = np.array([[-5.0, 0, 0], [5.0, 0, 0]])
        y = np.array([0.7, -0.4])
        model = fit_gp_axis(k, X, y)
        _, var_o, _ = dense_gp_oracle(k, X, y, np.array([[0.0, 0, 0]]))
        assert predict_variance(model, [[0, 0, 0]])[0] == pytest.approx(var_o[0], abs=1e-10)

    def test_mean_and_variance_match_dense_oracle(self, rng):
        for trial in range(5):
            n = int(rng.integers(2, 11))
            family = "gaussian" if trial % 2 == 0 else "exponential"
            k = KernelSpec(family, 2.0, 80.0 if family == "gaussian" else 9.0, nugget=0.02)
            X = rng.uniform(0, 50, (n, 3))
            y = rng.normal(0, 1.5, n)
            Xs = rng.uniform(0, 50, (6, 3))
            model = fit_gp_axis(k, X, y)
            mean_o, var_o, cov_o = dense_gp_oracle(k, X, y, Xs)
            np.testing.assert_allclose(predict_mean(model, Xs), mean_o, rtol=1e-8, atol=1e-10)
            np.testing.assert_allclose(predict_variance(model, Xs), np.maximum(var_o, 0),
                                       rtol=1e-8, atol=1e-8)
            np.testing.assert_allclose(predict_covariance(model, Xs), cov_o,
                                       rtol=1e-7, atol=1e-8)

    def test_kernel_scale_equivariance_of_mean(self, rng):
        X = rng.uniform(0, 30, (9, 3))
        y = rng.normal(0, 1, 9)
        Xs = rng.uniform(0, 30, (5, 3))
        base = predict_mean(fit_gp_axis(KernelSpec("gaussian", 1.0, 90.0), X, y), Xs)
        for s in (0.3, 4.0, 100.0):
            scaled = predict_mean(fit_gp_axis(KernelSpec("gaussian", s, 90.0), X, y), Xs)
            np.testing.assert_allclose(scaled, base, atol=1e-10)

    def test_variance_monotone_under_conditioning(self, rng):
        k = KernelSpec("gaussian", 1.0, 60.0, nugget=0.0)
        for _ in range(50):
            n = int(rng.integers(1, 8))
            X = rng.uniform(0, 40, (n, 3))
            y = rng.normal(0, 1, n)
            probe = rng.uniform(0, 40, (1, 3))
            new_x = rng.uniform(0, 40, (1, 3))
            v_before = predict_variance(fit_gp_axis(k, X, y), probe)[0]
            X2 = np.vstack([X, new_x])
            y2 = np.append(y, rng.normal())
            v_after = predict_variance(fit_gp_axis(k, X2, y2), probe)[0]
            assert v_after <= v_before + 1e-10


class TestCovariance:
    def test_single_query_equals_variance(self, rng):
        k = KernelSpec("gaussian", 1.0, 70.0)
        model = fit_gp_axis(k, rng.uniform(0, 20, (4, 3)), rng.normal(size=4))
        q = [[3.0, 4.0, 5.0]]
        cov = predict_covariance(model, q)
        assert cov.shape == (1, 1)
        assert cov[0, 0] == pytest.approx(predict_variance(model, q)[0], abs=1e-12)

    def test_prior_covariance_with_no_landmarks(self, rng):
        k = KernelSpec("exponential", 2.0, 8.0)
        model = prior_model(k)
        Xs = rng.uniform(0, 10, (4, 3))
        cov = predict_covariance(model, Xs)
        oracle = np.array([[kernel_oracle(k, a, b) for b in Xs] for a in Xs])
        np.testing.assert_allclose(cov, oracle, atol=1e-12)

    def test_psd_and_symmetric(self, rng):
        k = KernelSpec("gaussian", 1.0, 100.0, nugget=0.01)
        model = fit_gp_axis(k, rng.uniform(0, 30, (6, 3)), rng.normal(size=6))
        cov = predict_covariance(model, rng.uniform(0, 30, (10, 3)))
        np.testing.assert_allclose(cov, cov.T)
        eig = np.linalg.eigvalsh(cov)
        assert eig.min() >= -1e-8 * max(eig.max(), 1e-12)

    def test_size_guard(self):
        k = KernelSpec("gaussian", 1.0, 100.0)
        model = prior_model(k)
        with pytest.raises(SizeGuardError):
            predict_covariance(model, np.zeros((4097, 3)))


class TestThinPlate:
    def test_reproduces_affine_data(self, rng):
        X = rng.uniform(0, 50, (10, 3))
        B = rng.normal(0, 0.1, (3, 3))
        c = rng.normal(0, 1, 3)
        D = X @ B.T + c
        model = fit_tps(X, D)
        assert np.max(np.abs(model.weights)) < 1e-8  # bending part vanishes
        Xs = rng.uniform(0, 50, (20, 3))
        np.testing.assert_allclose(tps_predict(model, Xs), Xs @ B.T + c, atol=1e-8)

    def test_interpolates_at_centers(self, rng):
        X = rng.uniform(0, 40, (9, 3))
        D = rng.normal(0, 2, (9, 3))
        model = fit_tps(X, D)
        np.testing.assert_allclose(tps_predict(model, X), D, atol=1e-6)

    def test_matches_dense_system_oracle(self, rng):
        X = rng.uniform(0, 30, (10, 3))
        y = rng.normal(0, 1, 10)
        model = fit_tps(X, y)
        # independent full-system solve with U(r) = r
        n = 10
        K = np.linalg.norm(X[:, None] - X[None], axis=2)
        P = np.hstack([np.ones((n, 1)), X])
        A = np.block([[K, P], [P.T, np.zeros((4, 4))]])
        sol = np.linalg.solve(A, np.append(y, np.zeros(4)))
        Xs = rng.uniform(0, 30, (15, 3))
        Ks = np.linalg.norm(Xs[:, None] - X[None], axis=2)
        Ps = np.hstack([np.ones((15, 1)), Xs])
        oracle = Ks @ sol[:n] + Ps @ sol[n:]
        np.testing.assert_allclose(tps_predict(model, Xs), oracle, atol=1e-8)

    def test_coplanar_centers_rejected(self, rng):
        X = rng.uniform(0, 10, (8, 3))
        X[:, 2] = 1.0
        with pytest.raises(DegenerateGeometryError):
            fit_tps(X, rng.normal(size=8))

    def test_too_few_centers(self):
        with pytest.raises(DegenerateGeometryError):
            fit_tps(np.eye(3), np.zeros(3))

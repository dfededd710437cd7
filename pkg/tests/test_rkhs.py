"""Tests for the function-space release: column-sum bound, prior sampling,
the release itself, and the diagonal-dominance norm bound."""

import numpy as np
import pytest

from dpgp import (
    DPParams,
    KernelSpec,
    NotDiagonallyDominantError,
    bound_b,
    fit,
    release_rkhs,
    rkhs_release_constants,
    sample_prior,
    varah_bound,
)
from dpgp.privacy import c_delta


def unit_spec(lengthscale=1.0, noise=0.1):
    return KernelSpec(variance=1.0, lengthscales=[lengthscale], noise_variance=noise)


class TestBoundB:
    def test_identity(self):
        assert bound_b(np.eye(4)) == 1.0

    def test_hand_inverted_two_point_gram(self):
        # K = [[1, .5], [.5, 1]] inverts to (1/0.75)[[1, -.5], [-.5, 1]],
        # positive-part row sums are 4/3, negative-part sums 2/3
        K = np.array([[1.0, 0.5], [0.5, 1.0]])
        Kinv = np.linalg.inv(K)
        np.testing.assert_allclose(bound_b(Kinv), 4.0 / 3.0, rtol=1e-12)

    def test_plain_infinity_norm_when_signed(self):
        K = np.array([[1.0, 0.5], [0.5, 1.0]])
        Kinv = np.linalg.inv(K)
        np.testing.assert_allclose(bound_b(Kinv, nonneg_kernel=False), 2.0, rtol=1e-12)

    def test_signed_bound_never_smaller(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            A = rng.normal(size=(5, 5))
            Kinv = A @ A.T + np.eye(5)
            assert bound_b(Kinv, nonneg_kernel=False) >= bound_b(Kinv) - 1e-12

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            bound_b(np.ones((2, 3)))

    def test_brute_force_neighbor_oracle(self):
        """|k(x*)^T (alpha - alpha')| stays below d * bound_b for every
        single-coordinate neighbor, over random data and test points."""
        rng = np.random.default_rng(42)
        d = 1.0
        spec = unit_spec(lengthscale=0.8, noise=0.05)
        X = rng.uniform(0.0, 3.0, size=(5, 1))
        K = spec.gram_with_noise(X)
        Kinv = np.linalg.inv(K)
        b = bound_b(Kinv)
        Xstar = rng.uniform(-1.0, 4.0, size=(40, 1))
        Ks = spec.cross(Xstar, X)

        worst = 0.0
        for _ in range(1000):
            y = rng.uniform(0.0, d, size=5)
            y2 = y.copy()
            i = rng.integers(0, 5)
            y2[i] = rng.uniform(0.0, d)
            dmean = Ks @ (Kinv @ (y - y2))
            worst = max(worst, np.abs(dmean).max())
        assert worst <= d * b + 1e-12


class TestReleaseConstants:
    def test_scale_identity(self):
        dp = DPParams(epsilon=2.0, delta=0.01, d=1.5)
        Kinv = np.linalg.inv(np.array([[1.0, 0.5], [0.5, 1.0]]))
        rel = rkhs_release_constants(Kinv, dp)
        np.testing.assert_allclose(rel.bound_b, 4.0 / 3.0, rtol=1e-12)
        np.testing.assert_allclose(rel.sensitivity, 1.5 * 4.0 / 3.0, rtol=1e-12)
        np.testing.assert_allclose(
            rel.scale, rel.sensitivity * c_delta(0.01, "rkhs") / 2.0, rtol=1e-15
        )

    def test_scale_monotone_in_epsilon_and_d(self):
        Kinv = np.eye(3)
        scales_eps = [
            rkhs_release_constants(Kinv, DPParams(epsilon=e, delta=0.01, d=1.0)).scale
            for e in (0.5, 1.0, 2.0, 8.0)
        ]
        assert all(a > b for a, b in zip(scales_eps, scales_eps[1:]))
        scales_d = [
            rkhs_release_constants(Kinv, DPParams(epsilon=1.0, delta=0.01, d=dd)).scale
            for dd in (0.5, 1.0, 2.0)
        ]
        assert all(a < b for a, b in zip(scales_d, scales_d[1:]))


class TestSamplePrior:
    def test_coincident_points_share_value(self):
        # the duplicated row makes the gram singular; the jitter rescue adds
        # 1e-8 to the diagonal, so the draws agree to ~sqrt(2e-8) = 1.4e-4
        spec = unit_spec(noise=0.0)
        rng = np.random.default_rng(3)
        draw = sample_prior(spec, np.array([[0.5], [0.5]]), rng)
        np.testing.assert_allclose(draw[0], draw[1], atol=1e-3)

    def test_deterministic_given_seed(self):
        spec = unit_spec()
        X = np.linspace(0, 1, 7).reshape(-1, 1)
        a = sample_prior(spec, X, np.random.default_rng(11))
        b = sample_prior(spec, X, np.random.default_rng(11))
        np.testing.assert_array_equal(a, b)

    def test_unit_variance_single_point(self):
        # far-separated points are uncorrelated to machine precision, so one
        # call yields many effectively independent standard normals
        spec = unit_spec(lengthscale=1.0, noise=0.0)
        X = (np.arange(200) * 50.0).reshape(-1, 1)
        rng = np.random.default_rng(5)
        draws = np.concatenate([sample_prior(spec, X, rng) for _ in range(500)])
        assert draws.size == 100_000
        np.testing.assert_allclose(draws.var(), 1.0, rtol=0.02)

    def test_respects_kernel_correlation(self):
        spec = unit_spec(lengthscale=2.0, noise=0.0)
        X = np.array([[0.0], [0.1]])
        rng = np.random.default_rng(9)
        draws = np.array([sample_prior(spec, X, rng) for _ in range(4000)])
        corr = np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]
        expected = spec.eval(X[0], X[1])
        np.testing.assert_allclose(corr, expected, atol=0.02)


class TestReleaseRKHS:
    def _model(self, rng, n=12, noise=0.04):
        X = rng.uniform(0.0, 4.0, size=(n, 1))
        y = rng.uniform(0.0, 1.0, size=n)
        return fit(X, y, unit_spec(lengthscale=1.0, noise=noise))

    def test_requires_unit_variance(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(0, 1, size=(5, 1))
        y = rng.uniform(0, 1, size=5)
        model = fit(X, y, KernelSpec(variance=2.0, lengthscales=[1.0], noise_variance=0.1))
        with pytest.raises(ValueError, match="unit-variance"):
            release_rkhs(model, X, DPParams(1.0, 0.01, 1.0), np.random.default_rng(1))

    def test_huge_epsilon_recovers_mean(self):
        rng = np.random.default_rng(1)
        model = self._model(rng)
        Xstar = np.linspace(0, 4, 9).reshape(-1, 1)
        dp = DPParams(epsilon=1e6, delta=0.01, d=1.0)
        res = release_rkhs(model, Xstar, dp, np.random.default_rng(2))
        np.testing.assert_allclose(
            res.values, model.predict_mean(Xstar), atol=1e-3 * dp.d
        )

    def test_metadata_carries_all_constants(self):
        rng = np.random.default_rng(4)
        model = self._model(rng)
        dp = DPParams(epsilon=1.0, delta=0.01, d=1.0)
        res = release_rkhs(model, model.X[:3], dp, np.random.default_rng(5))
        md = res.metadata
        for key in ("epsilon", "delta", "d", "c_delta", "bound_b", "sensitivity", "scale"):
            assert key in md
        np.testing.assert_allclose(
            md["scale"], md["sensitivity"] * md["c_delta"] / md["epsilon"], rtol=1e-15
        )
        assert md["not_private"] is False
        assert res.mechanism == "rkhs"

    def test_noise_multiplier_flags_not_private(self):
        rng = np.random.default_rng(6)
        model = self._model(rng)
        dp = DPParams(epsilon=1.0, delta=0.01, d=1.0)
        res = release_rkhs(
            model, model.X[:2], dp, np.random.default_rng(7), noise_multiplier=0.0
        )
        assert res.metadata["not_private"] is True
        np.testing.assert_allclose(res.values, model.predict_mean(model.X[:2]), atol=1e-12)
        np.testing.assert_allclose(res.noise_std, 0.0, atol=1e-15)

    def test_noise_std_matches_scale_times_prior_std(self):
        rng = np.random.default_rng(8)
        model = self._model(rng)
        dp = DPParams(epsilon=2.0, delta=0.01, d=1.0)
        Xstar = np.linspace(0.2, 3.8, 5).reshape(-1, 1)
        res = release_rkhs(model, Xstar, dp, np.random.default_rng(9))
        prior_std = np.sqrt(np.diag(model.spec.gram(Xstar)))
        np.testing.assert_allclose(res.noise_std, res.metadata["scale"] * prior_std, rtol=1e-12)

    def test_release_mean_unbiased(self):
        """The average of many releases recovers the non-private mean within
        Monte Carlo error."""
        rng = np.random.default_rng(10)
        model = self._model(rng, n=8)
        dp = DPParams(epsilon=5.0, delta=0.01, d=1.0)
        Xstar = np.array([[0.7], [2.1]])
        draws = np.array(
            [
                release_rkhs(model, Xstar, dp, np.random.default_rng(1000 + k)).values
                for k in range(4000)
            ]
        )
        mean = model.predict_mean(Xstar)
        se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - mean) <= 4.0 * se)


class TestVarahBound:
    def test_scaled_identity_tight(self):
        np.testing.assert_allclose(varah_bound(2.0 * np.eye(3)), 0.5, rtol=1e-15)

    def test_tridiagonal_two_by_two(self):
        # inverse is (1/3)[[2, 1], [1, 2]], infinity norm exactly 1
        J = np.array([[2.0, -1.0], [-1.0, 2.0]])
        np.testing.assert_allclose(varah_bound(J), 1.0, rtol=1e-15)
        exact = np.abs(np.linalg.inv(J)).sum(axis=1).max()
        np.testing.assert_allclose(exact, 1.0, rtol=1e-12)

    def test_dominant_random_upper_bounds_exact(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            J = rng.normal(size=(6, 6))
            np.fill_diagonal(J, np.abs(J).sum(axis=1) + rng.uniform(0.1, 2.0, size=6))
            exact = np.abs(np.linalg.inv(J)).sum(axis=1).max()
            assert varah_bound(J) >= exact - 1e-12

    def test_non_dominant_rejected(self):
        J = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(NotDiagonallyDominantError):
            varah_bound(J)

    def test_error_names_offending_row(self):
        J = np.diag([5.0, 5.0, 5.0]).astype(float)
        J[2, 0] = 9.0
        with pytest.raises(NotDiagonallyDominantError, match="row 2"):
            varah_bound(J)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            varah_bound(np.ones((2, 3)))

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import logsumexp

from conftest import fd_gradient
from gfsvgd.densities import FlatDensity, GaussianMixture, IsotropicGaussian
from gfsvgd.discrepancy import (Evaluator, KappaFunction, gf_ksd, kappa_eval, ksd, mmd2,
                                mmd_bandwidth, moment_mse, stein_kernel_matrix)
from gfsvgd.errors import ScoreUnavailableError
from gfsvgd.kernels import RBFKernel, WeightedKernel


class ShiftedGaussian(IsotropicGaussian):
    """Gaussian whose log-density is off by an additive constant."""

    def __init__(self, mean, sigma, c):
        super().__init__(mean, sigma)
        self.c = c

    def _log_density(self, x):
        return super()._log_density(x) + self.c


class TestKappa:
    def test_value_at_gaussian_mean(self):
        d, h = 3, 1.7
        p = IsotropicGaussian(np.full(d, 0.4), 2.0)
        kf = KappaFunction.standard(p, RBFKernel(h))
        np.testing.assert_allclose(kappa_eval(kf, p.mean, p.mean), 2 * d / h, rtol=1e-14)

    def test_finite_difference_stein_operator_oracle(self, rng):
        """Apply the Stein operator of rho in x, then in x', by finite differences."""
        p = IsotropicGaussian(np.zeros(1), 2.0)
        rho = IsotropicGaussian(np.zeros(1), 3.0)
        k = RBFKernel(1.3)
        kf = KappaFunction.gradient_free(rho, p, k)
        s = lambda z: float(rho.score(np.array([z]))[0])

        def a_rho_k(x, y):
            dk = fd_gradient(lambda z: float(k.eval(z, np.array([y]))), np.array([x]))[0]
            return s(x) * float(k.eval(np.array([x]), np.array([y]))) + dk

        for _ in range(20):
            x, y = rng.standard_normal(2) * 1.5
            inner = s(y) * a_rho_k(x, y) + fd_gradient(lambda z: a_rho_k(x, z[0]), np.array([y]))[0]
            w = np.exp(rho.log_density(np.array([[x], [y]])) - p.log_density(np.array([[x], [y]])))
            expected = w[0] * w[1] * inner
            np.testing.assert_allclose(kappa_eval(kf, [x], [y]), expected, rtol=1e-4)

    def test_gradient_free_reduces_when_densities_match(self, rng):
        p = GaussianMixture([0.3, 0.7], rng.standard_normal((2, 2)), 0.8)
        k = RBFKernel(0.9)
        for _ in range(10):
            x, y = rng.standard_normal(2), rng.standard_normal(2)
            np.testing.assert_allclose(kappa_eval(KappaFunction.gradient_free(p, p, k), x, y),
                                       kappa_eval(KappaFunction.standard(p, k), x, y), rtol=1e-12)

    def test_symmetry(self, rng):
        kf = KappaFunction.gradient_free(IsotropicGaussian(np.ones(2), 3.0),
                                         IsotropicGaussian(np.zeros(2), 2.0), RBFKernel(1.1))
        for _ in range(20):
            x, y = rng.standard_normal(2), rng.standard_normal(2)
            np.testing.assert_allclose(kappa_eval(kf, x, y), kappa_eval(kf, y, x), rtol=1e-10)

    def test_generic_kernel_path_matches_rbf(self, rng):
        X, Y = rng.standard_normal((5, 3)), rng.standard_normal((4, 3))
        p = IsotropicGaussian(np.zeros(3), 1.5)
        flat_w = WeightedKernel(RBFKernel(0.8), lambda x: np.zeros(np.shape(x)[:-1]),
                                lambda x: np.zeros(np.shape(x)))
        np.testing.assert_allclose(stein_kernel_matrix(X, Y, p.score(X), p.score(Y), flat_w),
                                   stein_kernel_matrix(X, Y, p.score(X), p.score(Y), RBFKernel(0.8)),
                                   atol=1e-12)

    def test_missing_score(self):
        kf = KappaFunction.gradient_free(FlatDensity(1), IsotropicGaussian(np.zeros(1), 1.0),
                                         RBFKernel(1.0))
        assert kappa_eval(kf, [0.0], [1.0]) != 0.0

        class NoScore(IsotropicGaussian):
            has_score = False

        kf = KappaFunction.standard(NoScore(np.zeros(1), 1.0), RBFKernel(1.0))
        with pytest.raises(ScoreUnavailableError):
            kappa_eval(kf, [0.0], [1.0])

    def test_validation(self):
        with pytest.raises(ValueError):
            KappaFunction("other", RBFKernel(1.0), IsotropicGaussian(np.zeros(1), 1.0))
        with pytest.raises(ValueError):
            KappaFunction("gradient_free", RBFKernel(1.0), IsotropicGaussian(np.zeros(1), 1.0))


class TestGFKSD:
    def test_two_point_closed_form(self):
        a, sigma, h = 1.0, 2.0, 1.5
        p = IsotropicGaussian(np.zeros(1), sigma)
        X = np.array([[a], [-a]])
        diag = a ** 2 / sigma ** 2 + 2 / h
        k = np.exp(-4 * a ** 2 / h)
        off = k * (-a ** 2 / sigma ** 2 - 8 * a ** 2 / (sigma * h) + 2 / h - 16 * a ** 2 / h ** 2)
        kf = KappaFunction.gradient_free(p, p, RBFKernel(h))
        np.testing.assert_allclose(gf_ksd(X, kf, "V"), (2 * diag + 2 * off) / 4, rtol=1e-13)
        np.testing.assert_allclose(gf_ksd(X, kf, "U"), off, rtol=1e-13)
        np.testing.assert_allclose(gf_ksd(X, kf, "V", weighting="raw"), (2 * diag + 2 * off) / 4,
                                   rtol=1e-13)

    def test_appendix_b_identity(self, rng):
        """GF-KSD equals standard KSD of p under the kernel w w' k with the same normalized weights."""
        for _ in range(10):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(2, 15))
            p = IsotropicGaussian(rng.standard_normal(d), rng.uniform(0.5, 2))
            rho = IsotropicGaussian(rng.standard_normal(d), rng.uniform(1, 4))
            X = rng.standard_normal((n, d)) * 1.5
            base = RBFKernel(rng.uniform(0.5, 3))
            shift = logsumexp(rho.log_density(X) - p.log_density(X))
            wk = WeightedKernel.from_densities(base, rho, p, log_shift=shift)
            lhs = gf_ksd(X, KappaFunction.gradient_free(rho, p, base), "V")
            rhs = n ** 2 * ksd(X, p, wk, "V")
            np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)

    def test_invariant_to_unnormalized_densities(self, rng):
        X = rng.standard_normal((30, 2))
        k = RBFKernel(1.2)
        base = gf_ksd(X, KappaFunction.gradient_free(IsotropicGaussian(np.ones(2), 3.0),
                                                     IsotropicGaussian(np.zeros(2), 1.0), k))
        shifted = gf_ksd(X, KappaFunction.gradient_free(ShiftedGaussian(np.ones(2), 3.0, 25.0),
                                                        ShiftedGaussian(np.zeros(2), 1.0, -9.0), k))
        np.testing.assert_allclose(shifted, base, rtol=1e-12)

    def test_v_statistic_decays_like_one_over_n(self):
        """With rho = p the expected V-statistic is E[kappa(x, x)] / n = (d / sigma + 2d / h) / n."""
        d, sigma, h = 2, 1.5, 2.0
        p = IsotropicGaussian(np.zeros(d), sigma)
        kf = KappaFunction.standard(p, RBFKernel(h))
        expected = d / sigma + 2 * d / h
        for n in (100, 400):
            scaled = np.array([n * gf_ksd(p.sample_exact(n, s), kf) for s in range(40)])
            se = scaled.std(ddof=1) / np.sqrt(scaled.size)
            assert abs(scaled.mean() - expected) < 3 * se

    def test_tail_points_score_worse(self):
        p = IsotropicGaussian(np.zeros(2), 1.0)
        kf = KappaFunction.gradient_free(IsotropicGaussian(np.zeros(2), 1.2), p, RBFKernel(1.0))
        wins = 0
        for s in range(20):
            X = p.sample_exact(200, s)
            wins += gf_ksd(X, kf) < gf_ksd(X + 2.0, kf)
        assert wins >= 18

    def test_argument_checks(self):
        kf = KappaFunction.standard(IsotropicGaussian(np.zeros(1), 1.0), RBFKernel(1.0))
        with pytest.raises(ValueError):
            gf_ksd(np.zeros((1, 1)), kf, "U")
        with pytest.raises(ValueError):
            gf_ksd(np.zeros((3, 1)), kf, "W")
        with pytest.raises(ValueError):
            gf_ksd(np.zeros((3, 1)), kf, weighting="other")


class TestMMD:
    def test_identical_samples_v_statistic_is_zero(self, rng):
        A = rng.standard_normal((40, 3))
        assert abs(mmd2(A, A, RBFKernel(1.0), statistic="V")) < 1e-12

    def test_uniform_weights_equal_v_statistic(self, rng):
        A, B = rng.standard_normal((30, 2)), rng.standard_normal((25, 2)) + 0.3
        k = RBFKernel(1.4)
        np.testing.assert_allclose(mmd2(A, B, k, weights_a=np.full(30, 1 / 30)),
                                   mmd2(A, B, k, statistic="V"), rtol=1e-13)

    def test_weighted_u_statistic_rejected(self, rng):
        with pytest.raises(ValueError):
            mmd2(np.zeros((3, 1)), np.ones((3, 1)), RBFKernel(1.0), np.full(3, 1 / 3), "U")

    def test_shifted_means_detected(self):
        k = RBFKernel(2.0)
        wins = 0
        for s in range(20):
            rng = np.random.default_rng(s)
            A, B, C = (rng.standard_normal((500, 2)) for _ in range(3))
            shifted = mmd2(A, B + 2.0, k)
            wins += shifted > 0 and shifted > mmd2(A, C, k)
        assert wins >= 19

    def test_u_statistic_unbiased_under_null(self):
        k = RBFKernel(1.0)
        vals = []
        for s in range(200):
            rng = np.random.default_rng(1000 + s)
            vals.append(mmd2(rng.standard_normal((30, 2)), rng.standard_normal((30, 2)), k))
        vals = np.array(vals)
        assert abs(vals.mean()) < 3 * vals.std(ddof=1) / np.sqrt(vals.size)
        assert vals.min() < 0

    def test_bandwidth_is_squared_median_distance(self):
        X = np.array([[0.0], [1.0], [3.0]])
        assert mmd_bandwidth(X) == 4.0
        assert mmd_bandwidth(np.zeros((4, 2))) == 1.0


class TestMomentMSE:
    def test_moment_matching_configuration(self):
        X = np.array([[1.0, 2.0], [3.0, -2.0]])
        assert moment_mse(X, [2.0, 0.0], [1.0, 4.0]) == (0.0, 0.0)

    def test_single_particle_at_mean(self):
        var = np.array([2.0, 3.0])
        mse_mean, mse_var = moment_mse(np.array([[1.0, -1.0]]), [1.0, -1.0], var)
        assert mse_mean == 0.0
        np.testing.assert_allclose(mse_var, np.mean(var ** 2))

    def test_weighted_moments(self):
        X = np.array([[0.0], [4.0]])
        mse_mean, mse_var = moment_mse(X, [1.0], [3.0], weights=[0.75, 0.25])
        assert mse_mean == 0.0 and mse_var == 0.0

    def test_clt_scale(self):
        sigma, n, d = 2.0, 10_000, 3
        p = IsotropicGaussian(np.zeros(d), sigma)
        mse = np.mean([moment_mse(p.sample_exact(n, s), p.mean, np.full(d, sigma))[0]
                       for s in range(20)])
        predicted = sigma / n
        assert predicted / 5 < mse < 5 * predicted


class TestEvaluator:
    def test_statistic_follows_weighting(self, rng):
        ev = Evaluator(rng.standard_normal((200, 2)))
        X = rng.standard_normal((50, 2))
        assert ev.report(X).mmd_statistic == "U"
        rep = ev.report(X, np.full(50, 1 / 50))
        assert rep.mmd_statistic == "V"
        np.testing.assert_allclose(rep.mmd2, mmd2(X, ev.exact, ev.kernel, statistic="V"),
                                   rtol=1e-12)
        np.testing.assert_allclose(ev.mmd2(X), mmd2(X, ev.exact, ev.kernel), rtol=1e-12)

    def test_bandwidth_frozen_from_exact_samples(self, rng):
        exact = rng.standard_normal((100, 2))
        ev = Evaluator(exact)
        assert ev.bandwidth == mmd_bandwidth(exact)
        ev.mmd2(rng.standard_normal((10, 2)) * 50)
        assert ev.bandwidth == mmd_bandwidth(exact)

    def test_model_moments_used_as_truth(self):
        p = IsotropicGaussian(np.array([1.0, 2.0]), 3.0)
        ev = Evaluator.for_model(p, 50, 0)
        np.testing.assert_array_equal(ev.truth_mean, [1.0, 2.0])
        np.testing.assert_array_equal(ev.truth_var, [3.0, 3.0])


@given(st.integers(2, 20), st.integers(0, 10_000), st.floats(-50, 50), st.floats(-50, 50))
def test_gf_ksd_scale_invariance_property(n, seed, c_rho, c_p):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2)) * 2
    k = RBFKernel(1.0)
    a = gf_ksd(X, KappaFunction.gradient_free(IsotropicGaussian(np.zeros(2), 2.0),
                                              IsotropicGaussian(np.ones(2), 1.0), k))
    b = gf_ksd(X, KappaFunction.gradient_free(ShiftedGaussian(np.zeros(2), 2.0, c_rho),
                                              ShiftedGaussian(np.ones(2), 1.0, c_p), k))
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14)


@given(st.integers(1, 15), st.integers(0, 10_000))
def test_v_statistics_are_nonnegative(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    w = rng.dirichlet(np.ones(n))
    assert mmd2(X, rng.standard_normal((5, 2)), RBFKernel(1.0), weights_a=w) >= -1e-12
    kf = KappaFunction.gradient_free(IsotropicGaussian(np.zeros(2), 2.0),
                                     IsotropicGaussian(np.zeros(2), 1.0), RBFKernel(1.0))
    assert gf_ksd(X, kf, "V") >= -1e-12

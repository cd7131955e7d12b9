import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from smsnmix import NonConvergent, NotPSD, ScaleLaw, numkit

# 60-digit mpmath values, frozen
LOG_PHI_M10 = -53.23128515051247057834703
LOG_PHI_M40 = -804.6084420137537881666068
MILLS_5 = 1.486719940904905712441744e-06
MILLS_M20 = 20.04975306852785054221402
K0_1 = 0.4210244382407083333356274
LOG_K25_40 = -41.54458504611218370317902
LOG_K03_1EM5 = 4.06351791828410445101527
LOG_K1_1E9 = -1000000010.135841565453478
T4_2 = 0.9419417382415922027505277
LOG_T3_M1000 = -20.6255459978967197565139


class TestNormal:
    def test_cdf_at_zero(self):
        assert numkit.std_normal_cdf(0.0) == 0.5

    def test_upper_tail(self):
        assert numkit.std_normal_cdf(8.0) >= 1 - 1e-15

    def test_log_cdf_deep_tail(self):
        assert numkit.log_std_normal_cdf(-10.0) == pytest.approx(LOG_PHI_M10, rel=1e-10)
        assert numkit.log_std_normal_cdf(-40.0) == pytest.approx(LOG_PHI_M40, rel=1e-10)

    def test_log_cdf_matches_mpmath_live(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 50
        for x in (-8.0, -15.0, -25.0, 3.0):
            ref = float(mp.log(mp.ncdf(x)))
            assert numkit.log_std_normal_cdf(x) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(ValueError):
            numkit.std_normal_cdf(bad)
        with pytest.raises(ValueError):
            numkit.log_std_normal_cdf(bad)

    @given(st.lists(st.floats(-60, 60), min_size=2, max_size=30))
    def test_log_cdf_monotone(self, xs):
        xs = np.sort(np.asarray(xs))
        v = numkit.log_std_normal_cdf(xs)
        assert np.all(np.diff(v) >= 0)
        assert np.all(v <= 0)


class TestMills:
    def test_at_zero(self):
        assert numkit.mills_w(0.0) == pytest.approx(0.7978845608, abs=1e-10)

    def test_right_tail(self):
        w = numkit.mills_w(5.0)
        assert w <= 1.5e-5
        assert w == pytest.approx(MILLS_5, rel=1e-12)

    def test_left_tail_asymptote(self):
        w = numkit.mills_w(-20.0)
        assert w == pytest.approx(20.0 + 1 / 20.0, rel=1e-2)
        assert w == pytest.approx(MILLS_M20, rel=1e-12)

    @given(st.floats(-1e3, 35))
    def test_positive_and_above_minus_x(self, x):
        w = numkit.mills_w(x)
        assert w > 0
        assert w > -x

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            numkit.mills_w(np.nan)


class TestMatrices:
    def test_identity(self):
        np.testing.assert_array_equal(numkit.psd_sqrt(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(numkit.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)

    def test_round_trip_random(self, rng):
        for _ in range(100):
            k = int(rng.integers(1, 9))
            A = rng.normal(size=(k, k))
            M = A @ A.T
            R = numkit.psd_sqrt(M)
            np.testing.assert_allclose(R, R.T, atol=1e-12)
            assert np.linalg.norm(R @ R - M) <= 1e-10 * np.linalg.norm(M)
            assert np.linalg.eigvalsh(R).min() >= -1e-12

    def test_rank_deficient_is_clamped(self):
        v = np.array([1.0, 2.0])
        M = np.outer(v, v)
        R = numkit.psd_sqrt(M)
        np.testing.assert_allclose(R @ R, M, atol=1e-12)

    def test_indefinite_raises(self):
        with pytest.raises(NotPSD):
            numkit.psd_sqrt(np.diag([1.0, -0.1]))

    def test_inverse_root(self, rng):
        A = rng.normal(size=(4, 4))
        M = A @ A.T + np.eye(4)
        Ri = numkit.psd_inv_sqrt(M)
        np.testing.assert_allclose(Ri @ M @ Ri, np.eye(4), atol=1e-12)

    def test_is_positive_definite(self):
        assert numkit.is_positive_definite(np.eye(2))
        assert not numkit.is_positive_definite(np.diag([1.0, 0.0]))


class TestBessel:
    def test_half_order_closed_form(self):
        assert numkit.bessel_k(0.5, 1.0) == pytest.approx(0.4610685044, abs=1e-10)

    def test_order_zero(self):
        assert numkit.bessel_k(0.0, 1.0) == pytest.approx(K0_1, rel=1e-12)

    def test_log_variant_extremes(self):
        assert numkit.log_bessel_k(2.5, 40.0) == pytest.approx(LOG_K25_40, rel=1e-12)
        assert numkit.log_bessel_k(0.3, 1e-5) == pytest.approx(LOG_K03_1EM5, rel=1e-10)
        assert numkit.log_bessel_k(1.0, 1e9) == pytest.approx(LOG_K1_1E9, rel=1e-15)
        assert np.isfinite(numkit.log_bessel_k(0.7, 1e-300))

    def test_order_symmetry(self, rng):
        nu = rng.uniform(0, 6, size=50)
        x = rng.uniform(0.05, 30, size=50)
        np.testing.assert_allclose(numkit.bessel_k(-nu, x), numkit.bessel_k(nu, x), rtol=1e-12)

    def test_recurrence(self, rng):
        nu = rng.uniform(-3, 5, size=100)
        x = rng.uniform(0.1, 40, size=100)
        lhs = numkit.bessel_k(nu + 1, x)
        rhs = numkit.bessel_k(nu - 1, x) + 2 * nu / x * numkit.bessel_k(nu, x)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9)

    def test_domain(self):
        with pytest.raises(ValueError):
            numkit.bessel_k(1.0, 0.0)
        with pytest.raises(ValueError):
            numkit.log_bessel_k(1.0, -1.0)


class TestStudentT:
    @pytest.mark.parametrize("df", [0.5, 1.0, 4.0, 50.0])
    def test_symmetry(self, df):
        assert numkit.student_t_cdf(0.0, df) == 0.5

    def test_cauchy(self):
        assert numkit.student_t_cdf(1.0, 1.0) == pytest.approx(0.75, abs=1e-15)

    def test_incomplete_beta(self):
        assert numkit.student_t_cdf(2.0, 4.0) == pytest.approx(T4_2, rel=1e-10)

    def test_log_deep_tail(self):
        assert numkit.log_student_t_cdf(-1000.0, 3.0) == pytest.approx(LOG_T3_M1000, rel=1e-10)

    def test_domain(self):
        with pytest.raises(ValueError):
            numkit.student_t_cdf(0.0, 0.0)

    @given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=20), st.floats(0.5, 300))
    def test_monotone(self, xs, df):
        xs = np.sort(np.asarray(xs))
        assert np.all(np.diff(numkit.student_t_cdf(xs, df)) >= 0)


class TestQuadrature:
    @pytest.mark.parametrize("support", ["half_line", "unit"])
    def test_rule_invariants(self, support):
        rule = numkit.de_rule(support)
        assert np.all(np.exp(rule.log_w) > 0)
        if support == "unit":
            assert np.all(rule.log_u < 0)

    @pytest.mark.parametrize("law", [ScaleLaw.skew_t(4.0), ScaleLaw.skew_t(150.0), ScaleLaw.skew_slash(1.5),
                                     ScaleLaw.skew_slash(80.0), ScaleLaw.skew_vgamma(1.2),
                                     ScaleLaw.skew_vgamma(90.0), ScaleLaw.skew_laplace()])
    def test_normalisation(self, law):
        assert numkit.integrate_scale(np.ones_like, law) == pytest.approx(1.0, abs=1e-10)

    def test_gamma_mean(self):
        assert numkit.integrate_scale(lambda u: u, ScaleLaw.skew_t(4.0)) == pytest.approx(1.0, rel=1e-10)

    def test_beta_inverse_moment(self):
        val = numkit.integrate_scale(lambda u: 1.0 / u, ScaleLaw.skew_slash(3.0))
        assert val == pytest.approx(1.5, rel=1e-8)

    def test_closed_form_moments_random(self, rng):
        for _ in range(50):
            nu = rng.uniform(2.2, 200)
            a = rng.uniform(1.5, 100)
            eta = rng.uniform(0.6, 100)
            # E[1/U] for Gam(nu/2, nu/2), E[1/U] for Beta(a, 1), E[U^2] for Gam(eta, eta)
            got = numkit.integrate_scale(lambda u: 1 / u, ScaleLaw.skew_t(nu))
            assert got == pytest.approx(nu / (nu - 2), rel=1e-7)
            got = numkit.integrate_scale(lambda u: 1 / u, ScaleLaw.skew_slash(a))
            assert got == pytest.approx(a / (a - 1), rel=1e-7)
            got = numkit.integrate_scale(lambda u: u * u, ScaleLaw.skew_vgamma(eta))
            assert got == pytest.approx(1 + 1 / eta, rel=1e-7)

    def test_non_convergent_signalled(self):
        # 1/u against Beta(1.01, 1) has mass piled at the truncation edge
        with pytest.raises(NonConvergent):
            numkit.integrate_scale(lambda u: 1.0 / u, ScaleLaw.skew_slash(1.01))

    def test_scale_posterior_matches_scipy_quad(self):
        law = ScaleLaw.skew_t(6.0)

        def log_kernel(log_u):
            u = np.exp(log_u)
            return np.stack([-0.5 * 3.0 * u + 0.5 * log_u, -0.5 * 0.1 * u + 0.5 * log_u])

        log_z, means = numkit.scale_posterior(law, log_kernel, lambda lu: np.stack([np.exp(lu), lu]))
        for r, d in enumerate((3.0, 0.1)):
            dens = lambda u: np.exp(-0.5 * d * u) * np.sqrt(u) * stats.gamma.pdf(u, 3.0, scale=1 / 3.0)
            z = integrate.quad(dens, 0, np.inf, epsabs=0, epsrel=1e-13)[0]
            m = integrate.quad(lambda u: u * dens(u), 0, np.inf, epsabs=0, epsrel=1e-13)[0] / z
            assert np.exp(log_z[r]) == pytest.approx(z, rel=1e-9)
            assert means[r, 0] == pytest.approx(m, rel=1e-9)

    def test_point_law(self):
        log_z, means = numkit.scale_posterior(ScaleLaw.skew_normal(), lambda lu: np.zeros((2, lu.size)),
                                              lambda lu: np.stack([np.exp(lu)]))
        np.testing.assert_array_equal(log_z, 0.0)
        np.testing.assert_array_equal(means, 1.0)


class TestGoldenSection:
    def test_interior(self):
        x = numkit.golden_section_max(lambda t: -(t - 1.3) ** 2, 0.0, 5.0, tol=1e-9)
        assert x == pytest.approx(1.3, abs=1e-8)

    def test_endpoint(self):
        assert numkit.golden_section_max(lambda t: t, 2.0, 7.0) == 7.0
        assert numkit.golden_section_max(lambda t: -t, 2.0, 7.0) == 2.0

    @settings(max_examples=30)
    @given(st.floats(-10, 10), st.floats(0.1, 5))
    def test_concave(self, c, w):
        x = numkit.golden_section_max(lambda t: -abs(t - c) ** 1.5, c - w, c + 2 * w, tol=1e-10)
        assert x == pytest.approx(c, abs=1e-6)


def test_gamma_inverse_moment_against_special():
    # closed form E[U^-1/2] for Gam(nu/2, nu/2)
    nu = 7.0
    ref = math.sqrt(nu / 2) * math.exp(special.gammaln((nu - 1) / 2) - special.gammaln(nu / 2))
    got = numkit.integrate_scale(lambda u: u ** -0.5, ScaleLaw.skew_t(nu))
    assert got == pytest.approx(ref, rel=1e-9)

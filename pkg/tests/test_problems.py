import numpy as np
import pytest

from lsalab import (
    Moments,
    estimate_moments,
    make_finite_support,
    make_gaussian_noise,
    make_lower_bound_instance,
)
from lsalab.problems import spectral_norm, spectral_norms


def pm_identity(eps):
    eye = np.eye(2)
    z = np.zeros(2)
    return make_finite_support([((z, eye), 0.5 + eps), ((z, -eye), 0.5 - eps)])


class TestFiniteSupport:
    def test_single_atom_deterministic(self):
        p = make_finite_support([((np.zeros(2), np.eye(2)), 1.0)])
        m = p.exact_moments
        assert np.allclose(m.A_P, np.eye(2))
        assert np.allclose(m.C_P, np.eye(2))
        assert m.sigma_A_sq == 0.0
        assert np.allclose(m.theta_star, 0.0)

    def test_pm_identity_family(self):
        m = pm_identity(0.1).exact_moments
        assert np.allclose(m.A_P, 0.2 * np.eye(2))
        assert np.allclose(m.C_P, np.eye(2))

    def test_two_atom_scalar(self):
        p = make_finite_support(
            [((np.array([1.0]), np.array([[2.0]])), 0.5),
             ((np.array([3.0]), np.array([[4.0]])), 0.5)]
        )
        m = p.exact_moments
        assert m.A_P[0, 0] == pytest.approx(3.0)
        assert m.b_P[0] == pytest.approx(2.0)
        assert m.C_P[0, 0] == pytest.approx(10.0)
        assert m.theta_star[0] == pytest.approx(2.0 / 3.0)

    def test_bad_probabilities(self):
        z, eye = np.zeros(2), np.eye(2)
        with pytest.raises(ValueError):
            make_finite_support([((z, eye), 0.7), ((z, eye), 0.2)])
        with pytest.raises(ValueError):
            make_finite_support([((z, eye), 1.5), ((z, eye), -0.5)])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            make_finite_support(
                [((np.zeros(2), np.eye(2)), 0.5), ((np.zeros(3), np.eye(3)), 0.5)]
            )

    def test_sampler_reproducible(self):
        p = pm_identity(0.1)
        b1, A1 = p.sample(np.random.default_rng(7), (100,))
        b2, A2 = p.sample(np.random.default_rng(7), (100,))
        assert np.array_equal(A1, A2) and np.array_equal(b1, b2)
        assert b1.shape == (100, 2) and A1.shape == (100, 2, 2)


class TestGaussianNoise:
    def test_deterministic_case(self):
        A = np.array([[1.0, -10.0], [10.0, 1.0]])
        b = A @ np.ones(2)
        p = make_gaussian_noise(A, b, 0.0, 0.0)
        m = p.exact_moments
        assert np.allclose(m.theta_star, [1.0, 1.0])
        assert np.allclose(m.C_P, A.T @ A)
        bs, As = p.sample(np.random.default_rng(0), (5,))
        assert np.allclose(As, A) and np.allclose(bs, b)

    def test_additive_noise_only(self):
        p = make_gaussian_noise(np.eye(2), np.zeros(2), 0.0, 1.0)
        m = p.exact_moments
        assert np.allclose(m.theta_star, 0.0)
        assert m.sigma_b_sq == pytest.approx(1.0)
        bs, _ = p.sample(np.random.default_rng(3), (200_000,))
        assert (np.abs(bs) ** 2).sum(axis=1).mean() == pytest.approx(1.0, rel=0.02)

    def test_matrix_mean_recovered(self):
        # sample mean of many draws should sit within 3 standard errors
        A = np.array([[1.0, -10.0], [10.0, 1.0]])
        p = make_gaussian_noise(A, A @ np.ones(2), 5.0, 0.0)
        _, As = p.sample(np.random.default_rng(11), (100_000,))
        entry_std = As[:, 0, 0].std(ddof=1)
        se = entry_std / np.sqrt(As.shape[0])
        assert np.all(np.abs(As.mean(axis=0) - A) < 3 * se + 1e-12)

    def test_spectral_norm_calibration(self):
        # E||M||^2 should hit the requested bound within the 2% budget
        p = make_gaussian_noise(np.eye(2), np.zeros(2), 4.0, 0.0)
        _, As = p.sample(np.random.default_rng(5), (150_000,))
        est = (spectral_norms(As - np.eye(2)) ** 2).mean()
        assert est == pytest.approx(16.0, rel=0.02)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            make_gaussian_noise(np.eye(2), np.zeros(2), -1.0, 0.0)
        with pytest.raises(ValueError):
            make_gaussian_noise(np.eye(2), np.zeros(2), 0.0, -0.1)


class TestLowerBoundInstance:
    def test_moments(self):
        p = make_lower_bound_instance(1.0, 2.0, 1.0)
        m = p.exact_moments
        assert np.allclose(m.A_P, np.diag([1.0, 2.0]))
        assert m.sigma_A_sq == 0.0
        assert m.sigma_b_sq == pytest.approx(1.0)
        assert np.allclose(m.theta_star, 0.0)
        bs, _ = p.sample(np.random.default_rng(0), (100_000,))
        assert np.all(bs[:, 1] == 0.0)
        assert (bs[:, 0] ** 2).mean() == pytest.approx(1.0, rel=0.05)

    def test_ordering_enforced(self):
        with pytest.raises(ValueError):
            make_lower_bound_instance(2.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            make_lower_bound_instance(1.0, 1.0, 0.0)


class TestEstimateMoments:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_finite_support_within_standard_errors(self, seed):
        p = make_finite_support(
            [((np.array([1.0, 0.0]), np.array([[2.0, 0.5], [0.0, 1.0]])), 0.3),
             ((np.array([0.0, 2.0]), np.array([[1.0, 0.0], [0.3, 3.0]])), 0.7)]
        )
        exact = p.exact_moments
        est = estimate_moments(p, 1_000_000, seed)
        n = 1_000_000
        # entrywise mean comparison: per-atom spread bounds the standard error
        spread_A = np.abs(p.atoms.As - exact.A_P).max()
        spread_b = np.abs(p.atoms.bs - exact.b_P).max()
        assert np.abs(est.A_P - exact.A_P).max() < 5 * spread_A / np.sqrt(n)
        assert np.abs(est.b_P - exact.b_P).max() < 5 * spread_b / np.sqrt(n)
        assert np.abs(est.C_P - exact.C_P).max() < 5 * 20 / np.sqrt(n)
        assert est.theta_star == pytest.approx(exact.theta_star, abs=1e-2)

    def test_pm_identity_sigma_A(self):
        # brute-force over the two atoms: E||M||^2 with eps = 0.1
        p = pm_identity(0.1)
        exact = (0.5 + 0.1) * spectral_norm(np.eye(2) - 0.2 * np.eye(2)) ** 2 + (
            0.5 - 0.1
        ) * spectral_norm(-np.eye(2) - 0.2 * np.eye(2)) ** 2
        assert p.exact_moments.sigma_A_sq == pytest.approx(exact)
        est = estimate_moments(p, 1_000_000, 42)
        # variance of ||M||^2 over the atoms bounds the MC error
        var = (0.6 * (0.64 - exact) ** 2 + 0.4 * (1.44 - exact) ** 2)
        assert est.sigma_A_sq == pytest.approx(exact, abs=5 * np.sqrt(var / 1e6))

    def test_deterministic_distribution(self):
        p = make_gaussian_noise(np.diag([1.0, 2.0]), np.array([1.0, 1.0]), 0.0, 0.0)
        est = estimate_moments(p, 1000, 0)
        assert np.allclose(est.A_P, np.diag([1.0, 2.0]))
        assert est.sigma_A_sq == 0.0 and est.sigma_b_sq == 0.0
        assert np.allclose(est.C_P, np.diag([1.0, 4.0]))

    def test_deterministic_given_seed(self):
        p = make_gaussian_noise(np.eye(2), np.zeros(2), 1.0, 1.0)
        a = estimate_moments(p, 5000, 9)
        b = estimate_moments(p, 5000, 9)
        assert np.array_equal(a.A_P, b.A_P)
        assert a.sigma_A_sq == b.sigma_A_sq

    def test_n_too_small(self):
        p = pm_identity(0.1)
        with pytest.raises(ValueError):
            estimate_moments(p, 1, 0)


class TestInvariants:
    @pytest.mark.parametrize(
        "factory",
        [
            lambda: pm_identity(0.1),
            lambda: make_gaussian_noise(
                np.array([[1.0, -10.0], [10.0, 1.0]]), np.array([-9.0, 11.0]), 5.0, 1.0
            ),
            lambda: make_lower_bound_instance(0.5, 4.0, 1.0),
        ],
    )
    def test_second_moment_dominates_mean_square(self, factory):
        m = factory().exact_moments
        diff = m.C_P - m.A_P.conj().T @ m.A_P
        assert np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)).min() >= -1e-10

    def test_matrix_noise_is_centered(self):
        # batch mean of A - A_P should shrink like sigma_A/sqrt(n)
        p = make_gaussian_noise(
            np.array([[1.0, -10.0], [10.0, 1.0]]), np.array([-9.0, 11.0]), 5.0, 0.0
        )
        n = 100_000
        _, As = p.sample(np.random.default_rng(123), (n,))
        M_bar = As.mean(axis=0) - p.exact_moments.A_P
        assert spectral_norm(M_bar) < 5 * 5.0 / np.sqrt(n)

    def test_sigma1_sigma2_consistent(self):
        m = make_gaussian_noise(
            np.array([[1.0, -10.0], [10.0, 1.0]]), np.array([-9.0, 11.0]), 5.0, 2.0
        ).exact_moments
        nrm = np.linalg.norm(m.theta_star)
        assert m.sigma1_sq == pytest.approx(m.sigma_A_sq * nrm**2 + m.sigma_b_sq)
        assert m.sigma2_sq == pytest.approx(m.sigma_A_sq * nrm)

    def test_moments_report_no_fixed_point_when_singular(self):
        m = Moments.from_parts(np.zeros((2, 2)), np.ones(2), np.eye(2), 0.0, 0.0)
        assert m.theta_star is None and m.sigma1_sq is None

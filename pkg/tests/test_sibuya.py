import math

import numpy as np
import pytest

from gplab.mixing import MixingSpec
from gplab.partition import PartitionState, SuffStats, replicate_seed
from gplab.sibuya import (_survival_inverse, fisher_info, log_gamma_ratio, psi, psi_derivative, psi_n,
                          sample_sibuya, sibuya_pmf, sibuya_pmf_table, sibuya_score,
                          sibuya_series, sibuya_survival)

ALPHAS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def fisher_closed_form(a):
    """Oracle: the hypergeometric sum collapses to pi / (alpha sin(pi alpha))."""
    return math.pi / (a * math.sin(math.pi * a))


def direct_pmf(a, j):
    """Oracle: the defining product, in floating point."""
    prod = a
    for i in range(1, j):
        prod *= (i - a)
    return prod / math.factorial(j)


class TestPmf:
    def test_first_two(self):
        for a in (0.2, 0.7):
            assert sibuya_pmf(a, 1) == pytest.approx(a)
            assert sibuya_pmf(a, 2) == pytest.approx(a * (1 - a) / 2)

    def test_half(self):
        np.testing.assert_allclose(sibuya_pmf(0.5, np.arange(1, 5)),
                                   [0.5, 0.125, 0.0625, 0.0390625], rtol=1e-13)

    def test_against_products(self):
        for a in (0.05, 0.5, 0.95):
            for j in (1, 3, 10, 40):
                assert sibuya_pmf(a, j) == pytest.approx(direct_pmf(a, j), rel=1e-12)

    def test_table_matches(self):
        j = np.arange(1, 5001)
        np.testing.assert_allclose(sibuya_pmf_table(0.35, 5000), sibuya_pmf(0.35, j), rtol=1e-11)

    def test_domain(self):
        with pytest.raises(ValueError):
            sibuya_pmf(0.5, 0)
        with pytest.raises(ValueError):
            sibuya_pmf(1.0, 2)

    @pytest.mark.parametrize("a", [0.2, 0.5, 0.9])
    def test_tail_against_brute_force(self, a):
        big_j = 10**6
        partial = math.fsum(sibuya_pmf_table(a, big_j))
        surv = float(sibuya_survival(a, big_j))
        assert abs(partial + surv - 1.0) < 1e-11
        # analytic bound from p(j) <= C j^-(1+a), C = 1.1 a / Gamma(1 - a)
        assert surv <= 1.1 * big_j ** -a / math.gamma(1 - a)

    @pytest.mark.parametrize("a", [0.2, 0.5, 0.8])
    def test_tail_exponent(self, a):
        j = np.unique(np.geomspace(1e3, 1e5, 60).astype(int))
        slope = np.polyfit(np.log(j), np.log(sibuya_pmf(a, j)), 1)[0]
        assert abs(slope + (1 + a)) < 0.02

    def test_score_is_log_derivative(self):
        a, h = 0.4, 1e-6
        j = np.array([1, 2, 7, 100])
        fd = (np.log(sibuya_pmf(a + h, j)) - np.log(sibuya_pmf(a - h, j))) / (2 * h)
        np.testing.assert_allclose(sibuya_score(a, j), fd, rtol=1e-7)


class TestLogGammaRatio:
    @pytest.mark.parametrize("y", [1.5, 5.0, 99.0, 101.0, 1e4, 1e9, 1e15])
    def test_unit_shift(self, y):
        # Gamma(y + a) / Gamma(y + a + 1) = 1 / (y + a)
        for a in (-0.7, 0.0, 0.4):
            assert log_gamma_ratio(y, a, a + 1) == pytest.approx(-math.log(y + a), abs=1e-13)

    def test_recurrence_across_switch(self):
        a, b = -0.3, 1.0
        for y in (2.5, 98.5, 99.5, 100.5, 1e6):
            step = log_gamma_ratio(y + 1, a, b) - log_gamma_ratio(y, a, b)
            assert step == pytest.approx(math.log(y + a) - math.log(y + b), abs=1e-13)


class TestSampler:
    def test_small_values(self):
        a = 0.4
        x = sample_sibuya(a, 200_000, np.random.default_rng(1))
        for j in range(1, 6):
            p = direct_pmf(a, j)
            se = math.sqrt(p * (1 - p) / x.size)
            assert abs(np.mean(x == j) - p) < 4 * se

    def test_deep_tail(self):
        a = 0.1
        x = sample_sibuya(a, 200_000, np.random.default_rng(2))
        for m in (10**3, 10**5, 10**8, 10**12):
            p = float(sibuya_survival(a, m))
            se = math.sqrt(p * (1 - p) / x.size)
            assert abs(np.mean(x > m) - p) < 4 * se

    def test_tail_inverse_matches_table(self):
        a = 0.2
        v = np.random.default_rng(3).uniform(0.05, 0.3, 500)
        j = _survival_inverse(a, v, 64.0)
        # oracle: first j with S(j) <= v, by search over an explicit table
        surv = 1.0 - np.cumsum(np.concatenate(([0.0], sibuya_pmf_table(a, 10**7))))
        expected = np.searchsorted(-surv, -v, side="left")
        assert np.all(expected < 10**7)
        np.testing.assert_array_equal(j, expected)


class TestFisherInfo:
    @pytest.mark.parametrize("a", ALPHAS + [0.02, 0.98])
    def test_closed_form(self, a):
        fi = fisher_info(a)
        assert fi.value == pytest.approx(fisher_closed_form(a), rel=1e-12)
        assert fi.value > 1 / a ** 2
        assert fi.tail_bound < 1e-12

    @pytest.mark.parametrize("a", ALPHAS)
    def test_two_forms_agree(self, a):
        assert abs(fisher_info(a).value - fisher_info(a, form="double").value) < 1e-10

    def test_half(self):
        assert fisher_info(0.5).value == pytest.approx(2 * math.pi, rel=1e-13)

    def test_unreachable_tolerance(self):
        with pytest.raises(ArithmeticError):
            sibuya_series(0.3, lambda y: 1 / y, lambda y: -1 / y ** 2, tol=1e-40, max_terms=4096)

    def test_bad_form(self):
        with pytest.raises(ValueError):
            fisher_info(0.5, form="triple")

    def test_variance_of_score(self):
        a, m = 0.5, 200_000
        s = sibuya_score(a, sample_sibuya(a, m, np.random.default_rng(4)))
        var = s.var(ddof=1)
        # SE of a sample variance from the fourth central moment
        se = math.sqrt((np.mean((s - s.mean()) ** 4) - var ** 2) / m)
        assert abs(var - fisher_info(a).value) < 3 * se
        assert abs(s.mean()) < 3 * math.sqrt(var / m)


class TestPsi:
    @pytest.mark.parametrize("a", [0.2, 0.5, 0.8])
    def test_root(self, a):
        assert abs(psi(a, a)) < 1e-12

    @pytest.mark.parametrize("a", [0.2, 0.5, 0.8])
    def test_derivative_is_minus_fisher(self, a):
        h = 1e-5
        fd = (psi(a + h, a) - psi(a - h, a)) / (2 * h)
        assert fd == pytest.approx(-fisher_info(a).value, rel=1e-4)
        assert psi_derivative(a, a) == pytest.approx(-fisher_info(a).value, rel=1e-12)

    def test_signs(self):
        a = 0.6
        for x in (0.05, 0.3, 0.59):
            assert psi(x, a) > 0
        for x in (0.61, 0.8, 0.97):
            assert psi(x, a) < 0

    def test_domain(self):
        with pytest.raises(ValueError):
            psi(1.0, 0.5)


class TestPsiN:
    def test_two_blocks(self):
        s = SuffStats.from_block_sizes([2, 1])
        v, d = psi_n(0.5, s)
        assert abs(v) < 1e-15
        x = 0.3
        assert psi_n(x, s)[0] == pytest.approx(1 / (2 * x) - 1 / (2 * (1 - x)))

    def test_all_singletons(self):
        s = SuffStats.from_block_sizes([1] * 9)
        for x in (0.1, 0.5, 0.9):
            assert psi_n(x, s)[0] == pytest.approx(8 / (9 * x))

    def test_against_direct_sums(self):
        sizes = [1, 1, 2, 5, 5, 17]
        s = SuffStats.from_block_sizes(sizes)
        k, x = len(sizes), 0.37
        direct = (k - 1) / (x * k) - sum(sum(1 / (i - x) for i in range(1, j)) for j in sizes) / k
        ddirect = -(k - 1) / (x * x * k) - sum(sum(1 / (i - x) ** 2 for i in range(1, j))
                                                for j in sizes) / k
        v, d = psi_n(x, s)
        assert v == pytest.approx(direct, rel=1e-13)
        assert d == pytest.approx(ddirect, rel=1e-13)

    def test_slope_bound(self):
        rng = np.random.default_rng(5)
        for _ in range(2000):
            sizes = rng.geometric(rng.uniform(0.05, 0.9), size=rng.integers(1, 40))
            s = SuffStats.from_block_sizes(sizes)
            if s.n < 2:
                continue
            assert -psi_n(rng.uniform(1e-6, 1 - 1e-6), s)[1] >= 0.5

    def test_domain(self):
        with pytest.raises(ValueError):
            psi_n(0.0, SuffStats.from_block_sizes([2, 1]))

    def test_converges_to_psi(self):
        a, n, reps = 0.8, 50000, 400
        stats = [PartitionState(a, MixingSpec.dirac(0), seed=replicate_seed(8, r)).run_to(n)
                 for r in range(reps)]
        for x in (0.3, 0.5, 0.7):
            avg = np.mean([psi_n(x, s)[0] for s in stats])
            assert abs(avg - psi(x, a)) < 0.02

import csv
import io
import itertools
import math
import time
from collections import Counter

import numpy as np
import pytest

from gplab.errors import ConfigError
from gplab.mixing import MixingSpec, discretize
from gplab.partition import (PartitionState, SuffStats, diversity_limit_mean,
                             diversity_moment_band, enumerate_exact, expected_blocks,
                             labels_to_sizes, path_probability, replicate_seed, set_partitions)
from gplab.sibuya import sibuya_pmf

DIRAC0 = MixingSpec.dirac(0)
TWO_ATOMS = MixingSpec.atoms([(0, 0.5), (3, 0.5)])


def one_block_probability(n, alpha, theta):
    """Oracle: v_{n,1} prod_{i<n}(i - alpha) for a point mass at theta."""
    return math.exp(math.lgamma(n - alpha) + math.lgamma(theta + 1)
                    - math.lgamma(1 - alpha) - math.lgamma(theta + n))


def check_counts(state):
    sizes = state.block_sizes
    counts = state.size_counts
    assert sizes.sum() == state.n
    assert sum(counts.values()) == state.k == sizes.size
    assert sum(j * c for j, c in counts.items()) == state.n
    assert counts == dict(Counter(sizes.tolist()))
    assert 1 <= state.k <= state.n


class TestSuffStats:
    def test_from_block_sizes(self):
        s = SuffStats.from_block_sizes([3, 1, 1, 2])
        assert (s.n, s.k_n, s.size_counts) == (7, 4, {1: 2, 2: 1, 3: 1})

    def test_identity_violations(self):
        with pytest.raises(ConfigError):
            SuffStats(5, 2, {1: 1, 2: 1})
        with pytest.raises(ConfigError):
            SuffStats(3, 3, {1: 2, 2: 0})

    def test_csv_roundtrip(self):
        s = SuffStats.from_block_sizes([5, 1, 1, 2, 9])
        buf = io.StringIO()
        csv.writer(buf).writerow(s.csv_row(17))
        row = next(csv.reader(io.StringIO(buf.getvalue())))
        assert row[:3] == ["17", "18", "5"]
        assert row[3:] == ["1:2", "2:1", "5:1", "9:1"]
        assert SuffStats.from_csv_row(row) == (17, s)

    def test_dict_roundtrip(self):
        s = SuffStats.from_block_sizes([4, 4, 1])
        assert SuffStats.from_dict(s.to_dict()) == s


class TestInit:
    def test_initial_state(self):
        st = PartitionState(0.4, DIRAC0, seed=1)
        assert st.block_sizes.tolist() == [1]
        assert (st.n, st.k) == (1, 1)
        assert st.diversity() == 1.0

    def test_identity_tilt(self):
        st = PartitionState(0.4, TWO_ATOMS, seed=1)
        np.testing.assert_allclose(st.pm.weights, [0.5, 0.5])

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2])
    def test_invalid_alpha(self, alpha):
        with pytest.raises(ConfigError):
            PartitionState(alpha, DIRAC0)

    def test_support_violation(self):
        with pytest.raises(ConfigError):
            PartitionState(0.3, MixingSpec.dirac(-0.5))


class TestDynamics:
    def test_equal_seeds_equal_trajectories(self):
        a = PartitionState(0.6, TWO_ATOMS, seed=99)
        b = PartitionState(0.6, TWO_ATOMS, seed=99)
        assert [a.step() for _ in range(300)] == [b.step() for _ in range(300)]
        a.run_to(5000)
        b.run_to(5000)
        np.testing.assert_array_equal(a.block_sizes, b.block_sizes)

    def test_chunking_does_not_change_trajectory(self):
        a = PartitionState(0.5, MixingSpec.uniform(0, 3, 16), seed=5)
        b = PartitionState(0.5, MixingSpec.uniform(0, 3, 16), seed=5)
        a.run_to(3000)
        for m in (17, 18, 500, 1999, 2000, 3000):
            b.run_to(m)
        for _ in range(10):
            b.step()
        a.run_to(3010)
        np.testing.assert_array_equal(a.block_sizes, b.block_sizes)
        np.testing.assert_array_equal(a.pm.weights, b.pm.weights)

    def test_counting_identities_every_step(self):
        st = PartitionState(0.45, TWO_ATOMS, seed=3, capacity=4)
        for _ in range(600):
            st.step()
            check_counts(st)

    def test_step_reports_assignment(self):
        st = PartitionState(0.5, DIRAC0, seed=11)
        for _ in range(200):
            before = st.block_sizes
            a = st.step()
            after = st.block_sizes
            if a.new_block:
                assert after.size == before.size + 1 and after[a.block] == 1
            else:
                assert after[a.block] == before[a.block] + 1

    def test_run_to_same_n(self):
        st = PartitionState(0.5, DIRAC0, seed=2)
        st.run_to(50)
        snap = st.suff_stats()
        assert st.run_to(50) == snap

    def test_run_backwards(self):
        st = PartitionState(0.5, DIRAC0, seed=2)
        st.run_to(10)
        with pytest.raises(ValueError):
            st.run_to(5)

    def test_copy_is_independent(self):
        st = PartitionState(0.5, DIRAC0, seed=2)
        st.run_to(100)
        c = st.copy()
        c.run_to(200)
        assert st.n == 100 and c.n == 200
        d = st.copy()
        d.run_to(200)
        np.testing.assert_array_equal(c.block_sizes, d.block_sizes)

    def test_weights_track_fresh_tilt(self):
        spec = MixingSpec.half_normal(2.0, nodes=64)
        st = PartitionState(0.4, spec, seed=8)
        st.run_to(20000)
        fresh = discretize(spec).tilt(st.n, st.k, 0.4)
        np.testing.assert_allclose(st.pm.weights, fresh.weights, rtol=1e-9, atol=1e-300)


class TestPredictive:
    def test_first_step_new_block_probability(self):
        for a in (0.2, 0.7):
            assert PartitionState(a, DIRAC0).true_simplex()[0] == pytest.approx(a)

    def test_simplex_example(self):
        st = PartitionState.from_block_sizes([2, 1], 0.5, DIRAC0)
        np.testing.assert_allclose(st.true_simplex(), [1 / 3, 1 / 2, 1 / 6])
        p = st.true_simplex()[1:]
        np.testing.assert_allclose(p / p.sum(), [0.75, 0.25])

    def test_dirac_theta(self):
        st = PartitionState.from_block_sizes([4, 2, 1, 1], 0.3, MixingSpec.dirac(2.5))
        assert st.true_simplex()[0] == pytest.approx((2.5 + 4 * 0.3) / (2.5 + 8))

    def test_simplex_closure_along_run(self):
        st = PartitionState(0.6, MixingSpec.uniform(0, 3), seed=4)
        for m in (10, 100, 1000, 10000):
            st.run_to(m)
            p = st.true_simplex()
            assert np.all(p > 0) and abs(math.fsum(p) - 1) < 1e-10

    def test_frozen_state_frequencies(self):
        st = PartitionState(0.5, TWO_ATOMS, seed=21)
        st.run_to(60)
        p = st.true_simplex()
        draws = st.sample_next(10**6, rng=7)
        assert st.n == 60
        freq_new = np.mean(draws == -1)
        se = math.sqrt(p[0] * (1 - p[0]) / 1e6)
        assert abs(freq_new - p[0]) < 4 * se
        counts = np.bincount(draws[draws >= 0], minlength=st.k)
        expected = 1e6 * p[1:]
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        # chi-square with k - 1 dof, 0.999 quantile is below dof + 5 sqrt(2 dof) + 10
        dof = st.k - 1
        assert chi2 < dof + 5 * math.sqrt(2 * dof) + 10


class TestExact:
    def test_n2(self):
        a, th = 0.3, 1.7
        probs = {e.sizes: e.probability for e in enumerate_exact(2, a, MixingSpec.dirac(th))}
        assert probs[(2,)] == pytest.approx((1 - a) / (th + 1))
        assert probs[(1, 1)] == pytest.approx((th + a) / (th + 1))

    def test_n3_one_block(self):
        probs = {e.labels: e.probability for e in enumerate_exact(3, 0.5, DIRAC0)}
        assert probs[(0, 0, 0)] == pytest.approx(0.375)

    def test_bell_numbers_and_normalization(self):
        for n, bell in [(1, 1), (4, 15), (6, 203), (8, 4140)]:
            ex = enumerate_exact(n, 0.4, TWO_ATOMS)
            assert len(ex) == bell
            assert abs(math.fsum(e.probability for e in ex) - 1) < 1e-10

    def test_exchangeability(self):
        for spec in (DIRAC0, TWO_ATOMS):
            for n in range(1, 7):
                by_shape = {}
                for e in enumerate_exact(n, 0.35, spec):
                    by_shape.setdefault(tuple(sorted(e.sizes)), set()).add(round(e.probability, 15))
                assert all(len(v) == 1 for v in by_shape.values())

    def test_path_probability_matches(self):
        for e in enumerate_exact(5, 0.7, TWO_ATOMS):
            assert path_probability(e.labels, 0.7, TWO_ATOMS) == pytest.approx(e.probability,
                                                                                rel=1e-12)

    def test_limits(self):
        with pytest.raises(ValueError):
            enumerate_exact(11, 0.5, DIRAC0)
        with pytest.raises(ValueError):
            enumerate_exact(4, 0.5, MixingSpec.uniform(0, 1))

    def test_set_partitions_are_rgs(self):
        for labels in set_partitions(5):
            seen = -1
            for lab in labels:
                assert lab <= seen + 1
                seen = max(seen, lab)
        assert labels_to_sizes((0, 1, 0, 2, 1)) == (2, 2, 1)


class TestDiversity:
    def test_expected_blocks_against_recursion(self):
        for theta, a in [(0.0, 0.3), (3.0, 0.3), (0.5, 0.8), (-0.2, 0.6)]:
            e = 1.0
            for n in range(1, 3000):
                e += (theta + a * e) / (theta + n)
            assert expected_blocks(theta, a, 3000) == pytest.approx(e, rel=1e-11)

    def test_limit_mean_closed_form(self):
        for theta, a in [(0.0, 0.3), (3.0, 0.8)]:
            alt = math.gamma(theta + 1) * (theta / a + 1) / math.gamma(theta + a + 1)
            assert diversity_limit_mean(theta, a) == pytest.approx(alt, rel=1e-13)

    def test_band(self):
        lo, hi = diversity_moment_band(MixingSpec.atoms([(0, .5), (3, .5)]), 0.3)
        assert lo == pytest.approx(1 / (0.3 * math.gamma(0.3)))
        assert hi == pytest.approx(math.gamma(4) / (0.3 * math.gamma(3.3)))
        assert diversity_moment_band(MixingSpec.half_normal(1.0), 0.3)[1] == math.inf


class TestLargeN:
    def test_block_sizes_follow_sibuya(self):
        a, n, reps = 0.5, 50000, 200
        props = np.zeros((reps, 10))
        for r in range(reps):
            st = PartitionState(a, DIRAC0, seed=replicate_seed(77, r), capacity=n)
            st.run_to(n)
            c = st.size_counts
            props[r] = [c.get(j, 0) / st.k for j in range(1, 11)]
        mean = props.mean(axis=0)
        se = props.std(axis=0, ddof=1) / math.sqrt(reps)
        assert np.all(np.abs(mean - sibuya_pmf(a, np.arange(1, 11))) < 3 * se)

    @pytest.mark.parametrize("alpha", [0.3, 0.8])
    @pytest.mark.parametrize("theta", [0.0, 3.0])
    def test_boundary_rarity(self, alpha, theta):
        hits = 0
        for r in range(500):
            st = PartitionState(alpha, MixingSpec.dirac(theta), seed=replicate_seed(5, r))
            st.run_to(1000)
            hits += st.k in (1, 1000)
        exact = one_block_probability(1000, alpha, theta)
        assert hits / 500 < 0.01, f"exact P(k_n = 1) = {exact:.4f}"

    @pytest.mark.parametrize("alpha,theta", [(0.3, 0.0), (0.5, 0.0), (0.3, 0.5)])
    def test_one_block_frequency_is_exact(self, alpha, theta):
        n, reps = 1000, 4000
        hits = sum(PartitionState(alpha, MixingSpec.dirac(theta), seed=replicate_seed(6, r))
                   .run_to(n).k_n == 1 for r in range(reps))
        p = one_block_probability(n, alpha, theta)
        assert abs(hits / reps - p) < 4 * math.sqrt(p * (1 - p) / reps)
        # polynomial decay n^-(alpha + theta), not exponential
        ratio = p * n ** (alpha + theta)
        assert math.gamma(theta + 1) / math.gamma(1 - alpha) == pytest.approx(ratio, rel=0.01)

    def test_step_cost(self):
        st = PartitionState(0.5, DIRAC0, seed=0, capacity=20000)
        st.run_to(100)  # compile
        best = math.inf
        for rep in range(5):
            st = PartitionState(0.5, DIRAC0, seed=rep, capacity=20000)
            t0 = time.perf_counter()
            st.run_to(20000)
            best = min(best, time.perf_counter() - t0)
        assert best < 0.010

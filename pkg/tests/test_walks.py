import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from loopforge import rng as rng_mod
from loopforge.walks import (
    BoundaryConvention,
    WalkConfig,
    _srw_sites_until_exit,
    bridge_sites_from_codes,
    domain_sites,
    expected_exit_time_exact,
    lclt_ratio_error,
    return_probability,
    return_probability_exact,
    sample_bridge,
    sample_bridge_1d,
    sample_bridge_half_counts,
    sample_bridge_step_codes,
    sample_lerw,
    sample_srw_stopped,
    trace_visit_probabilities,
    visit_probability_exact,
)

OPEN = BoundaryConvention.OPEN
CLOSED = BoundaryConvention.CLOSED


def brute_force_p2n(d, n):
    """p_{2n}(0,0) by enumerating all (2d)^(2n) step strings."""
    m = 2 * n
    total = (2 * d) ** m
    codes = np.arange(total, dtype=np.int64)
    net = np.zeros((total, d), dtype=np.int64)
    for k in range(m):
        digit = (codes // (2 * d) ** k) % (2 * d)
        axis = digit >> 1
        sign = 1 - 2 * (digit & 1)
        for a in range(d):
            net[:, a] += np.where(axis == a, sign, 0)
    closed = np.count_nonzero(np.all(net == 0, axis=1))
    return closed / total


class TestReturnProbability:
    @pytest.mark.parametrize(
        "d,n,value",
        [(3, 1, Fraction(1, 6)), (2, 1, Fraction(1, 4)), (3, 2, Fraction(5, 72)), (1, 1, Fraction(1, 2))],
    )
    def test_known_values(self, d, n, value):
        assert return_probability(d, n) == pytest.approx(float(value), rel=1e-13)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_matches_rational_oracle(self, d):
        for n in range(1, 17):
            exact = float(return_probability_exact(d, n))
            assert return_probability(d, n) == pytest.approx(exact, rel=1e-12)

    @pytest.mark.parametrize("d,n", [(2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (3, 3), (3, 4)])
    def test_matches_brute_force_enumeration(self, d, n):
        assert return_probability(d, n) == pytest.approx(brute_force_p2n(d, n), rel=1e-12)

    def test_rejects_huge_n(self):
        with pytest.raises(ValueError):
            return_probability(3, 10**6 + 1)

    def test_n_zero(self):
        assert return_probability(3, 0) == 1.0

    @pytest.mark.parametrize("d", [2, 3])
    def test_lclt_two_term_window(self, d):
        for n in range(1, 65):
            assert lclt_ratio_error(d, n) <= 5.0 / n**2


class TestStoppedWalk:
    @pytest.mark.parametrize("d,n,conv", [(2, 3, OPEN), (2, 3, CLOSED), (3, 2, OPEN), (1, 4, CLOSED)])
    def test_interior_until_last(self, d, n, conv):
        g = rng_mod.stream(7, d)
        for _ in range(50):
            w = sample_srw_stopped(WalkConfig(d, n, convention=conv), g)
            sq = (w.sites.astype(float) ** 2).sum(axis=1)
            inside = sq < n * n if conv is OPEN else sq <= n * n
            assert inside[:-1].all() and not inside[-1]
            assert w.start == (0,) * d

    def test_open_ball_radius_one_exits_immediately(self):
        g = rng_mod.stream(3)
        w = sample_srw_stopped(WalkConfig(3, 1, convention=OPEN), g)
        assert len(w) == 2

    def test_closed_convention_exit_layer(self):
        g = rng_mod.stream(11)
        for _ in range(20):
            w = sample_srw_stopped(WalkConfig(1, 2, convention=CLOSED), g)
            assert abs(int(w.sites[-1, 0])) == 3

    def test_mean_exit_time_matches_oracle(self):
        g = rng_mod.stream(5)
        cfg = WalkConfig(2, 4)
        times = np.array([sample_srw_stopped(cfg, g).n_steps for _ in range(10_000)], float)
        exact = expected_exit_time_exact(2, 4)
        z = (times.mean() - exact) / (times.std(ddof=1) / math.sqrt(len(times)))
        assert abs(z) < 4.0

    def test_step_cap(self):
        g = rng_mod.stream(1)
        with pytest.raises(RuntimeError):
            _srw_sites_until_exit(1, 10_000, OPEN, g, cap=1000)

    def test_origin_must_be_interior(self):
        with pytest.raises(ValueError):
            WalkConfig(2, 0, convention=OPEN)


class TestLerw:
    @pytest.mark.parametrize("d,n", [(2, 5), (3, 4)])
    def test_simple_path_from_origin_to_exit(self, d, n):
        g = rng_mod.stream(13, d)
        for _ in range(30):
            p = sample_lerw(WalkConfig(d, n), g)
            assert p.is_simple()
            assert p.start == (0,) * d
            sq = (p.sites.astype(float) ** 2).sum(axis=1)
            assert (sq[:-1] < n * n).all() and sq[-1] >= n * n

    def test_one_dimensional_length_is_radius(self):
        g = rng_mod.stream(17)
        for _ in range(20):
            p = sample_lerw(WalkConfig(1, 6), g)
            assert p.n_steps == 6


class TestVisitProbability:
    def test_gamblers_ruin(self):
        assert visit_probability_exact(1, 2, (1,)) == pytest.approx(2 / 3, abs=1e-12)

    def test_origin_certain(self):
        assert visit_probability_exact(2, 3, (0, 0)) == 1.0

    def test_outside_domain_rejected(self):
        with pytest.raises(ValueError):
            visit_probability_exact(2, 3, (3, 0), OPEN)

    def test_green_identity_matches_direct_solve(self):
        sites, probs = trace_visit_probabilities(2, 3)
        for row, p in zip(sites, probs):
            direct = visit_probability_exact(2, 3, tuple(row))
            assert p == pytest.approx(direct, abs=1e-10)

    def test_radially_non_increasing_on_axis(self):
        sites, probs = trace_visit_probabilities(3, 6)
        lookup = {tuple(s): p for s, p in zip(sites, probs)}
        for axis in range(3):
            vals = []
            for k in range(6):
                x = [0, 0, 0]
                x[axis] = k
                vals.append(lookup[tuple(x)])
            assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_closed_vs_open_domains(self):
        assert domain_sites(2, 2, OPEN).shape[0] == 9
        assert domain_sites(2, 2, CLOSED).shape[0] == 13

    def test_monte_carlo_agreement(self):
        cfg = WalkConfig(2, 3)
        g = rng_mod.stream(23)
        target = (1, 1)
        hits = 0
        n_samples = 20_000
        for _ in range(n_samples):
            w = sample_srw_stopped(cfg, g)
            if target in w.site_set():
                hits += 1
        p = visit_probability_exact(2, 3, target)
        z = (hits / n_samples - p) / math.sqrt(p * (1 - p) / n_samples)
        assert abs(z) < 4.0


class TestBridges:
    def test_1d_needs_even_positive(self):
        g = rng_mod.stream(0)
        with pytest.raises(ValueError):
            sample_bridge_1d(3, g)
        with pytest.raises(ValueError):
            sample_bridge_1d(0, g)

    def test_1d_closed(self):
        g = rng_mod.stream(29)
        for m in (2, 4, 10):
            p = sample_bridge_1d(m, g)
            assert p.is_closed() and p.n_steps == m

    def test_1d_uniform_over_arrangements(self):
        g = rng_mod.stream(31)
        counts = {}
        for _ in range(12_000):
            p = sample_bridge_1d(4, g)
            key = tuple(int(v) for v in np.diff(p.sites[:, 0]))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        chi = stats.chisquare(list(counts.values()))
        assert chi.pvalue > 1e-3

    def test_ddim_m2_uniform_over_first_steps(self):
        g = rng_mod.stream(37)
        counts = {}
        for _ in range(12_000):
            p = sample_bridge(3, 2, g)
            counts[tuple(p.sites[1])] = counts.get(tuple(p.sites[1]), 0) + 1
        assert len(counts) == 6
        assert stats.chisquare(list(counts.values())).pvalue > 1e-3

    def test_ddim_m4_uniform_over_closed_walks(self):
        # 36 closed 4-step walks in d=2; straight-coordinate walks carry the
        # same weight as mixed ones under the uniform (conditioned SRW) law
        g = rng_mod.stream(41)
        counts = {}
        for _ in range(36_000):
            p = sample_bridge(2, 4, g)
            key = tuple(map(tuple, p.sites[1:4]))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 36
        assert stats.chisquare(list(counts.values())).pvalue > 1e-3

    def test_half_count_law(self):
        # d=2, n=2: weights prod 1/(n_i!)^2 give (1/6, 2/3, 1/6) over n_1
        g = rng_mod.stream(43)
        counts = sample_bridge_half_counts(2, 2, 30_000, g)
        freq = np.bincount(counts[:, 0], minlength=3)
        assert stats.chisquare(freq, 30_000 * np.array([1 / 6, 2 / 3, 1 / 6])).pvalue > 1e-3

    def test_batch_codes_match_walks(self):
        g = rng_mod.stream(47)
        codes = sample_bridge_step_codes(3, 8, 64, g)
        sites = bridge_sites_from_codes(3, codes)
        assert (sites[:, 0, :] == 0).all() and (sites[:, -1, :] == 0).all()
        assert np.abs(np.diff(sites, axis=1)).sum(axis=2).max() == 1

"""Tests for the glued-trace construction and its site-by-site verifier."""

import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from loopforge import rng as rng_mod
from loopforge.decompose import (
    choose_max_half_length,
    contained_tail_mass_bound,
    sample_decomposed_trace,
    trace_indicator_samples,
    verify_decomposition,
    _killed_spectrum,
)
from loopforge.walks import BoundaryConvention, _srw_sites_until_exit


class TestCertificate:
    def test_spectrum_strictly_inside_unit_disc(self):
        eigs = _killed_spectrum(2, 3, BoundaryConvention.OPEN)
        assert np.all(np.abs(eigs) < 1.0)

    def test_one_dim_spectrum_known(self):
        # interior {-1, 0, 1}: tridiagonal quarter matrix has eigenvalues
        # 0 and +-1/sqrt(2)
        eigs = np.sort(_killed_spectrum(1, 2, BoundaryConvention.OPEN))
        np.testing.assert_allclose(eigs, [-1 / math.sqrt(2), 0.0, 1 / math.sqrt(2)], atol=1e-12)

    def test_bound_decreases(self):
        b1 = contained_tail_mass_bound(2, 4, 16)
        b2 = contained_tail_mass_bound(2, 4, 64)
        assert b2 < b1

    def test_choose_cutoff_meets_tolerance(self):
        n_max = choose_max_half_length(3, 4)
        assert n_max >= 16
        assert contained_tail_mass_bound(3, 4, n_max) < 1e-9

    def test_tail_bound_dominates_direct_sum(self):
        # direct partial sum of the omitted series must stay below the bound
        eigs = _killed_spectrum(2, 3, BoundaryConvention.OPEN)
        lam2 = eigs**2
        n_max = 8
        direct = sum((lam2 ** k).sum() / (2 * k) for k in range(n_max + 1, n_max + 200))
        assert direct <= contained_tail_mass_bound(2, 3, n_max) + 1e-15


class TestSampleDecomposedTrace:
    def test_structure(self):
        rng = rng_mod.stream(1)
        out = sample_decomposed_trace(2, 3, rng)
        assert out.lerw.is_simple()
        assert out.lerw.start == (0, 0)
        ex, ey = out.lerw.end
        assert ex * ex + ey * ey >= 9
        assert out.kept.shape == (len(out.loops),)

    def test_loops_contained_and_kept_iff_meeting(self):
        rng = rng_mod.stream(2)
        for _ in range(20):
            out = sample_decomposed_trace(2, 3, rng)
            lerw_set = out.lerw.site_set()
            for lp, keep in zip(out.loops, out.kept):
                assert all(x * x + y * y < 9 for x, y in lp.path.site_tuples())
                assert keep == bool(lp.path.site_set() & lerw_set)

    def test_trace_is_union(self):
        rng = rng_mod.stream(3)
        for _ in range(10):
            out = sample_decomposed_trace(3, 2, rng)
            expected = set(out.lerw.site_tuples())
            for lp in out.kept_loops:
                expected.update(lp.path.site_tuples())
            assert out.trace_sites == frozenset(expected)

    def test_deterministic(self):
        a = sample_decomposed_trace(2, 3, rng_mod.stream(7))
        b = sample_decomposed_trace(2, 3, rng_mod.stream(7))
        assert a.trace_sites == b.trace_sites
        assert np.array_equal(a.lerw.sites, b.lerw.sites)


def set_counts_from_matrix(mat: np.ndarray) -> Counter:
    return Counter(row.tobytes() for row in mat)


def chisquare_two_sample(c1: Counter, c2: Counter, min_bin: int = 16) -> float:
    keys = sorted(set(c1) | set(c2))
    big = [k for k in keys if c1[k] + c2[k] >= min_bin]
    row1 = [c1[k] for k in big] + [sum(c1[k] for k in keys if k not in big)]
    row2 = [c2[k] for k in big] + [sum(c2[k] for k in keys if k not in big)]
    if row1[-1] + row2[-1] == 0:
        row1, row2 = row1[:-1], row2[:-1]
    return stats.chi2_contingency([row1, row2]).pvalue


class TestEngineLaw:
    def test_origin_always_present(self):
        sites, mat = trace_indicator_samples(2, 2, 500, seed=5)
        origin_col = int(np.flatnonzero((sites == 0).all(axis=1))[0])
        assert mat[:, origin_col].all()

    def test_glued_trace_matches_walk_trace_in_law(self):
        # strongest check at unit scale: the full joint law of the glued site
        # set against directly simulated stopped-walk traces
        d, n, count = 2, 2, 4000
        sites, mat = trace_indicator_samples(d, n, count, seed=11)
        col = {tuple(map(int, s)): j for j, s in enumerate(sites)}
        glued = set_counts_from_matrix(mat)

        rng = rng_mod.stream(12)
        rows = np.zeros((count, sites.shape[0]), dtype=bool)
        for i in range(count):
            walk = _srw_sites_until_exit(d, n, BoundaryConvention.OPEN, rng, 10**9)
            for site in map(tuple, walk[:-1]):
                rows[i, col[site]] = True
        direct = set_counts_from_matrix(rows)
        assert chisquare_two_sample(glued, direct) > 1e-3

    def test_glued_trace_matches_reference_sampler(self):
        d, n, count = 2, 2, 2500
        sites, mat = trace_indicator_samples(d, n, count, seed=21)
        col = {tuple(map(int, s)): j for j, s in enumerate(sites)}
        engine = set_counts_from_matrix(mat)

        rng = rng_mod.stream(22)
        rows = np.zeros((count, sites.shape[0]), dtype=bool)
        for i in range(count):
            out = sample_decomposed_trace(d, n, rng)
            for site in out.trace_sites:
                j = col.get(site)
                if j is not None:
                    rows[i, j] = True
        reference = set_counts_from_matrix(rows)
        assert chisquare_two_sample(engine, reference) > 1e-3


class TestVerifyDecomposition:
    def test_one_dimensional_z_scores(self):
        report = verify_decomposition(1, 3, 40_000, seed=3)
        assert report.n_sites == 5
        assert report.max_abs_z < 4.5
        origin = int(np.flatnonzero((report.sites == 0).all(axis=1))[0])
        assert report.estimate[origin] == 1.0
        assert report.exact[origin] == 1.0

    def test_two_dimensional_smoke(self):
        report = verify_decomposition(2, 3, 60_000, seed=4)
        assert report.frac_within(4.0) >= 0.9
        assert report.max_abs_z < 6.0
        assert 0.0 < report.estimate.min()
        assert report.summary().startswith("decomposition d=2 n=3")

    def test_thread_count_invariance(self):
        kw = dict(seed=9, chunk_size=512)
        a = verify_decomposition(2, 2, 3000, threads=1, **kw)
        b = verify_decomposition(2, 2, 3000, threads=4, **kw)
        assert np.array_equal(a.z, b.z)
        assert np.array_equal(a.estimate, b.estimate)

    def test_partial_chunk(self):
        report = verify_decomposition(1, 2, 600, seed=1, chunk_size=256)
        assert report.samples == 600

    def test_validation(self):
        with pytest.raises(ValueError):
            verify_decomposition(2, 3, 0)
        with pytest.raises(ValueError):
            verify_decomposition(2, 3, 100, threads=0)

    def test_csv_output(self, tmp_path):
        report = verify_decomposition(2, 2, 2000, seed=6)
        path = tmp_path / "report.csv"
        report.to_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "x0,x1,exact,estimate,std_err,z"
        assert len(lines) == report.n_sites + 1
        first = lines[1].split(",")
        assert len(first) == 6
        float(first[2]), float(first[5])

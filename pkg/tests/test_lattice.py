import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopforge.lattice import (
    DiscreteLoop,
    LatticePath,
    ball_sites,
    boundary,
    cut_points,
    cut_points_literal,
    enlargement,
    loop_erase,
    read_paths_jsonl,
    write_paths_jsonl,
)
from loopforge.walks import step_table


def walk_path(d, codes):
    """Path from step codes (axis = c >> 1, sign by parity), from the origin."""
    tab = step_table(d)
    disp = tab[np.asarray(codes, dtype=np.int64)] if codes else np.zeros((0, d), np.int64)
    sites = np.zeros((len(codes) + 1, d), dtype=np.int64)
    np.cumsum(disp, axis=0, out=sites[1:])
    return LatticePath(sites)


walk_strategy = st.integers(min_value=1, max_value=3).flatmap(
    lambda d: st.tuples(
        st.just(d), st.lists(st.integers(0, 2 * d - 1), min_size=0, max_size=120)
    )
)


class TestLatticePath:
    def test_rejects_non_neighbor_steps(self):
        with pytest.raises(ValueError):
            LatticePath([(0, 0), (1, 1)])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            LatticePath(np.zeros((0, 2), dtype=np.int64))

    def test_single_site_ok(self):
        p = LatticePath([(5, -3)])
        assert len(p) == 1 and p.n_steps == 0

    def test_length_is_site_count(self):
        p = walk_path(2, [0, 0, 2])
        assert len(p) == 4 and p.n_steps == 3


class TestLoopErase:
    def test_textbook_example(self):
        p = LatticePath([(0, 0), (1, 0), (0, 0), (0, 1)])
        assert loop_erase(p).site_tuples() == [(0, 0), (0, 1)]

    def test_simple_path_fixed(self):
        p = walk_path(2, [0, 0, 2, 2, 0])
        assert loop_erase(p).site_tuples() == p.site_tuples()

    def test_closed_path_collapses(self):
        p = walk_path(2, [0, 2, 1, 3])  # unit square back to start
        assert loop_erase(p).site_tuples() == [(0, 0)]

    @given(walk_strategy)
    @settings(max_examples=200, deadline=None)
    def test_output_simple_with_kept_endpoints(self, dw):
        d, codes = dw
        p = walk_path(d, codes)
        q = loop_erase(p)
        assert q.is_simple()
        assert q.start == p.start and q.end == p.end
        assert q.site_set() <= p.site_set()

    @given(walk_strategy)
    @settings(max_examples=100, deadline=None)
    def test_idempotent(self, dw):
        d, codes = dw
        q = loop_erase(walk_path(d, codes))
        assert loop_erase(q).site_tuples() == q.site_tuples()


class TestCutPoints:
    def test_textbook_example(self):
        p = LatticePath([(0, 0), (1, 0), (0, 0), (0, 1)])
        assert cut_points(p, 4) == {(0, 0)}

    def test_t_bounds(self):
        p = walk_path(2, [0, 1])
        with pytest.raises(ValueError):
            cut_points(p, 0)
        with pytest.raises(ValueError):
            cut_points(p, len(p) + 1)

    def test_self_avoiding_gives_all_but_last(self):
        p = walk_path(3, [0, 2, 4, 0, 2])
        assert p.is_simple()
        assert cut_points(p, len(p)) == set(p.site_tuples()[:-1])
        assert len(cut_points(p, len(p))) == len(p) - 1

    @given(walk_strategy, st.integers(1, 121))
    @settings(max_examples=200, deadline=None)
    def test_matches_literal_definition(self, dw, t_raw):
        d, codes = dw
        p = walk_path(d, codes)
        t = min(t_raw, len(p))
        assert cut_points(p, t) == cut_points_literal(p, t)

    @given(walk_strategy)
    @settings(max_examples=150, deadline=None)
    def test_contained_in_erased_sites(self, dw):
        d, codes = dw
        p = walk_path(d, codes)
        assert cut_points(p, len(p)) <= loop_erase(p).site_set()


class TestBallsAndBoundary:
    @pytest.mark.parametrize(
        "d,r,count",
        [(3, 1, 7), (2, 2, 13), (1, 3, 7), (2, 0, 1), (3, 2, 33)],
    )
    def test_ball_counts(self, d, r, count):
        assert len(ball_sites((0,) * d, r)) == count

    def test_ball_membership_exact_at_radius(self):
        pts = set(ball_sites((0, 0), 2))
        assert (1, 1) in pts and (2, 0) in pts and (2, 1) not in pts

    def test_negative_radius_empty(self):
        assert ball_sites((0, 0), -1) == []

    def test_ball_translation(self):
        shifted = set(ball_sites((5, -2), 1))
        assert shifted == {(5, -2), (6, -2), (4, -2), (5, -1), (5, -3)}

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_boundary_of_singleton(self, d):
        assert len(boundary({(0,) * d})) == 2 * d

    def test_boundary_disjoint_and_adjacent(self):
        A = set(ball_sites((0, 0, 0), 2))
        bd = boundary(A)
        assert not (bd & A)
        tab = step_table(3)
        for x in bd:
            assert any(tuple(np.add(x, s)) in A for s in tab)

    def test_boundary_empty(self):
        assert boundary(set()) == set()


def square_loop(root):
    x, y = root
    return DiscreteLoop(
        root=root,
        path=LatticePath([(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1), (x, y)]),
    )


class TestEnlargement:
    def test_absorbs_touching_loop_only(self):
        base = {(0, 0)}
        touching = square_loop((0, 0))
        far = square_loop((10, 10))
        out = enlargement(base, [touching, far])
        assert out == touching.site_set() | base
        assert (10, 10) not in out

    def test_no_loops_identity(self):
        base = {(1, 2), (3, 4)}
        assert enlargement(base, []) == base

    def test_intersection_tested_against_base_not_union(self):
        # B touches A's sites but not the base, so B must not be absorbed
        base = {(0, 0)}
        a = square_loop((0, 0))
        b = square_loop((1, 0))
        out = enlargement(base, [a, b])
        assert out == a.site_set() | base
        assert (2, 0) not in out

    @given(st.sets(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), max_size=10))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_base(self, base):
        loops = [square_loop((0, 0)), square_loop((2, 2))]
        bigger = base | {(0, 0)}
        assert enlargement(base, loops) <= enlargement(bigger, loops)


class TestDiscreteLoop:
    def test_rejects_open_path(self):
        with pytest.raises(ValueError):
            DiscreteLoop(root=(0, 0), path=LatticePath([(0, 0), (1, 0)]))

    def test_rejects_root_mismatch(self):
        with pytest.raises(ValueError):
            DiscreteLoop(root=(1, 1), path=LatticePath([(0, 0), (1, 0), (0, 0)]))

    def test_half_length(self):
        assert square_loop((0, 0)).half_length == 2


class TestJsonl:
    def test_round_trip(self):
        paths = [walk_path(2, [0, 2, 1]), walk_path(2, [])]
        buf = io.StringIO()
        write_paths_jsonl(paths, buf)
        buf.seek(0)
        back = read_paths_jsonl(buf)
        assert [p.site_tuples() for p in back] == [p.site_tuples() for p in paths]

    def test_malformed_rejected(self):
        buf = io.StringIO('{"d": 3, "sites": [[0, 0]]}\n')
        with pytest.raises(ValueError):
            read_paths_jsonl(buf)

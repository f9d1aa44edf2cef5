"""Lattice geometry and combinatorial path operations on Z^d.

Paths are finite sequences of nearest-neighbor lattice sites.  This module
holds the deterministic machinery shared by the samplers: chronological loop
erasure, cut points, discrete balls and boundaries, and the enlargement of a
site set by the loops that touch it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

Site = tuple[int, ...]

# Coordinates with |x_i| < _ENC_HALF pack into a single int64, which makes
# dict/set operations on sites cheap.  Larger coordinates fall back to tuples.
_ENC_BITS = 21
_ENC_HALF = 1 << (_ENC_BITS - 1)


def _as_site_array(sites) -> np.ndarray:
    arr = np.asarray(sites, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("a path needs at least one site of fixed dimension")
    return arr


@dataclass(frozen=True)
class LatticePath:
    """A nearest-neighbor path: sites[k] is the (k+1)-th visited site."""

    sites: np.ndarray

    def __post_init__(self):
        arr = _as_site_array(self.sites)
        if arr.shape[0] > 1:
            jumps = np.abs(np.diff(arr, axis=0)).sum(axis=1)
            if not np.all(jumps == 1):
                raise ValueError("consecutive sites must differ by one unit step")
        arr.setflags(write=False)
        object.__setattr__(self, "sites", arr)

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    @property
    def n_steps(self) -> int:
        return self.sites.shape[0] - 1

    def __len__(self) -> int:
        # length convention: number of sites, matching 1-based path notation
        return self.sites.shape[0]

    @property
    def start(self) -> Site:
        return tuple(int(c) for c in self.sites[0])

    @property
    def end(self) -> Site:
        return tuple(int(c) for c in self.sites[-1])

    def site_tuples(self) -> list[Site]:
        return [tuple(int(c) for c in row) for row in self.sites]

    def site_set(self) -> set[Site]:
        return set(self.site_tuples())

    def is_simple(self) -> bool:
        return len(self.site_set()) == len(self)

    def is_closed(self) -> bool:
        return bool(np.all(self.sites[0] == self.sites[-1]))


@dataclass(frozen=True)
class DiscreteLoop:
    """A rooted lattice loop: a closed even-length path with a soup label."""

    root: Site
    path: LatticePath
    label: float = 0.0

    def __post_init__(self):
        if not self.path.is_closed():
            raise ValueError("loop path must return to its first site")
        if self.path.n_steps % 2 != 0:
            raise ValueError("loop length must be even")
        if tuple(int(c) for c in self.path.sites[0]) != tuple(self.root):
            raise ValueError("loop path must start at its root")
        object.__setattr__(self, "root", tuple(int(c) for c in self.root))

    @property
    def half_length(self) -> int:
        return self.path.n_steps // 2

    def site_set(self) -> set[Site]:
        return self.path.site_set()


def encode_sites(arr: np.ndarray):
    """Pack an (L, d) int array into hashable per-site keys.

    Returns an int64 array for d <= 3 and small coordinates, else a list of
    tuples.  Both forms support dict-based indexing; callers should not rely
    on the concrete type.
    """
    arr = np.asarray(arr, dtype=np.int64)
    d = arr.shape[1]
    if d <= 3 and np.all(np.abs(arr) < _ENC_HALF):
        out = arr[:, 0] + _ENC_HALF
        for i in range(1, d):
            out = out | ((arr[:, i] + _ENC_HALF) << (_ENC_BITS * i))
        return out
    return [tuple(int(c) for c in row) for row in arr]


def _keys_to_list(keys):
    return keys.tolist() if isinstance(keys, np.ndarray) else keys


def erase_loops_indices(keys) -> list[int]:
    """Indices kept by chronological loop erasure, over hashable site keys.

    The erased path starts at the first site; from the current site it jumps
    to the step after that site's last occurrence in the whole path, and stops
    once the current site's last occurrence is the final index.
    """
    keys = _keys_to_list(keys)
    last = {}
    for i, k in enumerate(keys):
        last[k] = i
    n_last = len(keys) - 1
    out = [0]
    i = 0
    while True:
        j = last[keys[i]]
        if j >= n_last:
            return out
        i = j + 1
        out.append(i)


def loop_erase(path: LatticePath) -> LatticePath:
    """Chronological loop erasure of a lattice path.

    Examples
    --------
    >>> p = LatticePath([(0, 0), (1, 0), (0, 0), (0, 1)])
    >>> loop_erase(p).site_tuples()
    [(0, 0), (0, 1)]
    """
    idx = erase_loops_indices(encode_sites(path.sites))
    return LatticePath(path.sites[idx])


def cut_points(path: LatticePath, t: int) -> set[Site]:
    """Sites gamma(i), i < t, whose past and strict future are disjoint.

    ``t`` is a 1-based index into the path, 1 <= t <= len(path).  A site
    gamma(i) qualifies when gamma[1, i] and gamma[i + 1, len] share no site.
    """
    length = len(path)
    if not 1 <= t <= length:
        raise ValueError(f"t must lie in [1, {length}], got {t}")
    if t == 1:
        return set()
    keys = encode_sites(path.sites)
    keys_list = _keys_to_list(keys)
    last = {}
    for i, k in enumerate(keys_list):
        last[k] = i
    last_arr = np.fromiter((last[k] for k in keys_list), dtype=np.int64, count=length)
    run_max = np.maximum.accumulate(last_arr)
    idx = np.arange(length)
    cut_mask = (run_max <= idx) & (idx <= t - 2)
    rows = path.sites[cut_mask]
    return {tuple(int(c) for c in row) for row in rows}


def cut_points_literal(path: LatticePath, t: int) -> set[Site]:
    """Quadratic reference implementation of cut_points, kept for testing."""
    length = len(path)
    if not 1 <= t <= length:
        raise ValueError(f"t must lie in [1, {length}], got {t}")
    tuples = path.site_tuples()
    out = set()
    for i0 in range(t - 1):  # 1-based i = i0 + 1 < t
        past = set(tuples[: i0 + 1])
        future = set(tuples[i0 + 1 :])
        if not past & future:
            out.add(tuples[i0])
    return out


def enlargement(base, loops) -> set[Site]:
    """Union of ``base`` with the site sets of all loops intersecting it."""
    base = set(base)
    out = set(base)
    for loop in loops:
        sites = loop.site_set() if hasattr(loop, "site_set") else set(loop)
        if sites & base:
            out |= sites
    return out


def ball_sites(center, r: float) -> list[Site]:
    """Lattice sites of the closed ball {x : |x - center| <= r}.

    Membership compares the integer squared distance against r*r, so the
    boundary is bit-exact for any radius.
    """
    center = np.asarray(center, dtype=np.int64)
    d = center.shape[0]
    if r < 0:
        return []
    reach = int(np.floor(r))
    axes = [np.arange(-reach, reach + 1, dtype=np.int64)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    keep = (grid.astype(np.float64) ** 2).sum(axis=1) <= r * r
    pts = grid[keep] + center
    return [tuple(int(c) for c in row) for row in pts]


def boundary(sites) -> set[Site]:
    """Exterior vertex boundary: sites off A adjacent to some site of A."""
    inside = set(sites)
    if not inside:
        return set()
    d = len(next(iter(inside)))
    out = set()
    for x in inside:
        for axis in range(d):
            for sign in (1, -1):
                y = list(x)
                y[axis] += sign
                y = tuple(y)
                if y not in inside:
                    out.add(y)
    return out


def write_paths_jsonl(path_objs, fh) -> None:
    """Serialize paths as JSON lines: {"d": d, "sites": [[...], ...]}."""
    for p in path_objs:
        fh.write(json.dumps({"d": p.d, "sites": [list(map(int, row)) for row in p.sites]}))
        fh.write("\n")


def read_paths_jsonl(fh) -> list[LatticePath]:
    out = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        sites = np.asarray(rec["sites"], dtype=np.int64)
        if sites.ndim != 2 or sites.shape[1] != rec["d"]:
            raise ValueError("malformed path record")
        out.append(LatticePath(sites))
    return out

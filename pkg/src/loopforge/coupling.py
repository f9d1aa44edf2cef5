"""Couplings between the lattice and Brownian objects.

Three layers: per-cell Poisson counts are coupled maximally (disagreement
probability equal to the total-variation distance), single bridges are
coupled by recursive dyadic quantile coupling (one shared uniform per
midpoint, inverted through the exact walk-bridge conditional CDF on one side
and the Gaussian bridge conditional on the other), and whole soups are
coupled cell by cell, pairing the m-th discrete loop with the m-th Brownian
loop wherever the counts agree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ndtri

from . import rng as rng_mod
from .lattice import DiscreteLoop, LatticePath
from .soup import (
    blrange,
    brownian_window_mass,
    ContinuousLoop,
    duration_window,
    loop_mass,
    sample_brownian_bridge,
    _window_quantile,
)
from .walks import (
    bridge_sites_from_codes,
    sample_bridge_half_counts,
    sample_bridge_step_codes,
)


# ---------------------------------------------------------------------------
# Poisson counts.


def _poisson_pmf_table(a: float, k_max: int) -> np.ndarray:
    k = np.arange(k_max + 1)
    if a == 0:
        out = np.zeros(k_max + 1)
        out[0] = 1.0
        return out
    return np.exp(k * math.log(a) - a - gammaln(k + 1))


def _support_cutoff(a: float, b: float) -> int:
    top = max(a, b)
    return int(top + 12.0 * math.sqrt(top) + 42.0)


def poisson_tv(a: float, b: float) -> float:
    """Total variation distance between Poisson(a) and Poisson(b)."""
    if a < 0 or b < 0:
        raise ValueError("Poisson means must be >= 0")
    k_max = _support_cutoff(a, b)
    pa = _poisson_pmf_table(a, k_max)
    pb = _poisson_pmf_table(b, k_max)
    return 0.5 * float(np.abs(pa - pb).sum())


@dataclass(frozen=True)
class CoupledCounts:
    n_discrete: int
    n_brownian: int

    @property
    def agreed(self) -> bool:
        return self.n_discrete == self.n_brownian


class PoissonCoupling:
    """Maximal coupling tables for a fixed pair of Poisson means.

    The two laws split into a shared component of mass 1 - TV plus residuals
    of mass TV each.  The residuals have disjoint supports, so the coupled
    pair agrees exactly when the shared component fires.
    """

    def __init__(self, a: float, b: float):
        if a < 0 or b < 0:
            raise ValueError("Poisson means must be >= 0")
        self.a, self.b = a, b
        k_max = _support_cutoff(a, b)
        pa = _poisson_pmf_table(a, k_max)
        pb = _poisson_pmf_table(b, k_max)
        common = np.minimum(pa, pb)
        self.tv = 0.5 * float(np.abs(pa - pb).sum())
        self.p_agree = float(common.sum())
        self.common_cdf = np.cumsum(common) / max(self.p_agree, 1e-300)
        res_a = pa - common
        res_b = pb - common
        za = float(res_a.sum())
        zb = float(res_b.sum())
        self.res_a_cdf = np.cumsum(res_a) / za if za > 0 else np.ones(k_max + 1)
        self.res_b_cdf = np.cumsum(res_b) / zb if zb > 0 else np.ones(k_max + 1)

    def sample_many(self, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        u = rng.random((size, 3))
        agree = u[:, 0] < self.p_agree
        shared = np.searchsorted(self.common_cdf, u[:, 1], side="right")
        na = np.searchsorted(self.res_a_cdf, u[:, 1], side="right")
        nb = np.searchsorted(self.res_b_cdf, u[:, 2], side="right")
        n_discrete = np.where(agree, shared, na)
        n_brownian = np.where(agree, shared, nb)
        return n_discrete.astype(np.int64), n_brownian.astype(np.int64)

    def sample(self, rng: np.random.Generator) -> CoupledCounts:
        na, nb = self.sample_many(1, rng)
        return CoupledCounts(int(na[0]), int(nb[0]))


def couple_poisson(a: float, b: float, rng: np.random.Generator) -> CoupledCounts:
    """One maximally coupled pair of Poisson(a), Poisson(b) counts."""
    return PoissonCoupling(a, b).sample(rng)


# ---------------------------------------------------------------------------
# Bridge coupling, one dimension.
#
# The walk-bridge midpoint given segment endpoints has pmf proportional to
# C(h1, (h1+s)/2) * C(h2, (h2+gap-s)/2) over offsets s from the left value;
# the Gaussian bridge midpoint is normal with the interpolated mean and
# variance h1 h2 / (m (h1+h2)).  Inverting both CDFs at one shared uniform
# couples the paths while keeping each marginal exact.

_LGAMMA_CACHE: dict[int, np.ndarray] = {}


def _lgamma_table(n: int) -> np.ndarray:
    best = _LGAMMA_CACHE.get(0)
    if best is None or best.shape[0] < n + 2:
        _LGAMMA_CACHE[0] = gammaln(np.arange(max(n + 2, 4096), dtype=float) + 1.0)
    return _LGAMMA_CACHE[0]


_MIDPOINT_CDFS: dict[tuple[int, int, int], tuple[int, np.ndarray]] = {}


def _midpoint_cdf(h1: int, h2: int, gap: int) -> tuple[int, np.ndarray]:
    """(smallest offset, CDF over offsets in steps of 2) of the walk midpoint."""
    key = (h1, h2, gap)
    hit = _MIDPOINT_CDFS.get(key)
    if hit is not None:
        return hit
    lg = _lgamma_table(h1 + h2)
    lo = max(-h1, gap - h2)
    hi = min(h1, gap + h2)
    s = np.arange(lo, hi + 1, 2)
    k1 = (h1 + s) >> 1
    k2 = (h2 + gap - s) >> 1
    logw = (lg[h1] - lg[k1] - lg[h1 - k1]) + (lg[h2] - lg[k2] - lg[h2 - k2])
    w = np.exp(logw - logw.max())
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    out = (int(lo), cdf)
    _MIDPOINT_CDFS[key] = out
    return out


@dataclass(frozen=True)
class CoupledBridgePair:
    """A coupled (walk bridge, Brownian bridge) pair on the grid k/m."""

    d: int
    m: int
    discrete: LatticePath
    times: np.ndarray  # (m+1,) in [0, 1]
    continuous: np.ndarray  # (m+1, d)
    scale: float  # discrete values are divided by this before comparing
    sup_distance: float


def _couple_bridge_1d_arrays(m: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if m <= 0 or m % 2:
        raise ValueError("bridge length must be a positive even integer")
    x = np.zeros(m + 1, dtype=np.int64)
    b = np.zeros(m + 1, dtype=float)
    level = [(0, m)]
    while level:
        nxt = []
        u = np.maximum(rng.random(len(level)), 1e-16)
        for (i, j), ui in zip(level, u):
            mid = (i + j) // 2
            h1, h2 = mid - i, j - mid
            gap = int(x[j] - x[i])
            lo, cdf = _midpoint_cdf(h1, h2, gap)
            x[mid] = x[i] + lo + 2 * int(np.searchsorted(cdf, ui, side="right"))
            mean = b[i] + (h1 / (h1 + h2)) * (b[j] - b[i])
            var = h1 * h2 / (m * (h1 + h2))
            b[mid] = mean + math.sqrt(var) * float(ndtri(ui))
            if mid - i >= 2:
                nxt.append((i, mid))
            if j - mid >= 2:
                nxt.append((mid, j))
        level = nxt
    return x, b


def couple_bridge_1d(m: int, rng: np.random.Generator) -> CoupledBridgePair:
    """Quantile-coupled 1D walk bridge of m steps and Brownian bridge on [0,1].

    Both marginals are exact; the sup distance compares X_k / sqrt(m) with
    the Brownian value at k/m.
    """
    x, b = _couple_bridge_1d_arrays(m, rng)
    scale = math.sqrt(m)
    sup = float(np.abs(x / scale - b).max())
    return CoupledBridgePair(
        d=1,
        m=m,
        discrete=LatticePath(x[:, None]),
        times=np.arange(m + 1) / m,
        continuous=b[:, None],
        scale=scale,
        sup_distance=sup,
    )


def _fill_brownian_between(
    known_t: np.ndarray, known_v: np.ndarray, target_t: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Exact conditional values of a Brownian path at target times, given its
    values at known times (which must bracket every target)."""
    out = np.empty_like(target_t)
    ki = 0
    last_t, last_v = known_t[0], known_v[0]
    for idx, t in enumerate(target_t):
        while known_t[ki + 1] < t and ki + 2 < known_t.shape[0]:
            ki += 1
            if known_t[ki] > last_t:
                last_t, last_v = known_t[ki], known_v[ki]
        rt, rv = known_t[ki + 1], known_v[ki + 1]
        if t <= last_t + 1e-15:
            out[idx] = last_v
            continue
        if t >= rt - 1e-15:
            out[idx] = rv
            last_t, last_v = rt, rv
            continue
        mean = last_v + (t - last_t) / (rt - last_t) * (rv - last_v)
        var = (t - last_t) * (rt - t) / (rt - last_t)
        val = mean + math.sqrt(var) * rng.standard_normal()
        out[idx] = val
        last_t, last_v = t, val
    return out


def couple_bridge(d: int, m: int, rng: np.random.Generator) -> CoupledBridgePair:
    """Coupled d-dimensional walk bridge of m steps and Brownian bridge.

    The coordinate allocation is shared: coordinate i runs its coupled 1D
    pair of length M_i, the discrete side delayed to the allocation's clock,
    the Brownian side conditionally refined onto the common grid k/m.  The
    sup distance uses the diffusive scale sqrt(m/d).
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if m <= 0 or m % 2:
        raise ValueError("bridge length must be a positive even integer")
    half = sample_bridge_half_counts(d, m // 2, 1, rng)[0]
    labels = rng.permutation(np.repeat(np.arange(d), 2 * half))
    clocks = np.zeros((m + 1, d), dtype=np.int64)
    onehot = labels[:, None] == np.arange(d)[None, :]
    np.cumsum(onehot, axis=0, out=clocks[1:])
    x = np.zeros((m + 1, d), dtype=np.int64)
    b = np.zeros((m + 1, d), dtype=float)
    times = np.arange(m + 1) / m
    for i in range(d):
        mi = int(2 * half[i])
        if mi == 0:
            fixed_t = np.array([0.0, 1.0])
            fixed_v = np.array([0.0, 0.0])
        else:
            xi, bi = _couple_bridge_1d_arrays(mi, rng)
            x[:, i] = xi[clocks[:, i]]
            fixed_t = np.arange(mi + 1) / mi
            fixed_v = bi
        b[1:m, i] = _fill_brownian_between(fixed_t, fixed_v, times[1:m], rng)
    scale = math.sqrt(m / d)
    sup = float(np.linalg.norm(x / scale - b, axis=1).max())
    return CoupledBridgePair(
        d=d, m=m, discrete=LatticePath(x), times=times, continuous=b,
        scale=scale, sup_distance=sup,
    )


# ---------------------------------------------------------------------------
# Whole-soup correspondence.


def theta_window(d: int) -> tuple[float, float]:
    return (2 * d / (d + 4), 2.0)


@dataclass
class PairRecord:
    root: tuple
    half_length: int
    duration: float
    duration_gap: float
    sup_distance: float
    large: bool


@dataclass
class CorrespondenceReport:
    d: int
    N: int
    r: float
    intensity: float
    theta: float
    box_reach: int
    max_half_length: int
    large_half_length: int  # pairs with half_length >= this count as large
    n_cells: int
    n_disagreed_cells: int
    n_disagreed_large_cells: int
    n_discrete_loops: int
    n_brownian_loops: int
    n_paired: int
    n_unmatched_discrete: int
    n_unmatched_brownian: int
    n_unmatched_large: int
    pairs: list[PairRecord]
    envelope: float
    fitted_constant: float
    n_flagged_large: int
    success: bool

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["pairs"] = [dict(p.__dict__) for p in self.pairs]
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _box_roots(reach: int, d: int) -> np.ndarray:
    axes = [np.arange(-reach, reach + 1, dtype=np.int64)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def couple_soups(
    d: int,
    r: float,
    intensity: float,
    N: int,
    theta: float,
    levels: int = 6,
    rng: np.random.Generator | None = None,
    max_half_length: int | None = None,
    keep_loops: bool = False,
):
    """Coupled draw of the two soups over the box [-rN, rN]^d.

    Counts are coupled maximally cell by cell; where they agree, the m-th
    lattice loop is paired with the m-th Brownian loop through the coupled
    bridge construction, dressed with the window duration and a uniform cell
    offset.  Returns a CorrespondenceReport (plus the loop lists when
    keep_loops is set).
    """
    lo, hi = theta_window(d)
    if not lo < theta < hi:
        raise ValueError(f"theta must lie in ({lo:.6g}, {hi:.6g})")
    if N < 1 or r <= 0 or intensity < 0:
        raise ValueError("need N >= 1, r > 0, intensity >= 0")
    if rng is None:
        rng = rng_mod.stream(0)
    reach = int(math.floor(r * N))
    roots = _box_roots(reach, d)
    n_roots = roots.shape[0]
    large_half = max(1, math.ceil(N**theta / 2))
    if max_half_length is None:
        max_half_length = min(N**3, max(4 * large_half, 16))
    rd = blrange(d)
    pairs: list[PairRecord] = []
    discrete_loops: list[DiscreteLoop] = []
    continuous_loops: list[ContinuousLoop] = []
    n_disagreed = n_disagreed_large = 0
    n_discrete = n_brownian = n_paired = 0
    n_un_d = n_un_b = n_un_large = 0
    for n in range(1, max_half_length + 1):
        coupler = PoissonCoupling(intensity * loop_mass(d, n), intensity * brownian_window_mass(d, n))
        counts_d, counts_b = coupler.sample_many(n_roots, rng)
        disagreed = counts_d != counts_b
        n_disagreed += int(disagreed.sum())
        if n >= large_half:
            n_disagreed_large += int(disagreed.sum())
        n_discrete += int(counts_d.sum())
        n_brownian += int(counts_b.sum())
        busy = np.nonzero((counts_d > 0) | (counts_b > 0))[0]
        win_lo, win_hi = duration_window(d, n)
        for zi in busy:
            z = roots[zi]
            cd, cb = int(counts_d[zi]), int(counts_b[zi])
            shared = min(cd, cb)
            for _ in range(shared):
                pair = couple_bridge(d, 2 * n, rng)
                offset = rng.random(d) - 0.5
                t = float(_window_quantile(d, win_lo, win_hi, rng.random()))
                sup = float(
                    np.linalg.norm(
                        pair.discrete.sites - (offset + math.sqrt(t) * pair.continuous),
                        axis=1,
                    ).max()
                )
                pairs.append(
                    PairRecord(
                        root=tuple(int(c) for c in z),
                        half_length=n,
                        duration=t,
                        duration_gap=abs(t - 2 * n / d),
                        sup_distance=sup,
                        large=n >= large_half,
                    )
                )
                if keep_loops:
                    discrete_loops.append(
                        DiscreteLoop(
                            root=tuple(int(c) for c in z),
                            path=LatticePath(pair.discrete.sites + z),
                            label=intensity,
                        )
                    )
                    continuous_loops.append(
                        ContinuousLoop(
                            root=z.astype(float) + offset,
                            duration=t,
                            displacements=math.sqrt(t) * pair.continuous,
                            generation=n,
                        )
                    )
            n_paired += shared
            for _ in range(cd - shared):
                codes = sample_bridge_step_codes(d, 2 * n, 1, rng)
                n_un_d += 1
                if n >= large_half:
                    n_un_large += 1
                if keep_loops:
                    sites = bridge_sites_from_codes(d, codes)[0] + z
                    discrete_loops.append(
                        DiscreteLoop(root=tuple(int(c) for c in z), path=LatticePath(sites), label=intensity)
                    )
            for _ in range(cb - shared):
                offset = rng.random(d) - 0.5
                t = float(_window_quantile(d, win_lo, win_hi, rng.random()))
                disp = sample_brownian_bridge(d, t, levels, rng)
                n_un_b += 1
                if n >= large_half:
                    n_un_large += 1
                if keep_loops:
                    continuous_loops.append(
                        ContinuousLoop(root=z.astype(float) + offset, duration=t, displacements=disp, generation=n)
                    )
    envelope = N**0.75 * max(1.0, math.log(N))
    large_sups = [p.sup_distance for p in pairs if p.large]
    fitted = float(np.median(large_sups)) / envelope if large_sups else 0.0
    if large_sups and fitted > 0:
        flagged = sum(1 for s in large_sups if s > 10.0 * fitted * envelope)
    else:
        flagged = 0
    success = (n_un_large == 0) and (flagged == 0)
    report = CorrespondenceReport(
        d=d, N=N, r=r, intensity=intensity, theta=theta, box_reach=reach,
        max_half_length=max_half_length, large_half_length=large_half,
        n_cells=n_roots * max_half_length, n_disagreed_cells=n_disagreed,
        n_disagreed_large_cells=n_disagreed_large, n_discrete_loops=n_discrete,
        n_brownian_loops=n_brownian, n_paired=n_paired,
        n_unmatched_discrete=n_un_d, n_unmatched_brownian=n_un_b,
        n_unmatched_large=n_un_large, pairs=pairs, envelope=envelope,
        fitted_constant=fitted, n_flagged_large=flagged, success=success,
    )
    if keep_loops:
        return report, discrete_loops, continuous_loops
    return report


def expected_disagreed_cells(
    d: int, intensity: float, n_roots: int, max_half_length: int
) -> float:
    """Mean number of disagreeing cells: the sum of per-cell TV distances."""
    return n_roots * sum(
        poisson_tv(intensity * loop_mass(d, n), intensity * brownian_window_mass(d, n))
        for n in range(1, max_half_length + 1)
    )


# ---------------------------------------------------------------------------
# Distance between timed paths.


def sup_distance(times_a, values_a, times_b, values_b) -> float:
    """Max Euclidean distance between two piecewise-linear timed paths.

    Both paths are evaluated on the union of their grids with linear
    interpolation; for piecewise-linear paths the maximum over the union grid
    is exact.  Paths must share their time span.
    """
    ta = np.asarray(times_a, dtype=float)
    tb = np.asarray(times_b, dtype=float)
    va = np.atleast_2d(np.asarray(values_a, dtype=float))
    vb = np.atleast_2d(np.asarray(values_b, dtype=float))
    if va.shape[0] == 1 and ta.shape[0] > 1:
        va = va.T
    if vb.shape[0] == 1 and tb.shape[0] > 1:
        vb = vb.T
    if va.shape[0] != ta.shape[0] or vb.shape[0] != tb.shape[0]:
        raise ValueError("times and values must have matching lengths")
    if va.shape[1] != vb.shape[1]:
        raise ValueError("paths must share a dimension")
    if np.any(np.diff(ta) < 0) or np.any(np.diff(tb) < 0):
        raise ValueError("time grids must be non-decreasing")
    if not (math.isclose(ta[0], tb[0], abs_tol=1e-12) and math.isclose(ta[-1], tb[-1], abs_tol=1e-12)):
        raise ValueError("incompatible grids: paths must share their time span")
    grid = np.union1d(ta, tb)
    best = 0.0
    diffs = np.empty((grid.shape[0], va.shape[1]))
    for c in range(va.shape[1]):
        diffs[:, c] = np.interp(grid, ta, va[:, c]) - np.interp(grid, tb, vb[:, c])
    return float(np.linalg.norm(diffs, axis=1).max())

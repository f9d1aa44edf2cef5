"""Estimators on top of the samplers: quasi-loop scanning, hittability,
growth and escape exponents, cut-point statistics, box-counting dimension.

The quasi-loop scanner is exact: a center admits a quasi-loop iff some index
strictly between its first and last near-visit leaves the outer ball, and
every admissible center lies in the lens of a "near pair" of path sites with
a long index gap, so candidate enumeration over lenses loses nothing.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.spatial import cKDTree

from .lattice import LatticePath, Site, ball_sites, cut_points, encode_sites, erase_loops_indices
from .walks import BoundaryConvention, step_table, _srw_sites_until_exit

# ---------------------------------------------------------------------------
# Report types.


@dataclass(frozen=True)
class EstimatorReport:
    """Point estimate with its standard error and run fingerprint."""

    estimate: float
    stderr: float
    samples: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be >= 0")


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares slope on log-log points."""

    slope: float
    intercept: float
    stderr: float
    points: tuple  # ((log x, log y, weight), ...)

    def __post_init__(self):
        if len(self.points) < 3:
            raise ValueError("an exponent fit needs at least 3 points")
        if self.stderr < 0:
            raise ValueError("stderr must be >= 0")


def _ls_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """(slope, intercept, slope stderr) of unweighted least squares."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xc = x - x.mean()
    ssxx = float((xc * xc).sum())
    slope = float((xc * y).sum() / ssxx)
    intercept = float(y.mean() - slope * x.mean())
    k = x.shape[0]
    if k > 2:
        resid = y - (slope * x + intercept)
        se = math.sqrt(float((resid * resid).sum()) / (k - 2) / ssxx)
    else:
        se = 0.0
    return slope, intercept, se


# ---------------------------------------------------------------------------
# Quasi-loop scan.


@dataclass(frozen=True)
class QuasiLoopQuery:
    """Inner radius s (near visits) and outer radius r (far excursion)."""

    s: float
    r: float

    def __post_init__(self):
        if not 0 < self.s < self.r:
            raise ValueError("need 0 < s < r")


class _RangeBox:
    """Per-coordinate sparse tables answering bounding-box range queries."""

    def __init__(self, sites: np.ndarray):
        self.mins = [sites]
        self.maxs = [sites]
        length = sites.shape[0]
        k = 1
        while 2 * k <= length:
            pm, px = self.mins[-1], self.maxs[-1]
            self.mins.append(np.minimum(pm[:-k], pm[k:]))
            self.maxs.append(np.maximum(px[:-k], px[k:]))
            k *= 2

    def query(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
        """Bounding box of sites[lo..hi] inclusive."""
        span = hi - lo + 1
        level = span.bit_length() - 1
        k = 1 << level
        second = hi - k + 1
        return (
            np.minimum(self.mins[level][lo], self.mins[level][second]),
            np.maximum(self.maxs[level][lo], self.maxs[level][second]),
        )


def _near_pairs(sites: np.ndarray, cell: int, gap_min: int, four_s2: float):
    """Index pairs (i, j), j - i >= gap_min, with |sites_i - sites_j| <= 2s.

    Sweeps j with a growing cell-bucket index over eligible earlier sites;
    the 3^d neighborhood of j's cell covers every site within 2s <= cell.
    """
    length, d = sites.shape
    cells = np.floor_divide(sites, cell)
    offsets = np.array(list(product((-1, 0, 1), repeat=d)), dtype=np.int64)
    flat = encode_sites((cells[:, None, :] + offsets[None, :, :]).reshape(-1, d))
    neigh = [flat[k * offsets.shape[0] : (k + 1) * offsets.shape[0]] for k in range(length)]
    own = encode_sites(cells)
    own = own.tolist() if isinstance(own, np.ndarray) else own
    buckets: dict = defaultdict(list)
    i_parts, j_parts = [], []
    for j in range(gap_min, length):
        entering = j - gap_min
        buckets[own[entering]].append(entering)
        cand: list = []
        for c in neigh[j]:
            got = buckets.get(c if not isinstance(c, np.integer) else int(c))
            if got:
                cand.extend(got)
        if not cand:
            continue
        old = np.asarray(cand, dtype=np.int64)
        diff = sites[old] - sites[j]
        old = old[(diff * diff).sum(axis=1) <= four_s2]
        if old.size:
            i_parts.append(old)
            j_parts.append(np.full(old.size, j, dtype=np.int64))
    if not i_parts:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(i_parts), np.concatenate(j_parts)


def _excursion_prune(sites, boxes: _RangeBox, i_arr, j_arr, rms2: float) -> np.ndarray:
    """Keep pairs whose slice bounding box reaches beyond r - s from both
    endpoints; anything pruned here cannot hold a far index for any center."""
    keep = np.zeros(i_arr.shape[0], dtype=bool)
    span = j_arr - i_arr + 1
    levels = np.frexp(span.astype(np.float64))[1].astype(np.int64) - 1
    for lev in np.unique(levels):
        m = levels == lev
        k = 1 << int(lev)
        i0, j0 = i_arr[m], j_arr[m]
        mins = np.minimum(boxes.mins[lev][i0], boxes.mins[lev][j0 - k + 1])
        maxs = np.maximum(boxes.maxs[lev][i0], boxes.maxs[lev][j0 - k + 1])
        ub_i = np.maximum(np.abs(mins - sites[i0]), np.abs(maxs - sites[i0]))
        ub_j = np.maximum(np.abs(mins - sites[j0]), np.abs(maxs - sites[j0]))
        keep[m] = ((ub_i * ub_i).sum(axis=1) > rms2) & ((ub_j * ub_j).sum(axis=1) > rms2)
    return keep


def scan_quasi_loops(path: LatticePath, query: QuasiLoopQuery, first_only: bool = False) -> set[Site]:
    """All lattice centers v admitting i <= k <= j with path(i), path(j) in
    the closed ball B(v, s) while path(k) leaves B(v, r).

    Exact both ways: a center flagged through a pair satisfies the
    definition with that pair as its near frame, and every admissible center
    is caught when its own (first near, last near) pair comes up, since that
    pair has endpoint distance <= 2s and index gap > 2(r - s).  The result
    is non-increasing in r and non-decreasing in s.  With ``first_only`` the
    scan stops at the first witness.
    """
    sites = path.sites
    length, d = sites.shape
    s, r = query.s, query.r
    s2, r2, four_s2 = s * s, r * r, 4 * s * s
    rms2 = (r - s) * (r - s)
    gap_min = int(math.floor(2 * (r - s))) + 1
    found: set[Site] = set()
    if length < 2 or gap_min >= length:
        return found

    i_arr, j_arr = _near_pairs(sites, max(1, int(math.ceil(2 * s))), gap_min, four_s2)
    if i_arr.size == 0:
        return found
    keep = _excursion_prune(sites, _RangeBox(sites), i_arr, j_arr, rms2)
    i_arr, j_arr = i_arr[keep], j_arr[keep]
    lens_offsets = np.asarray(ball_sites((0,) * d, s), dtype=np.int64)

    for i, j in zip(i_arr.tolist(), j_arr.tolist()):
        seg = sites[i : j + 1]
        di = seg - sites[i]
        dj = seg - sites[j]
        deep = np.flatnonzero(
            ((di * di).sum(axis=1) > rms2) & ((dj * dj).sum(axis=1) > rms2)
        )
        if deep.size == 0:
            continue
        far = seg[deep]
        if first_only:
            mid = np.rint((sites[i] + sites[j]) / 2.0).astype(np.int64)
            dmi, dmj = mid - sites[i], mid - sites[j]
            if dmi @ dmi <= s2 and dmj @ dmj <= s2:
                dfm = far - mid
                if ((dfm * dfm).sum(axis=1) > r2).any():
                    return {tuple(int(c) for c in mid)}
        centers = sites[i] + lens_offsets
        dc = centers - sites[j]
        centers = centers[(dc * dc).sum(axis=1) <= s2]
        witness = np.zeros(centers.shape[0], dtype=bool)
        for lo in range(0, deep.size, 64):
            block = far[lo : lo + 64]
            dd = centers[:, None, :] - block[None, :, :]
            witness |= ((dd * dd).sum(axis=2) > r2).any(axis=1)
            if first_only and witness.any():
                v = centers[int(np.flatnonzero(witness)[0])]
                return {tuple(int(c) for c in v)}
        for v in centers[witness]:
            found.add(tuple(int(c) for c in v))
    return found


def scan_quasi_loops_literal(path: LatticePath, query: QuasiLoopQuery) -> set[Site]:
    """Brute-force reference: every center within s of the path, checked
    against the definition index by index.  Quadratic; for short paths."""
    sites = path.sites
    s2, r2 = query.s * query.s, query.r * query.r
    candidates: set = set()
    for p in sites:
        for v in ball_sites(p, query.s):
            candidates.add(v)
    out: set = set()
    for v in sorted(candidates):
        dv = sites - np.asarray(v, dtype=np.int64)
        dist2 = (dv * dv).sum(axis=1)
        near = np.flatnonzero(dist2 <= s2)
        if near.size == 0:
            continue
        lo, hi = int(near[0]), int(near[-1])
        if dist2[lo : hi + 1].max() > r2:
            out.add(v)
    return out


def _lerw_sites(d: int, n: float, rng: np.random.Generator, convention=BoundaryConvention.OPEN) -> np.ndarray:
    walk = _srw_sites_until_exit(d, n, convention, rng)
    return walk[erase_loops_indices(encode_sites(walk))]


def quasi_loop_probability(
    d: int,
    n: int,
    eps: float,
    M: int,
    samples: int,
    rng: np.random.Generator,
    strict: bool = True,
) -> EstimatorReport:
    """Probability that the erased walk stopped at radius n carries at least
    one (eps^M n, sqrt(eps) n) quasi-loop.

    When eps^M n drops below one lattice spacing the inner ball holds a
    single site, so a simple path cannot qualify: with ``strict`` this is a
    domain error, otherwise the exact value 0 is reported without sampling.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if M < 1:
        raise ValueError("M must be >= 1")
    if samples < 1:
        raise ValueError("need at least one sample")
    s = eps**M * n
    r = math.sqrt(eps) * n
    config = {"d": d, "n": n, "eps": eps, "M": M, "s": s, "r": r}
    if s < 1:
        if strict:
            raise ValueError("inner radius eps^M * n is below one lattice spacing")
        return EstimatorReport(estimate=0.0, stderr=0.0, samples=samples, config=config)
    query = QuasiLoopQuery(s=s, r=r)
    hits = 0
    for _ in range(samples):
        path = LatticePath(_lerw_sites(d, n, rng))
        if scan_quasi_loops(path, query, first_only=True):
            hits += 1
    p = hits / samples
    return EstimatorReport(
        estimate=p,
        stderr=math.sqrt(p * (1 - p) / samples),
        samples=samples,
        config=config,
    )


# ---------------------------------------------------------------------------
# Growth exponent.


def estimate_beta(
    d: int,
    n_list,
    samples_per_n: int,
    rng: np.random.Generator,
    convention: BoundaryConvention = BoundaryConvention.OPEN,
    bootstrap: int = 1000,
) -> ExponentFit:
    """Slope of log mean erased-walk step count against log radius."""
    n_list = list(n_list)
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("need at least 3 strictly increasing radii")
    if samples_per_n < 2:
        raise ValueError("need at least two samples per radius")
    lengths = np.empty((len(n_list), samples_per_n), dtype=np.int64)
    for row, n in enumerate(n_list):
        for col in range(samples_per_n):
            walk = _srw_sites_until_exit(d, n, convention, rng)
            lengths[row, col] = len(erase_loops_indices(encode_sites(walk))) - 1
    x = np.log(np.asarray(n_list, dtype=float))
    y = np.log(lengths.mean(axis=1))
    slope, intercept, _ = _ls_fit(x, y)
    idx = rng.integers(0, samples_per_n, size=(bootstrap, samples_per_n))
    boot_means = lengths[:, idx].mean(axis=2)  # (len(n_list), bootstrap)
    xc = x - x.mean()
    ssxx = float((xc * xc).sum())
    boot_slopes = (xc[:, None] * np.log(boot_means)).sum(axis=0) / ssxx
    return ExponentFit(
        slope=slope,
        intercept=intercept,
        stderr=float(boot_slopes.std(ddof=1)),
        points=tuple((float(a), float(b), 1.0) for a, b in zip(x, y)),
    )


# ---------------------------------------------------------------------------
# Escape probability.


def _escape_indicators(
    d: int, m_values: np.ndarray, n: int, K: int, rng: np.random.Generator
) -> np.ndarray:
    """One sample of the non-intersection indicators, one entry per m."""
    loe = _lerw_sites(d, K * n, rng)
    norms2 = (loe * loe).sum(axis=1)
    t_n = int(np.flatnonzero(norms2 >= n * n)[0])
    r2 = _srw_sites_until_exit(d, n, BoundaryConvention.OPEN, rng)
    r2_enc = np.sort(encode_sites(r2))
    seg_enc = encode_sites(loe[: t_n + 1])
    pos = np.searchsorted(r2_enc, seg_enc)
    pos_c = np.minimum(pos, r2_enc.shape[0] - 1)
    hit_idx = np.flatnonzero(r2_enc[pos_c] == seg_enc)
    last_hit = int(hit_idx[-1]) if hit_idx.size else -1
    out = np.empty(m_values.shape[0], dtype=bool)
    for a, m in enumerate(m_values):
        s_m = int(np.flatnonzero(norms2[: t_n + 1] <= m * m)[-1])
        out[a] = last_hit < s_m
    return out


def estimate_escape_profile(
    d: int,
    m_values,
    n: int,
    K: int,
    samples: int,
    rng: np.random.Generator,
) -> list[EstimatorReport]:
    """Escape estimates for several inner radii, sharing walks across them.

    The same pair of walks feeds every m, so differences between the
    estimates carry common-random-number variance reduction.
    """
    if K < 2:
        raise ValueError("truncation factor K must be >= 2")
    if samples < 1:
        raise ValueError("need at least one sample")
    m_arr = np.asarray(sorted(set(int(m) for m in m_values)), dtype=np.int64)
    if np.any(m_arr < 1):
        raise ValueError("inner radii must be >= 1")
    active = m_arr[m_arr < n]
    wins = np.zeros(active.shape[0], dtype=np.int64)
    if active.size:
        for _ in range(samples):
            wins += _escape_indicators(d, active, n, K, rng)
    reports = []
    by_m = dict(zip(active.tolist(), wins.tolist()))
    for m in m_arr.tolist():
        config = {"d": d, "m": m, "n": n, "K": K}
        if m >= n:
            reports.append(EstimatorReport(1.0, 0.0, samples, config))
        else:
            p = by_m[m] / samples
            reports.append(
                EstimatorReport(p, math.sqrt(p * (1 - p) / samples), samples, config)
            )
    return reports


def estimate_escape(
    d: int, m: int, n: int, K: int, samples: int, rng: np.random.Generator
) -> EstimatorReport:
    """Non-intersection probability of the erased walk's [s_m, t_n] stretch
    with an independent walk stopped leaving radius n.

    The donor walk runs to radius K*n as a stand-in for an unbounded walk;
    t_n is the erased path's first index at distance >= n, s_m its last
    visit to the closed ball of radius m before t_n.  Defined as exactly 1
    for m >= n.
    """
    return estimate_escape_profile(d, [m], n, K, samples, rng)[0]


# ---------------------------------------------------------------------------
# Hittability.


def _grid_near_path(
    lerw: np.ndarray, radius: float, pitch: int, n: float, cap: int
) -> np.ndarray:
    """Deterministic coarse grid of lattice points within `radius` of the
    path and inside the ball of radius n, decimated to at most cap points."""
    d = lerw.shape[1]
    reach = int(math.floor(radius / pitch)) + 1
    box = np.array(list(product(range(-reach, reach + 1), repeat=d)), dtype=np.int64)
    anchors = np.floor_divide(lerw, pitch)
    cand = (anchors[:, None, :] + box[None, :, :]) * pitch
    diff = cand - lerw[:, None, :]
    keep = (diff * diff).sum(axis=2) <= radius * radius
    cand = cand[keep]
    if cand.shape[0] == 0:
        return cand.reshape(0, d)
    cand = cand[(cand * cand).sum(axis=1) <= n * n]
    enc = encode_sites(cand)
    _, first = np.unique(enc, return_index=True)
    cand = cand[np.sort(first)]
    if cand.shape[0] > cap:
        take = np.unique(np.round(np.linspace(0, cand.shape[0] - 1, cap)).astype(np.int64))
        cand = cand[take]
    return cand


def _escape_probabilities(
    lerw: np.ndarray,
    xs: np.ndarray,
    ball_r2: float,
    inner: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Fraction of walks from each x leaving B(x, sqrt(ball_r2)) untouched.

    All walkers advance in lockstep; a walker that lands on the erased path
    (including at its start and at the exit site) counts as a hit.  A walker
    whose distance-to-path budget covers a whole block takes that many steps
    as one exact multinomial displacement (no hit is possible inside the
    budget); a block that may have straddled the ball boundary is replayed
    as a uniformly ordered step multiset, which is the exact conditional
    law, to recover the first exit.  Low-budget walkers play out a short
    explicit trajectory with hit and exit tested at every step.
    """
    nx, d = xs.shape
    steps = step_table(d)
    enc_sorted = np.sort(encode_sites(lerw))
    tree = cKDTree(lerw.astype(np.float64))
    start = np.repeat(xs, inner, axis=0)
    pos = start.copy()
    total = pos.shape[0]
    escaped = np.zeros(total, dtype=bool)
    safe = np.zeros(total, dtype=np.int64)
    ball_r = math.sqrt(ball_r2)
    pvals = np.full(2 * d, 1.0 / (2 * d))
    batch = 32

    def on_path(p: np.ndarray) -> np.ndarray:
        enc = encode_sites(p)
        loc = np.searchsorted(enc_sorted, enc)
        loc_c = np.minimum(loc, enc_sorted.shape[0] - 1)
        return enc_sorted[loc_c] == enc

    alive = np.flatnonzero(~on_path(pos))
    cap = int(200 * max(ball_r2, 16.0))
    for _ in range(cap):
        if alive.size == 0:
            break
        stale = alive[safe[alive] <= 0]
        if stale.size:
            dist, _ = tree.query(pos[stale].astype(np.float64), k=1)
            # off-path sites are at distance >= 1, so this is >= 0
            safe[stale] = np.floor(dist - 1e-9).astype(np.int64)
        remaining = alive
        rem_budget = safe[remaining]
        for bsize in (128, 64, 32):
            take = rem_budget >= bsize
            sel = remaining[take]
            remaining = remaining[~take]
            rem_budget = rem_budget[~take]
            if sel.size == 0:
                continue
            counts = rng.multinomial(bsize, pvals, size=sel.size)
            pre = pos[sel] - start[sel]
            new = pre + counts @ steps
            end_out = (new * new).sum(axis=1) > ball_r2
            crossed = np.zeros(sel.size, dtype=bool)
            shell2 = max(ball_r - bsize, 0.0) ** 2
            maybe = np.flatnonzero(~end_out & ((pre * pre).sum(axis=1) > shell2))
            if maybe.size:
                # uniformly ordering the step multiset recovers the exact
                # conditional law, exposing any mid-block first exit
                seq = np.repeat(
                    np.tile(np.arange(2 * d), maybe.size), counts[maybe].ravel()
                ).reshape(maybe.size, bsize)
                order = np.argsort(rng.random(seq.shape), axis=1)
                shuffled = np.take_along_axis(seq, order, axis=1)
                prefix = np.cumsum(steps[shuffled], axis=1) + pre[maybe][:, None, :]
                crossed[maybe] = ((prefix * prefix).sum(axis=2) > ball_r2).any(axis=1)
            pos[sel] = start[sel] + new
            safe[sel] -= bsize
            gone = end_out | crossed
            if gone.any():
                escaped[sel[gone]] = True
                alive = np.setdiff1d(alive, sel[gone], assume_unique=True)
        near = remaining
        if near.size:
            # low-budget walkers: play out a short trajectory and test every
            # position, truncating each row at its first hit or exit
            traj = np.cumsum(
                steps[rng.integers(0, 2 * d, size=(near.size, batch))], axis=1
            )
            traj += pos[near][:, None, :]
            hit = on_path(traj.reshape(-1, d)).reshape(near.size, batch)
            dn = traj - start[near][:, None, :]
            out = (dn * dn).sum(axis=2) > ball_r2
            event = hit | out
            has = event.any(axis=1)
            t_end = np.where(has, event.argmax(axis=1), batch - 1)
            rows = np.arange(near.size)
            pos[near] = traj[rows, t_end]
            safe[near] = 0
            ev = np.flatnonzero(has)
            if ev.size:
                stopped = near[ev]
                escaped[stopped[out[ev, t_end[ev]] & ~hit[ev, t_end[ev]]]] = True
                alive = np.setdiff1d(alive, stopped, assume_unique=True)
    else:
        raise RuntimeError("inner walk exceeded its step cap")
    return escaped.reshape(nx, inner).mean(axis=1)


def hittability_scan(
    d: int,
    n: int,
    eps: float,
    eta: float,
    outer_samples: int,
    inner_samples: int,
    rng: np.random.Generator,
    grid_cap: int = 384,
) -> EstimatorReport:
    """Fraction of erased-walk samples carrying a nearby weakly-hit point.

    For each erased walk, a coarse grid of centers x within eps^2 n of it is
    tested: inner walks from x run until they leave B(x, sqrt(eps) n) or
    touch the path.  A sample fails when some center's escape frequency
    exceeds eps^eta.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if eta <= 0:
        raise ValueError("eta must be positive")
    if outer_samples < 1 or inner_samples < 1:
        raise ValueError("need positive sample counts")
    radius = eps * eps * n
    ball_r2 = eps * n * n  # (sqrt(eps) n)^2
    threshold = eps**eta
    pitch = max(1, int(radius / 2))
    failures = 0
    tested_points = 0
    for _ in range(outer_samples):
        lerw = _lerw_sites(d, n, rng)
        xs = _grid_near_path(lerw, radius, pitch, float(n), grid_cap)
        if xs.shape[0] == 0:
            continue
        tested_points += xs.shape[0]
        probs = _escape_probabilities(lerw, xs, ball_r2, inner_samples, rng)
        if float(probs.max()) > threshold:
            failures += 1
    p = failures / outer_samples
    return EstimatorReport(
        estimate=p,
        stderr=math.sqrt(p * (1 - p) / outer_samples),
        samples=outer_samples,
        config={
            "d": d, "n": n, "eps": eps, "eta": eta, "threshold": threshold,
            "inner_samples": inner_samples, "grid_cap": grid_cap,
            "tested_points": tested_points,
        },
    )


# ---------------------------------------------------------------------------
# Box-counting dimension.


def box_dimension(points, scales) -> ExponentFit:
    """Least-squares slope of log occupied-box count vs log inverse scale.

    Boxes are axis-aligned, anchored at the origin.  Requires at least three
    scales spanning one and a half decades.
    """
    if isinstance(points, (set, frozenset)):
        points = sorted(points)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise ValueError("need a nonempty point set")
    scales = np.asarray(sorted(scales), dtype=float)
    if scales.shape[0] < 3:
        raise ValueError("need at least 3 scales")
    if np.any(scales <= 0):
        raise ValueError("scales must be positive")
    if math.log10(scales[-1] / scales[0]) < 1.5 - 1e-9:
        raise ValueError("scales must span at least 1.5 decades")
    counts = []
    for s in scales:
        boxes = np.unique(np.floor(pts / s), axis=0)
        counts.append(boxes.shape[0])
    x = np.log(1.0 / scales)
    y = np.log(np.asarray(counts, dtype=float))
    slope, intercept, se = _ls_fit(x, y)
    return ExponentFit(
        slope=slope, intercept=intercept, stderr=se,
        points=tuple((float(a), float(b), 1.0) for a, b in zip(x, y)),
    )


def lerw_box_dimension(
    d: int,
    n: int,
    samples: int,
    rng: np.random.Generator,
    scales=None,
) -> EstimatorReport:
    """Mean box-counting slope of erased walks rescaled to the unit ball."""
    if samples < 2:
        raise ValueError("need at least two samples")
    if scales is None:
        scales = [2.0**-k for k in range(2, 8)]
    slopes = np.empty(samples)
    for i in range(samples):
        pts = _lerw_sites(d, n, rng) / float(n)
        slopes[i] = box_dimension(pts, scales).slope
    return EstimatorReport(
        estimate=float(slopes.mean()),
        stderr=float(slopes.std(ddof=1) / math.sqrt(samples)),
        samples=samples,
        config={"d": d, "n": n, "scales": [float(s) for s in scales]},
    )


# ---------------------------------------------------------------------------
# Cut points.


def cut_point_stats(d: int, n: int, samples: int, rng: np.random.Generator) -> EstimatorReport:
    """Mean cut-point count of stopped walks.

    Every sample is checked for cut-set containment in the sites of its loop
    erasure; a violation raises, since it would falsify the construction.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if samples < 1:
        raise ValueError("need at least one sample")
    counts = np.empty(samples, dtype=np.int64)
    for i in range(samples):
        walk = _srw_sites_until_exit(d, n, BoundaryConvention.OPEN, rng)
        path = LatticePath(walk)
        cuts = cut_points(path, len(path))
        erased = walk[erase_loops_indices(encode_sites(walk))]
        erased_set = {tuple(int(c) for c in row) for row in erased}
        if not cuts <= erased_set:
            raise RuntimeError("cut points escaped the loop erasure; construction broken")
        counts[i] = len(cuts)
    mean = float(counts.mean())
    se = float(counts.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return EstimatorReport(
        estimate=mean, stderr=se, samples=samples,
        config={"d": d, "n": n, "violations": 0},
    )

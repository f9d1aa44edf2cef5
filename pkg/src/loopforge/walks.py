"""Simple random walks on Z^d and their exact reference quantities.

Samplers: walks stopped on leaving a centered ball, loop-erased walks, and
random walk bridges (closed walks) in one and d dimensions.  Exact pieces:
the return probability p_{2n}(0,0), visit probabilities of the stopped walk,
and expected exit times, the last two from sparse linear systems.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
from scipy.special import gammaln

from . import rng as rng_mod
from .lattice import LatticePath, encode_sites, erase_loops_indices

MAX_WALK_STEPS = 10**10
MAX_RETURN_N = 10**6


class BoundaryConvention(str, enum.Enum):
    """Which sites count as the domain interior for radius n."""

    OPEN = "open"  # {x : |x| < n}
    CLOSED = "closed"  # {x : |x| <= n}


@dataclass(frozen=True)
class WalkConfig:
    d: int
    n: float
    seed: int = 0
    convention: BoundaryConvention = BoundaryConvention.OPEN

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        interior = self.n > 0 if self.convention is BoundaryConvention.OPEN else self.n >= 0
        if not interior:
            raise ValueError("the origin must lie in the domain interior")


def _interior_mask(sq_norms: np.ndarray, n: float, convention: BoundaryConvention) -> np.ndarray:
    if convention is BoundaryConvention.OPEN:
        return sq_norms < n * n
    return sq_norms <= n * n


def _step_table(d: int) -> np.ndarray:
    # step code c encodes axis c >> 1, sign +1 for even c
    tab = np.zeros((2 * d, d), dtype=np.int64)
    for axis in range(d):
        tab[2 * axis, axis] = 1
        tab[2 * axis + 1, axis] = -1
    return tab


_STEP_TABLES: dict[int, np.ndarray] = {}


def step_table(d: int) -> np.ndarray:
    if d not in _STEP_TABLES:
        _STEP_TABLES[d] = _step_table(d)
    return _STEP_TABLES[d]


def _srw_sites_until_exit(d, n, convention, rng, cap=MAX_WALK_STEPS) -> np.ndarray:
    """Positions of an SRW from the origin up to and including its exit site."""
    tab = step_table(d)
    block = max(64, min(int(2 * n * n) + 16, 1 << 20))
    base = np.zeros(d, dtype=np.int64)
    chunks = [base[None, :]]
    total = 0
    while True:
        codes = rng.integers(0, 2 * d, size=block)
        pts = base + np.cumsum(tab[codes], axis=0)
        outside = ~_interior_mask((pts * pts).sum(axis=1), n, convention)
        if outside.any():
            k = int(np.argmax(outside))
            chunks.append(pts[: k + 1])
            return np.concatenate(chunks, axis=0)
        chunks.append(pts)
        base = pts[-1]
        total += block
        if total > cap:
            raise RuntimeError(
                f"walk exceeded {cap} steps without exiting radius {n} (d={d})"
            )


def sample_srw_stopped(cfg: WalkConfig, rng: np.random.Generator | None = None) -> LatticePath:
    """SRW from the origin, stopped on its first step out of the interior.

    Every site but the last lies in the interior; the last does not.
    """
    if rng is None:
        rng = rng_mod.stream(cfg.seed)
    return LatticePath(_srw_sites_until_exit(cfg.d, cfg.n, cfg.convention, rng))


def sample_lerw(cfg: WalkConfig, rng: np.random.Generator | None = None) -> LatticePath:
    """Loop erasure of a fresh stopped walk: a simple path, endpoints kept."""
    if rng is None:
        rng = rng_mod.stream(cfg.seed)
    sites = _srw_sites_until_exit(cfg.d, cfg.n, cfg.convention, rng)
    idx = erase_loops_indices(encode_sites(sites))
    return LatticePath(sites[idx])


# ---------------------------------------------------------------------------
# Exact return probabilities p_{2n}(0, 0).
#
# Split the 2n steps by coordinate: p_{2n} = (2n)! / (2d)^{2n} * f_d(n) with
# f_d(n) = sum over n_1+...+n_d = n of prod 1/(n_i!)^2.  The tables f_k are
# built once per dimension in log space and cached.

_LOG_F_TABLES: dict[int, tuple[int, list[np.ndarray]]] = {}


def _logsumexp(v: np.ndarray) -> float:
    m = v.max()
    return float(m + np.log(np.exp(v - m).sum()))


def _log_f_tables(d: int, nmax: int) -> list[np.ndarray]:
    cached = _LOG_F_TABLES.get(d)
    if cached is not None and cached[0] >= nmax:
        return cached[1]
    lf1 = -2.0 * gammaln(np.arange(nmax + 1) + 1.0)
    tabs = [lf1]
    for _ in range(d - 1):
        prev = tabs[-1]
        cur = np.empty(nmax + 1)
        for n in range(nmax + 1):
            cur[n] = _logsumexp(prev[: n + 1] + lf1[n::-1])
        tabs.append(cur)
    _LOG_F_TABLES[d] = (nmax, tabs)
    return tabs


def log_return_probability(d: int, n: int) -> float:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > MAX_RETURN_N:
        raise ValueError(f"n={n} exceeds the overflow guard {MAX_RETURN_N}")
    if n == 0:
        return 0.0
    tabs = _log_f_tables(d, n)
    return float(gammaln(2 * n + 1) + tabs[d - 1][n] - 2 * n * math.log(2 * d))


def return_probability(d: int, n: int) -> float:
    """p_{2n}(0,0): probability the SRW is back at the origin after 2n steps.

    Exact up to float rounding (about 1e-14 relative); the table build costs
    O(d n^2), so large n is slow but safe.  n beyond 10**6 is rejected.
    """
    return math.exp(log_return_probability(d, n))


def return_probability_exact(d: int, n: int) -> Fraction:
    """Rational-arithmetic p_{2n}(0,0), for cross-checking small n."""
    if n > 64:
        raise ValueError("rational path is for small n only")
    if n == 0:
        return Fraction(1)

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for head in range(total + 1):
            for rest in compositions(total - head, parts - 1):
                yield (head,) + rest

    acc = Fraction(0)
    for comp in compositions(n, d):
        term = Fraction(1)
        for ni in comp:
            term /= Fraction(math.factorial(ni)) ** 2
        acc += term
    return acc * math.factorial(2 * n) / Fraction(2 * d) ** (2 * n)


def lclt_ratio_error(d: int, n: int) -> float:
    """|p_{2n} / (2 (d/(4 pi n))^{d/2}) - (1 - d/(8n))|, the two-term gap."""
    lead = 2.0 * (d / (4.0 * math.pi * n)) ** (d / 2.0)
    return abs(return_probability(d, n) / lead - (1.0 - d / (8.0 * n)))


# ---------------------------------------------------------------------------
# Bridges (closed walks).


def sample_bridge_1d(m: int, rng: np.random.Generator) -> LatticePath:
    """Uniform closed 1D walk of m steps: a shuffle of m/2 ups and m/2 downs."""
    if m <= 0 or m % 2:
        raise ValueError("bridge length must be a positive even integer")
    steps = rng.permutation(np.repeat(np.int64([1, -1]), m // 2))
    sites = np.concatenate([[0], np.cumsum(steps)])
    return LatticePath(sites[:, None])


_ALLOC_CDFS: dict[tuple[int, int], list[np.ndarray]] = {}


def _alloc_cdf_tables(d: int, n: int) -> list[np.ndarray]:
    """Conditional CDFs for splitting n among d coordinates with weight
    prod 1/(n_i!)^2, drawn one coordinate at a time."""
    key = (d, n)
    if key in _ALLOC_CDFS:
        return _ALLOC_CDFS[key]
    tabs = _log_f_tables(d, n)
    lf1 = tabs[0]
    out = []
    for c in range(d - 1):
        rest = tabs[d - 2 - c]  # remaining d-1-c coordinates
        level = tabs[d - 1 - c]
        mat = np.zeros((n + 1, n + 1))
        for rem in range(n + 1):
            logw = lf1[: rem + 1] + rest[rem::-1] - level[rem]
            mat[rem, : rem + 1] = np.cumsum(np.exp(logw))
            mat[rem, rem:] = mat[rem, rem]
        # normalize away rounding so inversion with u in [0,1) is safe
        mat /= mat[:, -1][:, None]
        out.append(mat)
    _ALLOC_CDFS[key] = out
    return out


def sample_bridge_half_counts(d: int, n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Half-counts (n_1..n_d), sum n, with P proportional to prod 1/(n_i!)^2.

    This is the coordinate-allocation law of a uniform closed 2n-step walk.
    """
    cdfs = _alloc_cdf_tables(d, n)
    rem = np.full(count, n, dtype=np.int64)
    counts = np.zeros((count, d), dtype=np.int64)
    for c in range(d - 1):
        u = rng.random(count)
        rows = cdfs[c][rem]
        j = (rows < u[:, None]).sum(axis=1)
        counts[:, c] = j
        rem = rem - j
    counts[:, d - 1] = rem
    return counts


def sample_bridge_step_codes(d: int, m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Step codes of ``count`` independent uniform closed m-step walks.

    Code c means axis c >> 1 with sign +1 for even c.  A single uniform
    permutation of the sorted code multiset gives both the coordinate
    interleaving and the per-coordinate up/down arrangement their exact law.
    """
    if m <= 0 or m % 2:
        raise ValueError("bridge length must be a positive even integer")
    half = sample_bridge_half_counts(d, m // 2, count, rng)
    # boundaries of the sorted layout [+e1 x n1, -e1 x n1, +e2 x n2, ...]
    reps = np.repeat(half, 2, axis=1)  # (count, 2d)
    bounds = np.cumsum(reps, axis=1)
    k = np.arange(m, dtype=np.int64)
    codes_sorted = (k[None, :, None] >= bounds[:, None, :]).sum(axis=2).astype(np.int8)
    order = np.argsort(rng.random((count, m)), axis=1)
    return np.take_along_axis(codes_sorted, order, axis=1)


def bridge_sites_from_codes(d: int, codes: np.ndarray) -> np.ndarray:
    """(count, m+1, d) site arrays from step codes, starting at the origin."""
    tab = step_table(d)
    disp = tab[codes]
    sites = np.zeros((codes.shape[0], codes.shape[1] + 1, d), dtype=np.int64)
    np.cumsum(disp, axis=1, out=sites[:, 1:, :])
    return sites


def sample_bridge(d: int, m: int, rng: np.random.Generator) -> LatticePath:
    """Uniform closed m-step walk on Z^d from the origin.

    Drawn by (i) sampling the per-coordinate step counts from their exact
    conditional law, then (ii) one uniform shuffle of the signed step multiset.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    codes = sample_bridge_step_codes(d, m, 1, rng)
    return LatticePath(bridge_sites_from_codes(d, codes)[0])


# ---------------------------------------------------------------------------
# Linear-system oracles for the stopped walk.


def domain_sites(d: int, n: float, convention: BoundaryConvention) -> np.ndarray:
    """Interior sites for radius n under the given convention, sorted."""
    reach = int(math.floor(n))
    axes = [np.arange(-reach, reach + 1, dtype=np.int64)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    keep = _interior_mask((grid * grid).sum(axis=1).astype(np.float64), n, convention)
    pts = grid[keep]
    order = np.lexsort(pts.T[::-1])
    return pts[order]


class _StoppedWalkSolver:
    """Green's function of the walk killed on leaving the interior."""

    def __init__(self, d: int, n: float, convention: BoundaryConvention):
        sites = domain_sites(d, n, convention)
        if sites.shape[0] == 0:
            raise ValueError("empty domain interior")
        if sites.shape[0] > 200_000:
            raise ValueError("domain too large for the exact oracle")
        self.d, self.n, self.convention = d, n, convention
        self.sites = sites
        keys = encode_sites(sites)
        self.index = {k: i for i, k in enumerate(_keys_list(keys))}
        size = sites.shape[0]
        rows, cols = [], []
        tab = step_table(d)
        for c in range(2 * d):
            nb = sites + tab[c]
            nb_keys = _keys_list(encode_sites(nb))
            for i, k in enumerate(nb_keys):
                j = self.index.get(k)
                if j is not None:
                    rows.append(i)
                    cols.append(j)
        data = np.full(len(rows), 1.0 / (2 * d))
        P = scipy.sparse.csc_matrix((data, (rows, cols)), shape=(size, size))
        self.system = scipy.sparse.csc_matrix(scipy.sparse.identity(size) - P)
        self.lu = scipy.sparse.linalg.splu(self.system)
        origin_key = _keys_list(encode_sites(np.zeros((1, d), dtype=np.int64)))[0]
        self.origin = self.index[origin_key]
        e0 = np.zeros(size)
        e0[self.origin] = 1.0
        self.green_from_origin = self.lu.solve(e0, trans="T")

    def site_index(self, x) -> int | None:
        key = _keys_list(encode_sites(np.asarray([x], dtype=np.int64)))[0]
        return self.index.get(key)

    def green_diagonal(self) -> np.ndarray:
        size = self.sites.shape[0]
        diag = np.empty(size)
        chunk = 512
        for lo in range(0, size, chunk):
            hi = min(size, lo + chunk)
            rhs = np.zeros((size, hi - lo))
            rhs[np.arange(lo, hi), np.arange(hi - lo)] = 1.0
            sol = self.lu.solve(rhs)
            diag[lo:hi] = sol[np.arange(lo, hi), np.arange(hi - lo)]
        return diag

    def visit_probabilities(self) -> np.ndarray:
        """P[stopped walk from 0 visits x] for every interior site x."""
        return self.green_from_origin / self.green_diagonal()

    def expected_exit_time(self) -> float:
        g = self.lu.solve(np.ones(self.sites.shape[0]))
        return float(g[self.origin])


def _keys_list(keys):
    return keys.tolist() if isinstance(keys, np.ndarray) else keys


_SOLVERS: dict[tuple, _StoppedWalkSolver] = {}


def stopped_walk_solver(d: int, n: float, convention: BoundaryConvention) -> _StoppedWalkSolver:
    key = (d, float(n), convention)
    if key not in _SOLVERS:
        _SOLVERS[key] = _StoppedWalkSolver(d, n, convention)
    return _SOLVERS[key]


def visit_probability_exact(
    d: int, n: float, x, convention: BoundaryConvention = BoundaryConvention.OPEN
) -> float:
    """P[the stopped walk from 0 visits x], by a sparse harmonic system.

    The system sets h(x) = 1, h = 0 off the interior, and h harmonic at the
    remaining interior sites; the answer is h(0).  The start site counts as
    visited, so x = 0 gives 1.  The solve residual is checked to 1e-10.
    """
    solver = stopped_walk_solver(d, n, convention)
    idx = solver.site_index(x)
    if idx is None:
        raise ValueError(f"{x} is not an interior site for radius {n} ({convention.value})")
    if idx == solver.origin:
        return 1.0
    size = solver.sites.shape[0]
    # row idx of (I - P) replaced by the identity row, rhs = e_x
    A = scipy.sparse.lil_matrix(solver.system)
    A.rows[idx] = [idx]
    A.data[idx] = [1.0]
    A = scipy.sparse.csc_matrix(A)
    b = np.zeros(size)
    b[idx] = 1.0
    h = scipy.sparse.linalg.spsolve(A, b)
    residual = np.abs(A @ h - b).max()
    if residual >= 1e-10:
        raise ArithmeticError(f"harmonic solve residual {residual:.2e} too large")
    return float(h[solver.origin])


def trace_visit_probabilities(
    d: int, n: float, convention: BoundaryConvention = BoundaryConvention.OPEN
) -> tuple[np.ndarray, np.ndarray]:
    """(sites, probabilities) of the stopped walk visiting each interior site."""
    solver = stopped_walk_solver(d, n, convention)
    return solver.sites, solver.visit_probabilities()


def expected_exit_time_exact(
    d: int, n: float, convention: BoundaryConvention = BoundaryConvention.OPEN
) -> float:
    return stopped_walk_solver(d, n, convention).expected_exit_time()

"""Joint realization of a loop-erased walk plus soup loops, and the check
that gluing the intersecting loops back onto the erased walk reproduces the
law of the stopped walk's trace.

Exact per-site visit probabilities of the stopped walk serve as the oracle;
the Monte Carlo side samples the erased walk and an independent unit-rate
soup of loops contained in the domain, keeps the loops meeting the erased
walk, and reports a z-score per interior site.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import rng as rng_mod
from .lattice import DiscreteLoop, LatticePath, encode_sites, erase_loops_indices
from .soup import RwSoupConfig, loop_mass, sample_rw_soup
from .walks import (
    BoundaryConvention,
    domain_sites,
    sample_bridge_step_codes,
    bridge_sites_from_codes,
    trace_visit_probabilities,
    _srw_sites_until_exit,
)

_CHUNK = 16384
_MAX_ENGINE_SITES = 4096
_TAIL_TOL = 1e-9


def _resolve_convention(convention) -> BoundaryConvention:
    if isinstance(convention, BoundaryConvention):
        return convention
    return BoundaryConvention(convention)


# ---------------------------------------------------------------------------
# Truncation certificate.
#
# The expected number of soup loops contained in the domain with half length
# above n_max equals sum_{n > n_max} (1/2n) sum_k lambda_k^{2n} for the
# eigenvalues lambda_k of the walk restricted to interior sites.  Bounding
# the sum by a geometric series gives a hard cap on the omitted mass.


@lru_cache(maxsize=32)
def _killed_spectrum(d: int, n: int, convention: BoundaryConvention) -> np.ndarray:
    sites = domain_sites(d, n, convention)
    ns = sites.shape[0]
    if ns > _MAX_ENGINE_SITES:
        raise ValueError(f"domain too large for the spectral certificate ({ns} sites)")
    enc = encode_sites(sites)
    order = np.argsort(enc)
    enc_sorted = enc[order]
    rows, cols = [], []
    for axis in range(d):
        for sign in (1, -1):
            nb = sites.copy()
            nb[:, axis] += sign
            code = encode_sites(nb)
            pos = np.searchsorted(enc_sorted, code)
            pos_c = np.minimum(pos, ns - 1)
            ok = enc_sorted[pos_c] == code
            rows.append(np.nonzero(ok)[0])
            cols.append(order[pos_c[ok]])
    mat = sp.coo_matrix(
        (np.ones(sum(r.size for r in rows)) / (2 * d), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ns, ns),
    ).toarray()
    return np.linalg.eigvalsh(mat)


def contained_tail_mass_bound(
    d: int, n: int, n_max: int, convention: BoundaryConvention = BoundaryConvention.OPEN
) -> float:
    """Upper bound on the expected count of contained loops longer than 2*n_max."""
    lam2 = _killed_spectrum(d, n, _resolve_convention(convention)) ** 2
    lam2 = np.clip(lam2, 0.0, 1.0 - 1e-15)
    m = n_max + 1
    return float((lam2**m / (1.0 - lam2)).sum() / (2 * m))


def choose_max_half_length(
    d: int,
    n: int,
    convention: BoundaryConvention = BoundaryConvention.OPEN,
    tol: float = _TAIL_TOL,
) -> int:
    """Smallest power-of-two-ish cutoff whose omitted contained mass is < tol."""
    conv = _resolve_convention(convention)
    n_max = 16
    while contained_tail_mass_bound(d, n, n_max, conv) > tol:
        n_max *= 2
        if n_max > 1 << 15:
            raise RuntimeError("no acceptable loop-length cutoff below 32768")
    return n_max


# ---------------------------------------------------------------------------
# Reference per-sample construction.


@dataclass(frozen=True)
class DecomposedTrace:
    """One joint draw: erased walk, domain soup, and the glued trace."""

    d: int
    n: int
    convention: BoundaryConvention
    lerw: LatticePath
    loops: list  # every soup loop contained in the domain
    kept: np.ndarray  # kept[i] iff loops[i] meets the erased walk
    trace_sites: frozenset

    @property
    def kept_loops(self) -> list:
        return [lp for lp, k in zip(self.loops, self.kept) if k]


def sample_decomposed_trace(
    d: int,
    n: int,
    rng: np.random.Generator,
    convention: BoundaryConvention = BoundaryConvention.OPEN,
    max_half_length: int | None = None,
) -> DecomposedTrace:
    """Draw the erased walk and an independent unit-rate contained-loop soup,
    then glue the loops that intersect the walk.

    The union of the erased walk's sites with the kept loops' sites has the
    law of the trace of the stopped walk (checked distributionally by the
    verifier; this function is the readable single-sample reference).
    """
    conv = _resolve_convention(convention)
    if max_half_length is None:
        max_half_length = choose_max_half_length(d, n, conv)
    walk_sites = _srw_sites_until_exit(d, n, conv, rng, 10**10)
    keys = encode_sites(walk_sites)
    lerw = LatticePath(walk_sites[erase_loops_indices(keys)])
    cfg = RwSoupConfig(
        d=d, domain_radius=float(n), intensity=1.0,
        max_half_length=max_half_length, convention=conv,
    )
    soup = sample_rw_soup(cfg, rng)
    loops = soup.contained_loops()
    lerw_set = lerw.site_set()
    kept = np.array([bool(lp.path.site_set() & lerw_set) for lp in loops], dtype=bool)
    trace = set(lerw.site_tuples())
    for lp, keep in zip(loops, kept):
        if keep:
            trace.update(lp.path.site_tuples())
    return DecomposedTrace(
        d=d, n=n, convention=conv, lerw=lerw, loops=loops, kept=kept,
        trace_sites=frozenset(trace),
    )


# ---------------------------------------------------------------------------
# Vectorized verification engine.


@dataclass(frozen=True)
class _EngineTables:
    sites: np.ndarray  # (ns, d) interior sites, lexsorted
    enc_sorted: np.ndarray
    row_of_sorted: np.ndarray
    n_max: int
    mass_cdf: np.ndarray  # categorical over half lengths 1..n_max
    intensity_total: float  # Poisson mean of candidate loops per sample
    exact: np.ndarray  # oracle visit probabilities, aligned with sites


@lru_cache(maxsize=16)
def _engine_tables(d: int, n: int, convention: BoundaryConvention) -> _EngineTables:
    if d > 3:
        raise ValueError("the verification engine supports d <= 3")
    sites, exact = trace_visit_probabilities(d, n, convention)
    exact = np.clip(exact, 0.0, 1.0)
    ns = sites.shape[0]
    if ns > _MAX_ENGINE_SITES:
        raise ValueError(f"domain too large to verify site by site ({ns} sites)")
    enc = encode_sites(sites)
    order = np.argsort(enc)
    n_max = choose_max_half_length(d, n, convention)
    masses = np.array([loop_mass(d, k) for k in range(1, n_max + 1)])
    total = float(masses.sum())
    return _EngineTables(
        sites=sites,
        enc_sorted=enc[order],
        row_of_sorted=order,
        n_max=n_max,
        mass_cdf=np.cumsum(masses) / total,
        intensity_total=ns * total,
        exact=exact,
    )


def _run_chunk(
    d: int,
    n: int,
    conv: BoundaryConvention,
    tables: _EngineTables,
    count: int,
    rng: np.random.Generator,
    keep_matrix: bool = False,
):
    ns = tables.sites.shape[0]
    lerw_bool = np.zeros((count, ns), dtype=bool)
    for s in range(count):
        walk = _srw_sites_until_exit(d, n, conv, rng, 10**10)
        keys = encode_sites(walk)
        erased = keys[erase_loops_indices(keys)][:-1]
        pos = np.searchsorted(tables.enc_sorted, erased)
        lerw_bool[s, tables.row_of_sorted[pos]] = True
    trace_bool = lerw_bool.copy()

    k_loops = rng.poisson(tables.intensity_total, size=count)
    owner = np.repeat(np.arange(count), k_loops)
    m = owner.size
    half = np.searchsorted(tables.mass_cdf, rng.random(m), side="right") + 1
    root_rows = rng.integers(0, ns, size=m)
    for nh in np.unique(half):
        g = half == nh
        cnt = int(g.sum())
        codes = sample_bridge_step_codes(d, 2 * int(nh), cnt, rng)
        rel = bridge_sites_from_codes(d, codes)
        absolute = rel + tables.sites[root_rows[g]][:, None, :]
        enc = encode_sites(absolute.reshape(-1, d)).reshape(cnt, -1)
        pos = np.searchsorted(tables.enc_sorted, enc)
        pos_c = np.minimum(pos, ns - 1)
        contained = ((pos < ns) & (tables.enc_sorted[pos_c] == enc)).all(axis=1)
        if not contained.any():
            continue
        site_rows = tables.row_of_sorted[pos_c[contained]]
        own = owner[g][contained]
        meets = lerw_bool[own[:, None], site_rows].any(axis=1)
        if meets.any():
            trace_bool[own[meets][:, None], site_rows[meets]] = True
    visits = trace_bool.sum(axis=0, dtype=np.int64)
    return (visits, trace_bool) if keep_matrix else (visits, None)


def trace_indicator_samples(
    d: int,
    n: int,
    count: int,
    seed: int = 0,
    convention: BoundaryConvention = BoundaryConvention.OPEN,
) -> tuple[np.ndarray, np.ndarray]:
    """(sites, indicator matrix) of glued traces, one row per sample.

    Diagnostic access to the verification engine's per-sample output; the
    matrix column order matches the returned interior site array.
    """
    conv = _resolve_convention(convention)
    tables = _engine_tables(d, n, conv)
    _, mat = _run_chunk(d, n, conv, tables, count, rng_mod.substream(seed, 0), keep_matrix=True)
    return tables.sites, mat


@dataclass(frozen=True)
class DecompositionReport:
    d: int
    n: int
    convention: str
    samples: int
    seed: int
    max_half_length: int
    sites: np.ndarray
    exact: np.ndarray
    estimate: np.ndarray
    std_err: np.ndarray
    z: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def max_abs_z(self) -> float:
        return float(np.abs(self.z).max())

    def frac_within(self, bound: float = 4.0) -> float:
        return float((np.abs(self.z) <= bound).mean())

    def summary(self) -> str:
        return (
            f"decomposition d={self.d} n={self.n} conv={self.convention} "
            f"sites={self.n_sites} samples={self.samples} "
            f"max|z|={self.max_abs_z:.3f} within4={100 * self.frac_within(4.0):.2f}%"
        )

    def to_csv(self, path) -> None:
        cols = [f"x{i}" for i in range(self.d)]
        header = ",".join(cols + ["exact", "estimate", "std_err", "z"])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for i in range(self.n_sites):
                coords = ",".join(str(int(c)) for c in self.sites[i])
                fh.write(
                    f"{coords},{float(self.exact[i])!r},{float(self.estimate[i])!r},"
                    f"{float(self.std_err[i])!r},{float(self.z[i])!r}\n"
                )


def verify_decomposition(
    d: int,
    n: int,
    samples: int,
    seed: int = 0,
    convention: BoundaryConvention = BoundaryConvention.OPEN,
    threads: int = 1,
    chunk_size: int = _CHUNK,
) -> DecompositionReport:
    """Monte Carlo check of the glued trace law against exact visit
    probabilities, one z-score per interior site.

    Chunks are tied to fixed sample ranges with their own derived streams, so
    the report is identical for any thread count.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    conv = _resolve_convention(convention)
    tables = _engine_tables(d, n, conv)
    n_chunks = (samples + chunk_size - 1) // chunk_size
    counts = [min(chunk_size, samples - ci * chunk_size) for ci in range(n_chunks)]

    def work(ci: int) -> np.ndarray:
        rng = rng_mod.substream(seed, ci)
        visits, _ = _run_chunk(d, n, conv, tables, counts[ci], rng)
        return visits

    if threads == 1 or n_chunks == 1:
        results = [work(ci) for ci in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(n_chunks)))
    visits = np.sum(results, axis=0)
    estimate = visits / samples
    std_err = np.sqrt(tables.exact * (1.0 - tables.exact) / samples)
    std_err = np.maximum(std_err, 1e-300)
    z = (estimate - tables.exact) / std_err
    return DecompositionReport(
        d=d, n=n, convention=conv.value, samples=samples, seed=seed,
        max_half_length=tables.n_max, sites=tables.sites, exact=tables.exact,
        estimate=estimate, std_err=std_err, z=z,
    )

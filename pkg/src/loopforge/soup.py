"""Rooted loop soups: the lattice (random walk) soup and its Brownian target.

A lattice loop of 2n steps rooted at z carries measure p_{2n}(0,0)/(2n) per
shape class, so the soup of intensity lam puts Poisson(lam * p_{2n}/(2n))
loops at each (root, half-length) cell, with uniform closed-walk shapes and
labels uniform on (0, lam].  The Brownian side discretizes the rooted
Brownian loop measure into matching duration windows: window n covers
durations [2(n-1)/d + r_d, 2n/d + r_d] with cell mass q_n, roots spread
uniformly over unit cells, shapes Brownian bridges on a dyadic grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .lattice import DiscreteLoop, LatticePath
from .walks import (
    BoundaryConvention,
    _interior_mask,
    bridge_sites_from_codes,
    return_probability,
    sample_bridge_step_codes,
)


def blrange(d: int) -> float:
    """Duration offset r_d = (3d + 4) / (2d(d + 2)) aligning the windows."""
    return (3 * d + 4) / (2 * d * (d + 2))


def loop_mass(d: int, n: int) -> float:
    """Total measure of lattice loops of 2n steps rooted at a fixed site."""
    if n < 1:
        raise ValueError("half-length must be >= 1")
    return return_probability(d, n) / (2 * n)


def duration_window(d: int, n: int) -> tuple[float, float]:
    rd = blrange(d)
    return (2 * (n - 1) / d + rd, 2 * n / d + rd)


def _power_law_mass(d: int, lo: float, hi: float) -> float:
    # integral of dt / (t (2 pi t)^{d/2}) over [lo, hi]
    return (2 * math.pi) ** (-d / 2) * (2 / d) * (lo ** (-d / 2) - hi ** (-d / 2))


def brownian_window_mass(d: int, n: int) -> float:
    """q_n: rooted Brownian loop mass of duration window n, per unit volume."""
    lo, hi = duration_window(d, n)
    return _power_law_mass(d, lo, hi)


@dataclass(frozen=True)
class BlConstants:
    """Per-dimension constants pairing the two soups window by window."""

    d: int
    r_d: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "r_d", blrange(self.d))

    def q(self, n: int) -> float:
        return brownian_window_mass(self.d, n)

    def q_tilde(self, n: int) -> float:
        return loop_mass(self.d, n)

    def window(self, n: int) -> tuple[float, float]:
        return duration_window(self.d, n)

    def intensity_gap_constant(self, n: int) -> float:
        """|q_n - q_tilde_n| scaled by n^{d/2+3}; bounded if windows align."""
        return abs(self.q(n) - self.q_tilde(n)) * float(n) ** (self.d / 2 + 3)


def tail_mass_bound(d: int, n_max: int) -> float:
    """Upper bound on the per-root loop mass omitted beyond half-length n_max.

    Uses the envelope p_{2n} <= C n^{-d/2} with C the larger of the computed
    prefix maximum and the local-limit constant 2 (d / 4 pi)^{d/2}, then an
    integral tail; always at least the true omitted mass.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    probe = range(1, min(n_max, 64) + 1)
    c_computed = max(return_probability(d, n) * n ** (d / 2) for n in probe)
    c_limit = 2.0 * (d / (4 * math.pi)) ** (d / 2)
    c_env = max(c_computed, c_limit) * (1 + 1e-9)
    return (c_env / d) * n_max ** (-d / 2)


def default_max_half_length(d: int, budget: float = 1e-4) -> int:
    """Smallest cutoff whose documented omitted tail mass is within budget."""
    c_limit = 2.0 * (d / (4 * math.pi)) ** (d / 2) * 1.5
    n = max(1, int((c_limit / (d * budget)) ** (2 / d)))
    while tail_mass_bound(d, n) > budget:
        n += max(1, n // 8)
    while n > 1 and tail_mass_bound(d, n - 1) <= budget:
        n -= 1
    return n


@dataclass(frozen=True)
class RwSoupConfig:
    d: int
    domain_radius: float
    intensity: float = 1.0
    max_half_length: int | None = None
    seed: int = 0
    convention: BoundaryConvention = BoundaryConvention.OPEN

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError("intensity must be >= 0")
        if self.domain_radius <= 0:
            raise ValueError("domain radius must be positive")

    def resolved_max_half_length(self) -> int:
        if self.max_half_length is not None:
            return self.max_half_length
        return default_max_half_length(self.d)

    def box_reach(self) -> int:
        """Largest coordinate of the domain's bounding box."""
        r = self.domain_radius
        if self.convention is BoundaryConvention.OPEN:
            return max(int(math.ceil(r)) - 1, 0)
        return int(math.floor(r))


@dataclass
class SoupSample:
    config: RwSoupConfig
    loops: list[DiscreteLoop]
    contained: np.ndarray  # bool per loop: all sites in the domain interior

    def contained_loops(self) -> list[DiscreteLoop]:
        return [lp for lp, c in zip(self.loops, self.contained) if c]

    def thinned(self, new_intensity: float) -> "SoupSample":
        """Loops with label <= new_intensity: the soup of lower intensity."""
        if not 0 <= new_intensity <= self.config.intensity:
            raise ValueError("thinning intensity must lie in [0, intensity]")
        keep = [i for i, lp in enumerate(self.loops) if lp.label <= new_intensity]
        cfg = RwSoupConfig(
            self.config.d,
            self.config.domain_radius,
            new_intensity,
            self.config.max_half_length,
            self.config.seed,
            self.config.convention,
        )
        return SoupSample(
            cfg,
            [self.loops[i] for i in keep],
            self.contained[keep] if len(self.loops) else np.zeros(0, bool),
        )


def _box_roots(reach: int, d: int) -> np.ndarray:
    axes = [np.arange(-reach, reach + 1, dtype=np.int64)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def sample_rw_soup(cfg: RwSoupConfig, rng: np.random.Generator | None = None) -> SoupSample:
    """One draw of the lattice loop soup over the domain's bounding box.

    For every root z in the box and half-length n <= max_half_length, the
    number of loops is Poisson(intensity * loop_mass(d, n)); shapes are
    uniform closed walks translated to z, labels uniform on (0, intensity].
    """
    if rng is None:
        rng = rng_mod.stream(cfg.seed)
    d = cfg.d
    n_max = cfg.resolved_max_half_length()
    roots = _box_roots(cfg.box_reach(), d)
    masses = np.array([loop_mass(d, n) for n in range(1, n_max + 1)])
    counts = rng.poisson(lam=np.broadcast_to(cfg.intensity * masses, (roots.shape[0], n_max)))
    loops: list[DiscreteLoop] = []
    flags: list[bool] = []
    r = cfg.domain_radius
    for zi, ni in zip(*np.nonzero(counts)):
        z = roots[zi]
        n = ni + 1
        k = counts[zi, ni]
        codes = sample_bridge_step_codes(d, 2 * n, int(k), rng)
        sites = bridge_sites_from_codes(d, codes) + z
        labels = cfg.intensity * (1.0 - rng.random(int(k)))
        for j in range(int(k)):
            path = LatticePath(sites[j])
            loops.append(DiscreteLoop(root=tuple(int(c) for c in z), path=path, label=float(labels[j])))
            inside = _interior_mask((sites[j].astype(float) ** 2).sum(axis=1), r, cfg.convention)
            flags.append(bool(inside.all()))
    return SoupSample(cfg, loops, np.asarray(flags, dtype=bool))


# ---------------------------------------------------------------------------
# Brownian side.


def duration_quantile(d: int, n: int, u: float) -> float:
    """Inverse CDF of the density proportional to t^{-d/2-1} on window n."""
    lo, hi = duration_window(d, n)
    return _window_quantile(d, lo, hi, u)


def _window_quantile(d: int, lo: float, hi: float, u) -> float:
    a = lo ** (-d / 2)
    b = hi ** (-d / 2)
    return (a - u * (a - b)) ** (-2 / d)


def sample_duration(d: int, n: int, rng: np.random.Generator) -> float:
    return float(duration_quantile(d, n, rng.random()))


def sample_brownian_bridge(
    d: int, duration: float, levels: int, rng: np.random.Generator
) -> np.ndarray:
    """Brownian bridge displacements on a dyadic grid of 2^levels + 1 points.

    Midpoint construction: each refinement level fills segment midpoints with
    mean the endpoint average and variance a quarter of the segment duration.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if levels < 0:
        raise ValueError("levels must be >= 0")
    npts = (1 << levels) + 1
    w = np.zeros((npts, d))
    step = npts - 1
    while step > 1:
        half = step // 2
        idx = np.arange(half, npts, step)
        var = duration * half / (2 * (npts - 1))
        w[idx] = 0.5 * (w[idx - half] + w[idx + half])
        w[idx] += math.sqrt(var) * rng.standard_normal((idx.shape[0], d))
        step = half
    return w


@dataclass(frozen=True)
class ContinuousLoop:
    """A rooted Brownian loop: root + displacements over a uniform time grid."""

    root: np.ndarray
    duration: float
    displacements: np.ndarray
    generation: int | None = None  # half-length window that produced it

    def __post_init__(self):
        root = np.asarray(self.root, dtype=float)
        disp = np.asarray(self.displacements, dtype=float)
        if disp.ndim != 2 or disp.shape[0] < 2 or disp.shape[1] != root.shape[0]:
            raise ValueError("displacements must be (grid, d) matching the root")
        if np.abs(disp[0]).max() > 0 or np.abs(disp[-1]).max() > 0:
            raise ValueError("a loop starts and ends at its root")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "displacements", disp)

    @property
    def d(self) -> int:
        return self.root.shape[0]

    def times(self) -> np.ndarray:
        return self.duration * np.arange(self.displacements.shape[0]) / (
            self.displacements.shape[0] - 1
        )

    def points(self) -> np.ndarray:
        return self.root + self.displacements


@dataclass(frozen=True)
class BlSoupConfig:
    d: int
    box_reach: int
    intensity: float = 1.0
    max_half_length: int | None = None
    levels: int = 10
    seed: int = 0
    include_small: bool = False
    small_floor: float | None = None  # smallest duration kept when small loops are on

    def resolved_max_half_length(self) -> int:
        if self.max_half_length is not None:
            return self.max_half_length
        return default_max_half_length(self.d)


def small_duration_segments(d: int, floor: float) -> list[tuple[float, float]]:
    """Geometric segments covering (floor, r_d], finest first excluded mass
    below the floor stays unsampled (the full small-loop mass is infinite)."""
    rd = blrange(d)
    if not 0 < floor < rd:
        raise ValueError("small-loop floor must lie in (0, r_d)")
    segs = []
    hi = rd
    while hi > floor * (1 + 1e-12):
        lo = max(hi / 2, floor)
        segs.append((lo, hi))
        hi = lo
    return segs


def sample_brownian_soup(cfg: BlSoupConfig, rng: np.random.Generator | None = None) -> list[ContinuousLoop]:
    """One draw of the rooted Brownian loop soup over the box.

    Window n >= 1 at cell z holds Poisson(intensity * q_n) loops rooted at
    z + uniform([-1/2, 1/2]^d) with durations from the window's power law.
    Loops of duration <= r_d form an independent component, sampled only when
    include_small is set, down to small_floor.
    """
    if rng is None:
        rng = rng_mod.stream(cfg.seed)
    d = cfg.d
    n_max = cfg.resolved_max_half_length()
    roots = _box_roots(cfg.box_reach, d)
    windows: list[tuple[float, float, int | None]] = []
    for n in range(1, n_max + 1):
        lo, hi = duration_window(d, n)
        windows.append((lo, hi, n))
    if cfg.include_small:
        floor = cfg.small_floor if cfg.small_floor is not None else blrange(d) / 8
        windows.extend((lo, hi, None) for lo, hi in small_duration_segments(d, floor))
    masses = np.array([_power_law_mass(d, lo, hi) for lo, hi, _ in windows])
    counts = rng.poisson(lam=np.broadcast_to(cfg.intensity * masses, (roots.shape[0], len(windows))))
    loops: list[ContinuousLoop] = []
    for zi, wi in zip(*np.nonzero(counts)):
        lo, hi, gen = windows[wi]
        for _ in range(int(counts[zi, wi])):
            offset = rng.random(d) - 0.5
            t = float(_window_quantile(d, lo, hi, rng.random()))
            disp = sample_brownian_bridge(d, t, cfg.levels, rng)
            loops.append(
                ContinuousLoop(
                    root=roots[zi].astype(float) + offset,
                    duration=t,
                    displacements=disp,
                    generation=gen,
                )
            )
    return loops


# ---------------------------------------------------------------------------
# Serialization: one JSON object per line.


def write_discrete_loops_jsonl(loops, fh) -> None:
    for lp in loops:
        fh.write(
            json.dumps(
                {
                    "root": list(map(int, lp.root)),
                    "label": lp.label,
                    "sites": [list(map(int, row)) for row in lp.path.sites],
                }
            )
        )
        fh.write("\n")


def read_discrete_loops_jsonl(fh) -> list[DiscreteLoop]:
    out = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        out.append(
            DiscreteLoop(
                root=tuple(rec["root"]),
                path=LatticePath(np.asarray(rec["sites"], dtype=np.int64)),
                label=float(rec["label"]),
            )
        )
    return out


def write_continuous_loops_jsonl(loops, fh) -> None:
    for lp in loops:
        fh.write(
            json.dumps(
                {
                    "root": [float(c) for c in lp.root],
                    "duration": lp.duration,
                    "grid": [[float(v) for v in row] for row in lp.displacements],
                }
            )
        )
        fh.write("\n")


def read_continuous_loops_jsonl(fh) -> list[ContinuousLoop]:
    out = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        out.append(
            ContinuousLoop(
                root=np.asarray(rec["root"], dtype=float),
                duration=float(rec["duration"]),
                displacements=np.asarray(rec["grid"], dtype=float),
            )
        )
    return out

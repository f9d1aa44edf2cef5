"""End-to-end statistical acceptance runs.

One test per headline property, each printing a single summary line with its
measured numbers and PASS/FAIL verdict.  These use large sample counts and
fixed seeds; the whole module takes roughly 40 minutes.  Deselect with
`-m "not acceptance"` for quick iteration.
"""

import math
from itertools import product

import numpy as np
import pytest
from scipy.stats import chisquare

from loopforge import analysis, cli
from loopforge import rng as rng_mod
from loopforge.coupling import PoissonCoupling, couple_bridge_1d, poisson_tv
from loopforge.decompose import verify_decomposition
from loopforge.soup import BlConstants
from loopforge.walks import lclt_ratio_error

pytestmark = pytest.mark.acceptance

RADII = [32, 64, 128, 256, 512]


def verdict(tag: str, ok: bool, detail: str) -> None:
    print(f"{tag}: {detail} -> {'PASS' if ok else 'FAIL'}", flush=True)


@pytest.fixture(scope="module")
def growth_fit_3d():
    return analysis.estimate_beta(3, RADII, 2000, rng_mod.stream(301))


@pytest.mark.slow
def test_decomposition_matches_harmonic_oracle():
    parts = []
    ok = True
    for d in (2, 3):
        rep = verify_decomposition(d, 4, 10**6, seed=101 + d, threads=4)
        frac = rep.frac_within(4.0)
        ok = ok and frac >= 0.99 and rep.max_abs_z <= 6.0
        parts.append(f"d={d} within4={100 * frac:.2f}% max|z|={rep.max_abs_z:.2f}")
    verdict("decomposition law", ok, "; ".join(parts))
    assert ok


def test_return_probability_expansion():
    worst = 0.0
    ok = True
    for d, n in product((2, 3), range(1, 65)):
        err = lclt_ratio_error(d, n)
        worst = max(worst, err * n * n)
        ok = ok and err <= 5.0 / n**2
    verdict("return-probability expansion", ok, f"max n^2*err={worst:.3f} (bound 5)")
    assert ok


@pytest.mark.slow
def test_growth_exponent_both_dimensions(growth_fit_3d):
    fit2 = analysis.estimate_beta(2, RADII, 2000, rng_mod.stream(302))
    ok3 = 1.45 <= growth_fit_3d.slope <= 1.75
    ok2 = 1.15 <= fit2.slope <= 1.35
    verdict(
        "growth exponent",
        ok3 and ok2,
        f"d=3 slope={growth_fit_3d.slope:.3f}+-{growth_fit_3d.stderr:.3f} in [1.45,1.75]; "
        f"d=2 slope={fit2.slope:.3f}+-{fit2.stderr:.3f} in [1.15,1.35]",
    )
    assert ok3 and ok2


@pytest.mark.slow
def test_cut_points_survive_erasure():
    total = 0
    for d in (2, 3):
        rep = analysis.cut_point_stats(d, 64, 10**4, rng_mod.stream(400 + d))
        total += rep.config["violations"]
    ok = total == 0
    verdict("cut-point containment", ok, f"violations={total} over 2x10^4 walks")
    assert ok


def test_bridge_coupling_decay_and_marginal():
    rng = rng_mod.stream(305)
    ms = [2**k for k in range(4, 13)]
    medians = []
    for m in ms:
        sups = [couple_bridge_1d(m, rng).sup_distance for _ in range(200)]
        medians.append(float(np.median(sups)))
    slope = float(np.polyfit(np.log(ms), np.log(medians), 1)[0])

    # the four-step bridge law is uniform over the six lattice bridges
    paths = {(1, 2, 1), (1, 0, 1), (1, 0, -1), (-1, 0, 1), (-1, 0, -1), (-1, -2, -1)}
    counts = dict.fromkeys(paths, 0)
    draws = 6000
    for _ in range(draws):
        x = couple_bridge_1d(4, rng).discrete.sites[:, 0]
        counts[tuple(int(v) for v in x[1:4])] += 1
    p = float(chisquare(list(counts.values())).pvalue)

    ok = slope <= -0.2 and p > 1e-3
    verdict(
        "bridge coupling", ok, f"median-sup slope={slope:.3f} (<=-0.2); chi2 p={p:.4f}"
    )
    assert ok


def test_count_intensity_gap_and_poisson_tv():
    consts = BlConstants(3)
    cs = [consts.intensity_gap_constant(n) for n in range(4, 65)]
    ratio = max(cs) / min(cs)

    a, b = consts.q(1), consts.q_tilde(1)
    tv = poisson_tv(a, b)
    draws = 10**6
    xs, ys = PoissonCoupling(a, b).sample_many(draws, rng_mod.stream(306))
    freq = float((xs != ys).mean())
    sigma = math.sqrt(tv * (1 - tv) / draws)
    dev = abs(freq - tv) / sigma

    ok = ratio <= 10.0 and dev <= 4.0
    verdict(
        "count-intensity gap",
        ok,
        f"implied-C max/min={ratio:.3f} (<=10); |freq-tv|={dev:.2f} sigma",
    )
    assert ok


@pytest.mark.slow
def test_quasi_loop_probability_decays():
    reports = [
        analysis.quasi_loop_probability(
            3, 256, 2.0**-k, 2, 500, rng_mod.stream(370 + k), strict=False
        )
        for k in range(2, 7)
    ]
    ok = True
    for prev, cur in zip(reports, reports[1:]):
        slack = 2.0 * math.hypot(prev.stderr, cur.stderr)
        ok = ok and cur.estimate <= prev.estimate + slack
    probs = ", ".join(f"{r.estimate:.3f}" for r in reports)
    verdict("quasi-loop decay", ok, f"p(eps=2^-2..2^-6)=[{probs}] non-increasing")
    assert ok


@pytest.mark.slow
def test_hittability_failure_fraction_trend():
    reports = [
        analysis.hittability_scan(3, 256, 2.0**-k, 0.1, 24, 64, rng_mod.stream(380 + k))
        for k in range(2, 6)
    ]
    ok = True
    for prev, cur in zip(reports, reports[1:]):
        slack = 2.0 * math.hypot(prev.stderr, cur.stderr)
        ok = ok and cur.estimate <= prev.estimate + slack
    fracs = ", ".join(f"{r.estimate:.3f}" for r in reports)
    verdict("hittability trend", ok, f"fail-frac(eps=2^-2..2^-5)=[{fracs}]")
    assert ok


def test_dimension_estimate_and_calibration():
    rep = analysis.lerw_box_dimension(3, 512, 50, rng_mod.stream(309))
    ok_lerw = 1.0 < rep.estimate <= 1.83

    seg = np.arange(10**4) / 10**4
    d_seg = analysis.box_dimension(seg, [2.0**-k for k in range(2, 8)]).slope
    g = np.arange(200) / 200
    square = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    d_sq = analysis.box_dimension(square, [2.0**-k for k in range(2, 8)]).slope
    cantor = np.array([0.0, 1.0])
    for _ in range(9):
        cantor = np.concatenate([cantor / 3, cantor / 3 + 2 / 3])
    d_c = analysis.box_dimension(cantor, [3.0**-k for k in range(2, 7)]).slope
    ok_cal = (
        abs(d_seg - 1.0) <= 0.1
        and abs(d_sq - 2.0) <= 0.1
        and abs(d_c - math.log(2) / math.log(3)) <= 0.1
    )
    verdict(
        "box dimension",
        ok_lerw and ok_cal,
        f"lerw dim={rep.estimate:.3f}+-{rep.stderr:.3f} in (1.0,1.83]; "
        f"calib seg={d_seg:.3f} sq={d_sq:.3f} cantor={d_c:.3f}",
    )
    assert ok_lerw and ok_cal


def _profile_log_slope(reports, n: int) -> tuple[float, float]:
    """Least-squares slope of log es against log(m/n) with delta-method
    variance propagated from the per-point standard errors."""
    ms = np.array([r.config["m"] for r in reports], dtype=float)
    es = np.array([r.estimate for r in reports])
    se = np.array([r.stderr for r in reports])
    xc = np.log(ms / n)
    xc = xc - xc.mean()
    ssxx = float(xc @ xc)
    slope = float(xc @ np.log(es)) / ssxx
    var = float((((xc / ssxx) * (se / es)) ** 2).sum())
    return slope, var


@pytest.mark.slow
def test_escape_exponent_tracks_growth_exponent(growth_fit_3d):
    beta_hat = growth_fit_3d.slope
    lo, hi = 2.0 - beta_hat - 0.15, 2.0 - beta_hat + 0.15
    slopes = {}
    ok = True
    for K in (4, 8, 16):
        reports = analysis.estimate_escape_profile(
            3, [4, 8, 16, 32], 64, K, 400, rng_mod.stream(310 + K)
        )
        slopes[K] = _profile_log_slope(reports, 64)
        ok = ok and lo <= slopes[K][0] <= hi
    for a, b in ((4, 8), (8, 16)):
        gap = abs(slopes[a][0] - slopes[b][0])
        ok = ok and gap <= 2.0 * math.sqrt(slopes[a][1] + slopes[b][1])
    shown = ", ".join(f"K={k}: {s:.3f}" for k, (s, _) in slopes.items())
    verdict(
        "escape exponent",
        ok,
        f"slopes [{shown}] vs [{lo:.3f},{hi:.3f}]; K-stable within 2 sigma",
    )
    assert ok


def test_cli_outputs_are_reproducible(tmp_path):
    def run(name, extra):
        out = tmp_path / name
        argv = extra + ["--seed", "42", "--out", str(out)]
        assert cli.run(argv) == 0
        return out.read_bytes()

    lerw_args = ["sample-lerw", "--dim", "2", "--radius", "16", "--samples", "50"]
    first = run("walks_a.jsonl", lerw_args)
    second = run("walks_b.jsonl", lerw_args)

    dec_args = ["verify-decomposition", "--dim", "2", "--radius", "4",
                "--samples", "20000"]
    one = run("dec_t1.csv", dec_args + ["--threads", "1"])
    three = run("dec_t3.csv", dec_args + ["--threads", "3"])

    ok = first == second and one == three
    verdict(
        "determinism",
        ok,
        f"rerun identical={first == second}; threads 1 vs 3 identical={one == three}",
    )
    assert ok

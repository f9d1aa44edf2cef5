"""Command-line front end: configure an experiment, run it, persist results.

Every subcommand writes its data file plus a manifest JSON next to it; data
files are a pure function of the manifest minus timestamps, so reruns (at any
thread count) reproduce them byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from . import rng as rng_mod
from .analysis import (
    cut_point_stats,
    estimate_beta,
    estimate_escape_profile,
    hittability_scan,
    lerw_box_dimension,
    quasi_loop_probability,
)
from .coupling import couple_bridge, couple_bridge_1d, couple_soups
from .decompose import verify_decomposition
from .lattice import write_paths_jsonl
from .soup import (
    BlSoupConfig,
    RwSoupConfig,
    sample_brownian_soup,
    sample_rw_soup,
    write_continuous_loops_jsonl,
    write_discrete_loops_jsonl,
)
from .walks import BoundaryConvention, WalkConfig, lclt_ratio_error, sample_lerw


@dataclass
class ExperimentManifest:
    command: str
    flags: dict
    seed: int
    threads: int
    build_id: str
    started: str
    finished: str


def _build_id() -> str:
    try:
        proc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).resolve().parent,
            timeout=10,
        )
        if proc.returncode == 0 and proc.stdout.strip():
            return proc.stdout.strip()
    except Exception:
        pass
    return f"loopforge-{__version__}"


def _default_threads() -> int:
    env = os.environ.get("LOOPFORGE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_report_csv(out: str, reports, config_keys: list[str]) -> None:
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(config_keys + ["estimate", "stderr", "samples"]) + "\n")
        for rep in reports:
            cells = [_fmt(rep.config[k]) for k in config_keys]
            cells += [repr(float(rep.estimate)), repr(float(rep.stderr)), str(rep.samples)]
            fh.write(",".join(cells) + "\n")


def _write_fit_csv(out: str, fit, samples: int) -> None:
    """Fit summary row followed by the per-point log-log rows."""
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("record,log_x,log_y,slope,intercept,stderr,samples\n")
        fh.write(
            "fit,,,%s,%s,%s,%d\n"
            % (repr(float(fit.slope)), repr(float(fit.intercept)), repr(float(fit.stderr)), samples)
        )
        for lx, ly, _w in fit.points:
            fh.write("point,%s,%s,,,,\n" % (repr(float(lx)), repr(float(ly))))


def _convention(args) -> BoundaryConvention:
    return BoundaryConvention(getattr(args, "convention", "open"))


# ---------------------------------------------------------------------------
# Subcommand bodies.  Each takes parsed args, writes args.out, returns a
# one-line status string.


def _cmd_sample_lerw(args) -> str:
    cfg = WalkConfig(d=args.dim, n=args.radius, seed=args.seed, convention=_convention(args))
    paths = [
        sample_lerw(cfg, rng_mod.substream(args.seed, i)) for i in range(args.samples)
    ]
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        write_paths_jsonl(paths, fh)
    return f"wrote {len(paths)} erased paths to {args.out}"


def _cmd_sample_soup(args) -> str:
    cfg = RwSoupConfig(
        d=args.dim,
        domain_radius=args.radius,
        intensity=args.intensity,
        max_half_length=args.max_half_length,
        seed=args.seed,
        convention=_convention(args),
    )
    sample = sample_rw_soup(cfg, rng_mod.stream(args.seed))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        write_discrete_loops_jsonl(sample.loops, fh)
    return f"wrote {len(sample.loops)} loops to {args.out}"


def _cmd_sample_brownian_soup(args) -> str:
    cfg = BlSoupConfig(
        d=args.dim,
        box_reach=int(args.radius),
        intensity=args.intensity,
        levels=args.levels,
        seed=args.seed,
    )
    loops = sample_brownian_soup(cfg, rng_mod.stream(args.seed))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        write_continuous_loops_jsonl(loops, fh)
    return f"wrote {len(loops)} continuous loops to {args.out}"


def _cmd_verify_decomposition(args) -> str:
    report = verify_decomposition(
        args.dim,
        int(args.radius),
        args.samples,
        seed=args.seed,
        convention=_convention(args),
        threads=args.threads,
    )
    report.to_csv(args.out)
    return report.summary()


def _cmd_couple_soups(args) -> str:
    report = couple_soups(
        args.dim,
        args.radius,
        args.intensity,
        args.scale,
        args.theta,
        levels=args.levels,
        rng=rng_mod.stream(args.seed),
    )
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json(indent=2, sort_keys=True))
        fh.write("\n")
    status = "success" if report.success else "FLAGGED"
    return f"coupled {report.n_paired} loop pairs ({status}) -> {args.out}"


def _cmd_couple_bridge(args) -> str:
    rows = []
    for i in range(args.samples):
        rng = rng_mod.substream(args.seed, i)
        pair = couple_bridge_1d(args.steps, rng) if args.dim == 1 else couple_bridge(
            args.dim, args.steps, rng
        )
        rows.append((i, pair.sup_distance))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sample,steps,sup_distance\n")
        for i, sup in rows:
            fh.write(f"{i},{args.steps},{repr(float(sup))}\n")
    return f"coupled {args.samples} bridge pairs at {args.steps} steps -> {args.out}"


def _cmd_estimate_beta(args) -> str:
    fit = estimate_beta(
        args.dim,
        args.radii,
        args.samples,
        rng_mod.stream(args.seed),
        convention=_convention(args),
    )
    _write_fit_csv(args.out, fit, args.samples)
    return f"growth exponent {fit.slope:.4f} +- {fit.stderr:.4f} -> {args.out}"


def _cmd_estimate_escape(args) -> str:
    reports = estimate_escape_profile(
        args.dim,
        args.m_values,
        int(args.radius),
        args.truncation,
        args.samples,
        rng_mod.stream(args.seed),
    )
    _write_report_csv(args.out, reports, ["d", "m", "n", "K"])
    return f"escape profile over {len(reports)} inner radii -> {args.out}"


def _cmd_scan_quasiloops(args) -> str:
    report = quasi_loop_probability(
        args.dim,
        int(args.radius),
        args.epsilon,
        args.power,
        args.samples,
        rng_mod.stream(args.seed),
        strict=False,
    )
    _write_report_csv(args.out, [report], ["d", "n", "eps", "M", "s", "r"])
    return f"quasi-loop probability {report.estimate:.4f} -> {args.out}"


def _cmd_hittability(args) -> str:
    report = hittability_scan(
        args.dim,
        int(args.radius),
        args.epsilon,
        args.eta,
        args.samples,
        args.inner_samples,
        rng_mod.stream(args.seed),
    )
    _write_report_csv(
        args.out, [report], ["d", "n", "eps", "eta", "threshold", "inner_samples"]
    )
    return f"hittability failure fraction {report.estimate:.4f} -> {args.out}"


def _cmd_box_dimension(args) -> str:
    report = lerw_box_dimension(
        args.dim,
        int(args.radius),
        args.samples,
        rng_mod.stream(args.seed),
        scales=args.scales,
    )
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("d,n,estimate,stderr,samples\n")
        fh.write(
            "%d,%d,%s,%s,%d\n"
            % (
                args.dim,
                int(args.radius),
                repr(float(report.estimate)),
                repr(float(report.stderr)),
                report.samples,
            )
        )
    return f"mean box dimension {report.estimate:.4f} -> {args.out}"


def _cmd_cut_points(args) -> str:
    report = cut_point_stats(args.dim, int(args.radius), args.samples, rng_mod.stream(args.seed))
    _write_report_csv(args.out, [report], ["d", "n", "violations"])
    return f"mean cut-point count {report.estimate:.4f} -> {args.out}"


def _cmd_lclt_check(args) -> str:
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("d,n,ratio_error,bound,ok\n")
        worst = 0.0
        for n in range(1, args.max_n + 1):
            err = lclt_ratio_error(args.dim, n)
            bound = 5.0 / (n * n)
            worst = max(worst, err * n * n / 5.0)
            fh.write(f"{args.dim},{n},{repr(err)},{repr(bound)},{err <= bound}\n")
    return f"return-probability expansion checked to n={args.max_n} (worst bound use {worst:.3f}) -> {args.out}"


_HANDLERS = {
    "sample-lerw": _cmd_sample_lerw,
    "sample-soup": _cmd_sample_soup,
    "sample-brownian-soup": _cmd_sample_brownian_soup,
    "verify-decomposition": _cmd_verify_decomposition,
    "couple-soups": _cmd_couple_soups,
    "couple-bridge": _cmd_couple_bridge,
    "estimate-beta": _cmd_estimate_beta,
    "estimate-escape": _cmd_estimate_escape,
    "scan-quasiloops": _cmd_scan_quasiloops,
    "hittability": _cmd_hittability,
    "box-dimension": _cmd_box_dimension,
    "cut-points": _cmd_cut_points,
    "lclt-check": _cmd_lclt_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopforge",
        description="lattice walk, loop soup, and coupling experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, radius=True, samples=True, convention=False, intensity=False):
        p.add_argument("--dim", type=int, required=True, help="lattice dimension")
        if radius:
            p.add_argument("--radius", type=float, required=True, help="domain radius")
        if samples:
            p.add_argument("--samples", type=int, required=True)
        if intensity:
            p.add_argument("--lambda", dest="intensity", type=float, default=1.0)
        if convention:
            p.add_argument("--convention", choices=["open", "closed"], default="open")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=_default_threads())
        p.add_argument("--out", required=True, help="output data file")

    p = sub.add_parser("sample-lerw", help="erased stopped walks as JSONL")
    common(p, convention=True)

    p = sub.add_parser("sample-soup", help="walk loop soup in a ball as JSONL")
    common(p, samples=False, convention=True, intensity=True)
    p.add_argument("--max-half-length", type=int, default=None)

    p = sub.add_parser("sample-brownian-soup", help="Brownian loop soup in a box as JSONL")
    common(p, samples=False, intensity=True)
    p.add_argument("--levels", type=int, default=10, help="dyadic refinement levels")

    p = sub.add_parser("verify-decomposition", help="per-site z-scores of the glued trace law")
    common(p, convention=True)

    p = sub.add_parser("couple-soups", help="pair discrete and Brownian soups, report closeness")
    common(p, samples=False, intensity=True)
    p.add_argument("--scale", type=int, required=True, help="lattice scale N")
    p.add_argument("--theta", type=float, required=True, help="large-loop cutoff exponent")
    p.add_argument("--levels", type=int, default=6)

    p = sub.add_parser("couple-bridge", help="coupled bridge pairs, sup distances as CSV")
    common(p, radius=False)
    p.add_argument("--steps", type=int, required=True, help="bridge step count (even)")

    p = sub.add_parser("estimate-beta", help="growth exponent fit")
    common(p, radius=False, convention=True)
    p.add_argument("--radii", type=_int_list, required=True, help="comma-separated radii")

    p = sub.add_parser("estimate-escape", help="escape probability profile")
    common(p)
    p.add_argument("--m-values", type=_int_list, required=True, help="comma-separated inner radii")
    p.add_argument("--truncation", type=int, default=8, help="donor walk cutoff factor K")

    p = sub.add_parser("scan-quasiloops", help="quasi-loop probability at one epsilon")
    common(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--power", type=int, default=2, help="inner radius exponent M")

    p = sub.add_parser("hittability", help="weakly-hit-point scan")
    common(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--inner-samples", type=int, default=64)

    p = sub.add_parser("box-dimension", help="box dimension of rescaled erased walks")
    common(p)
    p.add_argument("--scales", type=_float_list, default=None)

    p = sub.add_parser("cut-points", help="cut point count statistics")
    common(p)

    p = sub.add_parser("lclt-check", help="return probability expansion error table")
    common(p, radius=False, samples=False)
    p.add_argument("--max-n", type=int, default=64)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = _now()
    try:
        status = _HANDLERS[args.command](args)
    except Exception as exc:  # runtime failure, distinct from usage errors
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest = ExperimentManifest(
        command=args.command,
        flags={k: v for k, v in vars(args).items() if k != "command"},
        seed=args.seed,
        threads=args.threads,
        build_id=_build_id(),
        started=started,
        finished=_now(),
    )
    with open(f"{args.out}.manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(status)
    return 0


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line entry point ``tiar-bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .nep import PoleError, SingularMatrixError
from .waveguide import PRESETS, BranchError, GeometryError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(Exception):
    pass


def parse_shift(text: str) -> complex:
    try:
        re, im = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"shift must be RE,IM (e.g. -3,-3.14159), got {text!r}") from exc
    return complex(re, im)


def parse_sizes(text: str) -> list:
    try:
        sizes = [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from exc
    if not sizes:
        raise argparse.ArgumentTypeError("empty size list")
    return sizes


def _add_problem_args(p, with_grid=True):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=PRESETS, default=None)
    src.add_argument("--geometry", metavar="FILE", help="geometry JSON file")
    if with_grid:
        p.add_argument("--nx", type=int, required=True)
        p.add_argument("--nz", type=int, required=True)
    p.add_argument("--shift", type=parse_shift, default=None,
                   help="Cayley shift RE,IM (default depends on the preset)")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--kappa-rule", choices=("exact", "midpoint"), default="exact")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tiar-bench", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one configuration")
    _add_problem_args(s)
    s.add_argument("--solver", choices=bench.SOLVERS, default="wtiar")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--all-ritz", action="store_true")

    r = sub.add_parser("refine", help="grid refinement study")
    _add_problem_args(r)
    r.add_argument("--levels", type=int, default=3)

    t = sub.add_parser("timing", help="wall time versus problem size")
    _add_problem_args(t, with_grid=False)
    t.add_argument("--sizes", type=parse_sizes, required=True,
                   help="comma-separated nx values; nz = nx + 1")
    t.add_argument("--solvers", default="wtiar",
                   help="comma-separated subset of iar,tiar,wtiar")
    return ap


def _source(args):
    if args.geometry is None and args.preset is None:
        args.preset = "benchmark"
    return args.preset, args.geometry


def _shift(args):
    if args.shift is not None:
        return args.shift
    return bench.COMPLEX_SHIFT if args.preset == "complex" else bench.BENCHMARK_SHIFT


def _geometry(args):
    preset, path = _source(args)
    return bench.load_geometry(preset=preset) if path is None \
        else bench.load_geometry(path=path)


def cmd_solve(args) -> dict:
    preset, path = _source(args)
    try:
        cfg = bench.RunConfig(
            nx=args.nx, nz=args.nz, shift=_shift(args), iters=args.iters,
            solver=args.solver, tol=args.tol, preset=preset,
            geometry_file=None if path is None else str(path),
            seed=args.seed, all_ritz=args.all_ritz, kappa_rule=args.kappa_rule)
        problem = bench.WaveguideNep.build(cfg.geometry(), cfg.nx, cfg.nz,
                                           cfg.kappa_rule)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    report = bench.run(cfg, problem)
    timing = bench.write_report(report, args.out)
    for g in report.eigenvalues(region_only=False):
        print(f"{g.real:+.9f} {g.imag:+.9f}i")
    return timing


def cmd_refine(args) -> dict:
    try:
        geo = _geometry(args)
        bench.RunConfig(args.nx, args.nz, _shift(args), args.iters, tol=args.tol)
        bench.DiscretizationGrid(args.nx, args.nz, geo.x_minus, geo.x_plus)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    rep = bench.refine_study(geo, args.nx, args.nz, args.levels, _shift(args),
                             args.iters, args.tol, kappa_rule=args.kappa_rule)
    args.out.mkdir(parents=True, exist_ok=True)
    out = {
        "grids": rep.grids,
        "eigenvalues": [[[g.real, g.imag] for g in row] for row in rep.eigenvalues],
        "ratios": rep.ratios.tolist(),
        "wall_times": rep.times,
    }
    with open(args.out / "refine.json", "w") as fh:
        json.dump(out, fh, indent=2)
    for (nx, nz), row in zip(rep.grids, rep.eigenvalues):
        print(f"{nx}x{nz}: " + "  ".join(f"{g.real:+.9f}{g.imag:+.9f}i" for g in row))
    for row in rep.ratios:
        print("ratio: " + "  ".join(f"{x:.3f}" for x in row))
    return out


def cmd_timing(args) -> dict:
    solvers = tuple(s for s in args.solvers.split(",") if s)
    try:
        geo = _geometry(args)
        for s in solvers:
            if s not in bench.SOLVERS:
                raise ValueError(f"unknown solver {s!r}")
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    out = bench.timing_study(geo, args.sizes, _shift(args), args.iters, solvers,
                             args.kappa_rule)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "timing.json", "w") as fh:
        json.dump(out, fh, indent=2)
    for row in out["rows"]:
        print(f"{row['solver']:>5} n={row['n']:>7} t={row['wall_time']:.3f}s")
    for s, p in out["exponents"].items():
        print(f"{s}: t ~ n^{p:.2f}")
    return out


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"solve": cmd_solve, "refine": cmd_refine, "timing": cmd_timing}
    try:
        handler[args.command](args)
    except (ConfigError, GeometryError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularMatrixError, PoleError, BranchError, RuntimeError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

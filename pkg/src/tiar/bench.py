"""Experiment harness: single solves, grid refinement and timing studies."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .nep import CayleyShift
from .waveguide import (
    DiscretizationGrid,
    WaveguideGeometry,
    WaveguideNep,
    load_geometry,
)
from .wtiar import MAX_DEPTH, CayleyNEP, default_start, iar_waveguide_run, in_region, wtiar_run

log = logging.getLogger(__name__)

SOLVERS = ("iar", "tiar", "wtiar")
BENCHMARK_SHIFT = complex(-3.0, np.pi)
COMPLEX_SHIFT = complex(-2.0, -np.pi)


@dataclass
class RunConfig:
    nx: int
    nz: int
    shift: complex
    iters: int = 100
    solver: str = "wtiar"
    tol: float = 1e-8
    preset: str | None = "benchmark"
    geometry_file: str | None = None
    seed: int | None = None
    all_ritz: bool = False
    history: bool = True
    kappa_rule: str = "exact"

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if not 1 <= self.iters <= MAX_DEPTH:
            raise ValueError(f"iters must lie in [1, {MAX_DEPTH}]")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        self.shift = complex(self.shift)
        CayleyShift(self.shift)

    def geometry(self) -> WaveguideGeometry:
        if self.geometry_file is not None:
            return load_geometry(path=self.geometry_file)
        return load_geometry(preset=self.preset)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shift"] = [self.shift.real, self.shift.imag]
        d["shift_imag_sign"] = "+" if self.shift.imag > 0 else "-"
        return d


@dataclass
class BenchReport:
    config: RunConfig
    n: int
    pairs: list
    converged: list
    history: list
    wall_time: float
    setup_time: float
    timings: dict
    flags: dict
    memory: dict = field(default_factory=dict)

    def eigenvalues(self, region_only: bool = True) -> np.ndarray:
        pairs = self.converged
        if region_only:
            pairs = [p for p in pairs if in_region(p.eigenvalue, self.config.shift)]
        return np.array([p.eigenvalue for p in pairs])


def memory_accounting(n: int, k: int) -> dict:
    """Basis storage in complex numbers: TIAR ``k n + k^3``, IAR ``k^2 n``."""
    return {"tiar": k * n + k ** 3, "iar": k * k * n}


def run(config: RunConfig, problem: WaveguideNep | None = None) -> BenchReport:
    """Assemble, transform and solve one configuration."""
    t0 = time.perf_counter()
    if problem is None:
        problem = WaveguideNep.build(config.geometry(), config.nx, config.nz,
                                     config.kappa_rule)
    nep = CayleyNEP(problem, config.shift, config.iters)
    x1 = default_start(nep.n, config.seed)
    t1 = time.perf_counter()
    if config.solver == "iar":
        res = iar_waveguide_run(nep, x1, config.iters, history=config.history)
    else:
        res = wtiar_run(nep, x1, config.iters, history=config.history,
                        structured=config.solver == "wtiar")
    t2 = time.perf_counter()
    report = res.report
    conv = report.converged(config.tol)
    k = report.flags["iterations"]
    log.info("%s %dx%d: %d iterations in %.3fs, %d converged",
             config.solver, config.nx, config.nz, k, t2 - t1, len(conv))
    return BenchReport(
        config=config, n=nep.n, pairs=report.pairs, converged=conv,
        history=report.history, wall_time=t2 - t1, setup_time=t1 - t0,
        timings=dict(report.timings), flags=dict(report.flags),
        memory=memory_accounting(nep.n, k))


def write_report(report: BenchReport, out) -> dict:
    """Write ``eigenvalues.csv``, ``history.csv`` and ``timing.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = report.config
    pairs = report.pairs if cfg.all_ritz else report.converged
    with open(out / "eigenvalues.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "residual", "in_region", "converged"])
        conv_ids = {id(p) for p in report.converged}
        for p in pairs:
            g = p.eigenvalue
            w.writerow([repr(g.real), repr(g.imag), repr(p.residual),
                        int(in_region(g, cfg.shift)), int(id(p) in conv_ids)])
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "re", "im", "residual", "in_region"])
        for it, hp in report.history:
            for p in hp:
                g = p.eigenvalue
                w.writerow([it, repr(g.real), repr(g.imag), repr(p.residual),
                            int(in_region(g, cfg.shift))])
    timing = {
        "config": cfg.to_dict(),
        "n": report.n,
        "wall_time": report.wall_time,
        "setup_time": report.setup_time,
        "phases": report.timings,
        "flags": {k: v for k, v in report.flags.items()},
        "memory_complex_numbers": report.memory,
        "memory_bytes": {k: 16 * v for k, v in report.memory.items()},
    }
    with open(out / "timing.json", "w") as fh:
        json.dump(timing, fh, indent=2)
    return timing


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------


@dataclass
class RefinementReport:
    grids: list  # [(nx, nz)]
    eigenvalues: np.ndarray  # (levels, tracked)
    ratios: np.ndarray  # (levels-2, tracked)
    times: list


def refine_grids(nx: int, nz: int, levels: int) -> list:
    """``nx -> 2 nx``, ``nz -> 2 nz - 1`` so every z node is kept."""
    grids = [(nx, nz)]
    for _ in range(levels - 1):
        nx, nz = 2 * nx, 2 * nz - 1
        grids.append((nx, nz))
    return grids


def convergence_ratios(values) -> np.ndarray:
    """``|g_l - g_{l+1}| / |g_{l+1} - g_{l+2}|`` along axis 0."""
    v = np.asarray(values)
    d = np.abs(np.diff(v, axis=0))
    return d[:-1] / d[1:]


def refine_study(geometry: WaveguideGeometry, nx: int, nz: int, levels: int,
                 shift, iters: int = 100, tol: float = 1e-8,
                 targets=None, kappa_rule: str = "exact") -> RefinementReport:
    """Track eigenvalues over successively refined grids.

    ``targets`` defaults to the converged Ritz values in the region of
    interest on the coarsest grid; on each finer grid the nearest
    converged Ritz value is taken.
    """
    if levels < 3:
        raise ValueError("at least three levels are needed for ratios")
    grids = refine_grids(nx, nz, levels)
    rows, times = [], []
    current = None if targets is None else np.atleast_1d(np.asarray(targets, complex))
    for gx, gz in grids:
        problem = WaveguideNep.build(geometry, gx, gz, kappa_rule)
        cfg = RunConfig(gx, gz, shift, iters, "wtiar", tol, history=False)
        rep = run(cfg, problem)
        times.append(rep.wall_time)
        ev = np.array([p.eigenvalue for p in rep.converged])
        if current is None:
            current = np.array([e for e in ev if in_region(e, shift)])
            if current.size == 0:
                raise RuntimeError("no converged eigenvalue in the region on the coarsest grid")
        if ev.size == 0:
            raise RuntimeError(f"no converged eigenvalues on the {gx}x{gz} grid")
        picked = np.array([ev[np.argmin(np.abs(ev - c))] for c in current])
        rows.append(picked)
        current = picked
    vals = np.array(rows)
    return RefinementReport(grids, vals, convergence_ratios(vals), times)


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------


def timing_study(geometry: WaveguideGeometry, sizes, shift, iters: int = 100,
                 solvers=("wtiar",), kappa_rule: str = "exact") -> dict:
    """Wall time per solver over grids ``nx x (nx+1)``; fits ``t ~ n^p``."""
    rows = []
    for nx in sizes:
        nz = nx + 1 if nx % 2 == 0 else nx
        problem = WaveguideNep.build(geometry, nx, nz, kappa_rule)
        for solver in solvers:
            cfg = RunConfig(nx, nz, shift, iters, solver, history=False)
            rep = run(cfg, problem)
            rows.append({
                "solver": solver, "nx": nx, "nz": nz, "n": rep.n,
                "wall_time": rep.wall_time, "phases": rep.timings,
                "iterations": rep.flags["iterations"],
                "memory_complex_numbers": rep.memory[
                    "iar" if solver == "iar" else "tiar"],
            })
    fits = {}
    for solver in solvers:
        r = [row for row in rows if row["solver"] == solver]
        if len(r) >= 2:
            p = np.polyfit(np.log([x["n"] for x in r]),
                           np.log([x["wall_time"] for x in r]), 1)
            fits[solver] = float(p[0])
    return {"rows": rows, "exponents": fits}

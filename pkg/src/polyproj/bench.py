"""Benchmark harness: timed solver runs, result tables, performance profiles.

A suite is a JSON config listing problem rows (generated or from
files), the solvers to run, repetition counts and tolerances.  Each
(problem, solver) cell is timed around the solve call only; failures
are recorded, never fatal.  Ratios divide each cell's time by the best
successful time on that problem (failures map to infinity) and the
profile is the per-solver empirical CDF of those ratios.  All CSV
output is deterministic for fixed seeds apart from the timing columns.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import factory, serialize
from .bap import RnnmConfig, solve_rnnm
from .hlwb import HlwbConfig, solve_hlwb
from .lp import LpConfig, solve_lp
from .mps import parse_mps, to_standard_form

__all__ = [
    "BenchRecord",
    "PerfProfile",
    "performance_ratio",
    "performance_profile",
    "run_benchmark",
    "BAP_SOLVERS",
    "LP_SOLVERS",
]

BAP_SOLVERS = ("rnnm-exact", "rnnm-inexact", "hlwb")
LP_SOLVERS = ("ssepf",)


@dataclass
class BenchRecord:
    """One timed run.  Failed runs keep their elapsed time but are
    marked by status; ratio computation treats them as infinite."""

    problem: str
    solver: str
    tol: float
    m: int
    n: int
    density: float
    seed: int
    time_s: float
    rel_residual: float
    status: str

    @property
    def converged(self) -> bool:
        return self.status == "converged"


@dataclass
class PerfProfile:
    """Per-solver step functions rho_s over tau >= 1."""

    solvers: list[str]
    taus: np.ndarray
    rho: np.ndarray  # shape (len(taus), len(solvers))

    def value(self, solver: str, tau: float) -> float:
        j = self.solvers.index(solver)
        idx = np.searchsorted(self.taus, tau, side="right") - 1
        if idx < 0:
            return 0.0
        return float(self.rho[idx, j])

    def to_csv(self, target) -> None:
        header = "tau," + ",".join(f"rho_{s}" for s in self.solvers)
        lines = [header]
        for i, tau in enumerate(self.taus):
            row = ",".join(f"{v:.5e}" for v in self.rho[i])
            lines.append(f"{tau:.5e},{row}")
        text = "\n".join(lines) + "\n"
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w", encoding="ascii") as fh:
                fh.write(text)


def performance_ratio(times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ratios r[p, s] = t[p, s] / min over successful solvers of row p.

    Failures are marked by NaN in ``times`` and come out as infinity.
    Rows where every solver failed are dropped with a warning; the
    second return value lists the surviving row indices.
    """
    times = np.asarray(times, dtype=np.float64)
    ok = ~np.isnan(times)
    keep = np.where(ok.any(axis=1))[0]
    if keep.size < times.shape[0]:
        warnings.warn(
            f"dropping {times.shape[0] - keep.size} problem(s) with no successful solver",
            RuntimeWarning,
            stacklevel=2,
        )
    times = times[keep]
    ok = ok[keep]
    best = np.nanmin(times, axis=1)
    ratios = np.full(times.shape, math.inf)
    ratios[ok] = (times / best[:, None])[ok]
    return ratios, keep


def performance_profile(ratios: np.ndarray, solvers: list[str] | None = None) -> PerfProfile:
    """Empirical CDF of performance ratios on a log grid plus breakpoints."""
    ratios = np.asarray(ratios, dtype=np.float64)
    n_problems, n_solvers = ratios.shape
    if solvers is None:
        solvers = [f"s{j}" for j in range(n_solvers)]
    finite = ratios[np.isfinite(ratios)]
    top = float(finite.max()) if finite.size else 1.0
    grid = np.geomspace(1.0, max(top * 1.05, 1.0 + 1e-12), num=64)
    taus = np.unique(np.concatenate([[1.0], finite.ravel(), grid]))
    rho = np.empty((taus.size, n_solvers))
    for j in range(n_solvers):
        col = ratios[:, j]
        rho[:, j] = (col[None, :] <= taus[:, None]).sum(axis=1) / max(n_problems, 1)
    return PerfProfile(list(solvers), taus, rho)


def _gen_problem(row: dict, seed: int):
    kind = row["kind"]
    if kind == "bap":
        spec = factory.GenSpec(
            m=row["m"],
            n=row["n"],
            density=row["density"],
            seed=seed,
            anchor_norm=row.get("anchor_norm", 0.1),
            degeneracy=row.get("degeneracy", "nondegenerate"),
        )
        return factory.gen_bap_with_known_vertex(spec).problem
    if kind == "lp":
        spec = factory.GenSpec(
            m=row["m"],
            n=row["n"],
            density=row["density"],
            seed=seed,
            degeneracy=row.get("degeneracy", "nondegenerate"),
        )
        return factory.gen_lp(spec).problem
    if kind == "bap_file":
        return serialize.read_bap_instance(row["path"])
    if kind == "lp_file":
        return serialize.read_lp_instance(row["path"])
    if kind == "mps":
        with open(row["path"], "r", encoding="ascii") as fh:
            model = parse_mps(fh.read())
        problem, _ = to_standard_form(model)
        return problem
    raise ValueError(f"unknown problem kind {kind!r}")


def _run_cell(problem, solver: str, tol: float, timeout_s: float, tol_gap: float,
              lp_residual: str = "gap"):
    start = time.perf_counter()
    try:
        if solver == "rnnm-exact":
            sol = solve_rnnm(problem, config=RnnmConfig(tol=tol))
            rel, status = sol.rel_residual, sol.status
        elif solver == "rnnm-inexact":
            sol = solve_rnnm(problem, config=RnnmConfig(tol=tol, mode="inexact"))
            rel, status = sol.rel_residual, sol.status
        elif solver == "hlwb":
            res = solve_hlwb(problem, HlwbConfig(tol=tol))
            rel, status = res.rel_residual, res.status
        elif solver == "ssepf":
            res = solve_lp(problem, LpConfig(tol_gap=tol_gap))
            if lp_residual == "triplet":
                rel = float(sum(res.certificate.rel_residual_triplet))
            else:
                rel = res.gap
            status = "converged" if res.status == "solved" else res.status
        else:
            raise ValueError(f"unknown solver {solver!r}")
    except Exception as exc:  # a failing cell must not abort the suite
        elapsed = time.perf_counter() - start
        return elapsed, math.nan, f"error:{type(exc).__name__}"
    elapsed = time.perf_counter() - start
    if solver in BAP_SOLVERS:
        status = "converged" if (status == "converged" and rel <= tol) else status
        if status != "converged":
            status = "failed"
    elif status != "converged":
        status = "failed"
    if elapsed > timeout_s:
        status = "timeout"
    return elapsed, rel, status


def run_benchmark(config: dict | str, out_dir: str) -> list[BenchRecord]:
    """Execute a suite config; writes records, result tables and profiles.

    Outputs in ``out_dir``: ``records.csv`` (one line per run),
    ``results.csv`` (repetition means per row/solver/tol, the table
    layout: specs, time, rel. resid.), and one ``profile_tol*.csv`` per
    tolerance.  Fixed seeds reproduce everything byte for byte except
    the timing columns.
    """
    import os

    if isinstance(config, str):
        with open(config, "r", encoding="ascii") as fh:
            config = json.load(fh)
    os.makedirs(out_dir, exist_ok=True)
    reps = int(config.get("repetitions", 1))
    tols = [float(t) for t in config.get("tols", [1e-14])]
    tol_gap = float(config.get("tol_gap", 1e-8))
    timeout_s = float(config.get("timeout_s", 300.0))
    solvers = list(config.get("solvers", ["rnnm-exact"]))
    lp_residual = config.get("lp_residual", "gap")  # or "triplet" (summed)

    records: list[BenchRecord] = []
    for row_idx, row in enumerate(config["rows"]):
        kind = row["kind"]
        applicable = [
            s
            for s in solvers
            if (s in BAP_SOLVERS and kind in ("bap", "bap_file"))
            or (s in LP_SOLVERS and kind in ("lp", "lp_file", "mps"))
        ]
        if not applicable:
            continue
        generated = kind in ("bap", "lp")
        n_instances = reps if generated else 1
        base_seed = int(row.get("seed", 0))
        for rep in range(n_instances):
            seed = base_seed + rep
            problem = _gen_problem(row, seed)
            pid = f"row{row_idx}/{kind}-seed{seed}" if generated else f"row{row_idx}/{kind}"
            for tol in tols:
                for solver in applicable:
                    elapsed, rel, status = _run_cell(
                        problem, solver, tol, timeout_s, tol_gap, lp_residual
                    )
                    records.append(
                        BenchRecord(
                            problem=pid,
                            solver=solver,
                            tol=tol,
                            m=problem.m,
                            n=problem.n,
                            density=row.get("density", float("nan")),
                            seed=seed if generated else -1,
                            time_s=elapsed,
                            rel_residual=rel,
                            status=status,
                        )
                    )

    _write_records_csv(records, os.path.join(out_dir, "records.csv"))
    _write_results_csv(records, os.path.join(out_dir, "results.csv"))
    for tol in tols:
        prof = profile_from_records([r for r in records if r.tol == tol])
        if prof is not None:
            prof.to_csv(os.path.join(out_dir, f"profile_tol{tol:.0e}.csv"))
    return records


def profile_from_records(records: list[BenchRecord]) -> PerfProfile | None:
    """Build the profile for one tolerance from raw records."""
    problems = sorted({r.problem for r in records})
    solvers = sorted({r.solver for r in records})
    if not problems or not solvers:
        return None
    times = np.full((len(problems), len(solvers)), math.nan)
    p_idx = {p: i for i, p in enumerate(problems)}
    s_idx = {s: j for j, s in enumerate(solvers)}
    for r in records:
        if r.converged:
            times[p_idx[r.problem], s_idx[r.solver]] = r.time_s
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ratios, _ = performance_ratio(times)
    if ratios.shape[0] == 0:
        return None
    return performance_profile(ratios, solvers)


def _write_records_csv(records: list[BenchRecord], path: str) -> None:
    lines = ["problem,solver,tol,m,n,density,seed,time_s,rel_residual,status"]
    for r in records:
        lines.append(
            f"{r.problem},{r.solver},{r.tol:.5e},{r.m},{r.n},{r.density:.5e},"
            f"{r.seed},{r.time_s:.5e},{r.rel_residual:.5e},{r.status}"
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_results_csv(records: list[BenchRecord], path: str) -> None:
    # repetition means in the paper-style table layout
    groups: dict[tuple, list[BenchRecord]] = {}
    for r in records:
        key = (r.problem.split("/")[0], r.m, r.n, r.solver, r.tol)
        groups.setdefault(key, []).append(r)
    lines = ["row,m,n,density,solver,tol,mean_time_s,mean_rel_residual,failures"]
    for key in sorted(groups, key=str):
        rs = groups[key]
        row, m, n, solver, tol = key
        mean_t = sum(r.time_s for r in rs) / len(rs)
        finite = [r.rel_residual for r in rs if not math.isnan(r.rel_residual)]
        mean_res = sum(finite) / len(finite) if finite else math.nan
        fails = sum(0 if r.converged else 1 for r in rs)
        lines.append(
            f"{row},{m},{n},{rs[0].density:.5e},{solver},{tol:.5e},"
            f"{mean_t:.5e},{mean_res:.5e},{fails}"
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")

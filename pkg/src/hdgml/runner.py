"""Experiment plumbing: single solves, iteration-count tables, cost sweeps."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .benchmarks import PERMEABILITY_SEED, BenchmarkCase, error_norms, make_case
from .complexity import (
    CostModel,
    closed_form_factor,
    closed_form_memory,
    model_factor_cost,
    model_memory_cost,
)
from .hdg import TraceSystem, assemble_trace_system
from .krylov import GmresConfig, SolveReport, gmres_solve
from .mesh import build_hierarchy
from .multilevel import BlockJacobiPreconditioner, NestedDissectionSolver, build_multilevel

SOLVERS = ("direct-ND", "ML-GMRES", "EML-GMRES", "blockJacobi-GMRES")


@dataclass
class RunManifest:
    """Everything needed to reproduce a sweep.

    ``params`` lists the case parameter (alpha or kappa) values; ``None``
    entries use the case default.
    """

    case: str = "I"
    params: list = field(default_factory=lambda: [None])
    levels: list[int] = field(default_factory=lambda: [2, 3, 4, 5])
    orders: list[int] = field(default_factory=lambda: [1, 2, 3])
    solver: str = "ML-GMRES"
    tol: float = 1e-9
    max_iter: int = 200
    smooth_steps: int = 2
    enrich_cap: int = 10
    seed: int = PERMEABILITY_SEED
    stopping: str = "true"
    error_vs_direct: bool = True
    out: str | None = None

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {', '.join(SOLVERS)}")
        if any(n < 2 for n in self.levels):
            raise ValueError("levels must be at least 2")
        if any(p < 1 or p > 10 for p in self.orders):
            raise ValueError("orders must lie in 1..10")
        if self.smooth_steps < 0:
            raise ValueError("smooth_steps must be non-negative")
        GmresConfig(self.tol, self.max_iter, stopping=self.stopping)
        for prm in self.params:
            make_case(self.case, prm, self.seed)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> RunManifest:
        data = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown manifest keys: {', '.join(sorted(unknown))}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def solve_case(case: BenchmarkCase, levels: int, p: int, solver: str = "ML-GMRES", *,
               tol: float = 1e-9, max_iter: int = 200, smooth_steps: int = 2, enrich_cap: int = 10,
               stopping: str = "true", error_vs_direct: bool = False,
               system: TraceSystem | None = None) -> tuple[np.ndarray, SolveReport, TraceSystem]:
    """Assemble and solve one case on a ``2^levels`` mesh.

    Returns the trace solution, the solve report and the trace system.  With
    ``error_vs_direct`` and a non-converged run, the report carries
    ``max |lam_direct - lam|`` against a nested-dissection direct solve.
    """
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}")
    mesh, hier = build_hierarchy(levels, case.domain)
    t0 = time.perf_counter()
    if system is None:
        system = assemble_trace_system(mesh, case.coefficients, p)
    t_asm = time.perf_counter() - t0

    t0 = time.perf_counter()
    if solver == "direct-ND":
        nd = NestedDissectionSolver(system.A, hier, p)
        setup = time.perf_counter() - t0
        t1 = time.perf_counter()
        lam = nd.solve(system.g)
        rel = float(np.linalg.norm(system.A @ lam - system.g) / max(np.linalg.norm(system.g), 1e-300))
        report = SolveReport(0, True, [rel], [], solve_seconds=time.perf_counter() - t1,
                             setup_seconds=setup)
        report.counters = {"factor_flops": nd.factor.factor_flops, "memory_words": nd.factor.memory_words}
    else:
        if solver == "blockJacobi-GMRES":
            pre = BlockJacobiPreconditioner(system.A, p + 1, 2 * smooth_steps)
            x0 = None
            label, guess, counters = "block-jacobi", "zero", {}
        else:
            method = solver.split("-")[0]
            pre = build_multilevel(system.A, hier, p, method, cap=enrich_cap, m1=smooth_steps, m2=smooth_steps)
            x0 = pre.coarse_correct(system.g)
            label, guess, counters = method, "coarse-solve", pre.counters()
        setup = time.perf_counter() - t0
        cfg = GmresConfig(tol, max_iter, label, guess, stopping)
        lam, report = gmres_solve(system.A, system.g, pre, x0=x0, config=cfg)
        report.setup_seconds = setup
        report.counters = counters
        if error_vs_direct and not report.converged:
            direct = NestedDissectionSolver(system.A, hier, p).solve(system.g)
            report.error_vs_direct = float(np.max(np.abs(direct - lam)))
    report.counters["assembly_seconds"] = t_asm
    report.counters["dofs"] = int(system.n_dofs)
    return lam, report, system


_TABLE_FIELDS = ["case", "param", "solver", "N", "p", "cell", "iterations", "converged",
                 "final_residual", "error_vs_direct", "l2_error"]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    if isinstance(x, float):
        return f"{x:.6e}"
    return str(x)


def run_table(manifest: RunManifest) -> tuple[str, str]:
    """Run the (param, N, p) sweep and return ``(csv_text, markdown_text)``.

    A cell that raises is recorded as ``*(error: ...)`` and the sweep goes on.
    Wall-clock times are kept out of the CSV so repeated runs are identical.
    When ``manifest.out`` is set the tables are also written to
    ``<out>.csv`` and ``<out>.md``.
    """
    rows = []
    for prm in manifest.params:
        case = make_case(manifest.case, prm, manifest.seed)
        for N in manifest.levels:
            for p in manifest.orders:
                row = dict(case=case.id, param=_fmt(case.parameter), solver=manifest.solver, N=N, p=p)
                try:
                    lam, rep, system = solve_case(
                        case, N, p, manifest.solver, tol=manifest.tol, max_iter=manifest.max_iter,
                        smooth_steps=manifest.smooth_steps, enrich_cap=manifest.enrich_cap,
                        stopping=manifest.stopping, error_vs_direct=manifest.error_vs_direct,
                    )
                    l2, _ = error_norms(case, system, lam)
                    row.update(cell=rep.cell(), iterations=rep.iterations, converged=rep.converged,
                               final_residual=_fmt(rep.final_residual),
                               error_vs_direct=_fmt(rep.error_vs_direct), l2_error=_fmt(l2))
                except (MemoryError, ValueError, ArithmeticError, RuntimeError) as exc:
                    row.update(cell=f"*(error: {type(exc).__name__})", iterations="", converged=False,
                               final_residual="", error_vs_direct="", l2_error="")
                rows.append(row)

    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=_TABLE_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    csv_text = buf.getvalue()
    md_text = _markdown(rows, manifest)
    if manifest.out:
        Path(f"{manifest.out}.csv").write_text(csv_text)
        Path(f"{manifest.out}.md").write_text(md_text)
    return csv_text, md_text


def _markdown(rows: list[dict], manifest: RunManifest) -> str:
    lines = []
    orders = manifest.orders
    for prm in dict.fromkeys(r["param"] for r in rows):
        title = f"Case {manifest.case}, {manifest.solver}"
        if prm:
            title += f", parameter {prm}"
        lines += [f"### {title}", "", "| N | " + " | ".join(f"p={p}" for p in orders) + " |",
                  "|---|" + "---|" * len(orders)]
        for N in manifest.levels:
            cells = {r["p"]: r["cell"] for r in rows if r["param"] == prm and r["N"] == N}
            lines.append(f"| {N} | " + " | ".join(cells.get(p, "") for p in orders) + " |")
        lines.append("")
    return "\n".join(lines)


_COMPLEXITY_FIELDS = ["schedule", "N", "p", "n_elements", "measured_factor", "model_factor",
                      "closed_factor", "measured_memory", "model_memory", "closed_memory"]


def run_complexity(manifest: RunManifest, schedules=("ML", "EML", "ND")) -> str:
    """Factor the coarse operators of case I and tabulate counters against the model.

    Returns CSV text, one line per (schedule, p, N); written to
    ``<out>_complexity.csv`` when ``manifest.out`` is set.
    """
    case = make_case("I")
    rows = []
    for schedule in schedules:
        for p in manifest.orders:
            for N in manifest.levels:
                mesh, hier = build_hierarchy(N)
                system = assemble_trace_system(mesh, case.coefficients, p)
                if schedule == "ND":
                    fac = NestedDissectionSolver(system.A, hier, p).factor
                else:
                    fac = build_multilevel(system.A, hier, p, schedule, cap=manifest.enrich_cap).coarse
                model = CostModel(2, N, p, schedule, manifest.enrich_cap)
                rows.append(dict(
                    schedule=schedule, N=N, p=p, n_elements=model.n_elements,
                    measured_factor=_fmt(fac.factor_flops), model_factor=_fmt(model_factor_cost(model)),
                    closed_factor=_fmt(closed_form_factor(model)),
                    measured_memory=_fmt(fac.memory_words), model_memory=_fmt(model_memory_cost(model)),
                    closed_memory=_fmt(closed_form_memory(model)),
                ))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=_COMPLEXITY_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    text = buf.getvalue()
    if manifest.out:
        Path(f"{manifest.out}_complexity.csv").write_text(text)
    return text

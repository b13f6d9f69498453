"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py`` or directly with
``python3 tests/test_acceptance.py [criterion ...]``.  The full suite runs
the large meshes (up to 2^8 elements per side at p = 6) and takes the better
part of an hour on one core.
"""

from __future__ import annotations

import gc
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse.linalg as spla

sys.path.insert(0, str(Path(__file__).parent))

from hdgml.benchmarks import error_norms, make_case  # noqa: E402
from hdgml.complexity import (  # noqa: E402
    CostModel,
    closed_form_factor,
    closed_form_memory,
    loglog_slope,
    model_factor_cost,
    model_memory_cost,
)
from hdgml.hdg import assemble_trace_system  # noqa: E402
from hdgml.mesh import StructuredMesh, build_hierarchy, build_lumping_map  # noqa: E402
from hdgml.multilevel import NestedDissectionSolver, build_multilevel, factor_coarse  # noqa: E402
from hdgml.projection import EnrichmentSchedule, build_prolongation, galerkin_coarse_matrix  # noqa: E402
from hdgml.runner import solve_case  # noqa: E402
from oracles import monolithic_hdg, trace_in_system_order  # noqa: E402

pytestmark = pytest.mark.slow


RESULT_LINES: list[str] = []


def _report(number: int, ok: bool, title: str, detail: str = "") -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
    if detail:
        line += f" | {detail}"
    RESULT_LINES.append(line)
    return line


def _counts(case, N, orders, solvers, **kwargs):
    """Iteration cells ``{(solver, p): SolveReport}``; assembly is shared across solvers."""
    out = {}
    for p in orders:
        system = None
        for solver in solvers:
            _, rep, system = solve_case(case, N, p, solver, system=system, **kwargs)
            out[solver, p] = rep
        del system
        gc.collect()
    return out


def _num(rep) -> float:
    return rep.iterations if rep.converged else np.inf


def criterion_1():
    t0 = time.perf_counter()
    worst = 0.0
    for cid in ("I", "IV"):
        case = make_case(cid, 10.0 if cid == "IV" else None)
        for N in (2, 3):
            for p in (1, 2):
                system = assemble_trace_system(StructuredMesh(N), case.coefficients, p)
                lam = spla.spsolve(system.A.tocsc(), system.g)
                trace, _, _ = monolithic_hdg(N, p, 1.0, case.beta, case.f, case.g)
                worst = max(worst, np.max(np.abs(lam - trace_in_system_order(trace, system))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 10
    return ok, "oracle equivalence", f"max |diff| = {worst:.1e}, {dt:.1f} s"


def criterion_2():
    t0 = time.perf_counter()
    worst = 0.0
    for cid in ("I", "IV"):
        case = make_case(cid)
        for N in (2, 3, 4):
            mesh, hier = build_hierarchy(N)
            for p in (1, 2, 3):
                system = assemble_trace_system(mesh, case.coefficients, p)
                pre = build_multilevel(system.A, hier, p, "ML", lumped=False)
                x = pre.coarse_correct(system.g)
                worst = max(worst, np.linalg.norm(system.A @ x - system.g) / np.linalg.norm(system.g))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 5
    return ok, "identity lumping reduces ML to nested dissection", f"max rel. residual {worst:.1e}, {dt:.1f} s"


def criterion_3():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for cid in ("I", "IV"):
        case = make_case(cid)
        for N in (2, 3, 4):
            mesh, hier = build_hierarchy(N)
            for p in (1, 2, 3):
                system = assemble_trace_system(mesh, case.coefficients, p)
                for method in ("ML", "EML"):
                    pair = build_prolongation(build_lumping_map(hier), EnrichmentSchedule(p, method))
                    A1 = galerkin_coarse_matrix(system.A, pair)
                    Z = rng.standard_normal((pair.n_coarse, 100))
                    IZ = pair.I0 @ Z
                    lhs = np.einsum("ij,ij->j", IZ, pair.M0 @ (system.A @ IZ))
                    rhs = np.einsum("ij,ij->j", Z, pair.M1 @ (A1 @ Z))
                    worst = max(worst, np.max(np.abs(lhs - rhs) / np.abs(lhs)))
    return worst <= 1e-12, "energy identity <A0 I0 z, I0 z> = <A1 z, z>", f"max rel. error {worst:.1e} over 100 vectors per cell"


def criterion_4():
    worst = 0.0
    for cid in ("I", "IV"):
        case = make_case(cid)
        for N in (2, 3):
            mesh, hier = build_hierarchy(N)
            for p in (1, 2):
                system = assemble_trace_system(mesh, case.coefficients, p)
                for method in ("ML", "EML"):
                    schedule = EnrichmentSchedule(p, method)
                    pair = build_prolongation(build_lumping_map(hier), schedule)
                    fac = factor_coarse(galerkin_coarse_matrix(system.A, pair), hier, schedule,
                                        keep_operators=True)
                    for k in range(1, N):
                        Ak = fac.operators[k]
                        ideal = (fac.ideal_restriction(k) @ Ak @ fac.ideal_prolongation(k)).toarray()
                        diff = np.abs(ideal - fac.operators[k + 1].toarray()).max()
                        worst = max(worst, diff / abs(Ak).max())
    return worst <= 1e-12, "Schur recursion equals Q A I", f"max entrywise diff / max|A_k| = {worst:.1e}"


def criterion_5():
    t0 = time.perf_counter()
    case = make_case("I")
    rates = {}
    for p in (1, 2, 3):
        errs = []
        for N in (3, 4, 5):
            mesh, hier = build_hierarchy(N)
            system = assemble_trace_system(mesh, case.coefficients, p)
            lam = NestedDissectionSolver(system.A, hier, p).solve(system.g)
            errs.append(error_norms(case, system, lam)[0])
        rates[p] = [float(np.log2(errs[i] / errs[i + 1])) for i in range(2)]
    dt = time.perf_counter() - t0
    ok = all(p + 0.8 <= r <= p + 2.2 for p, rs in rates.items() for r in rs) and dt < 60
    txt = ", ".join(f"p={p}: " + "/".join(f"{r:.2f}" for r in rs) for p, rs in rates.items())
    return ok, "Example I L2 rates over N=3,4,5", f"{txt}; {dt:.1f} s"


REFERENCE_ML_COUNTS = {(2, 1): 3, (5, 1): 14, (8, 1): 44, (5, 4): 8, (8, 6): 11}
EML_DIRECT_CELLS = [(N, p) for N in (5, 6, 7, 8) for p in (4, 5, 6)]


def criterion_6():
    t0 = time.perf_counter()
    case = make_case("I")
    ml, eml = {}, {}
    cells = sorted(set(REFERENCE_ML_COUNTS) | set(EML_DIRECT_CELLS))
    for N, p in cells:
        system = None
        if (N, p) in REFERENCE_ML_COUNTS:
            _, rep, system = solve_case(case, N, p, "ML-GMRES")
            ml[N, p] = rep
        if (N, p) in EML_DIRECT_CELLS:
            _, rep, system = solve_case(case, N, p, "EML-GMRES", system=system)
            eml[N, p] = rep
        del system
        gc.collect()
    dt = time.perf_counter() - t0
    bad = []
    for (N, p), ref in REFERENCE_ML_COUNTS.items():
        band = max(0.3 * ref, 2)
        if not (ml[N, p].converged and abs(ml[N, p].iterations - ref) <= band):
            bad.append(f"ML({N},{p})={ml[N, p].cell()} vs {ref}")
    for cell, rep in eml.items():
        if not (rep.converged and rep.iterations <= 1):
            bad.append(f"EML{cell}={rep.cell()}")
    ml_txt = " ".join(f"({N},{p}):{ml[N, p].cell()}/{ref}" for (N, p), ref in REFERENCE_ML_COUNTS.items())
    eml_txt = " ".join(sorted({rep.cell() for rep in eml.values()}))
    detail = f"ML ours/ref {ml_txt}; EML p>=4, N>=5 counts {{{eml_txt}}}; {dt / 60:.1f} min"
    if bad:
        detail += "; out of band: " + ", ".join(bad)
    return not bad, "Example I ML iteration bands", detail


def criterion_7():
    case = make_case("III-shock")
    spread_bad, cells, eml_le = [], 0, 0
    rows = []
    for N in (4, 5, 6):
        res = _counts(case, N, range(1, 7), ("ML-GMRES", "EML-GMRES"))
        ml = [_num(res["ML-GMRES", p]) for p in range(1, 7)]
        eml = [_num(res["EML-GMRES", p]) for p in range(1, 7)]
        for name, row in (("ML", ml), ("EML", eml)):
            spread = max(row) - min(row)
            if not spread <= 4:
                spread_bad.append(f"{name} N={N} spread {spread}")
        cells += 6
        eml_le += sum(e <= m for e, m in zip(eml, ml))
        rows.append(f"N={N} ML {[res['ML-GMRES', p].cell() for p in range(1, 7)]} "
                    f"EML {[res['EML-GMRES', p].cell() for p in range(1, 7)]}")
    frac = eml_le / cells
    ok = not spread_bad and frac >= 0.9
    detail = "; ".join(rows) + f"; EML<=ML in {frac:.0%} of cells"
    if spread_bad:
        detail += "; spread > 4: " + ", ".join(spread_bad)
    return ok, "transport p-scalability (Example III shock)", detail


def criterion_8():
    case = make_case("III-shock")
    res = _counts(case, 8, range(2, 7), ("ML-GMRES", "EML-GMRES", "blockJacobi-GMRES"))
    bj_fail = all(not res["blockJacobi-GMRES", p].converged for p in range(2, 7))
    ml_ok = all(res[s, p].converged for s in ("ML-GMRES", "EML-GMRES") for p in range(2, 7))
    detail = "; ".join(f"{s.split('-')[0]} " + " ".join(res[s, p].cell() for p in range(2, 7))
                       for s in ("blockJacobi-GMRES", "ML-GMRES", "EML-GMRES"))
    return bj_fail and ml_ok, "block Jacobi fails at N=8, p>=2 while ML/EML converge", detail + " (p=2..6)"


def criterion_9():
    bad, rows = [], []
    for alpha in (10.0, 100.0, 1000.0):
        case = make_case("IV", alpha)
        for N in (6, 7, 8):
            res = _counts(case, N, range(1, 7), ("ML-GMRES", "EML-GMRES"))
            ml = [_num(res["ML-GMRES", p]) for p in range(1, 7)]
            eml = [_num(res["EML-GMRES", p]) for p in range(1, 7)]
            for i in range(5):
                if not ml[i + 1] <= ml[i] + 2:
                    bad.append(f"ML alpha={alpha:g} N={N} p={i + 1}->{i + 2}")
            for i, (e, m) in enumerate(zip(eml, ml)):
                if not e <= m + 2:
                    bad.append(f"EML>ML+2 alpha={alpha:g} N={N} p={i + 1}")
            rows.append(f"a={alpha:g} N={N} ML {[int(x) if np.isfinite(x) else '*' for x in ml]} "
                        f"EML {[int(x) if np.isfinite(x) else '*' for x in eml]}")
    detail = "; ".join(rows)
    if bad:
        detail += "; violations: " + ", ".join(bad)
    return not bad, "Example IV robustness in p", detail


def criterion_10():
    case = make_case("I")
    p = 2
    rec = {"ML": {}, "ND": {}}
    for N in (5, 6, 7, 8):
        mesh, hier = build_hierarchy(N)
        system = assemble_trace_system(mesh, case.coefficients, p)
        ml = build_multilevel(system.A, hier, p, "ML").coarse
        nd = NestedDissectionSolver(system.A, hier, p).factor
        rec["ML"][N] = (ml.factor_flops, ml.memory_words)
        rec["ND"][N] = (nd.factor_flops, nd.memory_words)
        del system, ml, nd
        gc.collect()
    NT = [4.0**N for N in (5, 6, 7, 8)]
    ml_slope = loglog_slope(NT, [rec["ML"][N][0] for N in (5, 6, 7, 8)])
    ml_mem_slope = loglog_slope(NT, [rec["ML"][N][1] for N in (5, 6, 7, 8)])
    nd_mem_slope = loglog_slope(NT, [rec["ND"][N][1] for N in (5, 6, 7, 8)])
    # model sums against the asymptotic closed forms at N = 8
    gaps, bounds = {}, {}
    for schedule in ("ND", "ML"):
        m = CostModel(2, 8, p, schedule)
        gaps[f"{schedule} factor"] = closed_form_factor(m) / model_factor_cost(m) - 1
        gaps[f"{schedule} memory"] = closed_form_memory(m) / model_memory_cost(m) - 1
    m = CostModel(2, 8, p, "EML")
    bounds["EML factor"] = closed_form_factor(m) / model_factor_cost(m)
    bounds["EML memory"] = closed_form_memory(m) / model_memory_cost(m)
    measured_is_model = all(
        rec[s][8] == (model_factor_cost(CostModel(2, 8, p, s)), model_memory_cost(CostModel(2, 8, p, s)))
        for s in ("ML", "ND"))
    closed_ok = all(abs(g) <= 0.10 for g in gaps.values()) and all(b >= 1 for b in bounds.values())
    ok = 0.85 <= ml_slope <= 1.2 and nd_mem_slope > ml_mem_slope and closed_ok and measured_is_model
    detail = (f"ML factor slope {ml_slope:.3f}; memory slopes ND {nd_mem_slope:.3f} vs ML {ml_mem_slope:.3f}; "
              "closed/sum - 1 at N=8: " + ", ".join(f"{k} {v:+.1%}" for k, v in gaps.items())
              + "; EML closed/sum " + ", ".join(f"{k} {v:.2f}x" for k, v in bounds.items())
              + f"; counters equal model sums: {measured_is_model}")
    return ok, "complexity scaling", detail


def criterion_11():
    case = make_case("II")
    res = _counts(case, 6, range(1, 7), ("ML-GMRES", "EML-GMRES"), error_vs_direct=True)
    ok = True
    parts = []
    for s in ("ML-GMRES", "EML-GMRES"):
        reps = [res[s, p] for p in range(1, 7)]
        if not all(r.converged for r in reps):
            errs = [r.error_vs_direct for r in reps if not r.converged]
            ok &= all(b < a for a, b in zip(errs, errs[1:]))
        parts.append(f"{s.split('-')[0]} " + " ".join(r.cell() for r in reps))
    return ok, "Example II substitute: converged, or error_vs_direct decreasing in p", "; ".join(parts) + " (N=6, p=1..6)"


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 12)}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    t0 = time.perf_counter()
    ok, title, detail = CRITERIA[number]()
    line = _report(number, ok, title, f"{detail} [{time.perf_counter() - t0:.0f} s]")
    with capsys.disabled():
        print("\n" + line, flush=True)
    assert ok, detail


if __name__ == "__main__":
    chosen = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    failures = 0
    for n in chosen:
        t0 = time.perf_counter()
        ok, title, detail = CRITERIA[n]()
        print(_report(n, ok, title, f"{detail} [{time.perf_counter() - t0:.0f} s]"), flush=True)
        failures += not ok
    sys.exit(1 if failures else 0)

"""Command-line entry point: ``python -m hdgml {solve,table,complexity,selftest}``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .benchmarks import CASE_IDS, PERMEABILITY_SEED, error_norms, make_case
from .runner import SOLVERS, RunManifest, run_complexity, run_table, solve_case


def parse_int_list(text: str) -> list[int]:
    """``"2-5"`` -> [2, 3, 4, 5]; ``"1,3,6"`` -> [1, 3, 6]."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def parse_params(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _common(parser: argparse.ArgumentParser, sweep: bool) -> None:
    parser.add_argument("--example", choices=CASE_IDS, help="benchmark case (default I)")
    if sweep:
        parser.add_argument("--param", type=parse_params, help="comma-separated alpha or kappa values")
        parser.add_argument("--levels", type=parse_int_list, help="levels N, e.g. 2-5 or 2,4,6")
        parser.add_argument("--orders", type=parse_int_list, help="polynomial orders, e.g. 1-6")
    else:
        parser.add_argument("--param", type=float, help="alpha (IV, VI) or kappa (V)")
        parser.add_argument("--levels", type=int, default=4, help="mesh has 2^N elements per side")
        parser.add_argument("--orders", type=int, default=2, help="polynomial order p")
    parser.add_argument("--solver", choices=SOLVERS)
    parser.add_argument("--tol", type=float, help="relative residual tolerance (default 1e-9)")
    parser.add_argument("--max-iter", type=int, help="GMRES iteration cap (default 200)")
    parser.add_argument("--smooth-steps", type=int, help="block-Jacobi sweeps before and after the coarse solve (default 2)")
    parser.add_argument("--enrich-cap", type=int, help="highest EML order (default 10)")
    parser.add_argument("--stopping", choices=("true", "preconditioned"),
                        help="residual used by the GMRES stopping test (default true)")
    parser.add_argument("--seed", type=int, help="seed of the synthetic permeability field (case II)")
    parser.add_argument("--out", help="output path prefix")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdgml", description="Upwind HDG with ML/EML multilevel solvers")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one case and print a JSON report")
    _common(p_solve, sweep=False)

    p_table = sub.add_parser("table", help="iteration-count table over N and p")
    _common(p_table, sweep=True)
    p_table.add_argument("--manifest", help="JSON manifest; command-line flags take precedence")

    p_cx = sub.add_parser("complexity", help="factorization counters against the cost model")
    _common(p_cx, sweep=True)
    p_cx.add_argument("--manifest", help="JSON manifest; command-line flags take precedence")
    p_cx.add_argument("--schedules", default="ML,EML,ND", help="comma-separated subset of ML,EML,ND")

    sub.add_parser("selftest", help="quick consistency checks")
    return parser


def _manifest(args) -> RunManifest:
    overrides = dict(
        case=args.example, params=args.param, levels=args.levels, orders=args.orders,
        solver=args.solver, tol=args.tol, max_iter=args.max_iter, smooth_steps=args.smooth_steps,
        enrich_cap=args.enrich_cap, seed=args.seed, stopping=args.stopping, out=args.out,
    )
    if getattr(args, "manifest", None):
        return RunManifest.from_file(args.manifest, **overrides)
    return RunManifest(**{k: v for k, v in overrides.items() if v is not None})


def cmd_solve(args) -> int:
    case = make_case(args.example or "I", args.param, args.seed if args.seed is not None else PERMEABILITY_SEED)
    lam, report, system = solve_case(
        case, args.levels, args.orders, args.solver or "ML-GMRES",
        tol=args.tol or 1e-9, max_iter=args.max_iter or 200,
        smooth_steps=2 if args.smooth_steps is None else args.smooth_steps,
        enrich_cap=args.enrich_cap or 10, stopping=args.stopping or "true", error_vs_direct=True,
    )
    l2, _ = error_norms(case, system, lam)
    out = dict(case=case.id, parameter=case.parameter, N=args.levels, p=args.orders,
               solver=args.solver or "ML-GMRES", l2_error=None if np.isnan(l2) else l2, **report.to_dict())
    text = json.dumps(out, indent=2)
    if args.out:
        with open(f"{args.out}.json", "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0 if report.converged else 1


def cmd_table(args) -> int:
    csv_text, md_text = run_table(_manifest(args))
    print(md_text)
    if not args.out:
        print(csv_text)
    return 0


def cmd_complexity(args) -> int:
    manifest = _manifest(args)
    schedules = tuple(s.strip() for s in args.schedules.split(",") if s.strip())
    if not set(schedules) <= {"ML", "EML", "ND"}:
        raise SystemExit(f"unknown schedule in {args.schedules!r}")
    print(run_complexity(manifest, schedules), end="")
    return 0


def selftest() -> int:
    """Small, fast checks of the whole pipeline; returns the number of failures."""
    from .hdg import assemble_trace_system
    from .mesh import build_hierarchy
    from .multilevel import NestedDissectionSolver, build_multilevel

    failures = 0

    def check(name, ok, detail=""):
        nonlocal failures
        failures += not ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}".rstrip())

    case = make_case("I")
    mesh, hier = build_hierarchy(3)
    system = assemble_trace_system(mesh, case.coefficients, 2)
    nd = NestedDissectionSolver(system.A, hier, 2)
    lam = nd.solve(system.g)
    res = np.linalg.norm(system.A @ lam - system.g) / np.linalg.norm(system.g)
    check("nested dissection solves the trace system", res < 1e-12, f"residual {res:.1e}")

    rng = np.random.default_rng(0)
    for method in ("ML", "EML"):
        pre = build_multilevel(system.A, hier, 2, method)
        z = rng.standard_normal(pre.pair.n_coarse)
        Iz = pre.pair.I0 @ z
        lhs = Iz @ (pre.pair.M0 @ (system.A @ Iz))
        rhs = z @ (pre.pair.M1 @ (pre.A1 @ z))
        check(f"{method} energy identity", abs(lhs - rhs) <= 1e-12 * abs(lhs), f"rel {abs(lhs - rhs) / abs(lhs):.1e}")

    _, rep, _ = solve_case(case, 2, 1, "ML-GMRES")
    check("case I, N=2, p=1, ML iterations", rep.converged and abs(rep.iterations - 3) <= 1, f"got {rep.cell()}")
    lam4, rep, sys4 = solve_case(case, 4, 2, "ML-GMRES")
    l2, _ = error_norms(case, sys4, lam4)
    check("case I, N=4, p=2 accuracy", l2 < 1e-4, f"L2 error {l2:.2e}")
    return failures


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "table":
            return cmd_table(args)
        if args.command == "complexity":
            return cmd_complexity(args)
        return 1 if selftest() else 0
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

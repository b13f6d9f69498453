# # Pure transport with a discontinuous inflow profile
#
# With $K = 0$ the problem is first-order hyperbolic.  The trace system is
# strongly non-symmetric, and a plain block-Jacobi preconditioner has a hard
# time with it.  Here we compare block Jacobi, ML and EML on the
# $[0,2]^2$ shock case.
#
# Run with `python3 demos/transport_shock.py` (a couple of minutes).

import numpy as np

from hdgml import make_case, solve_case

case = make_case("III-shock")

# ## Residual histories on one mesh
#
# Block Jacobi here uses the same four sweeps as the v-cycle, without the
# coarse correction.  Its true residual first grows by orders of magnitude
# before it starts to fall.

N, p = 6, 2
system = None
for solver in ("blockJacobi-GMRES", "ML-GMRES", "EML-GMRES"):
    _, rep, system = solve_case(case, N, p, solver, system=system, error_vs_direct=True)
    hist = np.array(rep.residuals)
    print(f"{solver:18s} {rep.cell():>10s} iterations, peak residual {hist.max():.1e}, final {hist[-1]:.1e}")

# ## Scalability in p
#
# ML counts barely move as the order grows.  EML starts well below ML at
# p = 1 and climbs toward it over the first few orders, staying below it.

for solver in ("ML-GMRES", "EML-GMRES"):
    print(f"\n{solver}")
    for N in (4, 5):
        cells = [solve_case(case, N, q, solver)[1].cell() for q in range(1, 7)]
        print(f"  N={N}: " + " ".join(f"{c:>4s}" for c in cells))

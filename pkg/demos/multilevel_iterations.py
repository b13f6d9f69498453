# # ML and EML preconditioners on the Poisson problem
#
# The multilevel preconditioner lumps the fine edges of every separator arm
# into a single long edge, projects the trace onto it in L2, and factors the
# resulting coarse operator level by level.  ML keeps the order $p$ on the
# lumped edges.  EML raises it by one per level (capped at 10), which makes
# the coarse space rich enough to act as a direct solver at higher $p$.
#
# Run with `python3 demos/multilevel_iterations.py` (about a minute).

import numpy as np

from hdgml import assemble_trace_system, build_hierarchy, build_multilevel, make_case, solve_case

case = make_case("I")

# ## What the coarse space looks like
#
# Front sizes per level for $N=4$, $p=2$: every front has four lumped arms.

mesh, hier = build_hierarchy(4)
system = assemble_trace_system(mesh, case.coefficients, 2)
for method in ("ML", "EML"):
    pre = build_multilevel(system.A, hier, 2, method)
    c = pre.counters()
    print(f"{method:3s} coarse dofs {c['coarse_dofs']:5d} of {system.n_dofs}, front sizes {c['front_sizes']}")

# The Galerkin operator $A_1 = Q_1 A_0 I_0$ preserves the energy of every
# coarse vector, measured in the mass-weighted inner products.

rng = np.random.default_rng(0)
z = rng.standard_normal(pre.pair.n_coarse)
Iz = pre.pair.I0 @ z
print("energy identity error:",
      abs(Iz @ (pre.pair.M0 @ (system.A @ Iz)) - z @ (pre.pair.M1 @ (pre.A1 @ z))) / abs(Iz @ (pre.pair.M0 @ (system.A @ Iz))))

# ## Iteration counts
#
# GMRES starts from the coarse solve and stops at a relative residual of
# 1e-9.  A zero means the coarse solve alone was already accurate enough.

orders = (1, 2, 3, 4)
for solver in ("ML-GMRES", "EML-GMRES"):
    print(f"\n{solver}\n  N " + "".join(f"  p={p}" for p in orders))
    for N in (2, 3, 4, 5, 6):
        cells = [solve_case(case, N, p, solver)[1].cell() for p in orders]
        print(f"  {N} " + "".join(f"{c:>5s}" for c in cells))

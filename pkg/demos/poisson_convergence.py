# # Poisson on the unit square: condensation, direct solve, convergence
#
# The smallest end-to-end run of the package.  We discretize
# $-\Delta u = f$ with $u = \sin(\pi x)\cos(\pi y)/\pi^2$, condense every
# element onto its four edges, solve the trace system by nested dissection
# and recover the volume solution.
#
# Run with `python3 demos/poisson_convergence.py`.

import numpy as np

from hdgml import NestedDissectionSolver, assemble_trace_system, build_hierarchy, error_norms, make_case
from hdgml.hdg import flux_jumps, local_residuals, recover_volume

case = make_case("I")

# ## One mesh in detail
#
# `build_hierarchy(N)` returns a $2^N \times 2^N$ mesh and the separator
# fronts of every nested-dissection level.  The trace system has $p+1$
# unknowns on every interior edge.

mesh, hier = build_hierarchy(4)
system = assemble_trace_system(mesh, case.coefficients, p=2)
print(f"{mesh.n_elements} elements, {system.n_dofs} trace unknowns, {system.A.nnz} nonzeros")

nd = NestedDissectionSolver(system.A, hier, p=2)
lam = nd.solve(system.g)
print("relative residual of the direct solve:",
      np.linalg.norm(system.A @ lam - system.g) / np.linalg.norm(system.g))

# The recovered fields satisfy the local equations on every element, and the
# numerical flux is single valued across every interior edge.

vol = recover_volume(system, lam)
print("worst local residual:", local_residuals(system, lam, vol).max())
print("worst flux jump:     ", np.abs(flux_jumps(system, lam, vol)).max())

# ## Convergence under refinement
#
# For smooth data the L2 error of $u$ should fall like $h^{p+1}$.

print("\n p   N   L2 error     rate")
for p in (1, 2, 3, 4):
    prev = None
    for N in (2, 3, 4, 5):
        mesh, hier = build_hierarchy(N)
        system = assemble_trace_system(mesh, case.coefficients, p)
        lam = NestedDissectionSolver(system.A, hier, p).solve(system.g)
        err = error_norms(case, system, lam)[0]
        rate = "" if prev is None else f"{np.log2(prev / err):5.2f}"
        print(f"{p:2d}  {N:2d}   {err:.3e}   {rate}")
        prev = err

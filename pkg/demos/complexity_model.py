# # Factorization cost: counters against the model
#
# Every coarse factorization records the sum of $m^3$ (factor work) and
# $m^2$ (storage) over its dense fronts.  The cost model predicts the same
# sums from the front sizes alone, so measured and modelled numbers agree
# exactly.  The asymptotic closed forms approximate these sums.
#
# Run with `python3 demos/complexity_model.py` (about half a minute).

from hdgml import (
    CostModel,
    NestedDissectionSolver,
    assemble_trace_system,
    build_hierarchy,
    build_multilevel,
    closed_form_factor,
    closed_form_memory,
    make_case,
    measured_vs_model,
    model_factor_cost,
    model_memory_cost,
)

case = make_case("I")
p = 2
records = {"ML": [], "EML": [], "ND": []}
for N in (3, 4, 5, 6, 7):
    mesh, hier = build_hierarchy(N)
    system = assemble_trace_system(mesh, case.coefficients, p)
    for method in ("ML", "EML"):
        fac = build_multilevel(system.A, hier, p, method).coarse
        records[method].append(dict(N=N, p=p, schedule=method, factor_flops=fac.factor_flops,
                                    memory_words=fac.memory_words))
    fac = NestedDissectionSolver(system.A, hier, p).factor
    records["ND"].append(dict(N=N, p=p, schedule="ND", factor_flops=fac.factor_flops,
                              memory_words=fac.memory_words))

# ## Measured against modelled
#
# Log-log slopes against the number of elements: ML and EML grow linearly,
# nested dissection grows like $N_T^{3/2}$ in work.

for schedule, recs in records.items():
    for quantity in ("factor", "memory"):
        cmp = measured_vs_model(recs, quantity)
        exact = all(r["measured"] == r["model"] for r in cmp.rows)
        print(f"{schedule:3s} {quantity:6s} slope {cmp.measured_slope:.3f} (model {cmp.model_slope:.3f}), "
              f"measured == model: {exact}")

# ## Closed forms
#
# The ND factor and ML forms reproduce the sums.  The 2D ND memory form is
# four times its own sum, and the EML forms take the top-level enrichment on
# every level, so they are upper bounds.

print("\nschedule   N   factor closed/sum   memory closed/sum")
for schedule in ("ND", "ML", "EML"):
    for N in (4, 8, 12):
        m = CostModel(2, N, p, schedule)
        print(f"{schedule:8s} {N:3d}   {closed_form_factor(m) / model_factor_cost(m):17.3f}"
              f"   {closed_form_memory(m) / model_memory_cost(m):17.3f}")

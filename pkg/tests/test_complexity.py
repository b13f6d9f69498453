import math

import numpy as np
import pytest

from hdgml.complexity import (
    CostModel,
    closed_form_factor,
    closed_form_memory,
    loglog_slope,
    measured_vs_model,
    model_factor_cost,
    model_memory_cost,
)
from hdgml.mesh import build_hierarchy
from hdgml.multilevel import NestedDissectionSolver, build_multilevel


def test_2d_nd_single_level():
    # one level-1 front of 4 edges with q0 = 2 nodes each: (4 * 2)^3
    assert model_factor_cost(CostModel(2, 1, 1, "ND")) == 512
    assert model_memory_cost(CostModel(2, 1, 1, "ND")) == 64


def test_eml_example_sum():
    m = CostModel(2, 3, 2, "EML")
    assert [m.front_size(k) for k in (1, 2, 3)] == [12, 16, 20]
    assert model_factor_cost(m) == 16 * 12**3 + 4 * 16**3 + 20**3 == 52032


@pytest.mark.parametrize("N", [2, 4, 7])
@pytest.mark.parametrize("p", [1, 3])
def test_ml_geometric_series(N, p):
    q0 = p + 1
    m = CostModel(2, N, p, "ML")
    assert model_factor_cost(m) == pytest.approx(64 * q0**3 * (4**N - 1) / 3)
    assert closed_form_factor(m) == pytest.approx(model_factor_cost(m))
    assert closed_form_memory(m) == pytest.approx(model_memory_cost(m))


def test_ml_equals_eml_without_enrichment():
    for N in range(1, 9):
        a = CostModel(2, N, 3, "ML")
        b = CostModel(2, N, 3, "EML", cap=3)
        assert model_factor_cost(a) == model_factor_cost(b)
        assert model_memory_cost(a) == model_memory_cost(b)


def test_alpha_values():
    m = CostModel(2, 6, 2, "EML")
    assert m.alpha(1) == 1.0
    assert m.alpha_N == pytest.approx(8 / 3)
    assert CostModel(3, 4, 2, "EML").alpha(2) == pytest.approx(16 / 9)
    assert CostModel(2, 20, 9, "EML").order(20) == 10


def test_2d_nd_factor_closed_form_is_exact():
    for N in range(1, 11):
        m = CostModel(2, N, 2, "ND")
        assert closed_form_factor(m) == pytest.approx(model_factor_cost(m), rel=1e-12)


def test_2d_nd_memory_closed_form_is_four_times_the_sum():
    for N in range(1, 11):
        m = CostModel(2, N, 2, "ND")
        assert closed_form_memory(m) == pytest.approx(4 * model_memory_cost(m), rel=1e-12)


def test_3d_closed_forms_track_sums():
    for N in range(2, 8):
        m = CostModel(3, N, 2, "ND")
        assert closed_form_factor(m) == pytest.approx(model_factor_cost(m), rel=0.01)
        m = CostModel(3, N, 2, "ML")
        assert closed_form_factor(m) == pytest.approx(model_factor_cost(m), rel=1e-12)
        assert closed_form_memory(m) == pytest.approx(model_memory_cost(m), rel=1e-12)


def test_closed_form_gap_does_not_grow_with_n():
    for schedule in ("ND", "ML"):
        for fn, model in ((closed_form_factor, model_factor_cost), (closed_form_memory, model_memory_cost)):
            gaps = [abs(fn(CostModel(2, N, 2, schedule)) / model(CostModel(2, N, 2, schedule)) - 1)
                    for N in range(2, 12)]
            assert np.all(np.diff(gaps) <= 1e-12)


def test_eml_closed_forms_are_upper_bounds():
    for N in range(1, 12):
        m = CostModel(2, N, 2, "EML")
        assert closed_form_factor(m) >= model_factor_cost(m) * (1 - 1e-12)
        assert closed_form_memory(m) >= model_memory_cost(m) * (1 - 1e-12)


def test_measured_counters_equal_model(poisson_systems):
    for N in (2, 3, 4):
        system, hier = poisson_systems(N, 2)
        for method in ("ML", "EML"):
            fac = build_multilevel(system.A, hier, 2, method).coarse
            m = CostModel(2, N, 2, method)
            assert fac.factor_flops == model_factor_cost(m)
            assert fac.memory_words == model_memory_cost(m)
        nd = NestedDissectionSolver(system.A, hier, 2).factor
        m = CostModel(2, N, 2, "ND")
        assert nd.factor_flops == model_factor_cost(m)
        assert nd.memory_words == model_memory_cost(m)


def test_measured_vs_model_comparison():
    recs = []
    for N in (3, 4, 5, 6):
        m = CostModel(2, N, 2, "ML")
        recs.append(dict(N=N, p=2, schedule="ML", factor_flops=model_factor_cost(m),
                         memory_words=model_memory_cost(m)))
    cmp = measured_vs_model(recs, "factor")
    assert cmp.measured_slope == pytest.approx(cmp.model_slope)
    assert 0.95 < cmp.measured_slope < 1.05
    csv_text = cmp.to_csv()
    assert csv_text.splitlines()[0].startswith("schedule,quantity,N")
    assert len(csv_text.splitlines()) == 5


def test_measured_vs_model_rejects_bad_input():
    rec = dict(N=3, p=2, schedule="ML", factor_flops=1.0, memory_words=1.0)
    with pytest.raises(ValueError):
        measured_vs_model([rec, rec])
    with pytest.raises(ValueError):
        measured_vs_model([rec, rec, dict(rec, schedule="EML")])


def test_loglog_slope():
    x = np.array([4.0, 16.0, 64.0])
    assert loglog_slope(x, 3 * x**1.5) == pytest.approx(1.5)


@pytest.mark.parametrize("kwargs", [dict(dimension=4), dict(schedule="LU"), dict(N=0)])
def test_cost_model_validation(kwargs):
    base = dict(dimension=2, N=3, p=2, schedule="ML")
    base.update(kwargs)
    with pytest.raises(ValueError):
        CostModel(**base)


def test_nd_front_sizes_double_per_level():
    m = CostModel(2, 5, 1, "ND")
    sizes = [m.front_size(k) for k in range(1, 6)]
    assert sizes == [8 * 2 ** (k - 1) for k in range(1, 6)]
    _, hier = build_hierarchy(3)
    assert math.prod(hier.fronts[3].shape) * 2 == m.front_size(3)

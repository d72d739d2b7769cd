import io
import math

import numpy as np
import pytest

from ksym import catalog
from ksym.chart import Chart
from ksym.expr import Const, Verdict, is_zero, parse
from ksym.forms import KVectorField, VectorField
from ksym.hdw import (
    AnalyticSection,
    GridAxis,
    GridSchemaError,
    HamiltonianSystem,
    NonIntegrableError,
    SolutionGrid,
    field_equation_residual,
    first_prolongation,
    hdw_residual_analytic,
    hdw_residual_grid,
    integrability_residual,
    integrability_verdict,
    integrate_section,
    particular_kvector,
    sample_section,
)

C11 = Chart(1, 1)
C12 = Chart(1, 2)


def osc():
    return HamiltonianSystem(C11, "(q_1^2 + p_1_1^2)/2")


def test_system_rejects_parameters():
    with pytest.raises(ValueError):
        HamiltonianSystem(C11, "t_1*q_1")


def test_section_rejects_coordinates():
    with pytest.raises(ValueError):
        AnalyticSection.from_dict(C11, {"q_1": "q_1", "p_1_1": "t_1"})


# analytic residuals -----------------------------------------------------------

def test_laplace_section_residuals_vanish():
    lap = catalog.laplace()
    res = hdw_residual_analytic(lap, catalog.laplace_section(lap))
    assert len(res) == 3
    assert all(is_zero(r, lap.chart) is Verdict.ZERO for r in res)


def test_oscillator_section_residuals_vanish():
    psi = AnalyticSection.from_dict(C11, {"q_1": "sin(t_1)", "p_1_1": "cos(t_1)"})
    assert all(is_zero(r, C11).vanishes for r in hdw_residual_analytic(osc(), psi))


def test_constant_section_residual_nonzero():
    psi = AnalyticSection.from_dict(C11, {"q_1": "1", "p_1_1": "1"})
    res = hdw_residual_analytic(osc(), psi)
    assert any(is_zero(r, C11) is Verdict.NONZERO for r in res)


def test_first_prolongation_examples():
    psi = AnalyticSection.from_dict(C12, {"q_1": "t_1*t_2", "p_1_1": "t_2", "p_2_1": "t_1"})
    assert first_prolongation(psi)[0][0] == parse("t_2", C12)
    const = AnalyticSection.from_dict(C12, {"q_1": "1", "p_1_1": "2", "p_2_1": "3"})
    assert all(c == Const(0) for tangent in first_prolongation(const) for c in tangent)
    sine = AnalyticSection.from_dict(C11, {"q_1": "sin(t_1)", "p_1_1": "0"})
    assert first_prolongation(sine)[0][0] == parse("cos(t_1)", C11)


# particular k-vector field ---------------------------------------------------------

def test_particular_examples():
    x = particular_kvector(osc())
    assert x[0] == VectorField.from_dict(C11, {"q_1": "p_1_1", "p_1_1": "-q_1"})
    lap = catalog.laplace()
    xl = particular_kvector(lap)
    assert xl[0] == VectorField.from_dict(lap.chart, {"q_1": "p_1_1"})
    assert xl[1] == VectorField.from_dict(lap.chart, {"q_1": "p_2_1"})
    const = particular_kvector(HamiltonianSystem(C12, "7"))
    assert all(f.is_zero_field() for f in const)


def test_democratic_gauge_splits_force():
    sys_ = HamiltonianSystem(C12, "q_1^2")
    x = particular_kvector(sys_)
    assert x[0]["p_1_1"] == parse("-q_1", C12)
    assert x[1]["p_2_1"] == parse("-q_1", C12)
    assert x[0]["p_2_1"] == Const(0)


def test_field_equation_residual_examples():
    lap = catalog.laplace()
    x = particular_kvector(lap)
    assert field_equation_residual(lap, x).is_zero_form()
    z = KVectorField([VectorField.basis(lap.chart, "p_2_1"), VectorField.zero(lap.chart)])
    assert field_equation_residual(lap, x + z).is_zero_form()
    resid = field_equation_residual(lap, KVectorField.zero(lap.chart))
    assert resid == -lap.dH()
    assert not resid.is_zero_form()


def test_integrability_examples():
    lap = catalog.laplace()
    assert integrability_verdict(particular_kvector(lap)) is Verdict.ZERO
    assert integrability_residual(particular_kvector(osc())) == []
    x = KVectorField([VectorField.from_dict(C12, {"q_1": "q_1"}), VectorField.from_dict(C12, {"q_1": "p_1_1"})])
    assert integrability_verdict(x) is Verdict.NONZERO


# grids ------------------------------------------------------------------------------

def test_oscillator_grid_matches_exact_solution():
    grid = integrate_section(particular_kvector(osc()), {"q_1": 0.0, "p_1_1": 1.0}, [GridAxis(0.0, 1e-3, 1001)])
    t = grid.parameter(1)
    assert np.max(np.abs(grid.coordinate("q_1") - np.sin(t))) <= 1e-9
    assert np.max(np.abs(grid.coordinate("p_1_1") - np.cos(t))) <= 1e-9
    assert grid.path_residual == 0.0
    assert grid.integrability == "commuting"


def test_oscillator_energy_drift():
    grid = integrate_section(particular_kvector(osc()), {"q_1": 0.0, "p_1_1": 1.0}, [GridAxis(0.0, 1e-3, 10001)])
    e = 0.5 * (grid.coordinate("q_1") ** 2 + grid.coordinate("p_1_1") ** 2)
    assert np.max(np.abs(e - e[0])) <= 1e-8


def test_laplace_fixed_point_gives_constant_section():
    lap = catalog.laplace()
    grid = integrate_section(particular_kvector(lap), catalog.LAPLACE_BASE, [GridAxis(0.0, 0.1, 11)] * 2)
    assert np.all(grid.values == 0.0)


def test_non_commuting_field_raises():
    x = KVectorField([VectorField.from_dict(C12, {"q_1": "q_1"}), VectorField.from_dict(C12, {"q_1": "p_1_1"})])
    with pytest.raises(NonIntegrableError) as exc:
        integrate_section(x, {"q_1": 1.0, "p_1_1": 1.0, "p_2_1": 1.0}, [GridAxis(0.0, 0.05, 21)] * 2)
    assert exc.value.residual > 1e-6
    assert exc.value.tol == 1e-6


def test_audit_covers_five_percent_of_nodes():
    lap = catalog.laplace()
    grid = integrate_section(particular_kvector(lap), {"q_1": 0.0, "p_1_1": 0.5, "p_2_1": 0.25},
                             [GridAxis(0.0, 0.01, 51)] * 2)
    assert grid.path_residual <= 1e-12
    assert grid.meta["audited_nodes"] >= math.ceil(0.05 * 51 * 51)


def test_grid_residual_examples():
    lap = catalog.laplace()
    exact = sample_section(catalog.laplace_section(lap), [GridAxis(0.0, 0.01, 101)] * 2)
    assert hdw_residual_grid(lap, exact) <= 1e-10
    rk = integrate_section(particular_kvector(osc()), {"q_1": 0.0, "p_1_1": 1.0}, [GridAxis(0.0, 1e-2, 101)])
    r = hdw_residual_grid(osc(), rk)
    assert 0 < r <= 1e-4
    sys_ = HamiltonianSystem(C11, "2*p_1_1")
    const = sample_section(AnalyticSection.from_dict(C11, {"q_1": "1", "p_1_1": "1"}), [GridAxis(0.0, 0.1, 5)])
    assert hdw_residual_grid(sys_, const) == pytest.approx(2.0)


def test_grid_needs_three_nodes():
    grid = sample_section(AnalyticSection.from_dict(C11, {"q_1": "t_1", "p_1_1": "1"}), [GridAxis(0.0, 0.1, 2)])
    with pytest.raises(ValueError):
        hdw_residual_grid(osc(), grid)


def test_grid_residual_refines_at_second_order():
    sys_ = catalog.order_two()
    x = particular_kvector(sys_)
    coarse = integrate_section(x, catalog.ORDER_TWO_START, [GridAxis(0.0, 2e-3, 501)])
    fine = integrate_section(x, catalog.ORDER_TWO_START, [GridAxis(0.0, 1e-3, 1001)])
    ratio = hdw_residual_grid(sys_, coarse) / hdw_residual_grid(sys_, fine)
    assert math.log2(ratio) >= 1.9


def test_grid_axis_validation():
    with pytest.raises(ValueError):
        GridAxis(0.0, 0.0, 3)
    with pytest.raises(ValueError):
        GridAxis(0.0, 0.1, 0)


# CSV -----------------------------------------------------------------------------------

def test_csv_round_trip(tmp_path):
    lap = catalog.laplace()
    grid = sample_section(catalog.laplace_section(lap), [GridAxis(-0.5, 0.1, 6), GridAxis(0.25, 0.05, 4)])
    text = grid.to_csv(tmp_path / "g.csv")
    assert text.splitlines()[0] == "t_1,t_2,q_1,p_1_1,p_2_1"
    assert len(text.splitlines()) == 1 + 24
    back = SolutionGrid.from_csv(tmp_path / "g.csv", lap.chart)
    assert np.array_equal(back.values, grid.values)
    assert back.shape == grid.shape
    assert [a.origin for a in back.axes] == [-0.5, 0.25]


def test_csv_schema_errors():
    lap = catalog.laplace()
    with pytest.raises(GridSchemaError):
        SolutionGrid.from_csv(io.StringIO("t_1,q_1,p_1_1,p_2_1\n0,0,0,0\n"), lap.chart)
    with pytest.raises(GridSchemaError):
        SolutionGrid.from_csv(io.StringIO("t_1,t_2,q_1,p_1_1,p_2_1\n0,0,0,0,x\n"), lap.chart)
    with pytest.raises(GridSchemaError):
        SolutionGrid.from_csv(io.StringIO("t_1,t_2,q_1,p_1_1,p_2_1\n0,0,0,0,0\n1,1,0,0,0\n"), lap.chart)
    with pytest.raises(GridSchemaError):
        SolutionGrid.from_csv(io.StringIO(""), lap.chart)


def test_grid_values_are_read_only():
    grid = sample_section(AnalyticSection.from_dict(C11, {"q_1": "t_1", "p_1_1": "1"}), [GridAxis(0.0, 0.1, 3)])
    with pytest.raises(ValueError):
        grid.values[0, 0] = 5.0

"""Reference systems used by the self-test and the acceptance checks."""
from __future__ import annotations

from .chart import Chart
from .forms import VectorField, canonical_lift
from .hdw import AnalyticSection, HamiltonianSystem


def laplace() -> HamiltonianSystem:
    """n=1, k=2, H = ((p_1_1)^2 + (p_2_1)^2)/2: solutions are harmonic functions of (t_1, t_2)."""
    chart = Chart(1, 2, box={"q_1": (-1.0, 1.0), "p_1_1": (-1.0, 1.0), "p_2_1": (-1.0, 1.0)})
    return HamiltonianSystem(chart, "(p_1_1^2 + p_2_1^2)/2")


def laplace_translation(system: HamiltonianSystem) -> VectorField:
    return canonical_lift(["1"], system.chart)


def laplace_section(system: HamiltonianSystem) -> AnalyticSection:
    return AnalyticSection.from_dict(system.chart, {"q_1": "t_1*t_2", "p_1_1": "t_2", "p_2_1": "t_1"})


LAPLACE_BASE = {"q_1": 0.0, "p_1_1": 0.0, "p_2_1": 0.0}


def oscillator() -> HamiltonianSystem:
    """n=k=1 harmonic oscillator; from (q, p) = (0, 1) the flow is (sin t, cos t)."""
    return HamiltonianSystem(Chart(1, 1, box={"q_1": (-1.5, 1.5), "p_1_1": (-1.5, 1.5)}), "(p_1_1^2 + q_1^2)/2")


def order_two() -> HamiltonianSystem:
    """n=k=1, H = p/q on q in [0.5, 1.5]."""
    return HamiltonianSystem(Chart(1, 1, box={"q_1": (0.5, 1.5), "p_1_1": (-1.5, 1.5)}), "p_1_1/q_1")


def order_two_candidate(system: HamiltonianSystem) -> VectorField:
    return VectorField.from_dict(system.chart, {"q_1": "1", "p_1_1": "p_1_1/q_1"})


ORDER_TWO_BASE = {"q_1": 1.0, "p_1_1": 0.0}
ORDER_TWO_START = {"q_1": 1.0, "p_1_1": 1.0}


def dilation(system: HamiltonianSystem) -> VectorField:
    """q d/dq on an n=k=1 chart: L(Y)omega = omega, so it has no finite order."""
    return VectorField.from_dict(system.chart, {"q_1": "q_1"})

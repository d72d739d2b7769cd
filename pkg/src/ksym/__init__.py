"""Symbolic-numeric toolkit for k-symplectic Hamiltonian field theory.

Expressions (:mod:`ksym.expr`), exterior calculus on the canonical chart
(:mod:`ksym.forms`), Hamilton-de Donder-Weyl field equations and their
integral sections (:mod:`ksym.hdw`), and higher-order Cartan symmetries with
their conserved quantities (:mod:`ksym.noether`).
"""
from .chart import Chart, ZeroTest
from .forms import DiffForm, KVectorField, VectorField, canonical_lift, canonical_omega, canonical_theta
from .hdw import AnalyticSection, GridAxis, HamiltonianSystem, SolutionGrid, integrate_section, particular_kvector
from .noether import ConservedQuantity, SymmetryReport, classify_cartan_order, noether_charge

__version__ = "0.1.0"

__all__ = [
    "AnalyticSection",
    "Chart",
    "ConservedQuantity",
    "DiffForm",
    "GridAxis",
    "HamiltonianSystem",
    "KVectorField",
    "SolutionGrid",
    "SymmetryReport",
    "VectorField",
    "ZeroTest",
    "canonical_lift",
    "canonical_omega",
    "canonical_theta",
    "classify_cartan_order",
    "integrate_section",
    "noether_charge",
    "particular_kvector",
]

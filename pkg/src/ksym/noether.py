"""Higher-order Cartan symmetries, their charges, and conservation checks.

A vector field Y has Cartan order n when L(Y)^n omega^A vanishes for every A
while some L(Y)^m omega^A, m < n, does not.  Its charges g^A are primitives of
the closed 1-forms L(Y)^(n-1) i(Y) omega^A, obtained here with the homotopy
(radial) integral from a base point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence, Union

import numpy as np
import sympy
from sympy.integrals.rationaltools import ratint

from .chart import Chart
from .expr import (
    ZERO,
    Expr,
    Mul,
    Sym,
    Verdict,
    coefficients_in,
    evaluate_array,
    is_polynomial_in,
    is_zero,
    normalize,
    sample_points,
    substitute,
)
from .expr.bridge import from_sympy, to_sympy
from .expr.nodes import Const, Div, Func, add_all
from .expr.normal import _poly_to_expr, rational_parts
from .forms import (
    DiffForm,
    KVectorField,
    VectorField,
    canonical_omega,
    canonical_theta,
    exterior_derivative,
    in_kernel,
    interior_product,
    lie_bracket,
    lie_derivative,
    lie_derivative_iterated,
    omega_sharp,
)
from .forms import _coerce
from .hdw import HamiltonianSystem, SolutionGrid, central_difference, particular_kvector

QUADRATURE_ORDER = 32
FD_STEP = 1e-5
FD_TOL = 1e-8

_S = "_s"


class NotClosedError(ValueError):
    """The 1-form handed to the homotopy operator is not closed."""


class SingularityOnSegmentError(ArithmeticError):
    """The integrand is singular somewhere on the segment from the base point."""


class InternalInconsistencyError(AssertionError):
    """A mathematical identity the pipeline relies on failed: an engine bug."""


class RouteMismatchError(RuntimeError):
    def __init__(self, quantity: "ConservedQuantity"):
        self.quantity = quantity
        bad = [a + 1 for a, v in enumerate(quantity.route_agreement) if not v.vanishes]
        super().__init__(f"homotopy and theta routes disagree for A in {bad}")


SEGMENT_PROBES = 65


def _denominators(beta: DiffForm) -> list[tuple[Expr, int | None]]:
    """Non-constant denominators of the coefficients of ``beta`` with their total degree.

    The degree is None when the denominator involves function atoms.
    """
    out = []
    for coeff in beta.terms.values():
        _, q = rational_parts(coeff)
        if not any(m for m in q):
            continue
        polynomial = all(isinstance(a, Sym) for m in q for a, _ in m)
        degree = max(sum(e for _, e in m) for m in q) if polynomial else None
        out.append((_poly_to_expr(q), degree))
    return out


def _root_on_segment(den: Expr, degree: int, base, coords, shape) -> bool:
    """Whether the polynomial ``den`` has a real zero on some segment from ``base``.

    Along a segment ``den`` is a polynomial of degree <= ``degree`` in s, so
    ``degree + 1`` samples recover its coefficients exactly.
    """
    s_nodes = 0.5 - 0.5 * np.cos(np.pi * (np.arange(degree + 1) + 0.5) / (degree + 1))
    samples = np.stack([
        evaluate_array(den, {n: base[n] + s * (coords[n] - base[n]) for n in coords}, shape=shape, check=False)
        for s in s_nodes
    ]).reshape(degree + 1, -1)
    coeffs = np.linalg.solve(np.vander(s_nodes, increasing=True), samples)
    for col in coeffs.T:
        scale = np.max(np.abs(col))
        trimmed = np.trim_zeros(np.where(np.abs(col) <= 1e-13 * scale, 0.0, col), "b")
        if len(trimmed) <= 1:
            continue
        roots = np.polynomial.polynomial.polyroots(trimmed)
        real = roots[np.abs(roots.imag) <= 1e-9].real
        if np.any((real >= -1e-12) & (real <= 1.0 + 1e-12)):
            return True
    return False


def _check_segments(beta: DiffForm, base: Mapping[str, float], coords: Mapping[str, np.ndarray], shape):
    """Raise if a denominator vanishes or a coefficient is undefined between ``base`` and a target point."""
    chart = beta.chart
    coords = {n: np.asarray(coords[n], dtype=float) for n in chart.coords}
    dens = _denominators(beta)
    for den, degree in dens:
        if degree is not None and _root_on_segment(den, degree, base, coords, shape):
            raise SingularityOnSegmentError(f"denominator {den} vanishes on a segment from the base point")
    start_sign = {}
    for s in np.linspace(0.0, 1.0, SEGMENT_PROBES):
        seg = {n: base[n] + s * (coords[n] - base[n]) for n in chart.coords}
        for j, (den, _) in enumerate(dens):
            vals = evaluate_array(den, seg, shape=shape, check=False)
            sign = start_sign.setdefault(j, np.sign(vals))
            if not np.all(np.isfinite(vals)) or np.any(np.sign(vals) != sign) or np.any(vals == 0.0):
                raise SingularityOnSegmentError(f"denominator {den} vanishes on a segment from the base point")
        for coeff in beta.terms.values():
            if not np.all(np.isfinite(evaluate_array(coeff, seg, shape=shape, check=False))):
                raise SingularityOnSegmentError(f"{coeff} is undefined on a segment from the base point")


class QuadratureCharge:
    """A primitive evaluated by Gauss-Legendre quadrature along the segment from ``base``."""

    def __init__(self, beta: DiffForm, base: Mapping[str, float], order: int = QUADRATURE_ORDER):
        self.beta = beta
        self.chart = beta.chart
        self.base = {n: float(base[n]) for n in self.chart.coords}
        self.order = order
        x, w = np.polynomial.legendre.leggauss(order)
        self.nodes = 0.5 * (x + 1.0)
        self.weights = 0.5 * w

    def evaluate_array(self, env: Mapping[str, np.ndarray], shape) -> np.ndarray:
        chart = self.chart
        coords = {n: np.broadcast_to(np.asarray(env[n], dtype=float), shape) for n in chart.coords}
        _check_segments(self.beta, self.base, coords, shape)
        delta = {n: coords[n] - self.base[n] for n in chart.coords}
        total = np.zeros(shape)
        for s, w in zip(self.nodes, self.weights):
            seg = {n: self.base[n] + s * delta[n] for n in chart.coords}
            for (j,), coeff in self.beta.terms.items():
                name = chart.coords[j]
                vals = evaluate_array(coeff, seg, shape=shape, check=False)
                if not np.all(np.isfinite(vals)):
                    raise SingularityOnSegmentError(f"{coeff} is singular on the segment from the base point")
                total = total + w * vals * delta[name]
        return total

    def evaluate(self, point: Mapping[str, float]) -> float:
        return float(self.evaluate_array({n: point[n] for n in self.chart.coords}, ()))

    def describe(self) -> dict:
        return {
            "kind": "quadrature",
            "rule": "gauss-legendre",
            "order": self.order,
            "base": dict(self.base),
            "integrand": self.beta.as_dict(),
        }

    def __repr__(self):
        return f"QuadratureCharge(order={self.order}, beta={self.beta})"


Charge = Union[Expr, QuadratureCharge]


def charge_values(c: Charge, env: Mapping[str, np.ndarray], shape) -> np.ndarray:
    if isinstance(c, QuadratureCharge):
        return c.evaluate_array(env, shape)
    return evaluate_array(c, env, shape=shape)


def _coerce_charge(chart: Chart, c) -> Charge:
    if isinstance(c, QuadratureCharge):
        return c
    return _coerce(chart, c)


def describe_charge(c: Charge):
    if isinstance(c, QuadratureCharge):
        return c.describe()
    return {"kind": "closed-form", "expression": str(c)}


def _exact(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def _fd_gradient(c: Charge, chart: Chart, pts: np.ndarray, step: float = FD_STEP):
    """Central-difference gradient of ``c`` at the rows of ``pts`` (columns = chart.coords)."""
    shape = (pts.shape[0],)
    grads = []
    for j in range(chart.dim):
        plus, minus = pts.copy(), pts.copy()
        plus[:, j] += step
        minus[:, j] -= step
        fp = charge_values(c, {n: plus[:, i] for i, n in enumerate(chart.coords)}, shape)
        fm = charge_values(c, {n: minus[:, i] for i, n in enumerate(chart.coords)}, shape)
        grads.append((fp - fm) / (2.0 * step))
    return np.stack(grads, axis=1)


def _check_points(chart: Chart) -> np.ndarray:
    zt = chart.zero_test
    return sample_points(chart.coords, chart.safe_box, zt.samples, zt.seed)


def _form_on_points(beta: DiffForm, pts: np.ndarray) -> np.ndarray:
    chart = beta.chart
    shape = (pts.shape[0],)
    env = {n: pts[:, i] for i, n in enumerate(chart.coords)}
    out = np.zeros((pts.shape[0], chart.dim))
    for (j,), coeff in beta.terms.items():
        out[:, j] = evaluate_array(coeff, env, shape=shape)
    return out


def _closed_form_primitive(beta: DiffForm, base: Mapping[str, float]):
    """Exact homotopy integral when the integrand is rational in the segment parameter."""
    chart = beta.chart
    s = Sym(_S)
    x0 = {n: Const(_exact(base[n])) for n in chart.coords}
    along = {n: x0[n] + s * (Sym(n) - x0[n]) for n in chart.coords}
    terms = []
    for (j,), coeff in beta.terms.items():
        name = chart.coords[j]
        terms.append(Mul(substitute(coeff, along), Sym(name) - x0[name]))
    integrand = normalize(add_all(terms))
    if integrand.is_const(0):
        return ZERO
    if is_polynomial_in(integrand, _S):
        parts = coefficients_in(integrand, _S)
        return normalize(add_all(Div(c, Const(m + 1)) for m, c in parts.items()))
    # rational in s: integrate exactly if the antiderivative stays rational
    p, q = rational_parts(integrand)
    if any(isinstance(a, Func) and _S in a.symbols for poly in (p, q) for m in poly for a, _ in m):
        return None
    sexpr, atoms = to_sympy(integrand)
    s_sym = next(k for k, v in atoms.items() if v == s)
    try:
        anti = ratint(sexpr, s_sym)
    except Exception:  # noqa: BLE001 - any failure means "no closed form"
        return None
    if anti.has(sympy.log, sympy.atan, sympy.RootSum) or not anti.is_rational_function(*atoms):
        return None
    value = sympy.cancel(anti.subs(s_sym, 1) - anti.subs(s_sym, 0))
    rest = {k: v for k, v in atoms.items() if k != s_sym}
    try:
        return from_sympy(value, rest)
    except ValueError:
        return None


def homotopy_antiderivative(beta: DiffForm, base: Mapping[str, float], method: str = "auto",
                            order: int = QUADRATURE_ORDER) -> Charge:
    """A primitive g of the closed 1-form ``beta`` with g(base) = 0.

    g(x) = integral over s in [0, 1] of beta_j(base + s (x - base)) (x - base)^j.
    ``method`` is "auto" (closed form when the integrand is rational in s and
    its antiderivative is rational, quadrature otherwise), "exact" (fail
    instead of falling back) or "quadrature".
    """
    chart = beta.chart
    if beta.degree != 1:
        raise ValueError(f"homotopy operator implemented for 1-forms, got degree {beta.degree}")
    if method not in ("auto", "exact", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    base = chart.point({n: base[n] for n in chart.coords})
    if not chart.in_box(base):
        raise ValueError(f"base point {base} lies outside the safe box")
    if not exterior_derivative(beta).verdict().vanishes:
        raise NotClosedError(f"d({beta}) does not vanish")
    if beta.is_zero_form():
        return ZERO
    # the box is convex, so segments from the base stay inside it; probe them
    pts = _check_points(chart)
    _check_segments(beta, base, {n: pts[:, i] for i, n in enumerate(chart.coords)}, (pts.shape[0],))

    if method != "quadrature":
        g = _closed_form_primitive(beta, base)
        if g is not None:
            check = exterior_derivative(DiffForm.function(chart, g)) - beta
            if not check.verdict().vanishes:
                raise InternalInconsistencyError(f"closed-form primitive {g} fails d(g) = beta")
            return g
        if method == "exact":
            raise ValueError(f"no closed-form primitive found for {beta}")

    g = QuadratureCharge(beta, base, order)
    pts = _check_points(chart)
    err = np.max(np.abs(_fd_gradient(g, chart, pts) - _form_on_points(beta, pts)))
    if err > FD_TOL:
        raise InternalInconsistencyError(f"quadrature primitive fails d(g) = beta by {err:.2e}")
    return g


@dataclass
class SymmetryReport:
    candidate: VectorField
    n_max: int
    order: int | None
    lie_H: Expr
    lie_H_verdict: Verdict
    residuals: list[list[Verdict]]
    bracket_evidence: Verdict
    closedness: list[Verdict] | None = None

    @property
    def lie_H_zero(self) -> bool:
        return self.lie_H_verdict.vanishes

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate.as_dict(),
            "n_max": self.n_max,
            "order": self.order,
            "lie_H": str(self.lie_H),
            "lie_H_verdict": str(self.lie_H_verdict),
            "lie_H_zero": self.lie_H_zero,
            "residuals": [
                {"m": m, "per_A": [str(v) for v in row]} for m, row in enumerate(self.residuals, start=1)
            ],
            "bracket_evidence": {
                "verdict": str(self.bracket_evidence),
                "in_kernel": self.bracket_evidence.vanishes,
                "note": "necessary condition only; does not certify an infinitesimal symmetry",
            },
            "closedness": None if self.closedness is None else [str(v) for v in self.closedness],
        }


def _charge_forms(y: VectorField, n: int) -> list[DiffForm]:
    """L(Y)^(n-1) i(Y) omega^A for every A."""
    chart = y.chart
    out = []
    for a in range(1, chart.k + 1):
        beta = interior_product(y, canonical_omega(chart, a))
        if n > 1:
            beta = lie_derivative_iterated(y, beta, n - 1)
        out.append(beta)
    return out


def closedness_check(y: VectorField, n: int) -> list[Verdict]:
    """d(L(Y)^(n-1) i(Y) omega^A) per A; NonZero means the engine is inconsistent."""
    verdicts = [exterior_derivative(beta).verdict() for beta in _charge_forms(y, n)]
    if not all(v.vanishes for v in verdicts):
        raise InternalInconsistencyError(f"charge 1-forms of order {n} are not closed: {[str(v) for v in verdicts]}")
    return verdicts


def bracket_kernel_check(y: VectorField, x: KVectorField) -> Verdict:
    """Verdict on whether ([Y, X_1], ..., [Y, X_k]) lies in ker omega-sharp."""
    return omega_sharp(KVectorField([lie_bracket(y, xa) for xa in x.fields])).verdict()


def kernel_stability_check(y: VectorField, z: KVectorField) -> Verdict:
    if not in_kernel(z):
        raise ValueError("kernel_stability_check needs Z in ker omega-sharp")
    return bracket_kernel_check(y, z)


def classify_cartan_order(system: HamiltonianSystem, y: VectorField, n_max: int = 5) -> SymmetryReport:
    """Smallest n <= n_max with L(Y)^n omega^A vanishing for all A, plus L(Y)H and bracket evidence."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    chart = system.chart
    forms = [canonical_omega(chart, a) for a in range(1, chart.k + 1)]
    residuals = []
    order = None
    for m in range(1, n_max + 1):
        forms = [lie_derivative(y, f) for f in forms]
        row = [f.verdict() for f in forms]
        residuals.append(row)
        if all(v.vanishes for v in row):
            order = m
            break
    lie_h = y(system.hamiltonian)
    report = SymmetryReport(
        candidate=y,
        n_max=n_max,
        order=order,
        lie_H=lie_h,
        lie_H_verdict=is_zero(lie_h, chart),
        residuals=residuals,
        bracket_evidence=bracket_kernel_check(y, particular_kvector(system)),
    )
    if order is not None:
        report.closedness = closedness_check(y, order)
    return report


@dataclass
class ConservedQuantity:
    components: tuple[Charge, ...]
    xi: tuple[Charge, ...]
    theta_route: tuple[Charge, ...]
    route_agreement: list[Verdict]
    base: dict[str, float]
    order: int
    provenance: str = "homotopy-route"
    meta: dict = field(default_factory=dict)

    @property
    def agrees(self) -> bool:
        return all(v.vanishes for v in self.route_agreement)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "provenance": self.provenance,
            "base": dict(self.base),
            "g": [describe_charge(c) for c in self.components],
            "xi": [describe_charge(c) for c in self.xi],
            "theta_route": [describe_charge(c) for c in self.theta_route],
            "route_agreement": [str(v) for v in self.route_agreement],
        }


def _route_agreement(g: Charge, g_theta: Charge, chart: Chart) -> Verdict:
    if isinstance(g, Expr) and isinstance(g_theta, Expr):
        return exterior_derivative(DiffForm.function(chart, normalize(g - g_theta))).verdict()
    # numeric: the difference must be constant on the box
    pts = _check_points(chart)
    shape = (pts.shape[0],)
    env = {n: pts[:, i] for i, n in enumerate(chart.coords)}
    diff = charge_values(g, env, shape) - charge_values(g_theta, env, shape)
    spread = float(np.max(diff) - np.min(diff))
    return Verdict.PROBABLY_ZERO if spread <= FD_TOL * max(1.0, float(np.max(np.abs(diff)))) else Verdict.NONZERO


def _minus(a: Charge, b: Charge, chart: Chart) -> Charge:
    if isinstance(a, Expr) and isinstance(b, Expr):
        return normalize(a - b)
    return _Difference(a, b, chart)


class _Difference(QuadratureCharge):
    """a - b where at least one side is quadrature-backed."""

    def __init__(self, a: Charge, b: Charge, chart: Chart):
        self.a, self.b, self.chart = a, b, chart

    def evaluate_array(self, env, shape):
        return charge_values(self.a, env, shape) - charge_values(self.b, env, shape)

    def describe(self) -> dict:
        return {"kind": "difference", "left": describe_charge(self.a), "right": describe_charge(self.b)}

    def __repr__(self):
        return f"_Difference({self.a!r}, {self.b!r})"


def noether_charge(system: HamiltonianSystem, y: VectorField, n: int, base: Mapping[str, float] | None = None,
                   method: str = "auto", strict: bool = True) -> ConservedQuantity:
    """Charges g^A with dg^A = L(Y)^(n-1) i(Y) omega^A, normalized to vanish at ``base``.

    The cross-check route computes xi^A with d(xi^A) = L(Y)^n theta^A and
    L(Y)^(n-1) i(Y) theta^A - xi^A, which must differ from g^A by a constant.
    With ``strict`` a disagreement raises :class:`RouteMismatchError`.
    """
    chart = system.chart
    if n < 1:
        raise ValueError("order must be >= 1")
    base = chart.point(base if base is not None else chart.center())
    g, xi, g_theta, agree = [], [], [], []
    for a, beta in enumerate(_charge_forms(y, n), start=1):
        ga = homotopy_antiderivative(beta, base, method)
        theta = canonical_theta(chart, a)
        xia = homotopy_antiderivative(lie_derivative_iterated(y, theta, n), base, method)
        contracted = interior_product(y, theta)
        if n > 1:
            contracted = lie_derivative_iterated(y, contracted, n - 1)
        gt = _minus(contracted.terms.get((), ZERO), xia, chart)
        g.append(ga)
        xi.append(xia)
        g_theta.append(gt)
        agree.append(_route_agreement(ga, gt, chart))
    quantity = ConservedQuantity(tuple(g), tuple(xi), tuple(g_theta), agree, dict(base), n)
    if strict and not quantity.agrees:
        raise RouteMismatchError(quantity)
    return quantity


def conservation_check_symbolic(system: HamiltonianSystem, charges: Sequence, x: KVectorField) -> Verdict:
    """Verdict on sum_A X_A(F_A) = 0.

    Closed-form components are differentiated exactly; quadrature-backed ones
    by central differences at the zero-test sample points (tolerance 1e-8).
    """
    chart = system.chart
    if len(charges) != chart.k:
        raise ValueError(f"need {chart.k} charge components, got {len(charges)}")
    charges = [_coerce_charge(chart, c) for c in charges]
    if all(isinstance(c, Expr) for c in charges):
        return is_zero(add_all(xa(c) for xa, c in zip(x.fields, charges)), chart)
    pts = _check_points(chart)
    shape = (pts.shape[0],)
    env = {n: pts[:, i] for i, n in enumerate(chart.coords)}
    total = np.zeros(shape)
    for xa, c in zip(x.fields, charges):
        if isinstance(c, Expr):
            total += evaluate_array(xa(c), env, shape=shape)
            continue
        grad = _fd_gradient(c, chart, pts)
        for j, comp in enumerate(xa.components):
            if not comp.is_const(0):
                total += evaluate_array(comp, env, shape=shape) * grad[:, j]
    return Verdict.PROBABLY_ZERO if float(np.max(np.abs(total))) <= FD_TOL else Verdict.NONZERO


def conservation_check_numeric(charges: Sequence, grid: SolutionGrid) -> float:
    """Sup-norm over interior nodes of sum_A of the central difference of F_A(psi) along t_A."""
    chart = grid.chart
    if len(charges) != chart.k:
        raise ValueError(f"need {chart.k} charge components, got {len(charges)}")
    if any(c < 3 for c in grid.shape):
        raise ValueError(f"need at least 3 nodes per axis, grid has shape {grid.shape}")
    charges = [_coerce_charge(chart, c) for c in charges]
    env = grid.env()
    div = 0.0
    for a, c in enumerate(charges):
        vals = charge_values(c, env, grid.shape)
        div = div + central_difference(vals, a, grid.axes[a].spacing)
    return float(np.max(np.abs(div)))

"""Randomized invariant suites shared by ``ksym selftest`` and the test-suite.

Every suite draws its instances from a generator seeded with the zero-test
seed, so a run is reproducible bit for bit.  Results carry the observed
worst error next to the tolerance it was judged against.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import catalog
from .chart import Chart
from .expr import Const, Expr, Sym, Verdict, default_seed, differentiate, evaluate, is_zero, normalize
from .expr.nodes import add_all, func, mul_all
from .forms import (
    DiffForm,
    KVectorField,
    VectorField,
    canonical_lift,
    canonical_omega,
    canonical_theta,
    exterior_derivative,
    in_kernel,
    interior_product,
    lie_derivative,
    satisfies_kernel_conditions,
    wedge,
)
from .hdw import (
    GridAxis,
    HamiltonianSystem,
    field_equation_residual,
    integrate_section,
    particular_kvector,
    sample_section,
)
from .noether import (
    classify_cartan_order,
    conservation_check_numeric,
    noether_charge,
)

FLOW_STEP = 1e-3
FLOW_TOL = 1e-5


@dataclass
class Check:
    name: str
    instances: int = 0
    failures: int = 0
    max_error: float | None = None
    tolerance: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.instances > 0

    def record(self, ok: bool, error: float | None = None, note: str | None = None):
        self.instances += 1
        if not ok:
            self.failures += 1
            if note and len(self.notes) < 5:
                self.notes.append(note)
        if error is not None:
            error = float(error)
            self.max_error = error if self.max_error is None else max(self.max_error, error)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "instances": self.instances,
            "failures": self.failures,
            "passed": self.passed,
            "max_error": self.max_error,
            "tolerance": self.tolerance,
            "notes": list(self.notes),
        }


@dataclass
class Suite:
    name: str
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, tolerance: float | None = None) -> Check:
        c = Check(name, tolerance=tolerance)
        self.checks.append(c)
        return c

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


# random generators ----------------------------------------------------------

def random_chart(rng: np.random.Generator, max_n: int = 3, max_k: int = 3) -> Chart:
    return Chart(int(rng.integers(1, max_n + 1)), int(rng.integers(1, max_k + 1)))


def random_polynomial(rng: np.random.Generator, names, degree: int = 2, terms: int = 3,
                      denominator: int = 2) -> Expr:
    """Sum of up to ``terms`` monomials of total degree <= ``degree``, small rational coefficients."""
    names = list(names)
    out = []
    for _ in range(int(rng.integers(1, terms + 1))):
        c = Fraction(int(rng.integers(-3, 4)), denominator)
        if c == 0:
            continue
        factors = [Const(c)]
        for _ in range(int(rng.integers(0, degree + 1))):
            factors.append(Sym(names[int(rng.integers(len(names)))]))
        out.append(mul_all(factors))
    return normalize(add_all(out))


def random_function(rng: np.random.Generator, names, degree: int = 2) -> Expr:
    """A polynomial, occasionally composed with sin or exp to exercise function atoms."""
    p = random_polynomial(rng, names, degree)
    if rng.random() < 0.3:
        inner = random_polynomial(rng, names, 1)
        wrapped = func(["sin", "exp", "cos"][int(rng.integers(3))], inner)
        p = normalize(p + wrapped * Sym(names[int(rng.integers(len(names)))]))
    return p


def random_vector_field(rng: np.random.Generator, chart: Chart, degree: int = 2, active: int = 3,
                        smooth: bool = False) -> VectorField:
    names = chart.coords
    comps = [Const(0)] * chart.dim
    for j in rng.choice(chart.dim, size=min(active, chart.dim), replace=False):
        comps[int(j)] = random_function(rng, names, degree) if smooth else random_polynomial(rng, names, degree)
    return VectorField(chart, comps)


def random_form(rng: np.random.Generator, chart: Chart, degree: int, terms: int = 3, poly_degree: int = 2,
                smooth: bool = True) -> DiffForm:
    combos = list(itertools.combinations(range(chart.dim), degree))
    picks = rng.choice(len(combos), size=min(terms, len(combos)), replace=False)
    gen = random_function if smooth else random_polynomial
    return DiffForm(chart, degree, {combos[int(i)]: gen(rng, chart.coords, poly_degree) for i in picks})


def random_kernel_kvector(rng: np.random.Generator, chart: Chart) -> KVectorField:
    """An element of ker omega-sharp: no q components, momentum traces cancel."""
    fields = [[Const(0)] * chart.dim for _ in range(chart.k)]
    for a in range(1, chart.k + 1):
        for b in range(1, chart.k + 1):
            for i in range(1, chart.n + 1):
                if a != b:
                    fields[a - 1][chart.p_index(b, i)] = random_polynomial(rng, chart.coords, 2)
    for i in range(1, chart.n + 1):
        diag = [random_polynomial(rng, chart.coords, 2) for _ in range(chart.k - 1)]
        diag.append(normalize(-add_all(diag)) if diag else Const(0))
        for a in range(1, chart.k + 1):
            fields[a - 1][chart.p_index(a, i)] = diag[a - 1]
    return KVectorField([VectorField(chart, f) for f in fields])


def random_kvector(rng: np.random.Generator, chart: Chart) -> KVectorField:
    """Half the time a kernel element, otherwise a kernel element with one entry perturbed."""
    x = random_kernel_kvector(rng, chart)
    if rng.random() < 0.5:
        return x
    a = int(rng.integers(chart.k))
    comps = list(x.fields[a].components)
    j = int(rng.integers(chart.dim))
    comps[j] = normalize(comps[j] + random_polynomial(rng, chart.coords, 1) + Const(1))
    fields = list(x.fields)
    fields[a] = VectorField(chart, comps)
    return KVectorField(fields)


# numeric flow pullback ------------------------------------------------------

def _flow_with_jacobian(y: VectorField, x0: np.ndarray, t: float):
    """One RK4 step of length ``t`` for the flow of ``y`` and its variational equation."""
    chart = y.chart
    names = chart.coords
    dim = chart.dim
    comps = y.components
    jac = [[differentiate(c, n) if n in c.symbols else None for n in names] for c in comps]

    def f(state):
        x, m = state[:dim], state[dim:].reshape(dim, dim)
        pt = dict(zip(names, x))
        vx = np.array([evaluate(c, pt) if not c.is_const(0) else 0.0 for c in comps])
        dy = np.array([[evaluate(e, pt) if e is not None else 0.0 for e in row] for row in jac])
        return np.concatenate([vx, (dy @ m).ravel()])

    state = np.concatenate([x0, np.eye(dim).ravel()])
    k1 = f(state)
    k2 = f(state + 0.5 * t * k1)
    k3 = f(state + 0.5 * t * k2)
    k4 = f(state + t * k3)
    out = state + (t / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return out[:dim], out[dim:].reshape(dim, dim)


def _pullback(alpha: DiffForm, x: np.ndarray, jac: np.ndarray) -> dict:
    """Components of phi^* alpha at the source point, phi(x0) = x and D phi = jac."""
    chart = alpha.chart
    pt = dict(zip(chart.coords, x))
    out = {}
    for key in itertools.combinations(range(chart.dim), alpha.degree):
        total = 0.0
        for idx, coeff in alpha.terms.items():
            minor = np.linalg.det(jac[np.ix_(idx, key)]) if key else 1.0
            total += evaluate(coeff, pt) * minor
        out[key] = total
    return out


def cartan_flow_error(y: VectorField, alpha: DiffForm, x0: np.ndarray, h: float = FLOW_STEP) -> float:
    """Max deviation between L(Y)alpha at x0 and the t-derivative of the pulled-back form at t = 0.

    The derivative uses the fourth-order central stencil on flow times
    -2h, -h, h, 2h, each reached by one RK4 step with the variational equation.
    """
    chart = y.chart
    pulled = {}
    for m in (-2, -1, 1, 2):
        xm, jm = _flow_with_jacobian(y, x0, m * h)
        pulled[m] = _pullback(alpha, xm, jm)
    lie = lie_derivative(y, alpha)
    pt = dict(zip(chart.coords, x0))
    err = 0.0
    for key in pulled[1]:
        fd = (8.0 * (pulled[1][key] - pulled[-1][key]) - (pulled[2][key] - pulled[-2][key])) / (12.0 * h)
        coeff = lie.terms.get(key)
        exact = evaluate(coeff, pt) if coeff is not None else 0.0
        err = max(err, abs(fd - exact))
    return err


# suites ---------------------------------------------------------------------

def exterior_calculus_suite(seed: int, instances: int = 100) -> Suite:
    rng = np.random.default_rng([seed, 1])
    suite = Suite("exterior-calculus")
    dd = suite.check("d(d(alpha)) = 0")
    anti = suite.check("d(a^b) = da^b + (-1)^p a^db")
    ianti = suite.check("i(Y)(a^b) = (i(Y)a)^b + (-1)^p a^(i(Y)b)")
    flow = suite.check("L(Y)alpha matches the derivative of the pulled-back form along the flow", FLOW_TOL)
    for _ in range(instances):
        chart = random_chart(rng)
        deg = int(rng.integers(0, min(3, chart.dim - 1) + 1))
        alpha = random_form(rng, chart, deg)
        ddalpha = exterior_derivative(exterior_derivative(alpha))
        dd.record(ddalpha.is_zero_form(), note=f"d(d({alpha})) = {ddalpha}")

        p = int(rng.integers(0, 2))
        q = int(rng.integers(0, 2))
        a, b = random_form(rng, chart, p, 2), random_form(rng, chart, q, 2)
        lhs = exterior_derivative(wedge(a, b))
        rhs = wedge(exterior_derivative(a), b) + wedge(a, exterior_derivative(b)).scaled((-1) ** p)
        anti.record((lhs - rhs).is_zero_form(), note=f"a={a}, b={b}")

        y = random_vector_field(rng, chart)
        p = int(rng.integers(1, 3))
        q = int(rng.integers(1, 3))
        if p + q <= chart.dim:
            a, b = random_form(rng, chart, p, 2), random_form(rng, chart, q, 2)
            lhs = interior_product(y, wedge(a, b))
            rhs = wedge(interior_product(y, a), b) + wedge(a, interior_product(y, b)).scaled((-1) ** p)
            ianti.record((lhs - rhs).is_zero_form(), note=f"Y={y}, a={a}, b={b}")

        beta = random_form(rng, chart, int(rng.integers(0, min(2, chart.dim) + 1)), 2, smooth=False)
        x0 = 0.5 + rng.random(chart.dim)
        err = cartan_flow_error(y, beta, x0)
        flow.record(err <= FLOW_TOL, err, note=f"Y={y}, alpha={beta}, error {err:.3e}")
    return suite


def canonical_structure_suite(seed: int, instances: int = 100) -> Suite:
    rng = np.random.default_rng([seed, 2])
    suite = Suite("canonical-structure")
    exact = suite.check("omega^A = -d(theta^A)")
    contr = suite.check("i(d/dq_i) omega^A = dp_A_i")
    for n in range(1, 4):
        for k in range(1, 4):
            chart = Chart(n, k)
            for a in range(1, k + 1):
                om = canonical_omega(chart, a)
                exact.record(om == -exterior_derivative(canonical_theta(chart, a)), note=f"n={n} k={k} A={a}")
                for i in range(1, n + 1):
                    got = interior_product(VectorField.basis(chart, chart.q(i)), om)
                    contr.record(got == DiffForm.basis(chart, chart.p(a, i)), note=f"n={n} k={k} A={a} i={i}")
    kern = suite.check("in_kernel agrees with the explicit local conditions")
    for _ in range(instances):
        chart = random_chart(rng)
        x = random_kvector(rng, chart)
        kern.record(in_kernel(x) == satisfies_kernel_conditions(x), note=repr(x))
    return suite


def lift_suite(seed: int, instances: int = 50) -> Suite:
    rng = np.random.default_rng([seed, 3])
    suite = Suite("canonical-lift")
    theta = suite.check("L(Z lift) theta^A = 0 exactly")
    order = suite.check("lifts with L(Y)H = 0 classify as order 1")
    for _ in range(instances):
        chart = random_chart(rng, 2, 2)
        qs = [chart.q(i) for i in range(1, chart.n + 1)]
        z = [random_polynomial(rng, qs, 3) for _ in qs]
        y = canonical_lift(z, chart)
        for a in range(1, chart.k + 1):
            lt = lie_derivative(y, canonical_theta(chart, a))
            theta.record(lt.is_zero_form(), note=f"Z={z}, A={a}: {lt}")
        # the momentum i(Y)theta^1 is invariant under its own lift
        mom = interior_product(y, canonical_theta(chart, 1)).terms.get((), Const(0))
        system = HamiltonianSystem(chart, normalize(mom * mom + mom))
        report = classify_cartan_order(system, y, 3)
        order.record(report.order == 1 and report.lie_H_zero, note=f"Z={z}: order {report.order}")
    return suite


def hdw_suite(seed: int, instances: int = 50) -> Suite:
    rng = np.random.default_rng([seed, 4])
    suite = Suite("hdw")
    resid = suite.check("particular k-vector field solves the field equation")
    family = suite.check("particular field plus a kernel element still solves it")
    for _ in range(instances):
        chart = random_chart(rng)
        system = HamiltonianSystem(chart, random_polynomial(rng, chart.coords, 3, 4))
        r = field_equation_residual(system, particular_kvector(system))
        resid.record(r.is_zero_form(), note=f"H={system.hamiltonian}: {r}")
        shifted = particular_kvector(system) + random_kernel_kvector(rng, chart)
        r2 = field_equation_residual(system, shifted)
        family.record(r2.is_zero_form(), note=f"H={system.hamiltonian}: {r2}")

    osc = catalog.oscillator()
    x = particular_kvector(osc)
    track = suite.check("oscillator flow matches (sin t, cos t)", 1e-9)
    grid = integrate_section(x, {"q_1": 0.0, "p_1_1": 1.0}, [GridAxis(0.0, 1e-3, 1001)])
    t = grid.parameter(1)
    err = float(max(np.max(np.abs(grid.coordinate("q_1") - np.sin(t))),
                    np.max(np.abs(grid.coordinate("p_1_1") - np.cos(t)))))
    track.record(err <= 1e-9, err, note=f"max deviation {err:.3e}")

    drift = suite.check("oscillator energy drift over 10^4 steps", 1e-8)
    long = integrate_section(x, {"q_1": 0.0, "p_1_1": 1.0}, [GridAxis(0.0, 1e-3, 10001)])
    energy = 0.5 * (long.coordinate("q_1") ** 2 + long.coordinate("p_1_1") ** 2)
    d = float(np.max(np.abs(energy - energy[0])))
    drift.record(d <= 1e-8, d, note=f"drift {d:.3e}")
    return suite


def noether_suite(seed: int, instances: int = 20) -> Suite:
    rng = np.random.default_rng([seed, 5])
    suite = Suite("noether")

    lap = catalog.laplace()
    y = catalog.laplace_translation(lap)
    q = noether_charge(lap, y, 1, catalog.LAPLACE_BASE)
    ok = [str(g) for g in q.components] == ["p_1_1", "p_2_1"] and all(xi.is_const(0) for xi in q.xi)
    suite.check("translation charge on the Laplace system").record(ok, note=str(q.components))
    grid = sample_section(catalog.laplace_section(lap), [GridAxis(0.0, 0.01, 101)] * 2)
    div = conservation_check_numeric(q.components, grid)
    suite.check("Laplace charge divergence on the exact grid", 1e-12).record(div <= 1e-12, div)

    sys2 = catalog.order_two()
    y2 = catalog.order_two_candidate(sys2)
    rep = classify_cartan_order(sys2, y2, 5)
    suite.check("order-2 example classifies as order 2").record(rep.order == 2 and rep.lie_H_zero)
    q2 = noether_charge(sys2, y2, 2, catalog.ORDER_TWO_BASE)
    suite.check("order-2 charge is p/q with agreeing routes").record(
        str(q2.components[0]) == "p_1_1/q_1" and q2.agrees, note=str(q2.components))
    grid2 = integrate_section(particular_kvector(sys2), catalog.ORDER_TWO_START, [GridAxis(0.0, 1e-3, 1001)])
    div2 = conservation_check_numeric(q2.components, grid2)
    suite.check("order-2 charge divergence along the RK4 flow", 1e-8).record(div2 <= 1e-8, div2)

    lifted = suite.check("order-1 lifts: xi = 0 and g^A = p_A_i Z^i")
    for _ in range(instances):
        n, k = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        chart = Chart(n, k, box={f"p_{a}_{i}": (-1.0, 1.0) for a in range(1, k + 1) for i in range(1, n + 1)})
        qs = [chart.q(i) for i in range(1, chart.n + 1)]
        z = [random_polynomial(rng, qs, 3) for _ in qs]
        ylift = canonical_lift(z, chart)
        system = HamiltonianSystem(chart, "0")
        base = {n: (0.0 if n.startswith("p_") else 1.0) for n in chart.coords}
        charge = noether_charge(system, ylift, 1, base)
        good = all(xi.is_const(0) for xi in charge.xi)
        for a, g in enumerate(charge.components, start=1):
            expected = add_all(Sym(chart.p(a, i)) * z[i - 1] for i in range(1, chart.n + 1))
            good = good and is_zero(normalize(g - expected), chart) is Verdict.ZERO
        lifted.record(good, note=f"Z={z}: {charge.components}")
    return suite


SUITES = {
    "exterior-calculus": exterior_calculus_suite,
    "canonical-structure": canonical_structure_suite,
    "canonical-lift": lift_suite,
    "hdw": hdw_suite,
    "noether": noether_suite,
}


def run_selftest(seed: int | None = None, only: list[str] | None = None) -> list[Suite]:
    seed = default_seed() if seed is None else seed
    names = only or list(SUITES)
    return [SUITES[name](seed) for name in names]

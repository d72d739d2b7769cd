"""Hamiltonian systems, the de Donder-Weyl field equations and their integral sections."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .chart import Chart
from .expr import (
    ZERO,
    Const,
    Expr,
    Mul,
    Verdict,
    as_expr,
    combine,
    differentiate,
    evaluate_array,
    normalize,
    parse,
    substitute,
)
from .expr.nodes import add_all
from .forms import DiffForm, KVectorField, VectorField, exterior_derivative, lie_bracket, omega_sharp

TOL_PATH = 1e-6
AUDIT_FRACTION = 0.05


class NonIntegrableError(RuntimeError):
    def __init__(self, residual: float, tol: float):
        self.residual = residual
        self.tol = tol
        super().__init__(f"path-dependence residual {residual:.3e} exceeds tolerance {tol:.1e}")


class GridSchemaError(ValueError):
    """An imported grid does not match the chart or is not a regular grid."""


class HamiltonianSystem:
    """A chart together with a Hamiltonian H(q, p)."""

    __slots__ = ("chart", "hamiltonian")

    def __init__(self, chart: Chart, hamiltonian):
        h = normalize(parse(hamiltonian, chart, allow_params=False) if isinstance(hamiltonian, str)
                      else as_expr(hamiltonian))
        stray = h.symbols - set(chart.coords)
        if stray:
            raise ValueError(f"Hamiltonian may only use chart coordinates, found {sorted(stray)}")
        self.chart = chart
        self.hamiltonian = h

    def dH(self) -> DiffForm:
        return exterior_derivative(DiffForm.function(self.chart, self.hamiltonian))

    def partial(self, name: str) -> Expr:
        return differentiate(self.hamiltonian, name)

    def __repr__(self):
        return f"HamiltonianSystem(n={self.chart.n}, k={self.chart.k}, H={self.hamiltonian})"


class AnalyticSection:
    """A map psi(t) given by one expression in t_1..t_k per chart coordinate."""

    __slots__ = ("chart", "components")

    def __init__(self, chart: Chart, components: Sequence):
        if len(components) != chart.dim:
            raise ValueError(f"section needs {chart.dim} components, got {len(components)}")
        comps = []
        for c in components:
            e = normalize(parse(c, chart) if isinstance(c, str) else as_expr(c))
            stray = e.symbols - set(chart.params)
            if stray:
                raise ValueError(f"section components may only use base parameters, found {sorted(stray)}")
            comps.append(e)
        self.chart = chart
        self.components = tuple(comps)

    @classmethod
    def from_dict(cls, chart: Chart, mapping: Mapping[str, object]) -> "AnalyticSection":
        missing = [n for n in chart.coords if n not in mapping]
        if missing:
            raise ValueError(f"section is missing components {missing}")
        extra = set(mapping) - set(chart.coords)
        if extra:
            raise ValueError(f"section names unknown coordinates {sorted(extra)}")
        return cls(chart, [mapping[n] for n in chart.coords])

    def __getitem__(self, name: str) -> Expr:
        return self.components[self.chart.index(name)]

    def as_mapping(self) -> dict[str, Expr]:
        return dict(zip(self.chart.coords, self.components))


def hdw_residual_analytic(system: HamiltonianSystem, psi: AnalyticSection) -> list[Expr]:
    """Residuals of the field equations along psi, as expressions in t.

    Order: dH/dq_i(psi) + sum_A d(psi_A_i)/dt_A for each i, then
    dH/dp_A_i(psi) - d(psi_i)/dt_A for each (A, i) in coordinate order.
    """
    chart = system.chart
    sub = psi.as_mapping()
    out = []
    for i in range(1, chart.n + 1):
        div = [differentiate(psi[chart.p(a, i)], chart.t(a)) for a in range(1, chart.k + 1)]
        out.append(normalize(add_all([substitute(system.partial(chart.q(i)), sub)] + div)))
    for a in range(1, chart.k + 1):
        for i in range(1, chart.n + 1):
            dh = substitute(system.partial(chart.p(a, i)), sub)
            out.append(normalize(dh - differentiate(psi[chart.q(i)], chart.t(a))))
    return out


def first_prolongation(psi: AnalyticSection) -> list[tuple[Expr, ...]]:
    """The k tangent vectors d(psi)/dt_A, each as one expression per coordinate."""
    chart = psi.chart
    return [tuple(differentiate(c, chart.t(a)) for c in psi.components) for a in range(1, chart.k + 1)]


def particular_kvector(system: HamiltonianSystem) -> KVectorField:
    """A solution of sum_A i(X_A) omega^A = dH.

    (X_A)^i = dH/dp_A_i; the momentum components are split evenly over the
    copies, (X_A)^B_i = -(1/k) delta_AB dH/dq_i.
    """
    chart = system.chart
    share = Const(-1) / Const(chart.k) if chart.k > 1 else Const(-1)
    fields = []
    for a in range(1, chart.k + 1):
        comps: list[Expr] = [ZERO] * chart.dim
        for i in range(1, chart.n + 1):
            comps[chart.q_index(i)] = system.partial(chart.p(a, i))
            comps[chart.p_index(a, i)] = Mul(share, system.partial(chart.q(i)))
        fields.append(VectorField(chart, comps))
    return KVectorField(fields)


def field_equation_residual(system: HamiltonianSystem, x: KVectorField) -> DiffForm:
    return omega_sharp(x) - system.dH()


def integrability_residual(x: KVectorField) -> list[VectorField]:
    """Brackets [X_A, X_B] for A < B; all vanishing is sufficient for integrability."""
    fs = x.fields
    return [lie_bracket(fs[a], fs[b]) for a in range(len(fs)) for b in range(a + 1, len(fs))]


def integrability_verdict(x: KVectorField) -> Verdict:
    return combine(br.verdict() for br in integrability_residual(x))


@dataclass(frozen=True)
class GridAxis:
    origin: float
    spacing: float
    count: int

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")
        if self.count < 1:
            raise ValueError(f"grid count must be >= 1, got {self.count}")

    def values(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.count)


@dataclass(frozen=True, eq=False)
class SolutionGrid:
    """Samples of psi on a rectangular grid in t; ``values`` has shape (*counts, dim)."""

    chart: Chart
    axes: tuple[GridAxis, ...]
    values: np.ndarray
    path_residual: float | None = None
    integrability: str = "unchecked"
    source: str = "unknown"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(a.count for a in self.axes) + (self.chart.dim,)
        if len(self.axes) != self.chart.k:
            raise ValueError(f"grid needs {self.chart.k} axes, got {len(self.axes)}")
        if self.values.shape != shape:
            raise ValueError(f"grid values have shape {self.values.shape}, expected {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid contains non-finite values")
        self.values.setflags(write=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    def coordinate(self, name: str) -> np.ndarray:
        return self.values[..., self.chart.index(name)]

    def parameter(self, a: int) -> np.ndarray:
        """t_a at every node (1-based a)."""
        ts = np.meshgrid(*(ax.values() for ax in self.axes), indexing="ij")
        return ts[a - 1]

    def env(self) -> dict[str, np.ndarray]:
        out = {name: self.coordinate(name) for name in self.chart.coords}
        for a in range(1, self.chart.k + 1):
            out[self.chart.t(a)] = self.parameter(a)
        return out

    def header(self) -> list[str]:
        return list(self.chart.params) + list(self.chart.coords)

    def to_csv(self, target=None) -> str:
        """Write one row per node (t_1..t_k, then coordinates); returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        ts = [self.parameter(a).reshape(-1) for a in range(1, self.chart.k + 1)]
        flat = self.values.reshape(-1, self.chart.dim)
        for r in range(flat.shape[0]):
            w.writerow([repr(float(t[r])) for t in ts] + [repr(float(v)) for v in flat[r]])
        text = buf.getvalue()
        if target is not None:
            Path(target).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, chart: Chart) -> "SolutionGrid":
        text = Path(source).read_text() if not isinstance(source, io.StringIO) else source.getvalue()
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise GridSchemaError("empty grid file")
        expected = list(chart.params) + list(chart.coords)
        if rows[0] != expected:
            raise GridSchemaError(f"grid header {rows[0]} does not match expected {expected}")
        try:
            data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise GridSchemaError(f"non-numeric grid entry: {exc}") from None
        if data.ndim != 2 or data.shape[1] != len(expected):
            raise GridSchemaError("grid rows have the wrong number of columns")
        k = chart.k
        axes = []
        indices = []
        for a in range(k):
            ts = np.unique(data[:, a])
            count = len(ts)
            spacing = (ts[-1] - ts[0]) / (count - 1) if count > 1 else 1.0
            idx = np.rint((data[:, a] - ts[0]) / spacing).astype(int)
            if count > 1 and np.max(np.abs(ts[0] + idx * spacing - data[:, a])) > 1e-9 * max(1.0, abs(spacing)):
                raise GridSchemaError(f"axis t_{a + 1} is not uniformly spaced")
            axes.append(GridAxis(float(ts[0]), float(spacing), count))
            indices.append(idx)
        shape = tuple(ax.count for ax in axes)
        if data.shape[0] != math.prod(shape):
            raise GridSchemaError(f"expected {math.prod(shape)} rows for a {shape} grid, got {data.shape[0]}")
        values = np.full(shape + (chart.dim,), np.nan)
        values[tuple(indices)] = data[:, k:]
        if np.isnan(values).any():
            raise GridSchemaError("grid has duplicate or missing nodes")
        return cls(chart, tuple(axes), values, source="csv")


def _field_function(x: VectorField):
    chart = x.chart
    comps = [(j, c) for j, c in enumerate(x.components) if not c.is_const(0)]

    def f(state: np.ndarray) -> np.ndarray:
        out = np.zeros_like(state)
        env = {name: state[..., j] for j, name in enumerate(chart.coords)}
        for j, c in comps:
            out[..., j] = evaluate_array(c, env, shape=state.shape[:-1])
        return out

    return f


def rk4_step(f, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_section(x: KVectorField, start: Mapping[str, float], axes: Sequence[GridAxis],
                      tol_path: float = TOL_PATH, audit_fraction: float = AUDIT_FRACTION) -> SolutionGrid:
    """Fill a grid with an integral section of ``x`` through ``start``.

    The section is built by RK4 sweeps in ascending axis order: along t_1 from
    the start, then along t_2 from every node of that line, and so on.  A
    sample of nodes is then re-integrated with the last axis first; a
    discrepancy above ``tol_path`` raises :class:`NonIntegrableError`.
    """
    chart = x.chart
    axes = tuple(axes)
    if len(axes) != chart.k:
        raise ValueError(f"need {chart.k} grid axes, got {len(axes)}")
    start_vec = np.array([float(start[n]) for n in chart.coords])
    fns = [_field_function(xa) for xa in x.fields]
    bracket = integrability_verdict(x)

    shape = tuple(a.count for a in axes)
    values = np.empty(shape + (chart.dim,))
    values[(0,) * chart.k] = start_vec
    for b, ax in enumerate(axes):
        lead = (slice(None),) * b
        tail = (0,) * (chart.k - b - 1)
        y = values[lead + (0,) + tail].copy()
        for j in range(1, ax.count):
            y = rk4_step(fns[b], y, ax.spacing)
            values[lead + (j,) + tail] = y

    residual = 0.0
    audited = 0
    if chart.k > 1:
        total = math.prod(shape)
        m = math.ceil(audit_fraction * total)
        flat = np.unique(np.rint(np.linspace(0, total - 1, m)).astype(int))
        idx = np.stack(np.unravel_index(flat, shape), axis=1)
        audited = len(flat)
        y = np.tile(start_vec, (len(flat), 1))
        for b in [chart.k - 1] + list(range(chart.k - 1)):
            steps = idx[:, b]
            for s in range(int(steps.max(initial=0))):
                active = s < steps
                y[active] = rk4_step(fns[b], y[active], axes[b].spacing)
        residual = float(np.max(np.abs(y - values[tuple(idx.T)])))
        if residual > tol_path:
            raise NonIntegrableError(residual, tol_path)

    status = "commuting" if bracket.vanishes else "non-commuting brackets (warning)"
    return SolutionGrid(chart, axes, values, path_residual=residual, integrability=status, source="integrated",
                        meta={"audited_nodes": audited, "tol_path": tol_path})


def sample_section(psi: AnalyticSection, axes: Sequence[GridAxis]) -> SolutionGrid:
    chart = psi.chart
    axes = tuple(axes)
    if len(axes) != chart.k:
        raise ValueError(f"need {chart.k} grid axes, got {len(axes)}")
    ts = np.meshgrid(*(ax.values() for ax in axes), indexing="ij")
    env = {chart.t(a): ts[a - 1] for a in range(1, chart.k + 1)}
    shape = ts[0].shape
    values = np.stack([evaluate_array(c, env, shape=shape) for c in psi.components], axis=-1)
    return SolutionGrid(chart, axes, values, source="analytic")


def _interior(grid: SolutionGrid):
    if any(c < 3 for c in grid.shape):
        raise ValueError(f"need at least 3 nodes per axis, grid has shape {grid.shape}")
    return (slice(1, -1),) * len(grid.shape)


def central_difference(arr: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    """Second-order derivative estimate along ``axis`` on the interior nodes."""
    nd = arr.ndim
    plus = [slice(1, -1)] * nd
    minus = [slice(1, -1)] * nd
    plus[axis] = slice(2, None)
    minus[axis] = slice(None, -2)
    return (arr[tuple(plus)] - arr[tuple(minus)]) / (2.0 * spacing)


def hdw_residual_grid(system: HamiltonianSystem, grid: SolutionGrid) -> float:
    """Sup-norm over interior nodes of the field-equation residuals, central differences in t."""
    chart = system.chart
    inner = _interior(grid)
    env = grid.env()
    shape = grid.shape
    worst = 0.0
    for i in range(1, chart.n + 1):
        r = evaluate_array(system.partial(chart.q(i)), env, shape=shape)[inner]
        for a in range(1, chart.k + 1):
            r = r + central_difference(grid.coordinate(chart.p(a, i)), a - 1, grid.axes[a - 1].spacing)
        worst = max(worst, float(np.max(np.abs(r))))
    for a in range(1, chart.k + 1):
        for i in range(1, chart.n + 1):
            r = evaluate_array(system.partial(chart.p(a, i)), env, shape=shape)[inner]
            r = r - central_difference(grid.coordinate(chart.q(i)), a - 1, grid.axes[a - 1].spacing)
            worst = max(worst, float(np.max(np.abs(r))))
    return worst

"""Canonical coordinates (q_i, p_A_i) on the bundle of k^1-covelocities."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .expr import DEFAULT_BOX, default_seed


@dataclass(frozen=True)
class ZeroTest:
    """Settings of the randomized zero test."""

    eps: float = 1e-9
    samples: int = 16
    seed: int = field(default_factory=default_seed)
    max_batches: int = 64


class Chart:
    """Coordinates ``q_1..q_n, p_1_1..p_1_n, ..., p_k_1..p_k_n`` plus base parameters ``t_1..t_k``.

    ``safe_box`` holds a sampling interval per coordinate (and optionally per
    base parameter); missing entries default to [0.5, 1.5].
    """

    __slots__ = ("n", "k", "coords", "params", "_index", "safe_box", "zero_test")

    def __init__(self, n: int, k: int, box: Mapping[str, tuple[float, float]] | None = None,
                 zero_test: ZeroTest | None = None):
        if n < 1 or k < 1:
            raise ValueError(f"chart needs n >= 1 and k >= 1, got n={n}, k={k}")
        self.n = n
        self.k = k
        self.coords = tuple([f"q_{i}" for i in range(1, n + 1)]
                            + [f"p_{a}_{i}" for a in range(1, k + 1) for i in range(1, n + 1)])
        self.params = tuple(f"t_{a}" for a in range(1, k + 1))
        self._index = {name: j for j, name in enumerate(self.coords)}
        box = dict(box or {})
        unknown = set(box) - set(self.coords) - set(self.params)
        if unknown:
            raise ValueError(f"safe box names unknown symbols: {sorted(unknown)}")
        full = {}
        for name in self.coords + self.params:
            lo, hi = box.get(name, DEFAULT_BOX)
            if not lo < hi:
                raise ValueError(f"empty safe interval for {name}: [{lo}, {hi}]")
            full[name] = (float(lo), float(hi))
        self.safe_box = full
        self.zero_test = zero_test or ZeroTest()

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def all_names(self) -> tuple[str, ...]:
        return self.coords + self.params

    def q(self, i: int) -> str:
        return f"q_{i}"

    def p(self, a: int, i: int) -> str:
        return f"p_{a}_{i}"

    def t(self, a: int) -> str:
        return f"t_{a}"

    def index(self, name: str) -> int:
        return self._index[name]

    def q_index(self, i: int) -> int:
        return i - 1

    def p_index(self, a: int, i: int) -> int:
        return self.n + (a - 1) * self.n + (i - 1)

    def center(self) -> dict[str, float]:
        return {name: 0.5 * (lo + hi) for name, (lo, hi) in self.safe_box.items() if name in self._index}

    def in_box(self, point: Mapping[str, float]) -> bool:
        return all(self.safe_box[n][0] <= point[n] <= self.safe_box[n][1] for n in self.coords)

    def point(self, values: Mapping[str, float] | None = None, **kw) -> dict[str, float]:
        """A complete Point: every coordinate must be assigned (base parameters optional)."""
        vals = dict(values or {}, **kw)
        missing = [n for n in self.coords if n not in vals]
        if missing:
            raise ValueError(f"point is missing coordinates {missing}")
        extra = set(vals) - set(self.all_names)
        if extra:
            raise ValueError(f"point names unknown symbols {sorted(extra)}")
        return {n: float(vals[n]) for n in self.all_names if n in vals}

    def __eq__(self, other):
        if not isinstance(other, Chart):
            return NotImplemented
        return (self.n, self.k, self.safe_box) == (other.n, other.k, other.safe_box)

    def __hash__(self):
        return hash((self.n, self.k, tuple(sorted(self.safe_box.items()))))

    def __repr__(self):
        return f"Chart(n={self.n}, k={self.k})"


def same_chart(*charts: Chart) -> Chart:
    first = charts[0]
    for c in charts[1:]:
        if c.n != first.n or c.k != first.k:
            raise ValueError(f"chart mismatch: {first!r} vs {c!r}")
    return first

"""Indexed families of maps with limit candidates.

A family yields, for each index n, a tuple of factor maps (one factor for a
map to CP^m, several for a map into a product of projective spaces).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .exactalg import GaussianRational, HomoPoly
from .maps import (
    DEFAULT_BIT_BUDGET,
    CoefficientOverflowBudgetExceeded,
    MapFamily,
    RationalMap,
    Source,
    compose,
    normalize,
)


class Family:
    name: str = ""
    source: Source

    def member(self, n: int) -> tuple[RationalMap, ...]:
        raise NotImplementedError

    def candidates(self, schedule: Sequence[int]) -> list[tuple[RationalMap, ...]] | None:
        """Maps whose graphs are expected limits of the members; None if unknown."""
        return None


@dataclass(eq=False)
class SequenceFamily(Family):
    """One MapFamily, or several sharing a source (a map into a product of CP^m)."""

    factors: tuple[MapFamily, ...]
    name: str = ""
    limit: tuple[RationalMap, ...] | None = None

    def __post_init__(self):
        if isinstance(self.factors, MapFamily):
            self.factors = (self.factors,)
        self.factors = tuple(self.factors)
        srcs = {f.source for f in self.factors}
        if len(srcs) != 1:
            raise ValueError("product factors must share one source")
        self.source = srcs.pop()
        if self.limit is not None and isinstance(self.limit, RationalMap):
            self.limit = (self.limit,)
        self._cache: dict[int, tuple] = {}

    def member(self, n: int) -> tuple[RationalMap, ...]:
        if n not in self._cache:
            self._cache[n] = tuple(f.instantiate(n) for f in self.factors)
        return self._cache[n]

    def limit_maps(self) -> tuple[RationalMap, ...] | None:
        if self.limit is None:
            try:
                self.limit = tuple(f.limit for f in self.factors)
            except (ValueError, NotImplementedError, ArithmeticError):
                return None
        return self.limit

    def candidates(self, schedule):
        lim = self.limit_maps()
        return None if lim is None else [lim]


def snap_small(f: RationalMap, rel: float = 1e-6) -> RationalMap:
    """Drop coefficients whose modulus is below ``rel`` times the largest one."""
    top = max(abs(complex(c)) for p in f.components for c in p.terms.values())
    comps = []
    for p in f.components:
        terms = {e: c for e, c in p.terms.items() if abs(complex(c)) >= rel * top}
        comps.append(HomoPoly(p.nvars, p.degree, terms))
    if all(p.is_zero() for p in comps):
        return f
    g = normalize(comps, f.source, f.name and f"{f.name}~")
    lead = max((c for p in g.components for c in p.terms.values()), key=lambda c: abs(complex(c)))
    return RationalMap(tuple(p.scale(lead.inverse()) for p in g.components), g.source, g.name)


def coefficient_signature(f: RationalMap) -> np.ndarray:
    """Coefficient vector scaled so the first largest-modulus entry is 1."""
    keys = sorted({(i, e) for i, p in enumerate(f.components) for e in p.terms})
    v = np.array([complex(f.components[i].terms[e]) for i, e in keys])
    k = int(np.argmax(np.abs(v)))
    return keys, v / v[k]


@dataclass(eq=False)
class IterateFamily(Family):
    """Iterates f^n of a self-map of CP^n, computed exactly while the bit budget allows."""

    base: RationalMap
    name: str = ""
    bit_budget: int = DEFAULT_BIT_BUDGET
    snap_rel: float = 1e-6
    window: int = 3

    def __post_init__(self):
        self.source = self.base.source
        self.name = self.name or self.base.name or "iterates"
        self._iter = [self.base]
        self.degree_trace = [self.base.degree]

    def iterate(self, n: int) -> RationalMap:
        while len(self._iter) < n:
            nxt = compose(self.base, self._iter[-1])
            if nxt.bit_size() > self.bit_budget:
                raise CoefficientOverflowBudgetExceeded(
                    f"iterate {len(self._iter) + 1} uses {nxt.bit_size()} bits > budget {self.bit_budget}"
                )
            self._iter.append(nxt)
            self.degree_trace.append(nxt.degree)
        return self._iter[n - 1]

    def member(self, n: int) -> tuple[RationalMap, ...]:
        return (self.iterate(n),)

    def candidates(self, schedule):
        """Distinct snapped forms of the last ``window`` members (and, for
        periodic families, of each residue class seen in the tail)."""
        tail = list(schedule)[-max(self.window, 1):]
        out: list[RationalMap] = []
        for n in tail:
            g = snap_small(self.iterate(n), self.snap_rel)
            if not any(g == h for h in out):
                out.append(g)
        return [(g,) for g in out]


def as_family(obj, name: str = "") -> Family:
    if isinstance(obj, Family):
        return obj
    if isinstance(obj, MapFamily):
        return SequenceFamily((obj,), name or obj.name)
    if isinstance(obj, RationalMap):
        return IterateFamily(obj, name)
    if isinstance(obj, (tuple, list)) and all(isinstance(x, MapFamily) for x in obj):
        return SequenceFamily(tuple(obj), name)
    raise TypeError(f"cannot make a family from {type(obj).__name__}")


@dataclass(eq=False)
class ExplicitFamily(Family):
    """Members listed by index (for example partial sums of a series)."""

    members: dict
    name: str = ""

    def __post_init__(self):
        self.members = {int(n): (m if isinstance(m, tuple) else (m,)) for n, m in self.members.items()}
        self.source = next(iter(self.members.values()))[0].source

    def member(self, n: int) -> tuple[RationalMap, ...]:
        return self.members[n]


def add_functions(f: RationalMap, g: RationalMap) -> RationalMap:
    """Sum of two functions stored as [numerator : denominator]."""
    (p1, q1), (p2, q2) = f.components, g.components
    return normalize([p1 * q2 + p2 * q1, q1 * q2], f.source)


def partial_sums(terms: Sequence[RationalMap]) -> ExplicitFamily:
    out = {}
    acc = None
    for k, t in enumerate(terms, start=1):
        acc = t if acc is None else add_functions(acc, t)
        out[k] = acc
    return ExplicitFamily(out, "partial sums")

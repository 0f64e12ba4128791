"""Rational (meromorphic) maps between projective spaces and polydisc charts.

Every map is stored as a tuple of homogeneous polynomials of one degree with
trivial gcd.  An affine source C^n is the chart {z0 = 1} of CP^n, so affine
maps are homogenized in z0 and share the projective code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np
import sympy

from . import parse as _parse
from .exactalg import (
    ONE,
    GaussianRational,
    HomoPoly,
    MerodynError,
    VariableCountMismatch,
    DegreeMismatch,
    _divide_exact,
    _gcd,
    divide_exact,
    gcd_many,
)


class AllZero(MerodynError, ValueError):
    pass


class DimensionMismatch(MerodynError, ValueError):
    pass


class CoefficientOverflowBudgetExceeded(MerodynError, OverflowError):
    pass


class NotASurfaceSource(MerodynError, ValueError):
    pass


class RootFindingFailed(MerodynError, RuntimeError):
    pass


class LineInsideIndeterminacy(MerodynError, ValueError):
    pass


DEFAULT_BIT_BUDGET = 1_000_000


@dataclass(frozen=True)
class Source:
    """``kind`` is "projective" (CP^dim) or "affine" (C^dim = chart z0 = 1 of CP^dim)."""

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in ("projective", "affine"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("source dimension must be positive")

    @property
    def nvars(self) -> int:
        return self.dim + 1

    def to_json(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


def projective(dim: int) -> Source:
    return Source("projective", dim)


def affine(dim: int) -> Source:
    return Source("affine", dim)


def canonical(coords) -> np.ndarray:
    """Scale so the first coordinate of largest modulus equals 1."""
    v = np.asarray(coords, dtype=complex)
    k = int(np.argmax(np.abs(v)))
    if v[k] == 0:
        raise ValueError("the zero vector is not a projective point")
    return v / v[k]


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    coords: np.ndarray
    exact: tuple[GaussianRational, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "coords", canonical(self.coords))
        if self.exact is not None:
            ex = tuple(GaussianRational.coerce(c) for c in self.exact)
            first = next((c for c in ex if c), None)
            if first is None:
                raise ValueError("the zero vector is not a projective point")
            object.__setattr__(self, "exact", tuple(c / first for c in ex))

    @classmethod
    def from_exact(cls, coords: Sequence) -> "ProjectivePoint":
        ex = tuple(GaussianRational.coerce(c) for c in coords)
        return cls(np.array([complex(c) for c in ex]), ex)

    def __len__(self):
        return len(self.coords)

    def chart_coords(self, chart: int) -> np.ndarray | None:
        """Affine coordinates in the chart {z_chart = 1}, or None if off the chart."""
        if abs(self.coords[chart]) < 1e-14:
            return None
        v = self.coords / self.coords[chart]
        return np.delete(v, chart)

    def __repr__(self):
        if self.exact is not None:
            return "[" + " : ".join(_fmt_exact(c) for c in self.exact) + "]"
        return "[" + " : ".join(f"{c:.6g}" for c in self.coords) + "]"


def _fmt_exact(c: GaussianRational) -> str:
    if not c.im:
        return str(c.re)
    return f"{c.re}+{c.im}i"


def lift(z, chart: int = 0) -> np.ndarray:
    """Homogeneous coordinates of chart points ``z`` (shape (..., n))."""
    z = np.asarray(z, dtype=complex)
    ones = np.ones(z.shape[:-1] + (1,), dtype=complex)
    return np.concatenate([z[..., :chart], ones, z[..., chart:]], axis=-1)


@dataclass(frozen=True, eq=False)
class RationalMap:
    components: tuple[HomoPoly, ...]
    source: Source
    name: str = ""

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if len(comps) < 2:
            raise DimensionMismatch("a map to CP^m needs at least two components")
        nv = self.source.nvars
        degs = {p.degree for p in comps}
        if any(p.nvars != nv for p in comps):
            raise VariableCountMismatch(f"components must use {nv} variables")
        if len(degs) != 1:
            raise DegreeMismatch(f"components of different degrees {sorted(degs)}")
        if all(p.is_zero() for p in comps):
            raise AllZero("all components vanish identically")

    @property
    def nvars(self) -> int:
        return self.source.nvars

    @property
    def target_dim(self) -> int:
        return len(self.components) - 1

    @property
    def degree(self) -> int:
        return self.components[0].degree

    def __eq__(self, other):
        if not isinstance(other, RationalMap):
            return NotImplemented
        return self.source == other.source and self.components == other.components

    def __hash__(self):
        return hash((self.source, self.components))

    def bit_size(self) -> int:
        return sum(p.bit_size() for p in self.components)

    def is_reduced(self) -> bool:
        return gcd_many(self.components).degree == 0

    def eval_homogeneous(self, x) -> np.ndarray:
        """Component values at homogeneous points ``x`` (shape (..., nvars))."""
        x = np.asarray(x, dtype=complex)
        return np.stack([p.eval_float(x) for p in self.components], axis=-1)

    def __call__(self, z, chart: int = 0) -> np.ndarray:
        return self.eval_homogeneous(lift(z, chart))

    @cached_property
    def gradients(self) -> tuple[tuple[HomoPoly, ...], ...]:
        return tuple(tuple(p.derivative(k) for k in range(self.nvars)) for p in self.components)

    def jacobian(self, z, chart: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Values F (..., m+1) and chart Jacobian dF/dz (..., m+1, n) at chart points."""
        x = lift(z, chart)
        vals = self.eval_homogeneous(x)
        cols = [k for k in range(self.nvars) if k != chart]
        jac = np.stack(
            [np.stack([g[k].eval_float(x) for k in cols], axis=-1) for g in self.gradients], axis=-2
        )
        return vals, jac

    def to_text(self) -> list[str]:
        return [p.to_text() for p in self.components]

    def to_json(self) -> dict:
        return {"source": self.source.to_json(), "components": self.to_text(),
                "display": f"[{' : '.join(map(_short, self.components))}]"}

    def __repr__(self):
        label = f"{self.name}: " if self.name else ""
        return f"RationalMap({label}[{' : '.join(map(_short, self.components))}] on {self.source.kind} dim {self.source.dim})"


def _short(p: HomoPoly) -> str:
    if p.is_zero():
        return "0"
    parts = []
    for e in sorted(p.terms, reverse=True):
        c = p.terms[e]
        mono = "*".join(f"z{k}" + (f"^{j}" if j > 1 else "") for k, j in enumerate(e) if j)
        coef = _fmt_exact(c)
        if mono and c == 1:
            parts.append(mono)
        elif mono:
            parts.append(f"({coef})*{mono}")
        else:
            parts.append(f"({coef})")
    return " + ".join(parts)


def normalize(components: Sequence[HomoPoly], source: Source, name: str = "") -> RationalMap:
    """Divide the components by their gcd."""
    return _normalize_with_factor(components, source, name)[0]


def _normalize_with_factor(components, source, name=""):
    comps = list(components)
    if all(p.is_zero() for p in comps):
        raise AllZero("all components vanish identically")
    degs = {p.degree for p in comps}
    if len(degs) != 1:
        raise DegreeMismatch(f"components of different degrees {sorted(degs)}")
    g = gcd_many(comps)
    if g.degree:
        deg = comps[0].degree - g.degree
        comps = [HomoPoly.zero(p.nvars, deg) if p.is_zero() else divide_exact(p, g) for p in comps]
    return RationalMap(tuple(comps), source, name), g


def from_text(components: Sequence[str], source: Source, name: str = "",
              aliases: dict[str, int] | None = None) -> RationalMap:
    """Parse component strings; affine sources are homogenized in z0."""
    nv = source.nvars
    if aliases is None and source.kind == "affine" and source.dim == 1:
        aliases = {"z": 1}
    raw = [_parse.evaluate(_parse.parse_expression(t, nv, aliases), nv) for t in components]
    return _assemble(raw, source, name)


def _assemble(raw: list[dict], source: Source, name: str) -> RationalMap:
    nv = source.nvars
    if source.kind == "affine":
        top = max((sum(e) for t in raw for e in t), default=0)
        comps = [HomoPoly(nv, top, _parse.homogenize(t, nv, 0, top)[0]) for t in raw]
    else:
        degs = {sum(e) for t in raw for e in t}
        if len(degs) > 1:
            raise DegreeMismatch(f"projective components of several degrees {sorted(degs)}")
        d = degs.pop() if degs else 0
        comps = [HomoPoly(nv, d, t) for t in raw]
    return normalize(comps, source, name)


def identity(dim: int) -> RationalMap:
    return RationalMap(tuple(HomoPoly.variable(dim + 1, k) for k in range(dim + 1)), projective(dim), "identity")


def cremona() -> RationalMap:
    """The standard quadratic involution [z1 z2 : z0 z2 : z0 z1] of CP^2."""
    return from_text(["z1*z2", "z0*z2", "z0*z1"], projective(2), "cremona")


def compose_with_factor(g: RationalMap, f: RationalMap) -> tuple[RationalMap, HomoPoly]:
    """g o f together with the common factor cancelled by the reduction."""
    if g.nvars != len(f.components):
        raise DimensionMismatch(f"g expects {g.nvars} coordinates, f has {len(f.components)} components")
    raw = [p.substitute(f.components) for p in g.components]
    return _normalize_with_factor(raw, f.source)


def compose(g: RationalMap, f: RationalMap) -> RationalMap:
    return compose_with_factor(g, f)[0]


def iterate(f: RationalMap, k: int, bit_budget: int = DEFAULT_BIT_BUDGET) -> tuple[RationalMap, list[int]]:
    """k-fold reduced self-composition and the degree trace deg(f^j), j = 1..k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if f.source.kind != "projective" or f.nvars != len(f.components):
        raise DimensionMismatch("iteration needs a self-map of CP^n")
    cur = f
    trace = [f.degree]
    for _ in range(k - 1):
        cur = compose(f, cur)
        if cur.bit_size() > bit_budget:
            raise CoefficientOverflowBudgetExceeded(
                f"iterate {len(trace) + 1} uses {cur.bit_size()} bits > budget {bit_budget}"
            )
        trace.append(cur.degree)
    return cur, trace


def iterates(f: RationalMap, k: int, bit_budget: int = DEFAULT_BIT_BUDGET):
    """Yield f, f^2, ..., f^k (stops with an error once the budget is exceeded)."""
    cur = f
    yield cur
    for j in range(2, k + 1):
        cur = compose(f, cur)
        if cur.bit_size() > bit_budget:
            raise CoefficientOverflowBudgetExceeded(f"iterate {j} uses {cur.bit_size()} bits > budget {bit_budget}")
        yield cur


# ---------------------------------------------------------------- indeterminacy


@dataclass(frozen=True)
class IndetSet:
    points: tuple[ProjectivePoint, ...]
    residual_tolerance: float
    exact: bool = False

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def chart_points(self, chart: int = 0) -> np.ndarray:
        pts = [p.chart_coords(chart) for p in self.points]
        pts = [p for p in pts if p is not None]
        if not pts:
            return np.zeros((0, len(self.points[0]) - 1 if self.points else 0), dtype=complex)
        return np.array(pts)


def residuals(f: RationalMap, x) -> np.ndarray:
    """Scale-free residuals |F_i(x)| / (|coeffs_i|_1 |x|^d) at homogeneous points."""
    x = np.asarray(x, dtype=complex)
    nrm = np.linalg.norm(x, axis=-1, keepdims=True)
    xn = x / nrm
    vals = f.eval_homogeneous(xn)
    scale = np.array([sum(abs(complex(c)) for c in p.terms.values()) or 1.0 for p in f.components])
    return np.abs(vals) / scale


def chordal(p, q) -> float:
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    w = np.outer(p, q) - np.outer(q, p)
    return float(np.sqrt(np.sum(np.abs(w) ** 2) / 2) / (np.linalg.norm(p) * np.linalg.norm(q)))


def _coordinate_points(nv: int) -> list[tuple[int, ...]]:
    return [tuple(int(j == k) for j in range(nv)) for k in range(nv)]


def _indet_monomial(f: RationalMap) -> list[ProjectivePoint]:
    out = []
    nv = f.nvars
    for e in _coordinate_points(nv):
        if all(p.eval_exact(e) == 0 for p in f.components):
            out.append(ProjectivePoint.from_exact(e))
    return out


def _dehomogenize(p: HomoPoly, chart: int) -> dict:
    out: dict = {}
    for e, c in p.terms.items():
        e2 = e[:chart] + e[chart + 1:]
        out[e2] = out[e2] + c if e2 in out else c
    return {e: c for e, c in out.items() if c}


def _as_univariate_in(t: dict, var: int) -> dict[int, dict]:
    """Bivariate terms -> {degree in var: univariate terms in the other variable}."""
    other = 1 - var
    out: dict[int, dict] = {}
    for e, c in t.items():
        out.setdefault(e[var], {})[(e[other],)] = c
    return out


def _sylvester_resultant(a: dict, b: dict, var: int) -> dict:
    """Resultant w.r.t. ``var`` of two bivariate polynomials (exact, Bareiss)."""
    from .exactalg import _add, _mul

    ua, ub = _as_univariate_in(a, var), _as_univariate_in(b, var)
    da, db = max(ua), max(ub)
    if da == 0 and db == 0:
        return {}
    if da == 0:
        r = {(0,): ONE}
        for _ in range(db):
            r = _mul(r, ua[0])
        return r
    if db == 0:
        r = {(0,): ONE}
        for _ in range(da):
            r = _mul(r, ub[0])
        return r
    size = da + db
    M = [[{} for _ in range(size)] for _ in range(size)]
    for i in range(db):
        for k in range(da + 1):
            M[i][i + k] = ua.get(da - k, {})
    for i in range(da):
        for k in range(db + 1):
            M[db + i][i + k] = ub.get(db - k, {})
    sign = 1
    prev = {(0,): ONE}
    for k in range(size - 1):
        if not M[k][k]:
            piv = next((r for r in range(k + 1, size) if M[r][k]), None)
            if piv is None:
                return {}
            M[k], M[piv] = M[piv], M[k]
            sign = -sign
        for i in range(k + 1, size):
            for j in range(k + 1, size):
                num = _add(_mul(M[k][k], M[i][j]), _mul(M[i][k], M[k][j]), -1)
                M[i][j] = _divide_exact(num, prev) if num else {}
            M[i][k] = {}
        prev = M[k][k]
    det = M[size - 1][size - 1]
    if sign < 0:
        det = {e: -c for e, c in det.items()}
    return det


def _univariate_roots(t: dict) -> np.ndarray:
    if not t:
        return np.zeros(0, dtype=complex)
    deg = max(e[0] for e in t)
    coeffs = np.zeros(deg + 1, dtype=complex)
    for e, c in t.items():
        coeffs[deg - e[0]] = complex(c)
    if deg == 0:
        return np.zeros(0, dtype=complex)
    return np.roots(coeffs)


def _trimmed_roots(coeffs_low_to_high: np.ndarray, rel: float = 1e-12) -> np.ndarray | None:
    """Roots of a univariate float polynomial; None if it vanishes identically."""
    c = np.asarray(coeffs_low_to_high, dtype=complex)
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0:
        return None
    c = np.where(np.abs(c) < rel * scale, 0, c)
    nz = np.nonzero(c)[0]
    top = nz[-1]
    if top == 0:
        return np.zeros(0, dtype=complex)
    return np.roots(c[: top + 1][::-1])


def _polish(f: RationalMap, x: np.ndarray, chart: int, steps: int = 8) -> np.ndarray:
    """Gauss-Newton refinement of a common zero in the chart {x_chart = 1}."""
    z = np.delete(x / x[chart], chart)
    for _ in range(steps):
        vals, jac = f.jacobian(z, chart)
        if np.linalg.norm(vals) == 0:
            break
        step, *_ = np.linalg.lstsq(jac, -vals, rcond=None)
        if not np.all(np.isfinite(step)):
            break
        z = z + step
        if np.linalg.norm(step) < 1e-16 * max(1.0, np.linalg.norm(z)):
            break
    return lift(z, chart)


def _snap_exact(f: RationalMap, x: np.ndarray, max_den: int = 10**6) -> tuple | None:
    v = canonical(x)
    ex = []
    for c in v:
        re = Fraction(float(c.real)).limit_denominator(max_den)
        im = Fraction(float(c.imag)).limit_denominator(max_den)
        ex.append(GaussianRational(re, im))
    if all(p.eval_exact(ex) == 0 for p in f.components):
        return tuple(ex)
    return None


def indeterminacy_locus(
    f: RationalMap,
    residual_tolerance: float = 1e-8,
    dedup_tolerance: float = 1e-6,
    method: str = "auto",
) -> IndetSet:
    """Common zeros of the components of a reduced map on CP^2.

    Monomial maps are solved exactly on the coordinate points.  Otherwise
    Sylvester resultants in each affine chart give the candidate coordinates,
    which are refined, filtered by residual and deduplicated; candidates that
    snap to Gaussian-rational points annihilating every component carry exact
    coordinates.
    """
    n = f.source.dim
    if n == 1:
        return IndetSet((), residual_tolerance, exact=True)
    if n != 2:
        raise NotASurfaceSource(f"indeterminacy loci are computed for surfaces, got dim {n}")
    comps = [p for p in f.components if not p.is_zero()]
    if method == "exact" or (method == "auto" and all(p.is_monomial() for p in comps)):
        if not all(p.is_monomial() for p in comps):
            raise ValueError("the exact path needs monomial components")
        return IndetSet(tuple(_indet_monomial(f)), residual_tolerance, exact=True)
    if len(comps) == 1:
        raise RootFindingFailed("a single nonzero component vanishes on a curve; map is not reduced")

    found: list[ProjectivePoint] = []
    any_chart = False
    for chart in range(3):
        polys = [_dehomogenize(p, chart) for p in comps]
        if any(len(t) == 1 and not any(next(iter(t))) for t in polys):
            any_chart = True  # a nonzero constant component: no common zero in this chart
            continue
        xs = None
        for var in (1, 0):
            res_gcd: dict = {}
            for i in range(len(polys)):
                for j in range(i + 1, len(polys)):
                    r = _sylvester_resultant(polys[i], polys[j], var)
                    if r:
                        res_gcd = _gcd(res_gcd, r) if res_gcd else r
            if res_gcd:
                xs = (1 - var, _univariate_roots(res_gcd))
                break
        if xs is None:
            continue
        any_chart = True
        elim_other, roots = xs
        for r in roots:
            cands = _solve_fiber(polys, elim_other, r)
            for zc in cands:
                x = lift(zc, chart)
                x = _polish(f, x, chart)
                if not np.all(np.isfinite(x)):
                    continue
                if np.max(residuals(f, x)) >= residual_tolerance:
                    continue
                if any(chordal(x, q.coords) < dedup_tolerance for q in found):
                    continue
                ex = _snap_exact(f, x)
                found.append(ProjectivePoint(x, ex) if ex else ProjectivePoint(x))
    if not any_chart:
        raise RootFindingFailed("resultants vanish identically in every chart; input is not reduced")
    found.sort(key=lambda p: tuple(-abs(c) for c in p.coords))
    return IndetSet(tuple(found), residual_tolerance, exact=all(p.exact is not None for p in found))


def _solve_fiber(polys: list[dict], known_var: int, value: complex) -> list[np.ndarray]:
    """Given coordinate ``known_var`` = value, solve for the other chart coordinate."""
    other = 1 - known_var
    best = None
    for t in polys:
        deg = max((e[other] for e in t), default=0)
        coeffs = np.zeros(deg + 1, dtype=complex)
        for e, c in t.items():
            coeffs[e[other]] += complex(c) * value ** e[known_var]
        roots = _trimmed_roots(coeffs, 1e-10)
        if roots is None:
            continue
        if best is None or len(roots) < len(best):
            best = roots
    if best is None:
        return []
    out = []
    for y in best:
        z = np.zeros(2, dtype=complex)
        z[known_var] = value
        z[other] = y
        out.append(z)
    return out


# ------------------------------------------------------------ images, restrictions


def _tangent_directions(dim: int, count: int) -> np.ndarray:
    """Deterministic unit vectors in C^dim, quasi-uniform in direction."""
    from scipy.stats import qmc

    if dim == 1:
        ang = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.exp(1j * ang)[:, None]
    u = qmc.Halton(d=2 * dim, scramble=False).random(count + 1)[1:]
    g = np.sqrt(-2 * np.log(np.clip(u[:, :dim], 1e-12, 1))) * np.exp(2j * np.pi * u[:, dim:])
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def in_indeterminacy(f: RationalMap, a, tol: float = 1e-10) -> bool:
    x = a.coords if isinstance(a, ProjectivePoint) else np.asarray(a, dtype=complex)
    return bool(np.max(residuals(f, x)) < tol)


def point_image(f: RationalMap, a, directions: int = 64, radius: float = 1e-8) -> list[ProjectivePoint]:
    """Sample f[a]: a single value off I(f), the cluster set along rays at a otherwise."""
    x = a.coords if isinstance(a, ProjectivePoint) else np.asarray(a, dtype=complex)
    if not in_indeterminacy(f, x):
        return [ProjectivePoint(f.eval_homogeneous(x))]
    chart = int(np.argmax(np.abs(x)))
    center = np.delete(x / x[chart], chart)
    dirs = _tangent_directions(f.source.dim, directions)
    vals = f(center[None, :] + radius * dirs, chart)
    return [ProjectivePoint(v) for v in vals]


def restrict_to_line(f: RationalMap, p: Sequence, q: Sequence) -> RationalMap:
    """Pull f back along t -> t0*p + t1*q; returns a reduced map on CP^1."""
    p = [GaussianRational.coerce(c) for c in p]
    q = [GaussianRational.coerce(c) for c in q]
    if len(p) != f.nvars or len(q) != f.nvars:
        raise VariableCountMismatch("line points must live in the source space")
    t0, t1 = HomoPoly.variable(2, 0), HomoPoly.variable(2, 1)
    param = [t0.scale(a) + t1.scale(b) for a, b in zip(p, q)]
    if all(x.is_zero() for x in param):
        raise ValueError("degenerate line")
    raw = [c.substitute(param) for c in f.components]
    if all(r.is_zero() for r in raw):
        raise LineInsideIndeterminacy("the line lies inside the indeterminacy set")
    return normalize(raw, projective(1), f.name and f"{f.name}|line")


# ------------------------------------------------------------------ families


@dataclass(frozen=True, eq=False)
class MapFamily:
    """Components given as expressions in z and the sequence index n."""

    texts: tuple[str, ...]
    source: Source
    name: str = ""
    aliases: tuple[tuple[str, int], ...] = ()
    _asts: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "texts", tuple(self.texts))
        al = dict(self.aliases) or ({"z": 1} if self.source.kind == "affine" and self.source.dim == 1 else {})
        object.__setattr__(self, "aliases", tuple(sorted(al.items())))
        asts = tuple(_parse.parse_expression(t, self.source.nvars, al) for t in self.texts)
        object.__setattr__(self, "_asts", asts)

    @property
    def depends_on_n(self) -> bool:
        return any(_parse.uses_index(a) for a in self._asts)

    def instantiate(self, n: int) -> RationalMap:
        if n < 1:
            raise ValueError("family index must be at least 1")
        nv = self.source.nvars
        raw = [_parse.evaluate(a, nv, n) for a in self._asts]
        return _assemble(raw, self.source, f"{self.name}[n={n}]" if self.name else "")

    @cached_property
    def limit(self) -> RationalMap:
        """Limit of the coefficient vectors after dividing by the fastest-growing one."""
        return _family_limit(self)

    def to_json(self) -> dict:
        return {"source": self.source.to_json(), "components": list(self.texts)}


def instantiate(fam: MapFamily, n: int) -> RationalMap:
    return fam.instantiate(n)


_NSYM = sympy.Symbol("n", positive=True, integer=True)


def _family_limit(fam: MapFamily) -> RationalMap:
    nv = fam.source.nvars
    zs = sympy.symbols(f"z0:{nv}")
    comps = []
    for ast in fam._asts:
        expr = sympy.expand(_parse.to_sympy(ast, zs, _NSYM))
        poly = sympy.Poly(expr, *zs) if expr != 0 else None
        comps.append({} if poly is None else {m: sympy.simplify(c) for m, c in poly.terms() if sympy.simplify(c) != 0})
    if fam.source.kind == "affine":
        top = max((sum(e) for t in comps for e in t), default=0)
        comps = [{_bump(e, top): c for e, c in t.items()} for t in comps]
    coeffs = [c for t in comps for c in t.values()]
    if not coeffs:
        raise AllZero("family is identically zero")
    best = coeffs[0]
    for c in coeffs[1:]:
        r = sympy.limit(c / best, _NSYM, sympy.oo)
        if r.is_infinite or r == sympy.zoo or not r.is_finite:
            best = c
    out = []
    deg = max((sum(e) for t in comps for e in t), default=0)
    for t in comps:
        terms = {}
        for e, c in t.items():
            v = sympy.nsimplify(sympy.limit(c / best, _NSYM, sympy.oo))
            re, im = v.as_real_imag()
            if not (re.is_Rational and im.is_Rational):
                raise ValueError(f"non-rational limit coefficient {v}")
            g = GaussianRational(Fraction(int(re.p), int(re.q)), Fraction(int(im.p), int(im.q)))
            if g:
                terms[e] = g
        out.append(HomoPoly(nv, deg, terms))
    return normalize(out, fam.source, f"{fam.name}[limit]" if fam.name else "limit")


def _bump(e: tuple, top: int) -> tuple:
    return (e[0] + top - sum(e),) + tuple(e[1:])

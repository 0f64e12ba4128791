"""Exact arithmetic over the Gaussian rationals Q(i) and homogeneous polynomials.

Polynomials are sparse maps from exponent tuples to :class:`GaussianRational`.
The lexicographic monomial order with z0 > z1 > ... is used throughout, both
for leading terms and for the unit normalization of gcds.
"""

from __future__ import annotations

from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np


class MerodynError(Exception):
    """Base class of all errors raised by this package."""


class DegreeMismatch(MerodynError, ValueError):
    pass


class VariableCountMismatch(MerodynError, ValueError):
    pass


class BothZero(MerodynError, ValueError):
    pass


class NotDivisible(MerodynError, ArithmeticError):
    pass


class NotHomogeneous(MerodynError, ValueError):
    pass


class GaussianRational:
    """An element re + im*i of Q(i) with both parts stored as reduced Fractions."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = re if type(re) is Fraction else Fraction(re)
        self.im = im if type(im) is Fraction else Fraction(im)

    @classmethod
    def coerce(cls, x) -> "GaussianRational":
        if isinstance(x, GaussianRational):
            return x
        if isinstance(x, complex):
            return cls(Fraction(x.real), Fraction(x.imag))
        return cls(x)

    def __add__(self, other):
        other = GaussianRational.coerce(other)
        return GaussianRational(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = GaussianRational.coerce(other)
        return GaussianRational(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return GaussianRational.coerce(other) - self

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __mul__(self, other):
        other = GaussianRational.coerce(other)
        a, b, c, d = self.re, self.im, other.re, other.im
        if not b and not d:
            return GaussianRational(a * c, 0)
        return GaussianRational(a * c - b * d, a * d + b * c)

    __rmul__ = __mul__

    def inverse(self) -> "GaussianRational":
        n = self.re * self.re + self.im * self.im
        if not n:
            raise ZeroDivisionError("inverse of zero in Q(i)")
        return GaussianRational(self.re / n, -self.im / n)

    def __truediv__(self, other):
        other = GaussianRational.coerce(other)
        if not other.im:
            if not other.re:
                raise ZeroDivisionError("division by zero in Q(i)")
            return GaussianRational(self.re / other.re, self.im / other.re)
        return self * other.inverse()

    def __rtruediv__(self, other):
        return GaussianRational.coerce(other) / self

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        result = GaussianRational(1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def norm2(self) -> Fraction:
        return self.re * self.re + self.im * self.im

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.re == other and not self.im
        if not isinstance(other, GaussianRational):
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def bit_size(self) -> int:
        return sum(
            x.numerator.bit_length() + x.denominator.bit_length() for x in (self.re, self.im)
        )

    def to_text(self) -> str:
        return f"(({self.re})+({self.im})i)"

    def __repr__(self):
        if not self.im:
            return f"GaussianRational({self.re})"
        return f"GaussianRational({self.re}, {self.im})"


ZERO = GaussianRational(0)
ONE = GaussianRational(1)

Exps = tuple
Terms = dict  # Exps -> GaussianRational, never holding zeros


# --- sparse dict arithmetic shared by the polynomial class and the gcd ---


def _add(a: Terms, b: Terms, sign: int = 1) -> Terms:
    out = dict(a)
    for e, c in b.items():
        v = out.get(e)
        v = (c if sign > 0 else -c) if v is None else (v + c if sign > 0 else v - c)
        if v:
            out[e] = v
        else:
            out.pop(e, None)
    return out


def _mul(a: Terms, b: Terms) -> Terms:
    out: Terms = {}
    for e1, c1 in a.items():
        for e2, c2 in b.items():
            e = tuple(x + y for x, y in zip(e1, e2))
            v = out.get(e)
            v = c1 * c2 if v is None else v + c1 * c2
            if v:
                out[e] = v
            else:
                del out[e]
    return out


def _scale(a: Terms, c: GaussianRational) -> Terms:
    if not c:
        return {}
    return {e: v * c for e, v in a.items()}


def _shift(a: Terms, var: int, k: int) -> Terms:
    if not k:
        return a
    return {e[:var] + (e[var] + k,) + e[var + 1:]: c for e, c in a.items()}


def _divide_exact(a: Terms, b: Terms) -> Terms:
    """Quotient a / b, raising NotDivisible unless the remainder is zero."""
    if not b:
        raise ZeroDivisionError("division by the zero polynomial")
    lt_b = max(b)
    inv = b[lt_b].inverse()
    rest = {e: c for e, c in b.items() if e != lt_b}
    r = dict(a)
    q: Terms = {}
    while r:
        lt_r = max(r)
        if any(x < y for x, y in zip(lt_r, lt_b)):
            raise NotDivisible("inexact polynomial division")
        t_e = tuple(x - y for x, y in zip(lt_r, lt_b))
        t_c = r.pop(lt_r) * inv
        q[t_e] = t_c
        for e, c in rest.items():
            e2 = tuple(x + y for x, y in zip(e, t_e))
            v = r.get(e2)
            v = -(c * t_c) if v is None else v - c * t_c
            if v:
                r[e2] = v
            else:
                r.pop(e2, None)
    return q


def _monic(a: Terms) -> Terms:
    lc = a[max(a)]
    if lc == ONE:
        return a
    return _scale(a, lc.inverse())


def _degree_in(a: Terms, var: int) -> int:
    return max(e[var] for e in a)


def _coeff_in(a: Terms, var: int, k: int) -> Terms:
    return {e[:var] + (0,) + e[var + 1:]: c for e, c in a.items() if e[var] == k}


def _is_constant(a: Terms) -> bool:
    return len(a) == 1 and not any(next(iter(a)))


def _content(a: Terms, var: int) -> Terms:
    groups: dict[int, Terms] = {}
    for e, c in a.items():
        groups.setdefault(e[var], {})[e[:var] + (0,) + e[var + 1:]] = c
    polys = sorted(groups.values(), key=len)
    g = _monic(polys[0])
    for p in polys[1:]:
        if _is_constant(g):
            break
        g = _gcd(g, p)
    return g


def _prem(a: Terms, b: Terms, var: int) -> Terms:
    db = _degree_in(b, var)
    lcb = _coeff_in(b, var, db)
    r = a
    while r:
        dr = _degree_in(r, var)
        if dr < db:
            break
        lcr = _coeff_in(r, var, dr)
        r = _add(_mul(lcb, r), _shift(_mul(lcr, b), var, dr - db), -1)
    return r


def _primitive_prs_gcd(a: Terms, b: Terms, var: int) -> Terms:
    # a, b primitive in var and of positive degree in var
    if _degree_in(a, var) < _degree_in(b, var):
        a, b = b, a
    while True:
        r = _prem(a, b, var)
        if not r:
            return b
        if _degree_in(r, var) == 0:
            return {(0,) * len(next(iter(a))): ONE}
        r = _monic(_divide_exact(r, _content(r, var)))
        a, b = b, r


def _gcd(a: Terms, b: Terms) -> Terms:
    if not a:
        return _monic(b)
    if not b:
        return _monic(a)
    nv = len(next(iter(a)))
    one = {(0,) * nv: ONE}
    if _is_constant(a) or _is_constant(b):
        return one
    # monomial content first: cheap and common in the Cremona-type examples
    ma = tuple(min(e[k] for e in a) for k in range(nv))
    mb = tuple(min(e[k] for e in b) for k in range(nv))
    mono = tuple(min(x, y) for x, y in zip(ma, mb))
    if any(ma) or any(mb):
        a = {tuple(x - y for x, y in zip(e, ma)): c for e, c in a.items()}
        b = {tuple(x - y for x, y in zip(e, mb)): c for e, c in b.items()}
        g = _gcd(a, b)
        return {tuple(x + y for x, y in zip(e, mono)): c for e, c in g.items()}
    present = [k for k in range(nv) if any(e[k] for e in a) or any(e[k] for e in b)]
    var = present[0]
    da, db = _degree_in(a, var), _degree_in(b, var)
    if db == 0:
        return _gcd(_content(a, var), b)
    if da == 0:
        return _gcd(a, _content(b, var))
    ca, cb = _content(a, var), _content(b, var)
    pa, pb = _divide_exact(a, ca), _divide_exact(b, cb)
    c = _gcd(ca, cb)
    g = _primitive_prs_gcd(pa, pb, var)
    return _monic(_mul(c, g))


class HomoPoly:
    """Homogeneous polynomial in ``nvars`` variables over Q(i).

    The zero polynomial keeps a nominal ``degree`` so that it can be added to
    other polynomials of that degree.
    """

    __slots__ = ("nvars", "degree", "_terms", "_compiled", "_hash")

    def __init__(self, nvars: int, degree: int, terms: Mapping[Exps, object] | None = None):
        clean: Terms = {}
        for e, c in (terms or {}).items():
            e = tuple(int(x) for x in e)
            if len(e) != nvars:
                raise VariableCountMismatch(f"monomial {e} has {len(e)} exponents, expected {nvars}")
            if any(x < 0 for x in e):
                raise ValueError(f"negative exponent in {e}")
            c = GaussianRational.coerce(c)
            if not c:
                continue
            if sum(e) != degree:
                raise NotHomogeneous(f"monomial {e} has degree {sum(e)}, expected {degree}")
            clean[e] = c
        self.nvars = nvars
        self.degree = degree
        self._terms = clean
        self._compiled = None
        self._hash = None

    @classmethod
    def _raw(cls, nvars: int, degree: int, terms: Terms) -> "HomoPoly":
        p = cls.__new__(cls)
        p.nvars, p.degree, p._terms = nvars, degree, terms
        p._compiled = None
        p._hash = None
        return p

    @classmethod
    def from_terms(cls, nvars: int, terms: Mapping[Exps, object], degree: int | None = None) -> "HomoPoly":
        if degree is None:
            degs = {sum(e) for e in terms}
            if len(degs) > 1:
                raise NotHomogeneous(f"terms of several degrees {sorted(degs)}")
            degree = degs.pop() if degs else 0
        return cls(nvars, degree, terms)

    @classmethod
    def constant(cls, nvars: int, c=1) -> "HomoPoly":
        return cls(nvars, 0, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, k: int) -> "HomoPoly":
        e = [0] * nvars
        e[k] = 1
        return cls(nvars, 1, {tuple(e): 1})

    @classmethod
    def zero(cls, nvars: int, degree: int = 0) -> "HomoPoly":
        return cls._raw(nvars, degree, {})

    @property
    def terms(self) -> Mapping[Exps, GaussianRational]:
        return MappingProxyType(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_monomial(self) -> bool:
        return len(self._terms) == 1

    def leading_term(self) -> tuple[Exps, GaussianRational]:
        e = max(self._terms)
        return e, self._terms[e]

    def _check(self, other: "HomoPoly", same_degree: bool):
        if self.nvars != other.nvars:
            raise VariableCountMismatch(f"{self.nvars} vs {other.nvars} variables")
        if same_degree and self.degree != other.degree:
            raise DegreeMismatch(f"degree {self.degree} vs {other.degree}")

    def __add__(self, other: "HomoPoly") -> "HomoPoly":
        self._check(other, True)
        return HomoPoly._raw(self.nvars, self.degree, _add(self._terms, other._terms))

    def __sub__(self, other: "HomoPoly") -> "HomoPoly":
        self._check(other, True)
        return HomoPoly._raw(self.nvars, self.degree, _add(self._terms, other._terms, -1))

    def __neg__(self) -> "HomoPoly":
        return HomoPoly._raw(self.nvars, self.degree, {e: -c for e, c in self._terms.items()})

    def __mul__(self, other) -> "HomoPoly":
        if not isinstance(other, HomoPoly):
            return self.scale(other)
        self._check(other, False)
        return HomoPoly._raw(self.nvars, self.degree + other.degree, _mul(self._terms, other._terms))

    def __rmul__(self, other) -> "HomoPoly":
        return self.scale(other)

    def __pow__(self, k: int) -> "HomoPoly":
        result = HomoPoly.constant(self.nvars)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def scale(self, c) -> "HomoPoly":
        return HomoPoly._raw(self.nvars, self.degree, _scale(self._terms, GaussianRational.coerce(c)))

    def monic(self) -> "HomoPoly":
        if not self._terms:
            return self
        return HomoPoly._raw(self.nvars, self.degree, _monic(self._terms))

    def __eq__(self, other):
        if not isinstance(other, HomoPoly):
            return NotImplemented
        return (self.nvars, self.degree, self._terms) == (other.nvars, other.degree, other._terms)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, self.degree, frozenset(self._terms.items())))
        return self._hash

    def bit_size(self) -> int:
        return sum(c.bit_size() for c in self._terms.values())

    def derivative(self, var: int) -> "HomoPoly":
        out: Terms = {}
        for e, c in self._terms.items():
            if e[var]:
                e2 = e[:var] + (e[var] - 1,) + e[var + 1:]
                out[e2] = c * e[var]
        return HomoPoly._raw(self.nvars, max(self.degree - 1, 0), out)

    def substitute(self, polys: Sequence["HomoPoly"]) -> "HomoPoly":
        """Compose: replace variable k by ``polys[k]`` (all of one degree)."""
        if len(polys) != self.nvars:
            raise VariableCountMismatch(f"{len(polys)} substitutes for {self.nvars} variables")
        inner = polys[0]
        for q in polys[1:]:
            if q.nvars != inner.nvars:
                raise VariableCountMismatch("substitutes live in different rings")
            if q.degree != inner.degree:
                raise DegreeMismatch("substitutes must share one degree")
        powers: dict[tuple[int, int], Terms] = {}

        def power(k: int, j: int) -> Terms:
            key = (k, j)
            if key not in powers:
                if j == 0:
                    powers[key] = {(0,) * inner.nvars: ONE}
                else:
                    powers[key] = _mul(power(k, j - 1), polys[k]._terms)
            return powers[key]

        out: Terms = {}
        for e, c in self._terms.items():
            t: Terms = {(0,) * inner.nvars: c}
            for k, j in enumerate(e):
                if j:
                    t = _mul(t, power(k, j))
            out = _add(out, t)
        return HomoPoly._raw(inner.nvars, self.degree * inner.degree, out)

    def eval_exact(self, x: Sequence) -> GaussianRational:
        return eval_exact(self, x)

    def eval_float(self, x) -> np.ndarray | complex:
        return eval_float(self, x)

    def to_text(self) -> str:
        return to_text(self)

    def __repr__(self):
        return f"HomoPoly({self.nvars}, {self.degree}, {to_text(self)!r})"

    def __str__(self):
        return to_text(self)


def _check_pair(p: HomoPoly, q: HomoPoly):
    if p.nvars != q.nvars:
        raise VariableCountMismatch(f"{p.nvars} vs {q.nvars} variables")


def add(p: HomoPoly, q: HomoPoly) -> HomoPoly:
    return p + q


def mul(p: HomoPoly, q: HomoPoly) -> HomoPoly:
    return p * q


def divide_exact(p: HomoPoly, q: HomoPoly) -> HomoPoly:
    _check_pair(p, q)
    return HomoPoly._raw(p.nvars, p.degree - q.degree, _divide_exact(p._terms, q._terms))


def divides(q: HomoPoly, p: HomoPoly) -> bool:
    try:
        divide_exact(p, q)
    except NotDivisible:
        return False
    return True


def gcd(p: HomoPoly, q: HomoPoly) -> HomoPoly:
    """Greatest common divisor, normalized so its lex-leading coefficient is 1."""
    _check_pair(p, q)
    if p.is_zero() and q.is_zero():
        raise BothZero("gcd(0, 0) is undefined")
    g = _gcd(p._terms, q._terms)
    return HomoPoly._raw(p.nvars, sum(next(iter(g))), g)


def gcd_many(polys: Iterable[HomoPoly]) -> HomoPoly:
    polys = [p for p in polys if not p.is_zero()]
    if not polys:
        raise BothZero("gcd of zero polynomials")
    polys.sort(key=lambda p: (p.degree, len(p._terms)))
    g = polys[0].monic()
    for p in polys[1:]:
        if g.degree == 0:
            break
        g = gcd(g, p)
    return g


def eval_exact(p: HomoPoly, x: Sequence) -> GaussianRational:
    if len(x) != p.nvars:
        raise VariableCountMismatch(f"point of length {len(x)} for {p.nvars} variables")
    x = [GaussianRational.coerce(v) for v in x]
    total = ZERO
    for e, c in p._terms.items():
        t = c
        for v, k in zip(x, e):
            if k:
                t = t * v ** k
        total = total + t
    return total


def _compiled(p: HomoPoly):
    if p._compiled is None:
        if p._terms:
            exps = np.array(list(p._terms), dtype=np.int64).reshape(len(p._terms), p.nvars)
            coef = np.array([complex(c) for c in p._terms.values()], dtype=complex)
        else:
            exps = np.zeros((0, p.nvars), dtype=np.int64)
            coef = np.zeros(0, dtype=complex)
        p._compiled = (exps, coef)
    return p._compiled


def eval_float(p: HomoPoly, x) -> np.ndarray | complex:
    """Evaluate at one point (shape (nvars,)) or a batch (shape (..., nvars))."""
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] != p.nvars:
        raise VariableCountMismatch(f"point of length {x.shape[-1]} for {p.nvars} variables")
    exps, coef = _compiled(p)
    if not len(coef):
        out = np.zeros(x.shape[:-1], dtype=complex)
        return complex(out) if out.ndim == 0 else out
    maxdeg = int(exps.max()) if exps.size else 0
    # table of powers x_k^j for j <= maxdeg, then one product per term
    pw = np.ones(x.shape + (maxdeg + 1,), dtype=complex)
    for j in range(1, maxdeg + 1):
        pw[..., j] = pw[..., j - 1] * x
    vals = np.ones(x.shape[:-1] + (len(coef),), dtype=complex)
    for k in range(p.nvars):
        vals = vals * pw[..., k, :][..., exps[:, k]]
    out = vals @ coef
    return complex(out) if np.ndim(out) == 0 else out


def _var_name(k: int) -> str:
    return f"z{k}"


def to_text(p: HomoPoly) -> str:
    """Canonical text: terms in decreasing lex order, every exponent written out."""
    if p.is_zero():
        return "0"
    parts = []
    for e in sorted(p._terms, reverse=True):
        mono = "*".join(f"{_var_name(k)}^{j}" for k, j in enumerate(e))
        coeff = p._terms[e].to_text()
        parts.append(f"{coeff}*{mono}" if mono else coeff)
    return " + ".join(parts)

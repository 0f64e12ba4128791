"""Parser for polynomial expressions, with an optional sequence index ``n``.

The grammar accepts the canonical printer output of :mod:`merodyn.exactalg`
(``((a/b)+(c/d)i)*z0^e0*z1^e1 + ...``) and the small coefficient language used
for map families: integers, ``n``, ``i``, ``+ - * /``, integer powers, and
``b^n`` for an integer literal ``b``.  Division is only allowed by
expressions that do not involve the ``z`` variables.
"""

from __future__ import annotations

import re
from fractions import Fraction

import sympy

from .exactalg import ONE, GaussianRational, HomoPoly, MerodynError, NotHomogeneous, _add, _mul, _scale


class ExpressionError(MerodynError, ValueError):
    """Malformed expression text."""


class ExpressionDomainError(MerodynError, ArithmeticError):
    """An expression is undefined at the requested index (e.g. division by zero)."""


_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_]\w*)|(\*\*|[-+*/^()]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExpressionError(f"unexpected character {text[pos]!r} at column {pos + 1}")
        if m.group(1):
            out.append(("int", m.group(1), m.start(1)))
        elif m.group(2):
            out.append(("name", m.group(2), m.start(2)))
        else:
            op = "^" if m.group(3) == "**" else m.group(3)
            out.append(("op", op, m.start(3)))
        pos = m.end()
    return out


# AST nodes are small tuples: ("num", Fraction) ("i",) ("n",) ("var", k)
# ("add", a, b) ("sub", a, b) ("mul", a, b) ("div", a, b) ("neg", a)
# ("pow", a, int) ("pown", base:int)


class _Parser:
    def __init__(self, text: str, varnames: dict[str, int]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.varnames = varnames

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("eof", "", len(self.text))

    def take(self, kind=None, value=None):
        tok = self.peek()
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            raise ExpressionError(f"expected {want!r} at column {tok[2] + 1} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "eof":
            tok = self.peek()
            raise ExpressionError(f"unexpected {tok[1]!r} at column {tok[2] + 1} in {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in ("*", "/"):
                op = self.take()[1]
                rhs = self.unary()
                node = ("mul" if op == "*" else "div", node, rhs)
            elif tok[0] == "name" and tok[1] == "i":
                # the printed form writes the imaginary part as "(c/d)i"
                self.take()
                node = ("mul", node, ("i",))
            else:
                return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.take()
            inner = self.unary()
            return inner if tok[1] == "+" else ("neg", inner)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            if tok[0] == "name" and tok[1] == "n":
                self.take()
                if base[0] != "num" or base[1].denominator != 1:
                    raise ExpressionError(f"only integer literals may be raised to the power n (column {tok[2] + 1})")
                return ("pown", int(base[1]))
            sign = 1
            if tok[0] == "op" and tok[1] == "(":
                self.take()
                if self.peek()[1] == "-":
                    self.take()
                    sign = -1
                k = int(self.take("int")[1])
                self.take("op", ")")
            else:
                k = int(self.take("int")[1])
            return ("pow", base, sign * k)
        return base

    def atom(self):
        tok = self.peek()
        if tok[0] == "int":
            self.take()
            return ("num", Fraction(int(tok[1])))
        if tok[0] == "name":
            self.take()
            if tok[1] == "i":
                return ("i",)
            if tok[1] == "n":
                return ("n",)
            if tok[1] in self.varnames:
                return ("var", self.varnames[tok[1]])
            raise ExpressionError(f"unknown name {tok[1]!r} at column {tok[2] + 1}")
        if tok[0] == "op" and tok[1] == "(":
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        raise ExpressionError(f"unexpected {tok[1] or 'end of input'!r} at column {tok[2] + 1} in {self.text!r}")


def _default_varnames(nvars: int, aliases: dict[str, int] | None) -> dict[str, int]:
    names = {f"z{k}": k for k in range(nvars)}
    names.update(aliases or {})
    return names


def parse_expression(text: str, nvars: int, aliases: dict[str, int] | None = None):
    return _Parser(text, _default_varnames(nvars, aliases)).parse()


def uses_index(node) -> bool:
    if node[0] in ("n", "pown"):
        return True
    return any(isinstance(c, tuple) and uses_index(c) for c in node[1:])


def _eval(node, nvars: int, n: int | None) -> dict:
    kind = node[0]
    zero = (0,) * nvars
    if kind == "num":
        return {zero: GaussianRational(node[1])} if node[1] else {}
    if kind == "i":
        return {zero: GaussianRational(0, 1)}
    if kind == "n":
        if n is None:
            raise ExpressionDomainError("expression uses n but no index was given")
        return {zero: GaussianRational(n)} if n else {}
    if kind == "pown":
        if n is None:
            raise ExpressionDomainError("expression uses n but no index was given")
        if node[1] == 0 and n <= 0:
            raise ExpressionDomainError(f"0^{n} is undefined")
        return {zero: GaussianRational(Fraction(node[1]) ** n)}
    if kind == "var":
        e = [0] * nvars
        e[node[1]] = 1
        return {tuple(e): ONE}
    if kind == "neg":
        return {e: -c for e, c in _eval(node[1], nvars, n).items()}
    if kind in ("add", "sub"):
        return _add(_eval(node[1], nvars, n), _eval(node[2], nvars, n), 1 if kind == "add" else -1)
    if kind == "mul":
        return _mul(_eval(node[1], nvars, n), _eval(node[2], nvars, n))
    if kind == "div":
        den = _eval(node[2], nvars, n)
        if not den:
            raise ExpressionDomainError(f"division by zero at n={n}")
        if len(den) != 1 or any(next(iter(den))):
            raise ExpressionError("division by a non-constant expression")
        return _scale(_eval(node[1], nvars, n), den[zero].inverse())
    if kind == "pow":
        base = _eval(node[1], nvars, n)
        k = node[2]
        if k < 0:
            if not base:
                raise ExpressionDomainError(f"zero to a negative power at n={n}")
            if len(base) != 1 or any(next(iter(base))):
                raise ExpressionError("negative power of a non-constant expression")
            return {zero: base[zero] ** k}
        out = {zero: ONE}
        for _ in range(k):
            out = _mul(out, base)
        return out
    raise AssertionError(kind)


def evaluate(node, nvars: int, n: int | None = None) -> dict:
    """Evaluate an AST to a sparse term map (not necessarily homogeneous)."""
    return _eval(node, nvars, n)


def to_sympy(node, zsyms, nsym):
    kind = node[0]
    if kind == "num":
        return sympy.Rational(node[1].numerator, node[1].denominator)
    if kind == "i":
        return sympy.I
    if kind == "n":
        return nsym
    if kind == "pown":
        return sympy.Integer(node[1]) ** nsym
    if kind == "var":
        return zsyms[node[1]]
    if kind == "neg":
        return -to_sympy(node[1], zsyms, nsym)
    a = to_sympy(node[1], zsyms, nsym)
    if kind == "pow":
        return a ** node[2]
    b = to_sympy(node[2], zsyms, nsym)
    return {"add": a + b, "sub": a - b, "mul": a * b, "div": a / b}[kind]


def homogenize(terms: dict, nvars: int, var: int = 0, degree: int | None = None) -> tuple[dict, int]:
    """Multiply each term by a power of ``var`` to reach a common degree."""
    if not terms:
        return {}, degree or 0
    top = max(sum(e) for e in terms)
    d = top if degree is None else degree
    if d < top:
        raise NotHomogeneous(f"cannot homogenize degree {top} terms to degree {d}")
    out = {}
    for e, c in terms.items():
        e2 = list(e)
        e2[var] += d - sum(e)
        out[tuple(e2)] = c
    return out, d


def parse_poly(text: str, nvars: int, degree: int | None = None,
               aliases: dict[str, int] | None = None) -> HomoPoly:
    """Parse a homogeneous polynomial; ``degree`` is required only for ``"0"``."""
    terms = evaluate(parse_expression(text, nvars, aliases), nvars)
    if not terms:
        return HomoPoly.zero(nvars, degree or 0)
    return HomoPoly.from_terms(nvars, terms, degree)

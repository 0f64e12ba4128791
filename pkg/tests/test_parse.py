from __future__ import annotations

from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from merodyn.exactalg import GaussianRational
from merodyn.parse import (
    ExpressionDomainError,
    ExpressionError,
    evaluate,
    homogenize,
    parse_expression,
    parse_poly,
    uses_index,
)


def test_family_coefficients_exact():
    node = parse_expression("(z1 - 1/n)*z2 + 2^n*z0^2", 3)
    assert uses_index(node)
    terms = evaluate(node, 3, 3)
    assert terms == {
        (0, 1, 1): GaussianRational(1),
        (0, 0, 1): GaussianRational(Fraction(-1, 3)),
        (2, 0, 0): GaussianRational(8),
    }


def test_constant_expression_has_no_index():
    assert not uses_index(parse_expression("z0*z1 - i*z2^2", 3))


def test_division_by_zero_at_index():
    node = parse_expression("1/(n-2)*z0", 3)
    assert evaluate(node, 3, 3) == {(1, 0, 0): GaussianRational(1)}
    with pytest.raises(ExpressionDomainError):
        evaluate(node, 3, 2)


@pytest.mark.parametrize("text", ["z1 +", "z3", "n^n*z0", "foo", "(z0", "z0^(1/2)", "z0 z1"])
def test_malformed_expressions(text):
    with pytest.raises(ExpressionError):
        parse_expression(text, 3)


def test_aliases():
    assert evaluate(parse_expression("z^2 - 1", 2, {"z": 1}), 2) == {
        (0, 2): GaussianRational(1), (0, 0): GaussianRational(-1)}


def test_homogenize_affine_terms():
    terms = {(0, 2): GaussianRational(1), (0, 0): GaussianRational(-1)}
    hom, d = homogenize(terms, 2, 0)
    assert d == 2
    assert hom == {(0, 2): GaussianRational(1), (2, 0): GaussianRational(-1)}


def test_parse_poly_gaussian_text():
    p = parse_poly("((1/2)+(-3)i)*z0^1*z1^0*z2^0 + ((0)+(1)i)*z0^0*z1^1*z2^0", 3)
    assert p.terms[(1, 0, 0)] == GaussianRational(Fraction(1, 2), -3)
    assert p.terms[(0, 1, 0)] == GaussianRational(0, 1)


# random expressions in a small grammar, checked against sympy
atoms = st.sampled_from(["z0", "z1", "z2", "n", "1", "2", "3", "i", "(1/n)", "2^n", "(n+1)"])


@st.composite
def expressions(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(atoms)
    op = draw(st.sampled_from(["+", "-", "*"]))
    left = draw(expressions(depth=depth - 1))
    right = draw(expressions(depth=depth - 1))
    return f"({left} {op} {right})"


@settings(max_examples=300)
@given(expressions(), st.integers(1, 6))
def test_evaluate_matches_sympy(text, n):
    terms = evaluate(parse_expression(text, 3), 3, n)
    zs = sympy.symbols("z0:3")
    env = {"z0": zs[0], "z1": zs[1], "z2": zs[2], "n": sympy.Integer(n), "i": sympy.I}
    ref = sympy.Poly(sympy.expand(sympy.sympify(text.replace("^", "**"), locals=env)), *zs)
    mine = {}
    for e, c in terms.items():
        if c:
            mine[e] = sympy.Rational(c.re.numerator, c.re.denominator) + sympy.I * sympy.Rational(c.im.numerator, c.im.denominator)
    theirs = {e: sympy.nsimplify(c) for e, c in ref.terms() if c != 0}
    assert mine == theirs


def test_division_by_polynomial_rejected():
    with pytest.raises(ExpressionError):
        evaluate(parse_expression("1/z0", 3), 3, 1)

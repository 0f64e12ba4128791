from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from merodyn.exactalg import (
    BothZero,
    DegreeMismatch,
    GaussianRational,
    HomoPoly,
    NotDivisible,
    NotHomogeneous,
    VariableCountMismatch,
    add,
    divide_exact,
    divides,
    gcd,
    gcd_many,
    mul,
)
from merodyn.parse import parse_poly

from conftest import gaussian, gr, homopolys, nonzero_homopolys


def P(text, nvars=3):
    return parse_poly(text, nvars)


Z0, Z1, Z2 = (HomoPoly.variable(3, k) for k in range(3))


def to_sympy(p: HomoPoly):
    zs = sympy.symbols("z0:3")
    out = 0
    for e, c in p.terms.items():
        mon = 1
        for z, k in zip(zs, e):
            mon *= z ** k
        out += (sympy.Rational(c.re.numerator, c.re.denominator)
                + sympy.I * sympy.Rational(c.im.numerator, c.im.denominator)) * mon
    return sympy.expand(out), zs


# ------------------------------------------------------------ Gaussian rationals


def test_gaussian_rational_lowest_terms():
    g = GaussianRational(Fraction(6, -4), Fraction(10, 20))
    assert (g.re.numerator, g.re.denominator) == (-3, 2)
    assert (g.im.numerator, g.im.denominator) == (1, 2)


@given(gaussian, gaussian)
def test_field_cancellation(a, b):
    assert (a + b) - b == a
    if b:
        assert (a * b) / b == a


def test_imaginary_unit_squared():
    i = GaussianRational(0, 1)
    assert i * i == GaussianRational(-1)


# ------------------------------------------------------------------ add / mul


def test_add_doubles():
    assert add(Z0 * Z1, Z0 * Z1) == (Z0 * Z1).scale(2)


def test_add_zero_is_identity():
    p = P("z0^2 - 3*z1*z2")
    assert add(p, HomoPoly.zero(3, 2)) == p


def test_add_telescoping():
    assert add(P("z0^2 - z1^2"), P("z1^2 - z2^2")) == P("z0^2 - z2^2")


def test_add_degree_mismatch():
    with pytest.raises(DegreeMismatch):
        add(Z0, Z0 * Z1)


def test_variable_count_mismatch():
    with pytest.raises(VariableCountMismatch):
        mul(Z0, HomoPoly.variable(2, 0))


def test_mul_examples():
    assert mul(Z0, Z1) == P("z0*z1")
    p = P("z0^2 + 2*z1*z2")
    assert mul(p, HomoPoly.constant(3, 1)) == p
    assert mul(Z0 + Z1, Z0 - Z1) == P("z0^2 - z1^2")


def test_inhomogeneous_terms_rejected():
    with pytest.raises(NotHomogeneous):
        HomoPoly(3, 2, {(1, 0, 0): 1})


def test_zero_polynomial_keeps_degree():
    z = HomoPoly.zero(3, 4)
    assert z.is_zero() and z.degree == 4 and not z.terms


@settings(max_examples=200)
@given(homopolys(degree=2), homopolys(degree=2), homopolys(degree=2))
def test_ring_axioms_additive(p, q, r):
    assert (p + q) + r == p + (q + r)
    assert p + q == q + p
    assert p - p == HomoPoly.zero(3, 2)


@settings(max_examples=200)
@given(homopolys(max_degree=2), homopolys(max_degree=2), homopolys(degree=2), homopolys(degree=2))
def test_ring_axioms_multiplicative(p, q, r, s):
    assert (p * q) * r == p * (q * r)
    assert p * q == q * p
    assert p * (r + s) == p * r + p * s


@settings(max_examples=100)
@given(homopolys(max_degree=3), homopolys(max_degree=2))
def test_mul_matches_sympy(p, q):
    a, zs = to_sympy(p)
    b, _ = to_sympy(q)
    c, _ = to_sympy(p * q)
    assert sympy.expand(a * b - c) == 0


# ----------------------------------------------------------------- evaluation


def test_eval_exact_examples():
    assert (Z0 * Z1).eval_exact([gr(2), gr(3), gr(0)]) == gr(6)
    assert (Z0 * Z1).eval_exact([gr(0, 2), gr(3), gr(0)]) == gr(0, 6)


def test_eval_exact_wrong_length():
    with pytest.raises(VariableCountMismatch):
        (Z0 * Z1).eval_exact([gr(1), gr(2)])


@settings(max_examples=200)
@given(homopolys(max_degree=4), st.lists(gaussian, min_size=3, max_size=3), gaussian)
def test_eval_exact_homogeneity(p, x, lam):
    lhs = p.eval_exact([lam * c for c in x])
    assert lhs == (lam ** p.degree) * p.eval_exact(x)


def test_eval_float_examples():
    assert (Z0 * Z1).eval_float(np.array([1.0, 2.0, 0.0])) == pytest.approx(2.0)
    assert HomoPoly.zero(3, 2).eval_float(np.array([1.0, 2.0, 3.0])) == 0.0


@settings(max_examples=200)
@given(homopolys(max_degree=8, max_terms=6), st.lists(gaussian, min_size=3, max_size=3))
def test_eval_float_matches_exact(p, x):
    exact = complex(p.eval_exact(x))
    approx = complex(p.eval_float(np.array([complex(c) for c in x])))
    scale = sum(abs(complex(c)) * max(1.0, max(abs(complex(v)) for v in x)) ** p.degree for c in p.terms.values())
    assert abs(approx - exact) <= 1e-10 * max(scale, 1e-300)


def test_eval_float_batched():
    p = P("z0^2 - 3*z1*z2")
    x = np.array([[1, 2, 3], [0.5, 1j, -1]], dtype=complex)
    v = p.eval_float(x)
    assert np.allclose(v, [1 - 18, 0.25 + 3j])


# ------------------------------------------------------------------------ gcd


def test_gcd_shared_variable():
    assert gcd(Z0 * Z1, Z0 * Z2) == Z0


def test_gcd_known_common_factor():
    c = Z0 * Z1 * Z2
    g = gcd(c * Z0, c * Z1)
    assert g == c
    assert divides(g, c * Z0) and divides(g, c * Z1)


def test_gcd_difference_of_squares():
    g = gcd(P("z0^2 - z1^2"), P("z0 - z1"))
    assert g == P("z0 - z1")


def test_gcd_leading_coefficient_is_one():
    g = gcd(P("3*z0^2 - 3*z1^2"), P("6*z0 + 6*z1"))
    lead = max(g.terms)  # lexicographic order with z0 > z1 > z2
    assert g.terms[lead] == gr(1)


def test_gcd_both_zero():
    with pytest.raises(BothZero):
        gcd(HomoPoly.zero(3, 1), HomoPoly.zero(3, 2))


def test_gcd_with_zero_is_monic_other():
    p = P("2*z0*z1 + 4*z2^2")
    assert gcd(p, HomoPoly.zero(3, 2)) == p.monic()


def test_divide_exact_raises():
    with pytest.raises(NotDivisible):
        divide_exact(P("z0^2 + z1^2"), P("z0 + z2"))


def test_gcd_matches_sympy():
    p = P("(z0 + i*z1)^2*(z1 - 2*z2)")
    q = P("(z0 + i*z1)*(z1 - 2*z2)*(z0 + z2)")
    g, zs = to_sympy(gcd(p, q))
    a, _ = to_sympy(p)
    b, _ = to_sympy(q)
    ref = sympy.gcd(a, b, extension=sympy.I)
    assert sympy.simplify(g / ref).is_constant()


@settings(max_examples=1000)
@given(nonzero_homopolys(max_degree=2), nonzero_homopolys(max_degree=2), nonzero_homopolys(max_degree=1))
def test_gcd_divides_exactly(a, b, c):
    p, q = a * c, b * c
    g = gcd(p, q)
    assert divides(g, p) and divides(g, q)
    # the planted factor divides the gcd
    assert divides(c.monic() if c.degree else HomoPoly.constant(3, 1), g) or c.degree == 0


def test_gcd_many():
    c = P("z0 - z2")
    assert gcd_many([c * Z0, c * Z1, c * Z2]) == c


# ------------------------------------------------------------ text round trip


@settings(max_examples=300)
@given(homopolys(max_degree=4, max_terms=6))
def test_text_round_trip(p):
    text = p.to_text()
    q = parse_poly(text, 3, p.degree)
    assert q == p
    assert q.to_text() == text


def test_text_format():
    assert (Z0 * Z1).to_text() == "((1)+(0)i)*z0^1*z1^1*z2^0"

from __future__ import annotations

from fractions import Fraction

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from merodyn.exactalg import GaussianRational, HomoPoly

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

small_fraction = st.fractions(min_value=-5, max_value=5, max_denominator=7)
gaussian = st.builds(GaussianRational, small_fraction, small_fraction)


def monomials(nvars: int, degree: int):
    if nvars == 1:
        return [(degree,)]
    return [(k,) + rest for k in range(degree, -1, -1) for rest in monomials(nvars - 1, degree - k)]


@st.composite
def homopolys(draw, nvars: int = 3, degree=None, max_degree: int = 3, max_terms: int = 4):
    d = draw(st.integers(0, max_degree)) if degree is None else degree
    mons = monomials(nvars, d)
    chosen = draw(st.lists(st.sampled_from(mons), min_size=1, max_size=max_terms, unique=True))
    return HomoPoly(nvars, d, {e: draw(gaussian) for e in chosen})


@st.composite
def nonzero_homopolys(draw, nvars: int = 3, degree=None, max_degree: int = 2, max_terms: int = 3):
    p = draw(homopolys(nvars, degree, max_degree, max_terms))
    if p.is_zero():
        return HomoPoly.variable(nvars, 0) ** max(p.degree, 0) if p.degree else HomoPoly.constant(nvars, 1)
    return p


def gr(re, im=0) -> GaussianRational:
    return GaussianRational(Fraction(re), Fraction(im))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

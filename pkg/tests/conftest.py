from fractions import Fraction

import sympy
from hypothesis import strategies as st

from lenard.potential import diffpoly_to_sympy, x_symbol
from lenard.ring import DiffPoly

Vf = sympy.Function("V")(x_symbol)


def as_sympy(p: DiffPoly) -> sympy.Expr:
    """Oracle view: jet variables become derivatives of an undefined V(x)."""
    return sympy.expand(diffpoly_to_sympy(p, Vf))


small_fractions = st.fractions(min_value=-5, max_value=5, max_denominator=6)


@st.composite
def diffpolys(draw, max_terms=4, max_order=3, max_xdeg=2, max_power=2, x_free=False):
    terms = {}
    for _ in range(draw(st.integers(0, max_terms))):
        xdeg = 0 if x_free else draw(st.integers(0, max_xdeg))
        jet = tuple(draw(st.integers(0, max_power)) for _ in range(max_order + 1))
        terms[(xdeg, jet)] = terms.get((xdeg, jet), Fraction(0)) + draw(small_fractions)
    return DiffPoly(terms)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

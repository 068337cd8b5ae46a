import math

import numpy as np
import pytest
import sympy

from lenard.errors import Blowup, NotConstant, XiVanishes
from lenard.potential import ClosedFormPotential, x_symbol
from lenard.quadrature import determining_residuals, find_xi, first_integral, solve

x = x_symbol
SECH_XI = (x * sympy.tanh(x) - 1) ** 2 + 2 * sympy.tanh(x) ** 2


def span_defect(funcs, basis, xs):
    """Largest least-squares residual of each function against ``basis``."""
    B = np.column_stack([b(xs) for b in basis])
    worst = 0.0
    for fn in funcs:
        y = fn(xs)
        coef, *_ = np.linalg.lstsq(B, y, rcond=None)
        worst = max(worst, float(np.max(np.abs(B @ coef - y))) / max(1.0, float(np.max(np.abs(y)))))
    return worst


@pytest.mark.parametrize(
    "xi,eta,V",
    [("1", "0", "0"), ("x", "-1/2", "-2/x**2"), ("x**2", "-x", "0"), (SECH_XI, -sympy.diff(SECH_XI, x) / 2, "-2*sech(x)**2")],
)
def test_determining_residuals_vanish(xi, eta, V):
    xs = np.linspace(0.5, 3, 17)
    for r in determining_residuals(xi, eta, V):
        assert np.max(np.abs(r(xs))) < 1e-12


def test_determining_residuals_detect_non_symmetry():
    r1, r2 = determining_residuals("x", "0", "-2/x**2")
    assert np.max(np.abs(r1(np.array([1.0, 2.0])))) == pytest.approx(0.0)
    r1, r2 = determining_residuals("x**3", "0", "0")
    assert np.max(np.abs(r1(np.array([1.0])))) > 1


@pytest.mark.parametrize(
    "xi,V,interval,alpha",
    [("1", "0", (-1, 1), 0.0), ("1 + x**2", "0", (-2, 2), 1.0), ("x", "-2/x**2", (0.5, 3), 1.75), ("x", "0", (0.1, 3), -0.25)],
)
def test_first_integral_values(xi, V, interval, alpha):
    assert first_integral(xi, V, interval) == pytest.approx(alpha, abs=1e-12)


def test_first_integral_constant_at_100_points():
    pot = ClosedFormPotential("V", "-2/x**2")
    xs = np.linspace(0.5, 5, 100)
    e = x
    vals = [float((e * sympy.diff(e, x, 2) / 2 - sympy.diff(e, x) ** 2 / 4 - pot.expr * e**2).subs(x, t)) for t in xs]
    assert (max(vals) - min(vals)) / abs(np.mean(vals)) < 1e-9


def test_first_integral_rejects_non_symmetry():
    with pytest.raises(NotConstant):
        first_integral("x**3", "0", (0.5, 2))


def test_zero_potential_kernels():
    xs = np.linspace(0.2, 4, 200)
    kernel = [lambda t: np.ones_like(t), lambda t: t]
    for xi, interval, branch in [("1", (0.1, 5), "linear"), ("x", (0.1, 5), "hyperbolic"), ("1 + x**2", (0.1, 5), "oscillatory")]:
        sol = solve(xi, "0", interval, tol=1e-10)
        assert sol.branch == branch
        assert sol.residual < 1e-10
        assert span_defect(sol.basis, kernel, xs) < 1e-10
        assert span_defect(kernel, sol.basis, xs) < 1e-10


def test_zero_potential_xi_x_exponent():
    sol = solve("x", "0", (0.1, 5))
    assert sol.alpha == pytest.approx(-0.25)
    assert sol.a == pytest.approx(0.5)
    f = sol.f(np.array([1.0, math.e]))
    assert f[1] - f[0] == pytest.approx(1.0)


def test_inverse_square_oscillatory_branch():
    sol = solve("x", "-2/x**2", (0.5, 5))
    assert sol.branch == "oscillatory"
    assert sol.alpha_exact == sympy.Rational(7, 4)
    assert sol.a == pytest.approx(math.sqrt(7) / 2)
    xs = np.linspace(0.6, 4.9, 80)
    oracle = [
        lambda t: np.sqrt(t) * np.cos(math.sqrt(7) / 2 * np.log(t)),
        lambda t: np.sqrt(t) * np.sin(math.sqrt(7) / 2 * np.log(t)),
    ]
    assert span_defect(sol.basis, oracle, xs) < 1e-12
    assert span_defect(oracle, sol.basis, xs) < 1e-12
    assert sol.residual < 1e-8


def test_negative_xi_branch():
    sol = solve("-x", "0", (-5, -0.1))
    xs = np.linspace(-4.9, -0.2, 50)
    assert np.all(np.isfinite(sol.basis[0](xs)))
    assert span_defect(sol.basis, [lambda t: np.ones_like(t), lambda t: t], xs) < 1e-10


def test_xi_zero_inside_interval():
    with pytest.raises(XiVanishes):
        solve("x", "0", (-1, 1))
    with pytest.raises(XiVanishes):
        solve("x**2 - 1", "0", (0, 2))


def test_residual_bound_relative_to_size():
    sol = solve(SECH_XI, "-2*sech(x)**2", (-3, 3))
    lo, hi = sol.interval
    xs = np.linspace(lo, hi, 301)[1:-1]
    for psi, r in zip(sol.basis, sol.schrodinger_residuals(xs)):
        assert np.max(np.abs(r)) < 1e-8 * (1 + np.max(np.abs(psi(xs))))
    assert sol.alpha_exact == 2


def test_branch_dichotomy_is_continuous():
    xs = np.linspace(-1, 1, 101)
    kernel = [lambda t: np.ones_like(t), lambda t: t]
    for xi, branch in [("1 + x**2/1000000", "oscillatory"), ("1 - x**2/1000000", "hyperbolic"), ("1", "linear")]:
        sol = solve(xi, "0", (-1, 1))
        assert sol.branch == branch
        assert abs(sol.alpha) <= 1e-6 * (1 + 1e-12)
        assert span_defect(sol.basis, kernel, xs) < 1e-9


def test_find_xi_trivial_and_exact_cases():
    xi = find_xi("0", (-2, 2), (1, 0, 0), x0=0)
    xs = np.linspace(-2, 2, 21)
    assert np.max(np.abs(xi(xs) - 1)) < 1e-12
    pot = ClosedFormPotential("V", "-2/x**2", (0, math.inf), (0,))
    xi = find_xi(pot, (0.5, 4), (1, 1, 0), x0=1)
    xs = np.linspace(0.5, 4, 21)
    assert np.max(np.abs(xi(xs) - xs)) < 1e-9


def test_find_xi_matches_closed_form_on_well():
    pot = ClosedFormPotential("V", "-2*sech(x)**2")
    xi = find_xi(pot, (-3, 3), (1, 0, 0), x0=0)
    xs = np.linspace(-2.9, 2.9, 59)
    exact = sympy.lambdify(x, SECH_XI, "numpy")(xs)
    assert np.max(np.abs(xi(xs) - exact)) < 1e-9
    numeric = solve(xi, pot, (-2, 2))
    assert numeric.alpha == pytest.approx(2.0, abs=1e-8)
    assert numeric.residual < 1e-8


def test_find_xi_soliton_residuals():
    pot = ClosedFormPotential("V", "2*sech(x)**2")
    xi = find_xi(pot, (-3, 3), (1, 0, 0), x0=0)
    xs = np.linspace(-2.8, 2.8, 57)
    _, r2 = determining_residuals(xi, None, pot)
    assert np.max(np.abs(r2(xs))) < 1e-8


def test_find_xi_blowup():
    with pytest.raises(Blowup) as info:
        find_xi("100", (0, 3), (1, 1, 1), x0=0)
    assert 0 < info.value.abscissa < 3

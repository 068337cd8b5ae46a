"""Integration of ``-psi'' + V psi = 0`` by quadratures from a first-order symmetry.

For ``X = xi d/dx + eta`` the commutator ``[X, H] = r H`` with
``H = -d^2/dx^2 + V`` forces ``r = -2 xi'`` and

    2 eta' + xi'' = 0,        eta'' + xi V' + 2 xi' V = 0,

so ``eta = -xi'/2 + k`` and ``xi''' = 2 V' xi + 4 V xi'``.  Along any such
``xi`` the quantity

    alpha = xi xi''/2 - xi'^2/4 - V xi^2

is constant, and ``psi = sqrt|xi| g(f)`` with ``f = int dx/xi`` turns the
Schrödinger equation into ``g'' + alpha g = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy
from scipy.integrate import quad, solve_ivp

from .errors import Blowup, NotConstant, XiVanishes
from .potential import ClosedFormPotential, PotentialSpec, as_x_expr, parse_expression, x_symbol

__all__ = [
    "QuadratureSolution",
    "SampledXi",
    "determining_residuals",
    "first_integral",
    "solve",
    "find_xi",
]

x = x_symbol


_t = sympy.Symbol("t", positive=True)


def _reduce_exact(expr):
    """Canonical form when ``expr`` is rational in ``x`` and ``exp(x)``, else ``None``.

    Hyperbolic functions are rewritten through ``exp``; ``exp(q x)`` with
    rational ``q`` becomes ``t**q``.  General ``simplify`` is avoided because
    it can stall on products of hyperbolic terms.
    """
    e = expr.rewrite(sympy.exp)

    def to_t(arg):
        q = sympy.cancel(arg / x)
        return _t**q if q.is_Rational else None

    bad = False

    def repl(node):
        nonlocal bad
        out = to_t(node.args[0])
        if out is None:
            bad = True
            return node
        return out

    e = e.replace(lambda n: isinstance(n, sympy.exp), repl)
    if bad or not e.is_rational_function(x, _t):
        return None
    return sympy.cancel(sympy.together(e))


def _as_potential(V) -> PotentialSpec:
    if isinstance(V, PotentialSpec):
        return V
    return ClosedFormPotential("V", V)


def _as_expr(value):
    if isinstance(value, str):
        return parse_expression(value)
    return as_x_expr(value)


class SampledXi:
    """Numerical solution of the xi equation with ``xi, xi', xi''`` from the state."""

    def __init__(self, sols, domain, pot: PotentialSpec):
        self._sols = sols
        self.domain = domain
        self.pot = pot

    def derivatives(self, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        out = np.empty((3, xs.size))
        for lo, hi, sol in self._sols:
            mask = (xs >= lo) & (xs <= hi)
            if np.any(mask):
                out[:, mask] = sol(xs[mask])
        return out

    def __call__(self, xs):
        return self.derivatives(xs)[0]

    def third_derivative_fd(self, xs, h: float = 2e-3) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        lo, hi = self.domain
        h = np.minimum(h, np.maximum(np.minimum(xs - lo, hi - xs) / 2.0, 1e-6))
        f = lambda s: self.derivatives(np.clip(xs + s * h, lo, hi))[2]
        return (f(-2) - 8 * f(-1) + 8 * f(1) - f(2)) / (12 * h)


class _ClosedXi:
    """Lambdified ``xi, xi', xi''`` of a closed-form expression."""

    def __init__(self, expr):
        self.expr = expr
        self._fns = [sympy.lambdify(x, sympy.diff(expr, x, k), "numpy") for k in range(3)]

    def derivatives(self, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        return np.array([np.broadcast_to(np.asarray(fn(xs), dtype=float), xs.shape) for fn in self._fns])


def _xi_evaluator(xi):
    if isinstance(xi, (SampledXi, _ClosedXi)):
        return xi
    return _ClosedXi(_as_expr(xi))


def _xi_jets(xi, xs) -> np.ndarray:
    """Rows xi, xi', xi'' at ``xs``."""
    return _xi_evaluator(xi).derivatives(xs)


def determining_residuals(xi, eta, V):
    """The pair ``(2 eta' + xi'', eta'' + xi V' + 2 xi' V)`` as numpy callables.

    With symbolic ``xi``, ``eta`` and a closed-form ``V`` the residuals are
    simplified symbolically first; the callables then carry an ``expr`` attribute.
    """
    pot = _as_potential(V)
    if not isinstance(xi, SampledXi) and isinstance(pot, ClosedFormPotential):
        xi_e, eta_e, V_e = _as_expr(xi), _as_expr(eta), pot.expr
        raw = (
            2 * sympy.diff(eta_e, x) + sympy.diff(xi_e, x, 2),
            sympy.diff(eta_e, x, 2) + xi_e * sympy.diff(V_e, x) + 2 * sympy.diff(xi_e, x) * V_e,
        )
        out = []
        for e in raw:
            reduced = _reduce_exact(e)
            if reduced is not None and not reduced.has(_t):
                e = reduced
            fn = sympy.lambdify(x, e, "numpy")

            def wrapped(xs, fn=fn):
                xs = np.asarray(xs, dtype=float)
                return np.broadcast_to(np.asarray(fn(xs), dtype=float), xs.shape)

            wrapped.expr = e
            out.append(wrapped)
        return tuple(out)

    if not isinstance(xi, SampledXi):
        raise TypeError("numerical residuals need a SampledXi")

    def r1(xs):
        # eta = -xi'/2 + k by construction
        return np.zeros_like(np.asarray(xs, dtype=float))

    def r2(xs):
        xs = np.asarray(xs, dtype=float)
        j = xi.derivatives(xs)
        Vd = pot.derivatives(xs, 1)
        return -0.5 * xi.third_derivative_fd(xs) + j[0] * Vd[1] + 2 * j[1] * Vd[0]

    return r1, r2


def _alpha_values(xi, pot: PotentialSpec, xs) -> np.ndarray:
    j = _xi_jets(xi, xs)
    Vx = pot.derivatives(xs, 0)[0]
    return j[0] * j[2] / 2 - j[1] ** 2 / 4 - Vx * j[0] ** 2


def _alpha_exact(xi, pot: PotentialSpec):
    if isinstance(xi, SampledXi) or not isinstance(pot, ClosedFormPotential):
        return None
    e = _as_expr(xi)
    alpha = _reduce_exact(e * sympy.diff(e, x, 2) / 2 - sympy.diff(e, x) ** 2 / 4 - pot.expr * e**2)
    if alpha is None or alpha.free_symbols:
        return None
    return sympy.nsimplify(alpha) if alpha.is_Float else alpha


def first_integral(xi, V, interval: tuple = (-1.0, 1.0), tol: float = 1e-9, npts: int = 100) -> float:
    """Constant ``alpha = xi xi''/2 - xi'^2/4 - V xi^2`` along ``interval``.

    Raises :class:`NotConstant` if the sampled values spread by more than
    ``tol`` relative to ``max(|alpha|, 1)``.
    """
    pot = _as_potential(V)
    exact = _alpha_exact(xi, pot)
    xs = np.linspace(interval[0], interval[1], npts + 2)[1:-1]
    values = _alpha_values(xi, pot, xs)
    mean = float(np.mean(values))
    spread = float(np.max(values) - np.min(values))
    if spread > tol * max(abs(mean), 1.0):
        raise NotConstant(f"alpha drifts by {spread:.3g} around {mean:.6g} on {interval}")
    return float(exact) if exact is not None else mean


@dataclass
class QuadratureSolution:
    """General solution ``psi = sqrt|xi| * {linear, cos/sin, cosh/sinh}(a f)``."""

    xi: object
    eta: Callable
    alpha: float
    f: Callable
    branch: str
    interval: tuple
    a: float
    basis: tuple
    second_derivatives: tuple
    potential: PotentialSpec
    alpha_exact: object = None
    basis_exprs: tuple | None = None
    k: float = 0.0
    residual: float = field(default=math.nan)

    def schrodinger_residuals(self, xs) -> tuple:
        xs = np.asarray(xs, dtype=float)
        Vx = self.potential.derivatives(xs, 0)[0]
        return tuple(-d2(xs) + Vx * psi(xs) for psi, d2 in zip(self.basis, self.second_derivatives))

    def sample(self, npts: int = 201) -> np.ndarray:
        """Columns x, psi1, psi2, residual1, residual2 on an interior grid."""
        lo, hi = self.interval
        xs = np.linspace(lo, hi, npts + 2)[1:-1]
        r1, r2 = self.schrodinger_residuals(xs)
        return np.column_stack([xs, self.basis[0](xs), self.basis[1](xs), r1, r2])


def _branch(alpha: float, exact, atol: float) -> str:
    if exact is not None:
        sign = sympy.sign(exact)
        return "linear" if sign == 0 else ("oscillatory" if sign > 0 else "hyperbolic")
    if abs(alpha) <= atol:
        return "linear"
    return "oscillatory" if alpha > 0 else "hyperbolic"


def _check_nonvanishing(xi, interval):
    lo, hi = interval
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise ValueError(f"solve needs a finite open interval, got {interval}")
    if not isinstance(xi, SampledXi):
        e = _as_expr(xi)
        if e.is_rational_function(x):
            num, _ = sympy.fraction(sympy.together(e))
            roots = sympy.solveset(num, x, sympy.Interval.open(sympy.nsimplify(lo), sympy.nsimplify(hi)))
            if roots != sympy.S.EmptySet:
                raise XiVanishes(f"xi = {e} vanishes at {roots} inside {interval}")
    xs = np.linspace(lo, hi, 4001)[1:-1]
    vals = _xi_jets(xi, xs)[0]
    if np.any(np.abs(vals) < 1e-300) or np.any(np.sign(vals[:-1]) != np.sign(vals[1:])):
        raise XiVanishes(f"xi changes sign or vanishes inside {interval}")


def solve(xi, V, interval: tuple, tol: float = 1e-8, k: float = 0.0, alpha_tol: float = 1e-9) -> QuadratureSolution:
    """Assemble the quadrature solution on a zero-free interval of ``xi``.

    Closed-form inputs are handled symbolically (``f`` by exact integration
    when ``xi`` is rational, second derivatives exactly); a :class:`SampledXi`
    uses numerical ``f`` and the chain rule for ``psi''``.
    """
    pot = _as_potential(V)
    ev = _xi_evaluator(xi)
    _check_nonvanishing(xi, interval)
    alpha = first_integral(xi, pot, interval, tol=alpha_tol)
    exact = _alpha_exact(xi, pot)
    branch = _branch(alpha, exact, atol=1e-12)
    a = math.sqrt(abs(alpha)) if branch != "linear" else 0.0
    lo, hi = interval
    x_ref = 0.5 * (lo + hi)
    sign = 1.0 if _xi_jets(xi, np.array([x_ref]))[0, 0] > 0 else -1.0

    symbolic = not isinstance(xi, SampledXi) and isinstance(pot, ClosedFormPotential)
    if symbolic:
        e = _as_expr(xi)
        f_expr = None
        if e.is_rational_function(x):
            f_expr = sympy.integrate(1 / e, x)
            if f_expr.has(sympy.Integral):
                f_expr = None
            else:
                # log|.| keeps f real on a negative branch; the sign is fixed on the interval
                f_expr = f_expr.replace(
                    sympy.log, lambda arg: sympy.log(sympy.sign(arg.subs(x, x_ref)) * arg)
                )
        if f_expr is not None:
            a_s = sympy.sqrt(sympy.Abs(exact)) if exact is not None else sympy.Float(a)
            root = sympy.sqrt(sign * e)
            if branch == "linear":
                exprs = (root * f_expr, root)
            elif branch == "oscillatory":
                exprs = (root * sympy.cos(a_s * f_expr), root * sympy.sin(a_s * f_expr))
            else:
                exprs = (root * sympy.cosh(a_s * f_expr), root * sympy.sinh(a_s * f_expr))
            basis = tuple(_vectorize(sympy.lambdify(x, p, "numpy")) for p in exprs)
            seconds = tuple(_vectorize(sympy.lambdify(x, sympy.diff(p, x, 2), "numpy")) for p in exprs)
            f_fn = _vectorize(sympy.lambdify(x, f_expr, "numpy"))
            eta_fn = _vectorize(sympy.lambdify(x, -sympy.diff(e, x) / 2 + k, "numpy"))
            sol = QuadratureSolution(xi, eta_fn, alpha, f_fn, branch, interval, a, basis, seconds, pot, exact, exprs, k)
            return _finish(sol, tol)

    # numerical antiderivative of 1/xi, chain rule for psi''
    def xi_val(t):
        return float(ev.derivatives(t)[0, 0])

    def f_fn(xs):
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        order = np.argsort(xs)
        out = np.empty(xs.size)
        prev, acc = x_ref, 0.0
        # integrate outward from x_ref so each piece is short
        right = [i for i in order if xs[i] >= x_ref]
        left = [i for i in order[::-1] if xs[i] < x_ref]
        for side in (right, left):
            prev, acc = x_ref, 0.0
            for i in side:
                piece, _ = quad(lambda t: 1.0 / xi_val(t), prev, xs[i], epsabs=1e-14, epsrel=1e-13, limit=200)
                acc += piece
                out[i] = acc
                prev = xs[i]
        return out

    def g(n, s):
        if branch == "linear":
            return [(s, np.ones_like(s)), (np.ones_like(s), np.zeros_like(s)), (np.zeros_like(s), np.zeros_like(s))][n]
        if branch == "oscillatory":
            c, sn = np.cos(a * s), np.sin(a * s)
            return [(c, sn), (-a * sn, a * c), (-(a**2) * c, -(a**2) * sn)][n]
        c, sn = np.cosh(a * s), np.sinh(a * s)
        return [(c, sn), (a * sn, a * c), (a**2 * c, a**2 * sn)][n]

    def make(idx):
        def psi(xs):
            xs = np.asarray(xs, dtype=float)
            j = ev.derivatives(xs)
            return np.sqrt(np.abs(j[0])) * g(0, f_fn(xs))[idx]

        def psi2(xs):
            xs = np.asarray(xs, dtype=float)
            j = ev.derivatives(xs)
            s = f_fn(xs)
            r = np.sqrt(np.abs(j[0]))
            # psi = r g(f), r'' = (xi''/2 - xi'^2/(4 xi)) r / xi, f' = 1/xi, f'' = -xi'/xi^2
            r1 = j[1] * r / (2 * j[0])
            r2 = (j[2] / 2 - j[1] ** 2 / (4 * j[0])) * r / j[0]
            g0, g1, g2 = g(0, s)[idx], g(1, s)[idx], g(2, s)[idx]
            f1 = 1.0 / j[0]
            f2 = -j[1] / j[0] ** 2
            return r2 * g0 + 2 * r1 * g1 * f1 + r * (g2 * f1**2 + g1 * f2)

        return psi, psi2

    (p1, d1), (p2, d2) = make(0), make(1)

    def eta_fn(xs):
        return -ev.derivatives(xs)[1] / 2 + k

    sol = QuadratureSolution(xi, eta_fn, alpha, f_fn, branch, interval, a, (p1, p2), (d1, d2), pot, exact, None, k)
    return _finish(sol, tol)


def _vectorize(fn):
    def wrapped(xs):
        xs = np.asarray(xs, dtype=float)
        return np.broadcast_to(np.asarray(fn(xs), dtype=float), xs.shape).copy()

    return wrapped


def _finish(sol: QuadratureSolution, tol: float) -> QuadratureSolution:
    lo, hi = sol.interval
    xs = np.linspace(lo, hi, 202)[1:-1]
    worst = 0.0
    for psi, r in zip(sol.basis, sol.schrodinger_residuals(xs)):
        worst = max(worst, float(np.max(np.abs(r))) / (1.0 + float(np.max(np.abs(psi(xs))))))
    sol.residual = worst
    if not math.isfinite(worst) or worst > tol:
        raise NotConstant(f"Schrödinger residual {worst:.3g} exceeds tolerance {tol:.1g}")
    return sol


def find_xi(V, interval: tuple, init: Sequence[float], x0: float | None = None, rtol: float = 1e-12, atol: float = 1e-14) -> SampledXi:
    """Integrate ``xi''' = 2 V' xi + 4 V xi'`` from ``(xi, xi', xi'')(x0) = init``."""
    pot = _as_potential(V)
    lo, hi = interval
    x0 = lo if x0 is None else x0
    if not lo <= x0 <= hi:
        raise ValueError("x0 must lie inside the interval")

    def rhs(t, y):
        Vd = pot.derivatives(np.array([t]), 1)[:, 0]
        return [y[1], y[2], 2 * Vd[1] * y[0] + 4 * Vd[0] * y[1]]

    def guard(t, y):
        return 1e12 - max(abs(y[0]), abs(y[1]), abs(y[2]))

    guard.terminal = True
    sols = []
    for end in (hi, lo):
        if end == x0:
            continue
        res = solve_ivp(rhs, (x0, end), list(init), method="DOP853", rtol=rtol, atol=atol, dense_output=True, events=guard)
        if res.status == 1 or not res.success:
            raise Blowup(f"xi exceeds the overflow guard near x = {res.t[-1]:.6g}", abscissa=float(res.t[-1]))
        sols.append((min(x0, end), max(x0, end), res.sol))
    return SampledXi(sols, (lo, hi), pot)

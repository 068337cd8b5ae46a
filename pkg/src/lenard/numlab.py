"""Numerical side: residuals on concrete potentials, ODE integration of the
constraint, numeric commutator checks and least-squares fitting of constants."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np
import sympy
from scipy.integrate import solve_ivp

from .errors import Blowup, IllConditioned
from .hierarchy import (
    ConstraintSpec,
    constraint_residual,
    lenard_F,
    scaling_term,
    symmetry_constraint,
    symmetry_normalization,
)
from .operator import DiffOperator, hamiltonian
from .potential import PotentialSpec, x_symbol
from .ring import DiffPoly, V

__all__ = [
    "FitResult",
    "IntegratedPotential",
    "eval_diffpoly",
    "integrate_constraint",
    "numeric_commutator_check",
    "default_test_functions",
    "fit_constants",
    "residual_poly",
]

RTOL = 1e-10
ATOL = 1e-12
BLOWUP_GUARD = 1e12
ILL_CONDITIONED = 1e10


def eval_diffpoly(p: DiffPoly, pot: PotentialSpec, xs) -> np.ndarray:
    """Values of ``p(x, V(x), V'(x), ...)`` at ``xs``."""
    xs = pot.check_points(xs)
    jets = pot.derivatives(xs, max(p.max_order(), 0))
    return np.broadcast_to(np.asarray(p.evaluate(xs, jets), dtype=float), xs.shape).copy()


def residual_poly(spec: ConstraintSpec, form: str = "hierarchy") -> DiffPoly:
    if form == "hierarchy":
        return constraint_residual(spec)
    if form == "schrodinger":
        return symmetry_constraint(spec)
    raise ValueError(f"unknown constraint form {form!r}")


# -- ODE generation -----------------------------------------------------------


class IntegratedPotential(PotentialSpec):
    """Potential produced by integrating the constraint ODE.

    The state carries ``V .. V^(K-1)`` (``K`` the constraint order); ``V^(K)``
    and ``V^(K+1)`` are obtained by central differences of the dense output,
    not from the ODE right-hand side, so substituting them back into the
    constraint is a genuine check.
    """

    def __init__(self, name, sols, order: int, domain, fd_step: float = 2e-3):
        self.name = name
        self._sols = sols
        self.order = order
        self.domain = domain
        self.singular = ()
        self.fd_step = fd_step

    @property
    def max_order(self) -> int:
        return self.order + 1

    def _state(self, xs: np.ndarray) -> np.ndarray:
        out = np.empty((self.order, xs.size))
        for lo, hi, sol in self._sols:
            mask = (xs >= lo) & (xs <= hi)
            if np.any(mask):
                out[:, mask] = sol(xs[mask])
        return out

    def derivatives(self, xs, order: int) -> np.ndarray:
        xs = self.check_points(xs)
        if order > self.max_order:
            raise ValueError(f"{self.name}: derivative order {order} not available")
        out = np.empty((order + 1, xs.size))
        state = self._state(xs)
        keep = min(order + 1, self.order)
        out[:keep] = state[:keep]
        if order >= self.order:
            h = self.fd_step
            lo, hi = self.domain
            # shrink the stencil near the interval ends
            h_loc = np.minimum(h, np.maximum((np.minimum(xs - lo, hi - xs)) / 2.0, 1e-6))
            top = self.order - 1
            f = lambda s: self._state(np.clip(xs + s * h_loc, lo, hi))[top]
            f_m2, f_m1, f_0, f_p1, f_p2 = f(-2), f(-1), state[top], f(1), f(2)
            out[self.order] = (f_m2 - 8 * f_m1 + 8 * f_p1 - f_p2) / (12 * h_loc)
            if order > self.order:
                out[self.order + 1] = (-f_m2 + 16 * f_m1 - 30 * f_0 + 16 * f_p1 - f_p2) / (12 * h_loc**2)
        return out


def _solve_for_top(G: DiffPoly):
    top = G.max_order()
    if top < 0:
        raise ValueError("constraint has no derivative to integrate")
    lead = G.partial(top)
    if lead.max_order() >= top:
        raise ValueError("constraint is nonlinear in its top derivative")
    rest = G - lead * V(top)
    return top, lead, rest


def integrate_constraint(
    spec: ConstraintSpec,
    init: Sequence[float],
    x0: float = 0.0,
    interval: tuple | None = None,
    form: str = "hierarchy",
    rtol: float = RTOL,
    atol: float = ATOL,
) -> IntegratedPotential:
    """Integrate ``G = 0`` solved for its top derivative from the jet ``init`` at ``x0``.

    ``init`` lists ``V(x0), V'(x0), ..., V^(K-1)(x0)``.  ``interval`` defaults
    to ``(x0 - 5, x0 + 5)`` and may straddle ``x0``.
    """
    G = residual_poly(spec, form)
    top, lead, rest = _solve_for_top(G)
    init = np.asarray(init, dtype=float)
    if init.size != top:
        raise ValueError(f"constraint of order {top} needs {top} initial values, got {init.size}")
    lo, hi = interval if interval is not None else (x0 - 5.0, x0 + 5.0)
    if not lo <= x0 <= hi:
        raise ValueError("x0 must lie inside the interval")

    def rhs(x, y):
        jets = list(y) + [0.0]
        return np.append(y[1:], -rest.evaluate(x, jets) / lead.evaluate(x, jets))

    def guard(x, y):
        return BLOWUP_GUARD - np.max(np.abs(y))

    guard.terminal = True

    sols = []
    for end in (hi, lo):
        if end == x0:
            continue
        res = solve_ivp(rhs, (x0, end), init, method="DOP853", rtol=rtol, atol=atol, dense_output=True, events=guard)
        if res.status == 1 or not res.success:
            where = float(res.t[-1])
            raise Blowup(f"solution leaves the overflow guard near x = {where:.6g}", abscissa=where)
        sols.append((min(x0, end), max(x0, end), res.sol))
    if not sols:
        raise ValueError("empty interval")
    return IntegratedPotential(f"integrated[{spec.level},{spec.kappa}]", sols, top, (lo, hi))


# -- numeric commutator -------------------------------------------------------


def _jet_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m = min(a.shape[0], b.shape[0])
    out = np.zeros((m,) + a.shape[1:])
    for k in range(m):
        for i in range(k + 1):
            out[k] += comb(k, i) * a[i] * b[k - i]
    return out


def _diffpoly_jet(p: DiffPoly, xs: np.ndarray, Vd: np.ndarray, m: int) -> np.ndarray:
    """Rows 0..m of the x-derivatives of ``p`` along the potential."""
    x_jet = np.zeros((m + 1, xs.size))
    x_jet[0] = xs
    if m >= 1:
        x_jet[1] = 1.0
    total = np.zeros((m + 1, xs.size))
    for mono in p.terms():
        term = np.zeros((m + 1, xs.size))
        term[0] = float(mono.coeff)
        for _ in range(mono.xdeg):
            term = _jet_mul(term, x_jet)
        for k, e in mono.jet.items():
            for _ in range(e):
                term = _jet_mul(term, Vd[k : k + m + 1])
        total += term
    return total


def _apply_jet(A: DiffOperator, xs, Vd, f: np.ndarray, m: int) -> np.ndarray:
    """Rows 0..m of ``(A f)`` given enough rows of ``f``."""
    out = np.zeros((m + 1, xs.size))
    for j, q in A.coeffs.items():
        out += _jet_mul(_diffpoly_jet(q, xs, Vd, m), f[j : j + m + 1])
    return out


def default_test_functions(xs) -> list:
    xs = np.asarray(xs, dtype=float)
    lo, hi = float(xs.min()), float(xs.max())
    mid = 0.5 * (lo + hi)
    x = x_symbol
    return [sympy.Integer(1), x, x**2 / 4, x**3 / 27] + [
        sympy.exp(-((x - sympy.Float(m)) ** 2)) for m in (lo, mid, hi)
    ]


def _function_jet(phi, xs, order, fd_step: float | None = None) -> np.ndarray:
    """Rows ``phi^(k)(xs)``; with ``fd_step`` each row k >= 1 is a 5-point
    central difference of the exact row k-1 (error O(h^4))."""
    phi = sympy.sympify(phi)
    out = np.empty((order + 1, xs.size))
    expr = phi
    for k in range(order + 1):
        fn = sympy.lambdify(x_symbol, expr, "numpy")
        ev = lambda t, fn=fn: np.broadcast_to(np.asarray(fn(t), dtype=float), t.shape)
        if k and fd_step is not None:
            h = fd_step
            out[k] = (prev(xs - 2 * h) - 8 * prev(xs - h) + 8 * prev(xs + h) - prev(xs + 2 * h)) / (12 * h)
        else:
            out[k] = ev(xs)
        prev = ev
        expr = sympy.diff(expr, x_symbol)
    return out


def numeric_commutator_check(
    Q, pot: PotentialSpec, xs, testfuncs=None, kappa=None, detail: bool = False, fd_step: float | None = None
):
    """``max_phi ||([Q, H] - kappa H) phi||_inf`` on ``xs``.

    ``Q`` is applied numerically through Taylor jets: ``Q(H phi)`` and
    ``H(Q phi)`` are formed separately from the coefficient values and exact
    derivatives of ``phi`` and ``V``, without symbolic composition.  With
    ``fd_step`` the test-function derivatives come from finite differences.
    """
    from .symmetry import SymmetryOperator

    if isinstance(Q, SymmetryOperator):
        kappa = Q.kappa if kappa is None else kappa
        Q = Q.Q
    kappa = float(kappa or 0)
    xs = pot.check_points(xs)
    n = Q.order
    qmax = max((q.max_order() for q in Q.coeffs.values()), default=0)
    v_order = max(n, qmax + 2, 0) + 2
    Vd = pot.derivatives(xs, v_order)
    H = hamiltonian()
    worst, scale = 0.0, 1.0
    per_function = []
    for phi in testfuncs if testfuncs is not None else default_test_functions(xs):
        f = _function_jet(phi, xs, n + 2, fd_step)
        H_phi = _apply_jet(H, xs, Vd, f, n)
        QH = _apply_jet(Q, xs, Vd, H_phi, 0)[0]
        Q_phi = _apply_jet(Q, xs, Vd, f, 2)
        HQ = _apply_jet(H, xs, Vd, Q_phi, 0)[0]
        resid = QH - HQ - kappa * H_phi[0]
        r = float(np.max(np.abs(resid)))
        per_function.append((str(phi), r))
        worst = max(worst, r)
        scale = max(scale, float(np.max(np.abs(QH))), float(np.max(np.abs(HQ))))
    if detail:
        return {"residual": worst, "scale": scale, "per_function": per_function}
    return worst


# -- fitting ------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    constants: tuple
    kappa: float | None
    residual_norm: float
    conditioning: float
    ill_conditioned: bool
    level: int
    form: str = "hierarchy"


def fit_constants(
    level: int,
    kappa,
    pot: PotentialSpec,
    xs,
    fit_kappa: bool = False,
    form: str = "hierarchy",
    threshold: float = ILL_CONDITIONED,
) -> FitResult:
    """Least-squares constants ``C_0..C_{N-1}`` (and optionally ``kappa``).

    The residual is affine in the unknowns, so this is a linear problem solved
    by SVD; ``residual_norm`` is the RMS of the residual recomputed from the
    returned constants.
    """
    xs = pot.check_points(xs)
    if xs.size < level + 1:
        raise ValueError(f"need at least {level + 1} sample points")
    if form == "hierarchy":
        cols = [lenard_F(j) for j in range(level)]
        fixed = lenard_F(level)
        s_col = scaling_term()
    elif form == "schrodinger":
        c = symmetry_normalization(level)
        cols = [lenard_F(j).reflect().scale(c) for j in range(level)]
        fixed = lenard_F(level).reflect().scale(c)
        s_col = -scaling_term()
    else:
        raise ValueError(f"unknown constraint form {form!r}")
    kappa_val = None if fit_kappa else float(kappa or 0)
    columns = [eval_diffpoly(p, pot, xs) for p in cols]
    if fit_kappa:
        columns.append(eval_diffpoly(s_col, pot, xs))
    base = eval_diffpoly(fixed, pot, xs)
    if not fit_kappa and kappa_val:
        base = base + kappa_val * eval_diffpoly(s_col, pot, xs)

    if columns:
        A = np.column_stack(columns)
        sol, _, _, sv = np.linalg.lstsq(A, -base, rcond=None)
        smin = float(sv.min()) if sv.size else 0.0
        conditioning = math.inf if smin <= float(sv.max()) * 1e-15 else float(sv.max()) / smin
        if fit_kappa and len(sv) < A.shape[1]:
            conditioning = math.inf
    else:
        sol = np.zeros(0)
        conditioning = 1.0
    ill = conditioning > threshold
    if ill:
        warnings.warn(f"design matrix conditioning {conditioning:.3g} exceeds {threshold:.1g}", IllConditioned)
    constants = tuple(float(c) for c in sol[:level])
    if fit_kappa:
        kappa_val = float(sol[level])
    resid = base.copy()
    for c, col in zip(constants, columns):
        resid = resid + c * col
    if fit_kappa:
        resid = resid + kappa_val * columns[level]
    rms = float(np.sqrt(np.mean(resid**2)))
    return FitResult(constants, kappa_val, rms, conditioning, ill, level, form)

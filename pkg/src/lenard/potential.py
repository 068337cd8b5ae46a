"""Concrete potentials ``V(x)`` with derivative evaluators."""

from __future__ import annotations

import csv
import math
from functools import lru_cache
from typing import Callable, Dict, Sequence

import numpy as np
import sympy
from scipy.interpolate import make_interp_spline

from .errors import SingularPoint

__all__ = ["PotentialSpec", "ClosedFormPotential", "SampledPotential", "x_symbol", "parse_expression", "as_x_expr", "diffpoly_to_sympy"]

x_symbol = sympy.Symbol("x", real=True)

_SINGULAR_EPS = 1e-12


def as_x_expr(expr) -> sympy.Expr:
    """Sympify and identify any plain symbol ``x`` with the real :data:`x_symbol`."""
    expr = sympy.sympify(expr)
    return expr.subs(sympy.Symbol("x"), x_symbol)


def parse_expression(text: str, params: Dict[str, object] | None = None) -> sympy.Expr:
    """Parse a sympy expression in ``x`` with optional exact parameter values."""
    local = {"x": x_symbol}
    expr = sympy.sympify(text, locals=local, rational=True)
    if params:
        expr = expr.subs({sympy.Symbol(k): sympy.Rational(str(v)) for k, v in params.items()})
        # parameters may have been created without the real assumption
        expr = expr.subs({sympy.Symbol(k, real=True): sympy.Rational(str(v)) for k, v in params.items()})
    extra = expr.free_symbols - {x_symbol}
    if extra:
        raise ValueError(f"expression {text!r} has unbound symbols {sorted(map(str, extra))}")
    return expr


class PotentialSpec:
    """Base class: a named potential on ``domain`` minus ``singular`` points."""

    name: str
    domain: tuple
    singular: tuple

    def check_points(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        lo, hi = self.domain
        if np.any(xs < lo) or np.any(xs > hi):
            raise SingularPoint(f"sample points leave the domain {self.domain} of {self.name}")
        for p in self.singular:
            hit = np.abs(xs - p) < _SINGULAR_EPS * max(1.0, abs(p))
            if np.any(hit):
                raise SingularPoint(f"sample point {xs[hit][0]!r} hits the singular point {p} of {self.name}")
        return xs

    def derivatives(self, xs, order: int) -> np.ndarray:
        """Array of shape ``(order + 1, len(xs))`` with ``V^(k)(xs)`` in row ``k``."""
        raise NotImplementedError

    @property
    def max_order(self) -> float:
        return math.inf

    def __call__(self, xs):
        return self.derivatives(xs, 0)[0]


class ClosedFormPotential(PotentialSpec):
    """Potential given by a sympy expression; derivatives are exact symbolic ones."""

    def __init__(self, name: str, expr, domain=(-math.inf, math.inf), singular: Sequence[float] = ()):
        self.name = name
        self.expr = parse_expression(expr) if isinstance(expr, str) else as_x_expr(expr)
        self.domain = (float(domain[0]), float(domain[1]))
        self.singular = tuple(float(s) for s in singular)
        self._derivs = [self.expr]
        self._funcs: Dict[int, Callable] = {}

    def symbolic_derivative(self, k: int) -> sympy.Expr:
        while len(self._derivs) <= k:
            self._derivs.append(sympy.diff(self._derivs[-1], x_symbol))
        return self._derivs[k]

    def _func(self, k: int) -> Callable:
        if k not in self._funcs:
            self._funcs[k] = sympy.lambdify(x_symbol, self.symbolic_derivative(k), "numpy")
        return self._funcs[k]

    def derivatives(self, xs, order: int) -> np.ndarray:
        xs = self.check_points(xs)
        out = np.empty((order + 1, xs.size))
        for k in range(order + 1):
            out[k] = np.broadcast_to(np.asarray(self._func(k)(xs), dtype=float), xs.shape)
        return out

    def __repr__(self):
        return f"ClosedFormPotential({self.name!r}, {self.expr})"


class SampledPotential(PotentialSpec):
    """Potential known on a grid, optionally with some derivative columns.

    Missing derivative orders come from an interpolating spline of the highest
    supplied column.
    """

    def __init__(self, name: str, x, columns: Sequence[Sequence[float]], degree: int = 7):
        x = np.asarray(x, dtype=float)
        order = np.argsort(x)
        self.x = x[order]
        self.columns = [np.asarray(c, dtype=float)[order] for c in columns]
        self.name = name
        self.domain = (float(self.x[0]), float(self.x[-1]))
        self.singular = ()
        k = min(degree, self.x.size - 1)
        self._splines = [make_interp_spline(self.x, c, k=k) for c in self.columns]
        self._degree = k

    @property
    def max_order(self) -> int:
        return len(self.columns) - 1 + self._degree - 1

    def derivatives(self, xs, order: int) -> np.ndarray:
        xs = self.check_points(xs)
        if order > self.max_order:
            raise ValueError(f"{self.name}: derivative order {order} exceeds what the samples support")
        out = np.empty((order + 1, xs.size))
        top = len(self.columns) - 1
        for k in range(order + 1):
            if k <= top:
                out[k] = self._splines[k](xs)
            else:
                out[k] = self._splines[top].derivative(k - top)(xs)
        return out

    @classmethod
    def from_csv(cls, path: str, degree: int = 7) -> "SampledPotential":
        """Read ``x,V`` or ``x,V,V1,...,Vk`` (header required)."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [[float(v) for v in row] for row in reader if row]
        if header[:2] != ["x", "V"]:
            raise ValueError(f"{path}: header must start with 'x,V', got {header}")
        for i, h in enumerate(header[2:], start=1):
            if h != f"V{i}":
                raise ValueError(f"{path}: expected column V{i}, got {h!r}")
        data = np.array(rows)
        return cls(path, data[:, 0], [data[:, i] for i in range(1, data.shape[1])], degree=degree)


def diffpoly_to_sympy(p, V_expr) -> sympy.Expr:
    """Substitute a closed-form ``V(x)`` into a differential polynomial."""
    V_expr = as_x_expr(V_expr)
    derivs = [V_expr]
    total = sympy.Integer(0)
    for (xdeg, jet), c in p.items():
        while len(derivs) < len(jet):
            derivs.append(sympy.diff(derivs[-1], x_symbol))
        term = sympy.Rational(c.numerator, c.denominator) * x_symbol**xdeg
        for k, e in enumerate(jet):
            if e:
                term *= derivs[k] ** e
        total += term
    return total

"""Finite-order differential operators with :class:`DiffPoly` coefficients.

Operators are kept in right-normal form ``sum_j q_j d^j`` (coefficients to the
left of all derivatives).  Composition re-normalizes immediately with the
generalized Leibniz rule ``d^j . f = sum_i C(j, i) f^(j-i) d^i``.
"""

from __future__ import annotations

import threading
from fractions import Fraction
from math import comb
from typing import Dict, Iterable, Mapping

from .ring import ONE, ZERO, DiffPoly, V, X, parse_rational, total_derivative

__all__ = [
    "DiffOperator",
    "ConstraintRewriter",
    "compose",
    "commutator",
    "apply",
    "reduce_mod_constraint",
    "hamiltonian",
    "D",
    "mult",
]


class DiffOperator:
    """Immutable operator ``sum_j coeffs[j] * d^j/dx^j``."""

    __slots__ = ("_coeffs",)

    def __init__(self, coeffs: Mapping[int, object] | None = None):
        clean: Dict[int, DiffPoly] = {}
        for j, q in (coeffs or {}).items():
            if int(j) < 0:
                raise ValueError("negative derivative orders are not operators")
            q = DiffPoly.coerce(q)
            if q:
                clean[int(j)] = clean.get(int(j), ZERO) + q
        object.__setattr__(self, "_coeffs", {j: q for j, q in clean.items() if q})

    def __setattr__(self, name, value):
        raise AttributeError("DiffOperator is immutable")

    @property
    def order(self) -> int:
        """Highest j with a nonzero coefficient; -1 for the zero operator."""
        return max(self._coeffs, default=-1)

    def coeff(self, j: int) -> DiffPoly:
        return self._coeffs.get(j, ZERO)

    def __getitem__(self, j: int) -> DiffPoly:
        return self.coeff(j)

    @property
    def coeffs(self) -> Dict[int, DiffPoly]:
        return dict(self._coeffs)

    def is_zero(self) -> bool:
        return not self._coeffs

    def __bool__(self) -> bool:
        return bool(self._coeffs)

    def map_coeffs(self, fn) -> "DiffOperator":
        return DiffOperator({j: fn(q) for j, q in self._coeffs.items()})

    def __add__(self, other) -> "DiffOperator":
        other = _as_operator(other)
        out = dict(self._coeffs)
        for j, q in other._coeffs.items():
            out[j] = out.get(j, ZERO) + q
        return DiffOperator(out)

    __radd__ = __add__

    def __neg__(self) -> "DiffOperator":
        return DiffOperator({j: -q for j, q in self._coeffs.items()})

    def __sub__(self, other) -> "DiffOperator":
        return self + (-_as_operator(other))

    def __rsub__(self, other) -> "DiffOperator":
        return _as_operator(other) - self

    def __mul__(self, other) -> "DiffOperator":
        """``A * B`` is composition for operators, coefficient scaling otherwise."""
        if isinstance(other, DiffOperator):
            return compose(self, other)
        if isinstance(other, DiffPoly):
            return compose(self, mult(other))
        c = parse_rational(other)
        return DiffOperator({j: q.scale(c) for j, q in self._coeffs.items()})

    def __rmul__(self, other) -> "DiffOperator":
        if isinstance(other, DiffPoly):
            return DiffOperator({j: other * q for j, q in self._coeffs.items()})
        return self * other

    def __pow__(self, n: int) -> "DiffOperator":
        result = DiffOperator({0: ONE})
        for _ in range(n):
            result = compose(result, self)
        return result

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiffOperator):
            try:
                other = _as_operator(other)
            except TypeError:
                return NotImplemented
        return self._coeffs == other._coeffs

    def __hash__(self) -> int:
        return hash(frozenset(self._coeffs.items()))

    def to_json(self) -> dict:
        return {"coeffs": {str(j): self._coeffs[j].to_json() for j in sorted(self._coeffs)}}

    @classmethod
    def from_json(cls, data: Mapping) -> "DiffOperator":
        return cls({int(j): DiffPoly.from_json(q) for j, q in data["coeffs"].items()})

    def to_latex(self) -> str:
        parts = []
        for j in sorted(self._coeffs, reverse=True):
            q = self._coeffs[j].to_latex()
            d = "" if j == 0 else ("\\frac{d}{dx}" if j == 1 else f"\\frac{{d^{{{j}}}}}{{dx^{{{j}}}}}")
            parts.append(_term(q, d, len(self._coeffs[j]) > 1, "\\left(", "\\right)"))
        return _join_signed(parts)

    def to_plain(self) -> str:
        parts = []
        for j in sorted(self._coeffs, reverse=True):
            q = self._coeffs[j].to_plain()
            d = "" if j == 0 else ("d" if j == 1 else f"d^{j}")
            parts.append(_term(q, d, len(self._coeffs[j]) > 1, "(", ")"))
        return _join_signed(parts)

    def __repr__(self) -> str:
        return f"DiffOperator({self.to_plain()!r})"


def _term(q: str, d: str, compound: bool, lp: str, rp: str) -> str:
    if compound:
        q = f"{lp}{q}{rp}"
    if not d:
        return q
    if q in ("1", "-1"):
        return d if q == "1" else f"-{d}"
    return f"{q} {d}"


def _join_signed(parts) -> str:
    if not parts:
        return "0"
    out = parts[0]
    for p in parts[1:]:
        out += f" - {p[1:]}" if p.startswith("-") else f" + {p}"
    return out


def _as_operator(value) -> DiffOperator:
    if isinstance(value, DiffOperator):
        return value
    if isinstance(value, (DiffPoly, int, Fraction)) and not isinstance(value, bool):
        return mult(value)
    raise TypeError(f"cannot treat {type(value).__name__} as an operator")


def mult(f) -> DiffOperator:
    """Multiplication-by-``f`` operator."""
    return DiffOperator({0: DiffPoly.coerce(f)})


def D(order: int = 1) -> DiffOperator:
    """The operator ``d^order/dx^order``."""
    return DiffOperator({order: ONE})


def hamiltonian() -> DiffOperator:
    """``H = -d^2/dx^2 + V(x)``."""
    return DiffOperator({2: -ONE, 0: V(0)})


def compose(A: DiffOperator, B: DiffOperator) -> DiffOperator:
    """Right-normal form of ``A . B`` via the generalized Leibniz rule."""
    out: Dict[int, DiffPoly] = {}
    for j, b in B._coeffs.items():
        # derivs[m] = D^m(b), shared by all orders of A
        derivs = [b]
        for i, a in sorted(A._coeffs.items()):
            while len(derivs) <= i:
                derivs.append(total_derivative(derivs[-1]))
            for l in range(i + 1):
                term = a * derivs[i - l]
                if term:
                    c = comb(i, l)
                    out[l + j] = out.get(l + j, ZERO) + (term.scale(c) if c != 1 else term)
    return DiffOperator(out)


def commutator(A: DiffOperator, B: DiffOperator) -> DiffOperator:
    return compose(A, B) - compose(B, A)


def apply(A: DiffOperator, f) -> DiffPoly:
    """``sum_j q_j * D^j(f)``."""
    f = DiffPoly.coerce(f)
    result = ZERO
    current = f
    for j in range(A.order + 1):
        if j:
            current = total_derivative(current)
        q = A.coeff(j)
        if q:
            result = result + q * current
    return result


class ConstraintRewriter:
    """Normal-form reduction modulo an ODE ``G = 0`` solved for its top derivative.

    ``G`` must contain its highest jet variable ``V^(K)`` linearly with a
    nonzero constant coefficient.  Higher orders ``V^(K+m)`` are rewritten by
    the prolongations ``D^m G = 0``, generated on demand and memoized.
    """

    def __init__(self, residual: DiffPoly, *, level: int | None = None, kappa=None):
        residual = DiffPoly.coerce(residual)
        top = residual.max_order()
        if top < 0:
            raise ValueError("constraint has no jet variable to solve for")
        lead = residual.partial(top)
        if not lead.is_constant() or not lead:
            raise ValueError(
                f"constraint is not solvable for V^({top}): coefficient {lead} is not a nonzero constant"
            )
        lead_c = lead.constant_value()
        rhs = -(residual - V(top).scale(lead_c)) / lead_c
        if rhs.max_order() >= top:
            raise ValueError("constraint is nonlinear in its top derivative")
        self.residual = residual
        self.level = level
        self.kappa = None if kappa is None else parse_rational(kappa)
        self.solved_var = top
        self.lead = lead_c
        self.rhs = rhs
        self._rules: Dict[int, DiffPoly] = {top: rhs}
        self._lock = threading.Lock()

    def rule(self, order: int) -> DiffPoly:
        """Expression for ``V^(order)`` in terms of orders below ``solved_var``."""
        if order < self.solved_var:
            return V(order)
        with self._lock:
            cached = self._rules.get(order)
        if cached is not None:
            return cached
        prev = self.rule(order - 1)
        value = total_derivative(prev).substitute_order(self.solved_var, self.rhs)
        with self._lock:
            self._rules.setdefault(order, value)
        return value

    def reduce(self, p: DiffPoly) -> DiffPoly:
        p = DiffPoly.coerce(p)
        top = p.max_order()
        if top < self.solved_var:
            return p
        result = p
        for k in range(top, self.solved_var - 1, -1):
            result = result.substitute_order(k, self.rule(k))
        return result

    def reduce_operator(self, A: DiffOperator) -> DiffOperator:
        return A.map_coeffs(self.reduce)


def reduce_mod_constraint(p: DiffPoly, r: ConstraintRewriter) -> DiffPoly:
    return r.reduce(p)

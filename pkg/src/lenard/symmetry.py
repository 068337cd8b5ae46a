"""Odd-order symmetry operators ``Q`` of ``H = -d^2/dx^2 + V`` with ``[Q, H] = kappa H``.

Two independent constructions are provided:

* :func:`build_Q_recurrence` runs the descending coefficient recurrence
  obtained by matching powers of ``d/dx`` in ``[Q, H] = kappa H``;
* :func:`build_first_order` / :func:`build_Q_eps_elimination` build the
  first-order symmetry ``a(x, eps) d/dx + b(x, eps)`` of ``H + eps`` from the
  Lenard densities and replace ``eps^j`` by right composition with ``(-H)^j``.

Both are checked against the commutator computed by :mod:`lenard.operator`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from math import comb
from typing import Dict, List, Sequence

import sympy

from .errors import OrderMismatch
from .hierarchy import ConstraintSpec, lenard_U, symmetry_constraint
from .operator import ConstraintRewriter, DiffOperator, commutator, compose, hamiltonian, mult
from .ring import ONE, ZERO, DiffPoly, V, X, antiderivative, parse_rational, total_derivative

__all__ = [
    "FirstOrderSymmetry",
    "SymmetryOperator",
    "coefficients_a",
    "build_first_order",
    "build_Q_eps_elimination",
    "build_Q_recurrence",
    "recurrence_operator",
    "recurrence_residual",
    "commutator_residual",
    "verify_commutator",
    "dilation_symmetry",
    "l_equivalence",
    "trivial_extension",
]

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class FirstOrderSymmetry:
    """``Q(eps) = (sum_j a_j eps^j) d/dx + sum_j b_j eps^j`` for ``H + eps``."""

    a: tuple
    b: tuple
    spec: ConstraintSpec

    def at(self, eps) -> DiffOperator:
        eps = parse_rational(eps)
        a = sum((aj.scale(eps ** j) for j, aj in enumerate(self.a)), ZERO)
        b = sum((bj.scale(eps ** j) for j, bj in enumerate(self.b)), ZERO)
        return DiffOperator({1: a, 0: b})

    def determining_residuals(self) -> List[DiffPoly]:
        """Coefficients of ``eps^j`` in ``b'' + a V' + 2 a' (V + eps)``, j = 0..N+1.

        The companion equation ``a'' + 2 b' = 0`` holds by construction of ``b``.
        """
        N = len(self.a) - 1
        out = []
        for j in range(N + 2):
            aj = self.a[j] if j <= N else ZERO
            bj = self.b[j] if j <= N else ZERO
            prev = self.a[j - 1] if j >= 1 else ZERO
            out.append(
                total_derivative(total_derivative(bj))
                + aj * V(1)
                + total_derivative(aj) * V(0).scale(2)
                + total_derivative(prev).scale(2)
            )
        return out


@dataclass(frozen=True)
class SymmetryOperator:
    """A symmetry operator together with the constraint its potential must satisfy."""

    Q: DiffOperator
    kappa: Fraction
    spec: ConstraintSpec
    constraint: DiffPoly
    method: str = "recurrence"

    @property
    def order(self) -> int:
        return self.Q.order

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "kappa": f"{self.kappa.numerator}/{self.kappa.denominator}",
            "method": self.method,
            "spec": self.spec.to_json(),
            "constraint": self.constraint.to_json(),
            "Q": self.Q.to_json(),
        }

    @classmethod
    def from_json(cls, data) -> "SymmetryOperator":
        return cls(
            DiffOperator.from_json(data["Q"]),
            parse_rational(data["kappa"]),
            ConstraintSpec.from_json(data["spec"]),
            DiffPoly.from_json(data["constraint"]),
            data.get("method", "recurrence"),
        )


def coefficients_a(spec: ConstraintSpec) -> List[DiffPoly]:
    """Lenard-density form ``a_{N-j} = U_{j-1} + sum_k C_{N-k} U_{j-k-1} + C_{N-j}``.

    Expressed in the hierarchy variable; :func:`build_first_order` maps the
    result to the potential of ``H``.
    """
    if spec.kappa:
        raise ValueError("the first-order route requires kappa = 0")
    N, C = spec.level, spec.C
    a: List[DiffPoly] = [ZERO] * (N + 1)
    a[N] = ONE
    for j in range(1, N + 1):
        term = lenard_U(j - 1) + C[N - j]
        for k in range(1, j):
            term = term + lenard_U(j - k - 1).scale(C[N - k])
        a[N - j] = term
    return a


def build_first_order(spec: ConstraintSpec) -> FirstOrderSymmetry:
    """First-order symmetry of ``H + eps`` with ``H = -D^2 + V``.

    The density coefficients are reflected ``u -> -V`` with alternating signs
    ``(-1)^(N-j)``, which turns the hierarchy recursion into the determining
    equations of ``H``; ``b_j = -a_j'/2 + B_j``.
    """
    N = spec.level
    a = tuple(aj.reflect().scale((-1) ** (N - j)) for j, aj in enumerate(coefficients_a(spec)))
    b = tuple(total_derivative(aj).scale(-HALF) + spec.B[j] for j, aj in enumerate(a))
    return FirstOrderSymmetry(a, b, spec)


def build_Q_eps_elimination(f: FirstOrderSymmetry, spec: ConstraintSpec | None = None) -> SymmetryOperator:
    """``Q = sum_j (a_j d/dx + b_j) . (-H)^j`` expanded to right-normal form."""
    spec = spec or f.spec
    if spec.kappa:
        raise ValueError("the eps-elimination route requires kappa = 0")
    minus_H = -hamiltonian()
    power = DiffOperator({0: ONE})
    Q = DiffOperator()
    for aj, bj in zip(f.a, f.b):
        Q = Q + compose(DiffOperator({1: aj, 0: bj}), power)
        power = compose(power, minus_H)
    return SymmetryOperator(Q, Fraction(0), spec, symmetry_constraint(spec), "eps-elimination")


def _recurrence_constant(index: int, tilde: Sequence[Fraction]) -> Fraction:
    # odd indices carry the free constants, even indices are zero
    return tilde[(index - 1) // 2] if index % 2 else Fraction(0)


def recurrence_operator(n: int, kappa=0, tilde: Sequence = ()) -> DiffOperator:
    """Operator from the descending recurrence for ``q_{n-1}, ..., q_0`` with ``q_n = 1``.

    ``tilde[k]`` is the integration constant attached to ``q_{2k+1}``.
    """
    kappa = parse_rational(kappa)
    if n < 1 or n % 2 == 0:
        raise OrderMismatch(f"the recurrence builds odd orders n >= 1, got {n}")
    if n == 1 and kappa:
        raise OrderMismatch("n = 1 with kappa != 0 has no monic solution; use dilation_symmetry")
    tilde = [parse_rational(t) for t in tilde]
    if len(tilde) != (n - 1) // 2:
        raise ValueError(f"order {n} takes {(n - 1) // 2} recurrence constants, got {len(tilde)}")
    q: Dict[int, DiffPoly] = {n: ONE, n - 1: DiffPoly.coerce(_recurrence_constant(n - 1, tilde))}
    for j in range(n - 1, 0, -1):
        integrand = ZERO
        for i in range(j + 1, n + 1):
            if q[i]:
                integrand = integrand + (q[i] * V(i - j)).scale(comb(i, j))
        inner = total_derivative(q[j]) + antiderivative(integrand)
        if j == 2 and kappa:
            inner = inner + X.scale(kappa)
        q[j - 1] = inner.scale(-HALF) + _recurrence_constant(j - 1, tilde)
    return DiffOperator(q)


def recurrence_residual(Q: DiffOperator, kappa=0) -> DiffPoly:
    """``q_0'' + sum_{j>=1} q_j V^(j) - kappa V``: what is left at order zero."""
    kappa = parse_rational(kappa)
    G = total_derivative(total_derivative(Q.coeff(0)))
    for j in range(1, Q.order + 1):
        G = G + Q.coeff(j) * V(j)
    return G - V(0).scale(kappa)


def _solve_linear(base: DiffPoly, columns: Sequence[DiffPoly], target: DiffPoly) -> List[Fraction] | None:
    """Exact solution t of ``base + sum_k t_k columns[k] == target``, or None."""
    if not columns:
        return [] if base == target else None
    keys = sorted(set(base.support()) | set(target.support()).union(*(c.support() for c in columns)))
    A = sympy.Matrix([[sympy.Rational(c.coefficient(*k)) for c in columns] for k in keys])
    rhs = sympy.Matrix([sympy.Rational(target.coefficient(*k) - base.coefficient(*k)) for k in keys])
    try:
        sol, params = A.gauss_jordan_solve(rhs)
    except ValueError:
        return None
    if params.shape[0]:
        sol = sol.subs({p: 0 for p in params})
    return [Fraction(int(s.p), int(s.q)) for s in sol]


def build_Q_recurrence(spec: ConstraintSpec, tilde: Sequence | None = None) -> SymmetryOperator:
    """Order ``2N+1`` operator from the coefficient recurrence.

    Without ``tilde`` the recurrence constants are solved so that the leftover
    order-zero coefficient equals :func:`symmetry_constraint` for ``spec``.
    With explicit ``tilde`` the hierarchy constants of the returned spec are
    solved instead.
    """
    n, N = spec.order, spec.level
    basis = [recurrence_residual(recurrence_operator(n, spec.kappa, [0] * N), spec.kappa)]
    for k in range(N):
        unit = [0] * N
        unit[k] = 1
        basis.append(recurrence_residual(recurrence_operator(n, spec.kappa, unit), spec.kappa) - basis[0])
    if tilde is None:
        solved = _solve_linear(basis[0], basis[1:], symmetry_constraint(spec))
        if solved is None:
            raise ValueError(f"no recurrence constants reproduce the constraint of {spec}")
        tilde = solved
    else:
        tilde = [parse_rational(t) for t in tilde]
        G = basis[0] + sum((col.scale(t) for col, t in zip(basis[1:], tilde)), ZERO)
        zero_spec = replace(spec, C=(0,) * N)
        cols = [symmetry_constraint(replace(spec, C=tuple(int(i == k) for i in range(N)))) - symmetry_constraint(zero_spec) for k in range(N)]
        C = _solve_linear(symmetry_constraint(zero_spec), cols, G)
        if C is None:
            raise ValueError("recurrence residual is not in the family for any hierarchy constants")
        spec = replace(spec, C=tuple(C))
    Q = recurrence_operator(n, spec.kappa, tilde)
    return SymmetryOperator(Q, spec.kappa, spec, symmetry_constraint(spec), "recurrence")


def commutator_residual(Q: SymmetryOperator | DiffOperator, kappa=0) -> DiffOperator:
    """``[Q, H] - kappa H`` before any reduction."""
    if isinstance(Q, SymmetryOperator):
        kappa, Q = Q.kappa, Q.Q
    H = hamiltonian()
    return commutator(Q, H) - H * parse_rational(kappa)


def verify_commutator(Q: SymmetryOperator) -> DiffOperator:
    """``[Q, H] - kappa H`` reduced modulo the operator's constraint.

    The zero operator certifies the construction.  When the constraint has a
    non-constant leading coefficient (the first-order dilation case) no
    polynomial rewriter exists and the unreduced residual is returned.
    """
    residual = commutator_residual(Q)
    try:
        rewriter = ConstraintRewriter(Q.constraint)
    except ValueError:
        return residual
    return rewriter.reduce_operator(residual)


def dilation_symmetry(kappa, c=0, q0=0) -> SymmetryOperator:
    """First-order ``Q = (-kappa x/2 + c) d/dx + q0`` with ``[Q, H] = kappa H``.

    Valid exactly when ``(-kappa x/2 + c) V' - kappa V = 0``, i.e. for
    ``V = A (x - 2c/kappa)^(-2)``.
    """
    kappa, c = parse_rational(kappa), parse_rational(c)
    if not kappa:
        raise ValueError("dilation_symmetry needs kappa != 0")
    xi = X.scale(-kappa / 2) + c
    Q = DiffOperator({1: xi, 0: DiffPoly.coerce(parse_rational(q0))})
    constraint = xi * V(1) - V(0).scale(kappa)
    spec = ConstraintSpec(0, kappa, (), (parse_rational(q0),))
    return SymmetryOperator(Q, kappa, spec, constraint, "dilation")


def l_equivalence(A: DiffOperator, B: DiffOperator) -> Dict[int, Fraction] | None:
    """Constants ``gamma_j`` with ``A - B = sum_j gamma_j H^j``, or None if none exist."""
    if isinstance(A, SymmetryOperator):
        A = A.Q
    if isinstance(B, SymmetryOperator):
        B = B.Q
    diff = A - B
    H = hamiltonian()
    gammas: Dict[int, Fraction] = {}
    while diff:
        m = diff.order
        lead = diff.coeff(m)
        if m % 2 or not lead.is_constant():
            return None
        g = lead.constant_value() * (-1) ** (m // 2)
        gammas[m // 2] = g
        diff = diff - (H ** (m // 2)) * g
    return gammas


def trivial_extension(Q: SymmetryOperator) -> SymmetryOperator:
    """``Q + H^(N+1)``: the even-order operator in the same equivalence class."""
    ext = Q.Q + hamiltonian() ** (Q.spec.level + 1)
    return replace(Q, Q=ext, method=Q.method + "+H^(N+1)")

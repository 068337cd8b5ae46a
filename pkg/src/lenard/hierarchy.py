"""Lenard recursion for the stationary KdV hierarchy.

Two recursions are implemented and cross-checked:

* densities ``U_j = P U_{j-1}`` with ``P = -1/4 D^2 - V + 1/2 D^{-1} V'`` and ``U_{-1} = 1``;
* flows ``F_j = R F_{j-1}`` with ``R = -1/4 D^2 - V - 1/2 V' D^{-1}`` and ``F_0 = -V'/2``.

``R = D P D^{-1}``, so ``F_j = D U_j`` for every level.

Sign convention
---------------
These operators are the Lenard operators of ``d^2/dx^2 + u``.  For the
Schrödinger operator ``H = -d^2/dx^2 + V`` used everywhere else in the package
the hierarchy variable is ``u = -V``; :func:`symmetry_constraint` performs that
reflection and fixes the normalization against the commutator ``[Q, H]``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence

from .operator import ConstraintRewriter
from .ring import ONE, ZERO, DiffPoly, V, X, antiderivative, parse_rational, total_derivative

__all__ = [
    "ConstraintSpec",
    "HierarchyCache",
    "apply_P",
    "apply_R",
    "lenard_U",
    "lenard_F",
    "scaling_term",
    "constraint_residual",
    "symmetry_constraint",
    "symmetry_normalization",
    "constraint_rewriter",
    "conjugation_check",
    "term_inclusion",
    "generic_constants",
]

QUARTER = Fraction(1, 4)
HALF = Fraction(1, 2)


@dataclass(frozen=True)
class ConstraintSpec:
    """One member of the family: level ``N``, ``kappa`` and constants.

    ``C`` holds ``C_0 .. C_{N-1}``; ``B`` holds ``B_0 .. B_N`` and is padded
    with zeros when shorter.
    """

    level: int
    kappa: Fraction = Fraction(0)
    C: tuple = ()
    B: tuple = field(default=())

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"level must be >= 0, got {self.level}")
        object.__setattr__(self, "kappa", parse_rational(self.kappa))
        C = tuple(parse_rational(c) for c in self.C)
        if len(C) != self.level:
            raise ValueError(f"level {self.level} needs {self.level} constants C, got {len(C)}")
        object.__setattr__(self, "C", C)
        B = tuple(parse_rational(b) for b in self.B)
        if len(B) > self.level + 1:
            raise ValueError(f"level {self.level} takes at most {self.level + 1} constants B")
        object.__setattr__(self, "B", B + (Fraction(0),) * (self.level + 1 - len(B)))

    @property
    def order(self) -> int:
        return 2 * self.level + 1

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "kappa": f"{self.kappa.numerator}/{self.kappa.denominator}",
            "C": [f"{c.numerator}/{c.denominator}" for c in self.C],
            "B": [f"{b.numerator}/{b.denominator}" for b in self.B],
        }

    @classmethod
    def from_json(cls, data) -> "ConstraintSpec":
        return cls(int(data["level"]), data.get("kappa", "0/1"), tuple(data.get("C", ())), tuple(data.get("B", ())))


def apply_P(u: DiffPoly) -> DiffPoly:
    """First recursion operator on a density."""
    return (
        total_derivative(total_derivative(u)).scale(-QUARTER)
        - V(0) * u
        + antiderivative(V(1) * u).scale(HALF)
    )


def apply_R(f: DiffPoly, integral: DiffPoly | None = None) -> DiffPoly:
    """Second recursion operator on a flow.

    ``integral`` supplies ``D^{-1} f`` when it is known with its constant
    (``R 0`` is only defined up to ``const * V'``).
    """
    if integral is None:
        integral = antiderivative(f)
    return (
        total_derivative(total_derivative(f)).scale(-QUARTER)
        - V(0) * f
        - (V(1) * integral).scale(HALF)
    )


class HierarchyCache:
    """Append-only memo of ``U_{-1}, U_0, ...`` and ``F_0, F_1, ...``."""

    def __init__(self):
        self._U: List[DiffPoly] = [ONE]  # index j+1 holds U_j
        self._F: List[DiffPoly] = [V(1).scale(-HALF)]
        self._lock = threading.RLock()

    def U(self, j: int) -> DiffPoly:
        if j < -1:
            raise ValueError(f"density index must be >= -1, got {j}")
        with self._lock:
            while len(self._U) <= j + 1:
                self._U.append(apply_P(self._U[-1]))
            return self._U[j + 1]

    def F(self, j: int) -> DiffPoly:
        if j < 0:
            raise ValueError(f"flow index must be >= 0, got {j}")
        with self._lock:
            while len(self._F) <= j:
                self._F.append(apply_R(self._F[-1]))
            return self._F[j]

    def seed(self, j: int, U_j: DiffPoly, F_j: DiffPoly) -> bool:
        """Append precomputed level ``j``; ``False`` if it conflicts or skips a level."""
        with self._lock:
            if j + 1 < len(self._U) and j < len(self._F):
                return self._U[j + 1] == U_j and self._F[j] == F_j
            if len(self._U) == j + 1 and len(self._F) in (j, j + 1):
                if len(self._F) == j + 1 and self._F[j] != F_j:
                    return False
                self._U.append(U_j)
                if len(self._F) == j:
                    self._F.append(F_j)
                return True
            return False

    @property
    def U_list(self) -> List[DiffPoly]:
        return list(self._U)

    @property
    def F_list(self) -> List[DiffPoly]:
        return list(self._F)


_CACHE = HierarchyCache()


def lenard_U(j: int, cache: HierarchyCache | None = None) -> DiffPoly:
    return (cache or _CACHE).U(j)


def lenard_F(j: int, cache: HierarchyCache | None = None) -> DiffPoly:
    return (cache or _CACHE).F(j)


def scaling_term() -> DiffPoly:
    """``x V'/2 + V``, the generator of the dilation part of the family."""
    return (X * V(1)).scale(HALF) + V(0)


def constraint_residual(spec: ConstraintSpec) -> DiffPoly:
    """``kappa (x V'/2 + V) + sum_j C_j F_j + F_N`` as printed for the hierarchy variable."""
    G = lenard_F(spec.level)
    for j, c in enumerate(spec.C):
        if c:
            G = G + lenard_F(j).scale(c)
    if spec.kappa:
        G = G + scaling_term().scale(spec.kappa)
    return G


def symmetry_normalization(level: int) -> Fraction:
    """Factor ``c_N = 2 (-1)^N`` relating ``[Q, H]`` to the reflected hierarchy."""
    return Fraction(2 * (-1) ** level)


def symmetry_constraint(spec: ConstraintSpec) -> DiffPoly:
    """Constraint on the potential ``V`` of ``H = -D^2 + V`` for ``[Q, H] = kappa H``.

    Equal to ``c_N * (sum_j C_j F_j + F_N)(u = -V) - kappa (x V'/2 + V)``,
    which is the order-zero coefficient of ``[Q, H] - kappa H`` for the
    order ``2N+1`` operator built from the same constants.
    """
    G = lenard_F(spec.level)
    for j, c in enumerate(spec.C):
        if c:
            G = G + lenard_F(j).scale(c)
    G = G.reflect().scale(symmetry_normalization(spec.level))
    if spec.kappa:
        G = G - scaling_term().scale(spec.kappa)
    return G


def constraint_rewriter(spec: ConstraintSpec, form: str = "hierarchy") -> ConstraintRewriter:
    """Rewriter for the hierarchy equation (``form="hierarchy"``) or for
    the Schrödinger potential (``form="schrodinger"``)."""
    if form == "hierarchy":
        G = constraint_residual(spec)
    elif form == "schrodinger":
        G = symmetry_constraint(spec)
    else:
        raise ValueError(f"unknown constraint form {form!r}")
    if spec.level == 0 and spec.kappa:
        raise ValueError("level 0 with kappa != 0 has a non-constant leading coefficient; no polynomial rewriter")
    return ConstraintRewriter(G, level=spec.level, kappa=spec.kappa)


def conjugation_check(j: int) -> bool:
    """``F_j == D U_j`` and ``R(D U_{j-1}) == D(P U_{j-1})`` identically."""
    if j < 0:
        raise ValueError("j must be >= 0")
    # fresh cache so both routes are recomputed, not read from a shared memo
    cache = HierarchyCache()
    if lenard_F(j, cache) != total_derivative(lenard_U(j, cache)):
        return False
    prev = lenard_U(j - 1, cache)
    return apply_R(total_derivative(prev), integral=prev) == total_derivative(apply_P(prev))


def generic_constants(n: int, seed: int = 0) -> tuple:
    """Deterministic, pairwise distinct nonzero rationals standing in for symbols."""
    primes = [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47]
    return tuple(Fraction(primes[(i + seed) % len(primes)] + 2 * i, 7 + 4 * i + seed) for i in range(n))


def term_inclusion(n1_level: int, n2_level: int, kappa=0) -> bool:
    """Monomial support of the level-``n2`` residual is inside the level-``n1`` one."""
    if not n1_level > n2_level >= 1:
        raise ValueError(f"need n1_level > n2_level >= 1, got ({n1_level}, {n2_level})")
    big = constraint_residual(ConstraintSpec(n1_level, kappa, generic_constants(n1_level)))
    small = constraint_residual(ConstraintSpec(n2_level, kappa, generic_constants(n2_level, seed=5)))
    return small.support() <= big.support()

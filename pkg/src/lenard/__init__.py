"""Stationary KdV hierarchy, symmetry operators of ``H = -d^2/dx^2 + V`` and
integration of ``H psi = 0`` by quadratures."""

from .errors import (
    Blowup,
    IllConditioned,
    LenardError,
    NotConstant,
    NotExact,
    OrderMismatch,
    SingularPoint,
    UnknownName,
    XiVanishes,
)
from .hierarchy import (
    ConstraintSpec,
    HierarchyCache,
    conjugation_check,
    constraint_residual,
    lenard_F,
    lenard_U,
    symmetry_constraint,
    term_inclusion,
)
from .operator import ConstraintRewriter, DiffOperator, commutator, compose, hamiltonian, reduce_mod_constraint
from .ring import DiffPoly, V, X, antiderivative, total_derivative, variational_derivative
from .symmetry import (
    FirstOrderSymmetry,
    SymmetryOperator,
    build_first_order,
    build_Q_eps_elimination,
    build_Q_recurrence,
    coefficients_a,
    dilation_symmetry,
    verify_commutator,
)

__version__ = "0.1.0"

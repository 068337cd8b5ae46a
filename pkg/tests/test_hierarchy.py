import threading
from fractions import Fraction

import numpy as np
import pytest
import sympy

from conftest import Vf, as_sympy
from lenard.catalog import get
from lenard.hierarchy import (
    ConstraintSpec,
    HierarchyCache,
    apply_P,
    conjugation_check,
    constraint_residual,
    constraint_rewriter,
    generic_constants,
    lenard_F,
    lenard_U,
    scaling_term,
    symmetry_constraint,
    term_inclusion,
)
from lenard.numlab import eval_diffpoly
from lenard.potential import diffpoly_to_sympy, x_symbol
from lenard.ring import ONE, DiffPoly, V, X, total_derivative, variational_derivative

x = x_symbol
q = Fraction


def D(e, k=1):
    return sympy.diff(e, x, k)


def test_base_cases():
    assert lenard_U(-1) == ONE
    assert lenard_U(0) == V(0).scale(q(-1, 2))
    assert lenard_F(0) == V(1).scale(q(-1, 2))


def test_first_levels_by_hand():
    assert lenard_U(1) == V(2).scale(q(1, 8)) + (V(0) ** 2).scale(q(3, 8))
    assert lenard_F(1) == V(3).scale(q(1, 8)) + (V(0) * V(1)).scale(q(3, 4))
    expected_F2 = (
        V(5).scale(q(-1, 32))
        - (V(1) * V(2)).scale(q(5, 8))
        - (V(0) * V(3)).scale(q(5, 16))
        - (V(0) ** 2 * V(1)).scale(q(15, 16))
    )
    assert lenard_F(2) == expected_F2


@pytest.mark.parametrize("j", range(0, 6))
def test_recursions_against_sympy_derivatives(j):
    # D U_j must equal D of P U_{j-1}, computed without any antiderivative
    prev = as_sympy(lenard_U(j - 1))
    dU = -D(prev, 3) / 4 - D(Vf * prev) + D(Vf) * prev / 2
    assert sympy.expand(D(as_sympy(lenard_U(j))) - dU) == 0
    if j:
        Fp = as_sympy(lenard_F(j - 1))
        Fj = -D(Fp, 2) / 4 - Vf * Fp - D(Vf) * as_sympy(lenard_U(j - 1)) / 2
        assert sympy.expand(as_sympy(lenard_F(j)) - Fj) == 0


@pytest.mark.parametrize("j", range(0, 6))
def test_structure(j):
    F, U = lenard_F(j), lenard_U(j)
    assert F.is_x_free() and U.is_x_free()
    assert F.weights() == {2 * j + 3}
    assert U.weights() == {2 * j + 2}
    assert F.coefficient(0, {2 * j + 1: 1}) == q(-1, 2) * q(-1, 4) ** j
    assert variational_derivative(F).is_zero()
    assert F.max_order() == 2 * j + 1
    # U_j has no constant term
    assert U.coefficient(0, ()) == 0


@pytest.mark.parametrize("j", range(0, 6))
def test_conjugation(j):
    assert conjugation_check(j)


@pytest.mark.parametrize("j", range(0, 6))
def test_constant_potential_is_trivial(j):
    c = q(7, 3)
    jets = [c] + [0] * (2 * j + 2)
    assert lenard_F(j).evaluate_exact(0, jets) == 0


def test_constraint_residual_examples():
    C0 = q(5, 7)
    G = constraint_residual(ConstraintSpec(1, 0, (C0,)))
    assert G == lenard_F(1) - V(1).scale(C0 / 2)
    G0 = constraint_residual(ConstraintSpec(0, -1))
    assert G0 == -(X * V(1)).scale(q(1, 2)) - V(0) - V(1).scale(q(1, 2))
    # x-free for kappa = 0, order 2N+1
    G2 = constraint_residual(ConstraintSpec(2, 0, generic_constants(2)))
    assert G2.is_x_free() and G2.max_order() == 5


def test_level_zero_solution_is_shifted_inverse_square():
    G0 = constraint_residual(ConstraintSpec(0, -1))
    A = sympy.Symbol("A")
    assert sympy.simplify(diffpoly_to_sympy(G0, A * (x + 1) ** -2)) == 0


def test_conformal_potential_satisfies_hierarchy_at_kappa_minus_one():
    G = constraint_residual(ConstraintSpec(1, -1, (0,)))
    assert sympy.simplify(diffpoly_to_sympy(G, -2 / x**2)) == 0
    assert sympy.simplify(diffpoly_to_sympy(lenard_F(1), -2 / x**2)) == 0
    assert sympy.simplify(diffpoly_to_sympy(scaling_term(), -2 / x**2)) == 0


def test_soliton_residual_numerically():
    entry = get("soliton1")
    xs = np.linspace(-5, 5, 64)
    vals = eval_diffpoly(constraint_residual(ConstraintSpec(1, 0, (1,))).scale(8), entry.potential, xs)
    assert np.max(np.abs(vals)) < 1e-10


def test_symmetry_constraint_is_reflected_and_normalized():
    spec = ConstraintSpec(1, -1, (q(2, 3),))
    expected = (lenard_F(1) + lenard_F(0).scale(q(2, 3))).reflect().scale(-2) + scaling_term()
    assert symmetry_constraint(spec) == expected
    # level 0: 2 (-F_0)(-V) - kappa (x V'/2 + V) = V' + ... for kappa = 0
    assert symmetry_constraint(ConstraintSpec(0)) == V(1)


@pytest.mark.parametrize("n1,n2", [(n1, n2) for n1 in range(2, 5) for n2 in range(1, n1)])
def test_term_inclusion(n1, n2):
    assert term_inclusion(n1, n2)


def test_term_inclusion_with_kappa():
    assert term_inclusion(3, 2, kappa=-1)


@pytest.mark.parametrize("bad", [(1, 1), (2, 0), (0, 0)])
def test_term_inclusion_precondition(bad):
    with pytest.raises(ValueError):
        term_inclusion(*bad)


def test_spec_validation_and_json():
    with pytest.raises(ValueError):
        ConstraintSpec(2, 0, (1,))
    with pytest.raises(ValueError):
        ConstraintSpec(-1)
    with pytest.raises(ValueError):
        ConstraintSpec(1, 0, (1,), (1, 2, 3))
    spec = ConstraintSpec(2, q(-1), (q(1, 3), 4), (1,))
    assert spec.B == (1, 0, 0)
    assert ConstraintSpec.from_json(spec.to_json()) == spec
    assert spec.order == 5


def test_rewriter_refuses_level_zero_dilation():
    with pytest.raises(ValueError):
        constraint_rewriter(ConstraintSpec(0, -1))
    r = constraint_rewriter(ConstraintSpec(1, -1, (0,)))
    assert r.solved_var == 3
    assert r.reduce(constraint_residual(ConstraintSpec(1, -1, (0,)))).is_zero()


def test_cache_concurrent_access():
    cache = HierarchyCache()
    results = [None] * 8

    def work(i):
        results[i] = lenard_F(5, cache)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == lenard_F(5) for r in results)
    assert len(cache.F_list) == 6


def test_cache_seed():
    cache = HierarchyCache()
    assert cache.seed(0, lenard_U(0), lenard_F(0))
    assert cache.seed(1, lenard_U(1), lenard_F(1))
    assert not cache.seed(3, lenard_U(3), lenard_F(3))
    assert not cache.seed(1, lenard_U(0), lenard_F(1))
    assert cache.F(2) == lenard_F(2)


def test_apply_P_on_one():
    assert apply_P(ONE) == V(0).scale(q(-1, 2))
    assert total_derivative(apply_P(lenard_U(1))) == lenard_F(2)

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lacunary.forms import (BirchVerdict, CutoffPsi, IntegralForm, PsiKind, decay_exponent_K, eval_form,
                            eval_gradient, eval_many, eval_real, parse_form_config, verify_birch_rank)

A8_GRAM = [[2 if i == j else 1 for j in range(8)] for i in range(8)]

FORMS = [
    IntegralForm.sphere(3),
    IntegralForm.sphere(5),
    IntegralForm.diagonal([1, 2, 3, 1], 4),
    IntegralForm.diagonal([1, 1, 1, 1], 3),
    IntegralForm.quadratic([[2, 1, 0], [1, 2, 1], [0, 1, 3]]),
    IntegralForm.generic({(3, 0, 0): 1, (0, 3, 0): 1, (1, 1, 1): -2, (0, 0, 3): 4}, birch_rank=3),
]


def test_eval_examples():
    assert eval_form(IntegralForm.sphere(5), (1, 1, 1, 1, 1)) == 5
    assert eval_form(IntegralForm.diagonal([1, 1, 1], 4), (2, 0, 0)) == 16
    assert eval_form(IntegralForm.sphere(4), (1, -1, 1, -1)) == 4


def test_gradient_examples():
    np.testing.assert_allclose(eval_gradient(IntegralForm.sphere(2), (1.0, 0.0)), [2, 0])
    np.testing.assert_allclose(eval_gradient(IntegralForm.diagonal([1, 1], 4), (1.0, 1.0)), [4, 4])
    np.testing.assert_allclose(eval_gradient(IntegralForm.sphere(3), (0.0, 0.0, 0.0)), [0, 0, 0])


def test_gram_form_evaluates_as_xGx():
    Q = IntegralForm.quadratic(A8_GRAM)
    x = np.arange(1, 9)
    assert eval_form(Q, x) == int(x @ np.array(A8_GRAM) @ x)


@pytest.mark.parametrize("Q", FORMS, ids=lambda q: q.name)
@given(t=st.integers(-5, 5), x=st.lists(st.integers(-20, 20), min_size=3, max_size=3))
def test_homogeneity(Q, t, x):
    x = (x * 2)[: Q.n]
    assert eval_form(Q, [t * v for v in x]) == t**Q.degree * eval_form(Q, x)


@pytest.mark.parametrize("Q", FORMS, ids=lambda q: q.name)
def test_euler_identity(Q):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, Q.n))
    lhs = np.array([x @ eval_gradient(Q, x) for x in X])
    rhs = Q.degree * eval_real(Q, X)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("Q", FORMS, ids=lambda q: q.name)
def test_vectorized_evaluation_agrees(Q):
    rng = np.random.default_rng(5)
    X = rng.integers(-9, 10, size=(50, Q.n))
    assert list(eval_many(Q, X)) == [eval_form(Q, x) for x in X]


@pytest.mark.parametrize("Q", [f for f in FORMS if f.positive_definite], ids=lambda q: q.name)
def test_positive_definite_forms_are_positive(Q):
    rng = np.random.default_rng(7)
    X = rng.integers(-6, 7, size=(300, Q.n))
    X = X[np.any(X != 0, axis=1)]
    assert (eval_many(Q, X) > 0).all()


def test_birch_verdicts():
    r = verify_birch_rank(IntegralForm.sphere(5))
    assert r.verdict is BirchVerdict.VERIFIED and r.regular and r.threshold == 4
    big = verify_birch_rank(IntegralForm.diagonal([1] * 30, 4))
    assert big.verdict is BirchVerdict.VERIFIED and big.threshold == 48 and not big.regular
    cubic = IntegralForm.generic({(3, 0): 1, (0, 3): 1, (1, 2): 5}, birch_rank=20)
    assert verify_birch_rank(cubic).verdict is BirchVerdict.ASSUMED


def test_diagonal_rank_equals_n():
    assert IntegralForm.diagonal([1, 2, 3, 4], 3).birch_rank == 4


def test_decay_K_for_quadratic_rank_eight():
    # (1/2)((B - (k-1) 2^(k-1)) / 2^k - 1) with B = 8, k = 2
    assert decay_exponent_K(IntegralForm.quadratic(A8_GRAM)) == pytest.approx(0.25)


@pytest.mark.parametrize("kind", list(PsiKind))
def test_cutoff_range(kind):
    psi = CutoffPsi(kind, profile=((0.0, 1.0), (1.0, 0.5), (2.0, 0.0)) if kind is PsiKind.CUSTOM_RADIAL else ())
    X = np.random.default_rng(0).normal(size=(500, 4)) * 2
    v = psi(X)
    assert ((v >= 0) & (v <= 1)).all()


def test_parse_config_round_trip():
    Q, psi = parse_form_config({"kind": "diagonal", "degree": "4", "coefficients": "1,2,3"})
    assert (Q.degree, Q.n, tuple(Q.coefficients)) == (4, 3, (1, 2, 3)) and psi.is_unit
    Q, _ = parse_form_config({"kind": "quadratic", "gram": "2,1;1,2"})
    assert Q.n == 2 and Q.positive_definite
    with pytest.raises(ValueError):
        parse_form_config({"kind": "cubic-surface"})

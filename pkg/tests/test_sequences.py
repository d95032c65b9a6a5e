from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from lacunary.arith import BudgetExceeded
from lacunary.counting import build_rep_table
from lacunary.forms import IntegralForm, eval_form
from lacunary.sequences import (CounterexamplePlan, build_counterexample, detect_regular_progression,
                                dyadic_sequence, first_regular_values, ordered_residues, validate_lacunary)

S5 = IntegralForm.sphere(5)


def test_dyadic_sequence_ratio():
    seq = dyadic_sequence(3, 10)
    assert validate_lacunary(seq.terms) == (True, 2.0)


def test_squares_have_ratio_tending_to_one():
    ok, c = validate_lacunary([t * t for t in range(1, 1001)])
    assert c < 1.003


def test_explicit_ratio():
    assert validate_lacunary([5, 10, 21, 45]) == (True, 2.0)


def test_validation_errors():
    with pytest.raises(ValueError):
        validate_lacunary([4])
    with pytest.raises(ValueError):
        validate_lacunary([4, 4, 8])


@given(st.lists(st.integers(1, 10**6), min_size=2, max_size=30, unique=True))
def test_min_ratio_is_a_lower_bound(terms):
    terms = sorted(terms)
    _, c = validate_lacunary(terms)
    assert all(b / a >= c for a, b in zip(terms, terms[1:]))


def test_sphere_regular_values_are_all_integers():
    prog = detect_regular_progression(S5, cap=2000)
    assert prog.all_integers and prog.modulus == 1 and prog.lower_constant > 0


def test_quartic_progression_mod_16():
    prog = detect_regular_progression(IntegralForm.diagonal([1] * 16, 4), cap=4000)
    assert prog.modulus == 16
    assert prog.residues == list(range(1, 14))
    assert prog.lower_constant > 0
    # fourth powers are 0 or 1 mod 16, so a sum of sixteen of them misses 0, 14, 15 only
    assert {r for r, c in prog.constants[16].items() if c == 0} == {0, 14, 15}


def test_detection_needs_a_table():
    with pytest.raises(ValueError):
        detect_regular_progression(S5, cap=9)


def test_first_regular_values():
    assert first_regular_values(S5) == [1, 2, 3, 4, 5]
    assert first_regular_values(IntegralForm.diagonal([1] * 6, 4)) == [1, 2, 3, 4, 5]


def test_residue_order():
    assert ordered_residues(2, 3, 5) == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1)]


def test_plan_with_fixed_base():
    plan = build_counterexample(S5, 3, 1, 8, K=8)
    assert len(plan.terms) == 8
    assert all(e.count > 0 and e.ratio >= 2 for e in plan.entries)
    assert validate_lacunary(plan.terms)[0]


@pytest.mark.parametrize("J,M", [(1, 8), (2, 8), (1, 12)])
def test_plan_invariants(J, M):
    plan = build_counterexample(S5, 3, J, M)
    mod = 3**J
    for e in plan.entries:
        assert e.lam % mod == eval_form(S5, e.b) % mod
        assert e.window[0] <= e.lam < e.window[1]
        tab = build_rep_table(S5, e.lam, (mod, e.b))
        assert tab[e.lam] == e.count
    t = plan.terms
    assert all(b > a for a, b in zip(t, t[1:]))
    assert all(c >= 2 * a for a, c in zip(t, t[2:]))
    assert plan.min_ratio >= plan.c0


def test_search_finds_smallest_base():
    plan = build_counterexample(S5, 3, 1, 8)
    if plan.K > 2:
        below = build_counterexample(S5, 3, 1, 8, K=plan.K - 1, c0=plan.c0)
        assert below.min_ratio < plan.c0


def test_plan_json_round_trip():
    plan = build_counterexample(S5, 3, 1, 4)
    back = CounterexamplePlan.from_dict(json.loads(plan.to_json()))
    assert back.terms == plan.terms and back.K == plan.K


def test_plan_errors():
    with pytest.raises(ValueError):
        build_counterexample(S5, 3, 1, 0)
    with pytest.raises(ValueError):
        build_counterexample(S5, 2, 1, 4)
    with pytest.raises(ValueError):
        build_counterexample(S5, 3, 1, 244)


def test_full_construction_exceeds_budget():
    with pytest.raises(BudgetExceeded, match="max feasible M"):
        build_counterexample(S5, 3, 1, 3**5, K=12)

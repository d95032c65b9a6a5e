from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from lacunary.arith import (BudgetExceeded, block_index, check_budget, divisors, dyadic_block, factorize,
                            is_prime, is_squarefree, lcm, mobius, mobius_table, units)


def naive_mobius(m: int) -> int:
    sign, k, p = 1, m, 2
    while p * p <= k:
        if k % p == 0:
            k //= p
            if k % p == 0:
                return 0
            sign = -sign
        p += 1
    return -sign if k > 1 else sign


def test_mobius_small_values():
    assert [mobius(m) for m in range(1, 13)] == [1, -1, -1, 0, -1, 1, -1, 0, 0, 1, -1, 0]


def test_mobius_table_matches_pointwise():
    tab = mobius_table(500)
    assert all(tab[m] == mobius(m) for m in range(1, 501))


@given(st.integers(1, 5000))
def test_mobius_against_trial_division(m):
    assert mobius(m) == naive_mobius(m)


@given(st.integers(2, 3000))
def test_mobius_sums_to_zero_over_divisors(m):
    assert sum(mobius(d) for d in divisors(m)) == 0


@given(st.integers(1, 10**6))
def test_factorize_reconstructs(m):
    assert math.prod(p**e for p, e in factorize(m)) == m
    assert all(is_prime(p) for p, _ in factorize(m))


@given(st.integers(1, 400))
def test_units_are_coprime_residues(q):
    u = units(q)
    assert u == [a for a in range(q) if math.gcd(a, q) == 1] or (q == 1 and u == [0])


def test_units_of_one_is_zero():
    assert units(1) == [0]


def test_squarefree_and_lcm():
    assert is_squarefree(30) and not is_squarefree(12)
    assert lcm(4, 6, 10) == 60


@given(st.integers(1, 20))
def test_dyadic_blocks_partition(j):
    blk = dyadic_block(j)
    assert blk.start == 2 ** (j - 1) and blk.stop == 2**j
    assert all(block_index(q) == j for q in blk)


def test_budget_guard():
    check_budget("ok", 10, 10)
    check_budget("default", 10**8, None)
    with pytest.raises(BudgetExceeded):
        check_budget("too big", 11, 10)
    with pytest.raises(BudgetExceeded):
        check_budget("past the default", 10**12, None)

"""Small arithmetic-function helpers (Moebius, divisors, units, lcm)."""

from __future__ import annotations

import math
from functools import lru_cache, reduce


class BudgetExceeded(RuntimeError):
    """Raised when an operation would exceed its configured work budget."""

    def __init__(self, what: str, needed: int, budget: int):
        super().__init__(f"{what}: needs ~{needed} operations, budget is {budget}")
        self.needed = needed
        self.budget = budget


DEFAULT_BUDGET = 10**9


def check_budget(what: str, needed: int, budget: int | None) -> None:
    if budget is None:
        budget = DEFAULT_BUDGET
    if needed > budget:
        raise BudgetExceeded(what, int(needed), int(budget))


@lru_cache(maxsize=None)
def factorize(m: int) -> tuple[tuple[int, int], ...]:
    if m < 1:
        raise ValueError(f"factorize expects a positive integer, got {m}")
    out = []
    p = 2
    while p * p <= m:
        if m % p == 0:
            e = 0
            while m % p == 0:
                m //= p
                e += 1
            out.append((p, e))
        p += 1 if p == 2 else 2
    if m > 1:
        out.append((m, 1))
    return tuple(out)


def mobius(m: int) -> int:
    f = factorize(m)
    if any(e > 1 for _, e in f):
        return 0
    return -1 if len(f) % 2 else 1


def mobius_table(limit: int) -> list[int]:
    """mu(0..limit) by a linear sieve; mu(0) is set to 0."""
    mu = [1] * (limit + 1)
    if limit >= 0:
        mu[0] = 0
    is_comp = [False] * (limit + 1)
    primes: list[int] = []
    for i in range(2, limit + 1):
        if not is_comp[i]:
            primes.append(i)
            mu[i] = -1
        for p in primes:
            if i * p > limit:
                break
            is_comp[i * p] = True
            if i % p == 0:
                mu[i * p] = 0
                break
            mu[i * p] = -mu[i]
    return mu


@lru_cache(maxsize=None)
def divisors(m: int) -> tuple[int, ...]:
    divs = [1]
    for p, e in factorize(m):
        divs = [d * p**i for d in divs for i in range(e + 1)]
    return tuple(sorted(divs))


def is_squarefree(m: int) -> bool:
    return all(e == 1 for _, e in factorize(m))


def is_prime(m: int) -> bool:
    return m >= 2 and factorize(m) == ((m, 1),)


def units(q: int) -> list[int]:
    """U_q = (Z/qZ)^*, with the convention U_1 = {0}."""
    if q == 1:
        return [0]
    return [a for a in range(q) if math.gcd(a, q) == 1]


def lcm(*values: int) -> int:
    return reduce(lambda x, y: x * y // math.gcd(x, y), values, 1)


def dyadic_block(j: int) -> range:
    """I_j = [2^(j-1), 2^j) as integers."""
    if j < 1:
        raise ValueError("j must be >= 1")
    return range(2 ** (j - 1), 2**j)


def block_index(q: int) -> int:
    """The unique j with q in I_j."""
    if q < 1:
        raise ValueError("q must be >= 1")
    return q.bit_length()

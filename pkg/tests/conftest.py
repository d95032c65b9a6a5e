from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lacunary.forms import IntegralForm

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def brute_counts(Q: IntegralForm, cap: int, congruence=None) -> np.ndarray:
    """Independent oracle: r(lam) for lam <= cap by scanning a box, one first-coordinate slice at a time."""
    R = 0
    while min(Q.coefficients) * (R + 1) ** Q.degree <= cap:
        R += 1
    axis = np.arange(-R, R + 1)
    out = np.zeros(cap + 1, dtype=np.int64)
    rest = np.stack(np.meshgrid(*[axis] * (Q.n - 1), indexing="ij"), -1).reshape(-1, Q.n - 1) \
        if Q.n > 1 else np.zeros((1, 0), dtype=np.int64)
    tail = (rest**Q.degree * np.array(Q.coefficients[1:], dtype=np.int64)).sum(axis=1).astype(np.int64)
    for x0 in axis:
        v = Q.coefficients[0] * x0**Q.degree + tail
        keep = v <= cap
        if congruence is not None:
            q, b = congruence
            keep &= (x0 - b[0]) % q == 0
            keep &= ((rest - np.array(b[1:])) % q == 0).all(axis=1)
        out += np.bincount(v[keep], minlength=cap + 1)
    return out


def brute_weyl(Q: IntegralForm, q: int, a: int, avec) -> complex:
    """q^-n sum_s e((Q(s) a + s.avec) / q) with a Python loop."""
    total = 0j
    for s in itertools.product(range(q), repeat=Q.n):
        Qs = sum(c * si**Q.degree for c, si in zip(Q.coefficients, s))
        total += np.exp(2j * np.pi * ((Qs * a + sum(si * ai for si, ai in zip(s, avec))) % q) / q)
    return total / q**Q.n


@pytest.fixture
def sphere5() -> IntegralForm:
    return IntegralForm.sphere(5)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])

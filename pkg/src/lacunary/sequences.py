"""Lacunary sequences, regular-value progressions and the residue-by-residue counterexample plan."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .arith import BudgetExceeded, is_prime
from .counting import build_rep_table, count_representations, prop71_maximizer
from .forms import UNIT_PSI, CutoffPsi, FormKind, IntegralForm, eval_form


@dataclass(frozen=True)
class LacunarySequence:
    terms: tuple[int, ...]
    c: float
    provenance: str = "user"


def validate_lacunary(terms: Sequence[int]) -> tuple[bool, float]:
    """(lacunary, min consecutive ratio) for a strictly increasing positive sequence."""
    terms = [int(t) for t in terms]
    if len(terms) < 2:
        raise ValueError("need at least two terms")
    if any(b <= a for a, b in zip(terms, terms[1:])) or terms[0] <= 0:
        raise ValueError("terms must be positive and strictly increasing")
    c = min(b / a for a, b in zip(terms, terms[1:]))
    return c > 1.0, c


def dyadic_sequence(start_exponent: int, length: int) -> LacunarySequence:
    terms = tuple(2 ** (start_exponent + i) for i in range(length))
    return LacunarySequence(terms, 2.0, "dyadic")


# -- regular values ------------------------------------------------------------------------


@dataclass
class RegularProgression:
    """Progressions {q t + r} along which r(lam) >= c lam^(n/k-1) on the scanned tail."""

    modulus: int
    residues: list[int]
    start: int
    lower_constant: float
    all_integers: bool
    constants: dict[int, dict[int, float]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["constants"] = {str(q): {str(r): v for r, v in row.items()} for q, row in self.constants.items()}
        return d


def detect_regular_progression(Q: IntegralForm, psi: CutoffPsi = UNIT_PSI, cap: int = 2000,
                               q_scan: int = 16, tail_from: float = 0.25) -> RegularProgression:
    """Scan residue classes mod q <= q_scan for a positive lower constant of r(lam)/lam^(n/k-1)
    on lam in [tail_from * cap, cap], and pick the modulus whose regular classes cover the
    largest fraction of integers (the smallest such modulus on ties).

    ``start`` is the first lam from which every member of the chosen classes is represented.
    """
    if cap < 10:
        raise ValueError("table too short: cap must be >= 10")
    if psi.is_unit and Q.positive_definite and Q.kind is FormKind.DIAGONAL:
        counts = build_rep_table(Q, cap).counts.astype(float)
    else:
        counts = np.array([float(count_representations(Q, psi, lam)) for lam in range(cap + 1)])
    lam = np.arange(cap + 1, dtype=float)
    with np.errstate(divide="ignore"):
        scaled = counts / np.where(lam > 0, lam, 1.0) ** (Q.n / Q.degree - 1)
    lo = max(1, int(tail_from * cap))
    constants: dict[int, dict[int, float]] = {}
    for q in range(1, q_scan + 1):
        row = {}
        for r in range(q):
            idx = np.arange(lo + (r - lo) % q, cap + 1, q)
            row[r] = float(scaled[idx].min()) if idx.size else 0.0
        constants[q] = row
    best_q, best_frac = 0, 0.0
    for q in range(1, q_scan + 1):
        frac = sum(c > 0 for c in constants[q].values()) / q
        if frac > best_frac + 1e-12:
            best_q, best_frac = q, frac
    if best_q == 0:
        return RegularProgression(0, [], 0, 0.0, False, constants)
    q = best_q
    good = [r for r, c in constants[q].items() if c > 0]
    members = np.isin(np.arange(cap + 1) % q, good)
    bad = np.flatnonzero(members & (counts <= 0) & (np.arange(cap + 1) >= 1))
    start = int(bad.max()) + 1 if bad.size else 1
    lower = min(constants[q][r] for r in good)
    return RegularProgression(q, good, start, lower, q == 1 and start == 1, constants)


def first_regular_values(Q: IntegralForm, count: int = 5, cap: int = 200) -> list[int]:
    """The first ``count`` lam >= 1 with r(lam) > 0."""
    tab = build_rep_table(Q, cap)
    vals = [lam for lam in range(1, cap + 1) if tab[lam] > 0][:count]
    if len(vals) < count:
        raise ValueError(f"fewer than {count} represented values up to {cap}")
    return vals


# -- counterexample plan -------------------------------------------------------------------


def ordered_residues(n: int, modulus: int, M: int) -> list[tuple[int, ...]]:
    """The first M vectors of Z_modulus^n in lexicographic order."""
    out = []
    for flat in range(M):
        digits = []
        for _ in range(n):
            flat, d = divmod(flat, modulus)
            digits.append(d)
        out.append(tuple(reversed(digits)))
    return out


@dataclass
class PlanEntry:
    b: tuple[int, ...]
    window: tuple[int, int]
    lam: int
    count: int
    ratio: float


@dataclass
class CounterexamplePlan:
    form: str
    p: int
    J: int
    M: int
    K: int
    c0: float
    entries: list[PlanEntry]

    @property
    def terms(self) -> list[int]:
        return [e.lam for e in self.entries]

    @property
    def min_ratio(self) -> float:
        return min(e.ratio for e in self.entries)

    @property
    def covered_fraction(self) -> float:
        return self.M / (self.p**self.J) ** len(self.entries[0].b)

    def as_dict(self) -> dict:
        return {"form": self.form, "p": self.p, "J": self.J, "M": self.M, "K": self.K,
                "c0": self.c0, "min_ratio": self.min_ratio,
                "residues": [{"b": list(e.b), "window": list(e.window), "lambda": e.lam,
                              "count": e.count, "ratio": e.ratio} for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CounterexamplePlan":
        entries = [PlanEntry(tuple(r["b"]), tuple(r["window"]), r["lambda"], r["count"], r["ratio"])
                   for r in d["residues"]]
        return cls(d.get("form", ""), d["p"], d["J"], d["M"], d["K"], d.get("c0", 0.0), entries)


def _plan_for_K(Q: IntegralForm, p: int, J: int, residues, K: int, budget) -> list[PlanEntry]:
    modulus = p**J
    entries = []
    for i, b in enumerate(residues, start=1):
        R = 2 ** (K + i - 1)
        w = prop71_maximizer(Q, p, J, b, R, budget=budget)
        entries.append(PlanEntry(tuple(b), w.window, w.lam, w.count, w.ratio))
        assert w.lam % modulus == eval_form(Q, b) % modulus
    return entries


def build_counterexample(Q: IntegralForm, p: int, J: int, M: int, K: int | None = None,
                         c0: float = 0.05, lam_cap: int = 2**24, K_max: int = 32,
                         budget: int | None = None) -> CounterexamplePlan:
    """Assign residue b^i the window [2^(K+i-1), 2^(K+i)) and pick the lam maximizing
    #{Q(x) = lam, x = b^i mod p^J} there.

    Without ``K`` the smallest passing base is found by doubling then bisection, where a base
    passes when every window's normalized count reaches ``c0``.
    """
    if not (is_prime(p) and p % 2 == 1):
        raise ValueError("p must be an odd prime")
    if J < 1:
        raise ValueError("J must be >= 1")
    total = (p**J) ** Q.n
    if M < 1:
        raise ValueError("empty plan: M must be >= 1")
    if M > total:
        raise ValueError(f"M={M} exceeds the {total} residues mod {p ** J}")
    if not Q.positive_definite:
        raise ValueError("the window search needs a positive definite form")
    residues = ordered_residues(Q.n, p**J, M)

    def feasible(k: int) -> None:
        top = 2 ** (k + M)
        if top > lam_cap:
            max_M = max(0, lam_cap.bit_length() - 1 - k)
            raise BudgetExceeded(f"counterexample windows (K={k}, M={M}; max feasible M={max_M})",
                                 top, lam_cap)

    def passes(entries) -> bool:
        return min(e.ratio for e in entries) >= c0

    if K is not None:
        feasible(K)
        entries = _plan_for_K(Q, p, J, residues, K, budget)
        return CounterexamplePlan(Q.name, p, J, M, K, c0, entries)
    k_lo = max(1, math.ceil(math.log2(p**J)) + 1)
    k = k_lo
    cache: dict[int, list[PlanEntry]] = {}
    while True:
        feasible(k)
        cache[k] = _plan_for_K(Q, p, J, residues, k, budget)
        if passes(cache[k]):
            break
        if k >= K_max:
            raise RuntimeError(f"no window base up to K={K_max} reaches c0={c0}")
        k_lo = k + 1
        k = min(2 * k, K_max)
    hi = k
    lo = k_lo
    while lo < hi:
        mid = (lo + hi) // 2
        cache.setdefault(mid, _plan_for_K(Q, p, J, residues, mid, budget))
        if passes(cache[mid]):
            hi = mid
        else:
            lo = mid + 1
    return CounterexamplePlan(Q.name, p, J, M, hi, c0, cache[hi])

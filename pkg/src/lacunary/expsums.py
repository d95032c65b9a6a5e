"""Normalized Weyl sums, their generalized variant, alpha_Q estimation and the
singular-series identities (F), (U), (C), (K).

Convention: e(z) = exp(2 pi i z) and
    F_q(a, avec) = q^-n sum_{s in Z_q^n} e(Q(s) a/q + s.avec/q).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .arith import BudgetExceeded, check_budget, divisors, is_squarefree, lcm, mobius, units
from .forms import FormKind, IntegralForm, eval_many


@lru_cache(maxsize=256)
def roots_of_unity(L: int) -> np.ndarray:
    """e(m/L) for m in Z_L, indexed by exact integer residues."""
    v = np.exp(2j * np.pi * np.arange(L) / L)
    v.setflags(write=False)
    return v


@lru_cache(maxsize=512)
def _coordinate_table(c: int, k: int, q: int) -> np.ndarray:
    """G[a, b] = q^-1 sum_{s in Z_q} e((c s^k a + s b)/q) for a, b in Z_q."""
    s = np.arange(q, dtype=np.int64)
    sk = np.array([pow(int(v), k, q) for v in s], dtype=np.int64)
    a = np.arange(q, dtype=np.int64)[:, None]
    phase = (a * ((c % q) * sk % q)[None, :]) % q
    # ifft along s gives exactly q^-1 sum_s x_s e(s b / q)
    G = np.fft.ifft(roots_of_unity(q)[phase], axis=1)
    G.setflags(write=False)
    return G


def coordinate_tables(Q: IntegralForm, q: int) -> list[np.ndarray]:
    if Q.kind is not FormKind.DIAGONAL:
        raise ValueError("coordinate tables exist only for diagonal forms")
    return [_coordinate_table(c, Q.degree, q) for c in Q.coefficients]


@lru_cache(maxsize=64)
def residue_grid(n: int, q: int) -> np.ndarray:
    """All of Z_q^n as an (q^n, n) int array in lexicographic order."""
    g = np.indices((q,) * n, dtype=np.int64).reshape(n, -1).T
    g.setflags(write=False)
    return g


@lru_cache(maxsize=64)
def _form_mod(Q: IntegralForm, q: int) -> np.ndarray:
    vals = eval_many(Q, residue_grid(Q.n, q))
    out = np.array([int(v) % q for v in vals], dtype=np.int64) if vals.dtype == object \
        else (vals % q).astype(np.int64)
    out.setflags(write=False)
    return out


def form_mod_values(Q: IntegralForm, q: int, budget: int | None = None) -> np.ndarray:
    """Q(s) mod q for s over Z_q^n (lexicographic)."""
    check_budget(f"Q mod {q} over Z_{q}^{Q.n}", q**Q.n, budget)
    return _form_mod(Q, q)


def _compensated_mean(z: np.ndarray) -> complex:
    m = z.size
    return complex(math.fsum(z.real.tolist()) / m, math.fsum(z.imag.tolist()) / m)


@dataclass(frozen=True)
class WeylValue:
    q: int
    a: int
    avec: tuple[int, ...]
    value: complex

    def __abs__(self) -> float:
        return abs(self.value)


@dataclass(frozen=True)
class GeneralizedWeylValue:
    a: int
    q: int
    avec: tuple[int, ...]
    qvec: tuple[int, ...]
    L: int
    value: complex


def _check_params(Q: IntegralForm, q: int, avec) -> tuple[int, ...]:
    if q < 1:
        raise ValueError("q must be >= 1")
    avec = tuple(int(v) for v in avec) if avec is not None else (0,) * Q.n
    if len(avec) != Q.n:
        raise ValueError(f"frequency vector must have length {Q.n}")
    return avec


def weyl_sum(Q: IntegralForm, q: int, a: int, avec=None, budget: int | None = None) -> WeylValue:
    """F_q(a, avec); residues are reduced mod q."""
    avec = _check_params(Q, q, avec)
    a %= q
    red = tuple(v % q for v in avec)
    if Q.kind is FormKind.DIAGONAL:
        val = complex(1.0)
        for G, b in zip(coordinate_tables(Q, q), red):
            val *= G[a, b]
        return WeylValue(q, a, red, complex(val))
    return WeylValue(q, a, red, weyl_sum_direct(Q, q, a, red, budget))


def weyl_sum_direct(Q: IntegralForm, q: int, a: int, avec, budget: int | None = None) -> complex:
    """Plain q^n summation with compensated accumulation (the diagonal cross-check)."""
    check_budget(f"Weyl sum q={q}, n={Q.n}", q**Q.n, budget)
    S = residue_grid(Q.n, q)
    phase = (a * form_mod_values(Q, q, budget) + S @ np.array(avec, dtype=np.int64)) % q
    return _compensated_mean(roots_of_unity(q)[phase])


def weyl_sums_all_freq(Q: IntegralForm, q: int, a: int, budget: int | None = None) -> np.ndarray:
    """F_q(a, avec) for every avec in Z_q^n, shape (q,)*n."""
    check_budget(f"Weyl sums q={q}, n={Q.n} (all frequencies)", q**Q.n * max(1, Q.n), budget)
    if Q.kind is FormKind.DIAGONAL:
        out = np.ones((1,) * 0, dtype=complex)
        for G in coordinate_tables(Q, q):
            out = np.multiply.outer(out, G[a % q])
        return out
    x = roots_of_unity(q)[(a * form_mod_values(Q, q, budget)) % q].reshape((q,) * Q.n)
    return np.fft.ifftn(x)


def generalized_weyl_sum(Q: IntegralForm, a: int, q: int, avec, qvec,
                         budget: int | None = None) -> GeneralizedWeylValue:
    """F(a, q, avec, qvec) = L^-n sum_{s in Z_L^n} e(Q(s) a/q + sum_i s_i a_i/q_i)."""
    avec = _check_params(Q, q, avec)
    qvec = tuple(int(v) for v in qvec)
    if len(qvec) != Q.n or min(qvec) < 1:
        raise ValueError("qvec must hold n positive denominators")
    L = lcm(q, *qvec)
    if Q.kind is FormKind.DIAGONAL:
        val = complex(1.0)
        k = Q.degree
        for c, ai, qi in zip(Q.coefficients, avec, qvec):
            P = lcm(q, qi)
            s = np.arange(P, dtype=np.int64)
            sk = np.array([pow(int(v), k, P) for v in s], dtype=np.int64)
            phase = ((c % P) * sk % P * (a * (P // q) % P) + s * (ai * (P // qi) % P)) % P
            val *= _compensated_mean(roots_of_unity(P)[phase % P])
        return GeneralizedWeylValue(a, q, avec, qvec, L, complex(val))
    check_budget(f"generalized Weyl sum L={L}, n={Q.n}", L**Q.n, budget)
    S = residue_grid(Q.n, L)
    weights = np.array([ai * (L // qi) for ai, qi in zip(avec, qvec)], dtype=np.int64)
    phase = (form_mod_values(Q, L, budget) * (a * (L // q) % L) + S @ weights) % L
    return GeneralizedWeylValue(a, q, avec, qvec, L, _compensated_mean(roots_of_unity(L)[phase]))


# -- alpha_Q ------------------------------------------------------------------


@dataclass
class AlphaEstimate:
    form: str
    q_max: int
    qs: list[int]
    sup_values: list[float]
    alpha_hat: float
    stderr: float
    intercept: float
    residuals: list[float]
    squarefree_only: bool
    sampled: bool
    method: str = "least_squares"
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"alpha_hat": self.alpha_hat, "stderr": self.stderr, "q_max": self.q_max,
                "sampled": self.sampled, "squarefree_only": self.squarefree_only,
                "n_points": len(self.qs), "method": self.method, **self.extras}


def weyl_supremum(Q: IntegralForm, q: int, budget: int | None = None, sample: int = 4096,
                  rng: np.random.Generator | None = None) -> tuple[float, bool]:
    """sup over a in U_q and avec in Z_q^n of |F_q(a, avec)|; returns (value, sampled)."""
    if Q.kind is FormKind.DIAGONAL:
        tabs = [np.abs(G) for G in coordinate_tables(Q, q)]
        best = 0.0
        for a in units(q):
            # coordinates decouple for fixed a, so the avec-supremum factorizes exactly
            best = max(best, float(np.prod([t[a].max() for t in tabs])))
        return best, False
    try:
        check_budget("full Weyl supremum", q**Q.n * len(units(q)), budget)
    except BudgetExceeded:
        rng = rng or np.random.default_rng(0)
        best = 0.0
        for a in units(q):
            for _ in range(max(1, sample // len(units(q)))):
                av = rng.integers(0, q, Q.n)
                best = max(best, abs(weyl_sum_direct(Q, q, a, av, budget=None)))
            best = max(best, abs(weyl_sum_direct(Q, q, a, (0,) * Q.n, budget=None)))
        return best, True
    best = max(float(np.abs(weyl_sums_all_freq(Q, q, a, budget=None)).max()) for a in units(q))
    return best, False


def _fit_line(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    A = np.vstack([np.ones_like(x), -x]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    cov = float(resid @ resid) / dof * np.linalg.inv(A.T @ A)
    return coef, resid, float(math.sqrt(max(cov[1, 1], 0.0)))


def estimate_alpha(Q: IntegralForm, q_max: int, squarefree_only: bool = True,
                   method: str = "upper_envelope", budget: int | None = None,
                   sample: int = 4096, seed: int = 0) -> AlphaEstimate:
    """Fit log s(q) = c - alpha log q over 2 <= q <= q_max.

    ``least_squares`` is the plain fit. ``upper_envelope`` refits on the points lying on
    or above that line, since alpha_Q bounds s(q) from above rather than on average.
    """
    if q_max < 8:
        raise ValueError("q_max must be >= 8")
    if method not in ("least_squares", "upper_envelope"):
        raise ValueError(f"unknown fit method {method!r}")
    rng = np.random.default_rng(seed)
    qs, sups, sampled = [], [], False
    for q in range(2, q_max + 1):
        if squarefree_only and not is_squarefree(q):
            continue
        s, smp = weyl_supremum(Q, q, budget=budget, sample=sample, rng=rng)
        sampled |= smp
        if s > 0:
            qs.append(q)
            sups.append(s)
    if len(qs) < 3:
        raise ValueError(f"only {len(qs)} usable q values; need at least 3")
    x = np.log(np.array(qs, dtype=float))
    y = np.log(np.array(sups))
    coef, resid, se = _fit_line(x, y)
    extras = {"alpha_least_squares": float(coef[1]), "stderr_least_squares": se}
    if method == "upper_envelope":
        upper = resid >= 0
        if upper.sum() >= 3:
            coef, _, se = _fit_line(x[upper], y[upper])
            resid = y - (coef[0] - coef[1] * x)
        extras["envelope_points"] = int(upper.sum())
    return AlphaEstimate(form=Q.name, q_max=q_max, qs=qs, sup_values=sups,
                         alpha_hat=float(coef[1]), stderr=se, intercept=float(coef[0]),
                         residuals=resid.tolist(), squarefree_only=squarefree_only,
                         sampled=sampled, method=method, extras=extras)


# -- singular-series identities ----------------------------------------------


@lru_cache(maxsize=256)
def _mod_distribution(Q: IntegralForm, d: int) -> tuple[int, ...]:
    """|V_r(d)| for r in Z_d."""
    if Q.kind is FormKind.DIAGONAL:
        dist = np.zeros(d, dtype=object)
        dist[0] = 1
        k = Q.degree
        for c in Q.coefficients:
            single = np.zeros(d, dtype=object)
            for s in range(d):
                single[(c * pow(s, k, d)) % d] += 1
            new = np.zeros(d, dtype=object)
            for r in range(d):
                if single[r]:
                    new += single[r] * np.roll(dist, r)
            dist = new
        return tuple(int(v) for v in dist)
    vals = _form_mod(Q, d)
    return tuple(int(v) for v in np.bincount(vals, minlength=d))


def mod_distribution(Q: IntegralForm, d: int, budget: int | None = None) -> tuple[int, ...]:
    if Q.kind is FormKind.DIAGONAL:
        check_budget(f"residue tables mod {d}", Q.n * d * d, budget)
    else:
        check_budget(f"Z_{d}^{Q.n} enumeration", d**Q.n, budget)
    return _mod_distribution(Q, d)


def singular_term(Q: IntegralForm, q: int, lam: int, budget: int | None = None) -> complex:
    """sum_{a in U_q} F_q(a, 0) e(-lam a / q)."""
    r = roots_of_unity(q)
    return complex(sum(weyl_sum(Q, q, a, None, budget).value * r[(-lam * a) % q] for a in units(q)))


def complete_singular_term(Q: IntegralForm, q: int, lam: int, budget: int | None = None) -> complex:
    """sum_{a in Z_q} F_q(a, 0) e(-lam a / q), which equals q^(1-n) |V_lam(q)|."""
    r = roots_of_unity(q)
    return complex(sum(weyl_sum(Q, q, a, None, budget).value * r[(-lam * a) % q] for a in range(q)))


def _density(Q: IntegralForm, d: int, lam: int, budget) -> float:
    return d ** (1 - Q.n) * mod_distribution(Q, d, budget)[lam % d]


@dataclass(frozen=True)
class IdentityResidual:
    check: str
    params: dict
    residual: float
    lhs: complex
    rhs: complex


def identity_F_check(Q: IntegralForm, q: int, lam: int, budget: int | None = None) -> IdentityResidual:
    """Max discrepancy among the three members of (F)."""
    if q < 2:
        raise ValueError("(F) is checked for q >= 2 only")
    left = sum(mobius(q // d) * _density(Q, d, lam, budget) for d in divisors(q))
    middle = sum(mobius(q // d) * (_density(Q, d, lam, budget) - 1) for d in divisors(q))
    right = singular_term(Q, q, lam, budget)
    res = max(abs(left - right), abs(middle - right), abs(left - middle))
    return IdentityResidual("F", {"q": q, "lambda": lam}, float(res), complex(left), right)


def identity_U_check(Q: IntegralForm, q: int, lam: int, budget: int | None = None) -> IdentityResidual:
    if q < 1:
        raise ValueError("q must be >= 1")
    left = _density(Q, q, lam, budget)
    right = sum(singular_term(Q, d, lam, budget) for d in divisors(q))
    return IdentityResidual("U", {"q": q, "lambda": lam}, float(abs(left - right)), complex(left),
                            complex(right))


@dataclass
class BoundReport:
    q: int
    c_max: float
    argmax_lambda: int
    k_worst_margin: float
    k_holds: bool
    k_lhs_max: float
    k_rhs: float


def bound_C_and_K_check(Q: IntegralForm, q: int, budget: int | None = None,
                        tol: float = 1e-9) -> BoundReport:
    """(C): max over lam of q^(1-n)|V_lam(q)|.  (K) with constant 1:
    |F_q(t, 0)| <= sup_r |sum_{d|q} mu(q/d)(d^(1-n)|V_r(d)| - 1)| for every t in U_q."""
    if q < 2:
        raise ValueError("q must be >= 2")
    dens = [_density(Q, q, lam, budget) for lam in range(q)]
    c_max = max(dens)
    rhs = max(abs(sum(mobius(q // d) * (_density(Q, d, r, budget) - 1) for d in divisors(q)))
              for r in range(q))
    lhs = [abs(weyl_sum(Q, q, t, None, budget).value) for t in units(q)]
    margin = min(rhs - v for v in lhs)
    return BoundReport(q, float(c_max), int(np.argmax(dens)), float(margin), margin >= -tol,
                       float(max(lhs)), float(rhs))


def lemma31_instance(Q: IntegralForm, q: int, qvec, rng: np.random.Generator,
                     budget: int | None = None) -> GeneralizedWeylValue:
    """A random (a in U_q, avec in U_qvec) evaluation of F(a, q, avec, qvec)."""
    a = int(rng.choice(units(q)))
    avec = [int(rng.choice(units(qi))) for qi in qvec]
    return generalized_weyl_sum(Q, a, q, avec, qvec, budget)


def iter_units_vectors(qvec) -> itertools.product:
    return itertools.product(*[units(qi) for qi in qvec])

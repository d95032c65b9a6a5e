"""Integral forms Q, their evaluation and regularity metadata, and cutoffs psi."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

INT64_SAFE = 2**62


class FormKind(str, Enum):
    DIAGONAL = "diagonal"
    QUADRATIC = "quadratic"
    GENERIC = "generic"


@dataclass(frozen=True)
class IntegralForm:
    """Homogeneous integral form of degree ``degree`` in ``n`` variables.

    Exactly one of ``coefficients`` (diagonal), ``gram`` (quadratic, Q(x) = x^T G x)
    or ``terms`` (generic, exponent tuple -> coefficient) carries the data.
    ``norm_bound`` is an optional c > 0 with Q(x) >= c |x|_inf^k, used to bound
    enumeration boxes for generic positive definite forms.
    """

    degree: int
    n: int
    kind: FormKind
    coefficients: tuple[int, ...] = ()
    gram: tuple[tuple[int, ...], ...] = ()
    terms: tuple[tuple[tuple[int, ...], int], ...] = ()
    birch_rank: int | None = None
    positive_definite: bool = False
    norm_bound: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.degree < 2:
            raise ValueError("degree must be >= 2")
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind is FormKind.DIAGONAL:
            if len(self.coefficients) != self.n or any(c == 0 for c in self.coefficients):
                raise ValueError("diagonal forms need n nonzero coefficients")
        elif self.kind is FormKind.QUADRATIC:
            g = self.gram
            if self.degree != 2 or len(g) != self.n or any(len(r) != self.n for r in g):
                raise ValueError("quadratic forms need an n x n Gram matrix and degree 2")
            if any(g[i][j] != g[j][i] for i in range(self.n) for j in range(self.n)):
                raise ValueError("Gram matrix must be symmetric")
        else:
            if not self.terms:
                raise ValueError("generic forms need at least one term")
            for expo, _ in self.terms:
                if len(expo) != self.n or sum(expo) != self.degree or min(expo) < 0:
                    raise ValueError(f"bad exponent {expo} for degree {self.degree}, n={self.n}")

    # -- constructors ---------------------------------------------------------

    @classmethod
    def sphere(cls, n: int) -> "IntegralForm":
        return cls.diagonal([1] * n, 2, name=f"sphere{n}")

    @classmethod
    def diagonal(cls, coefficients: Sequence[int], degree: int, name: str = "") -> "IntegralForm":
        coeffs = tuple(int(c) for c in coefficients)
        pd = degree % 2 == 0 and all(c > 0 for c in coeffs)
        return cls(degree=degree, n=len(coeffs), kind=FormKind.DIAGONAL, coefficients=coeffs,
                   birch_rank=len(coeffs), positive_definite=pd,
                   name=name or f"diag_k{degree}_n{len(coeffs)}")

    @classmethod
    def quadratic(cls, gram: Sequence[Sequence[int]], birch_rank: int | None = None,
                  positive_definite: bool | None = None, name: str = "") -> "IntegralForm":
        g = tuple(tuple(int(v) for v in row) for row in gram)
        n = len(g)
        if positive_definite is None:
            eig = np.linalg.eigvalsh(np.array(g, dtype=float))
            positive_definite = bool(eig.min() > 0)
        if birch_rank is None:
            birch_rank = int(np.linalg.matrix_rank(np.array(g, dtype=float)))
        return cls(degree=2, n=n, kind=FormKind.QUADRATIC, gram=g, birch_rank=birch_rank,
                   positive_definite=positive_definite, name=name or f"gram_n{n}")

    @classmethod
    def generic(cls, terms: Mapping[Sequence[int], int], birch_rank: int,
                positive_definite: bool = False, norm_bound: float | None = None,
                name: str = "") -> "IntegralForm":
        items = tuple(sorted((tuple(int(e) for e in k), int(v)) for k, v in terms.items() if v))
        degree = sum(items[0][0])
        n = len(items[0][0])
        return cls(degree=degree, n=n, kind=FormKind.GENERIC, terms=items, birch_rank=birch_rank,
                   positive_definite=positive_definite, norm_bound=norm_bound,
                   name=name or f"generic_k{degree}_n{n}")

    # -- helpers --------------------------------------------------------------

    @property
    def is_sphere(self) -> bool:
        return self.kind is FormKind.DIAGONAL and self.degree == 2 and set(self.coefficients) == {1}

    @property
    def is_even(self) -> bool:
        """Q(-x) = Q(x) (always true for even degree)."""
        return self.degree % 2 == 0

    def as_terms(self) -> dict[tuple[int, ...], int]:
        """Coefficient map exponent -> coefficient for any kind."""
        n, k = self.n, self.degree
        out: dict[tuple[int, ...], int] = {}
        if self.kind is FormKind.DIAGONAL:
            for i, c in enumerate(self.coefficients):
                e = [0] * n
                e[i] = k
                out[tuple(e)] = c
        elif self.kind is FormKind.QUADRATIC:
            for i in range(n):
                for j in range(n):
                    e = [0] * n
                    e[i] += 1
                    e[j] += 1
                    out[tuple(e)] = out.get(tuple(e), 0) + self.gram[i][j]
        else:
            out = dict(self.terms)
        return {e: c for e, c in out.items() if c}

    def coefficient_bound(self) -> int:
        return sum(abs(c) for c in self.as_terms().values())

    def box_radius(self, lam: float) -> int:
        """Integer R with {Q(x) <= lam} inside [-R, R]^n (positive definite forms only)."""
        if not self.positive_definite:
            raise ValueError(f"{self.name}: level set is unbounded (form not positive definite)")
        lam = max(float(lam), 0.0)
        k = self.degree
        if self.kind is FormKind.DIAGONAL:
            cmin = min(self.coefficients)
            return int(math.floor((lam / cmin) ** (1.0 / k) + 1e-9))
        if self.kind is FormKind.QUADRATIC:
            ginv = np.linalg.inv(np.array(self.gram, dtype=float))
            return int(math.floor(math.sqrt(lam * float(np.max(np.diag(ginv)))) + 1e-9))
        if self.norm_bound is None:
            raise ValueError(f"{self.name}: generic forms need norm_bound to enumerate level sets")
        return int(math.floor((lam / self.norm_bound) ** (1.0 / k) + 1e-9))


def eval_form(Q: IntegralForm, x: Sequence[int]) -> int:
    """Exact integer value Q(x)."""
    if len(x) != Q.n:
        raise ValueError(f"dimension mismatch: form has n={Q.n}, vector has {len(x)}")
    xs = [int(v) for v in x]
    k = Q.degree
    if Q.kind is FormKind.DIAGONAL:
        return sum(c * v**k for c, v in zip(Q.coefficients, xs))
    if Q.kind is FormKind.QUADRATIC:
        return sum(Q.gram[i][j] * xs[i] * xs[j] for i in range(Q.n) for j in range(Q.n))
    total = 0
    for expo, c in Q.terms:
        term = c
        for v, e in zip(xs, expo):
            if e:
                term *= v**e
        total += term
    return total


def eval_many(Q: IntegralForm, X: np.ndarray) -> np.ndarray:
    """Q on the rows of an integer array; int64 when provably safe, else Python ints."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != Q.n:
        raise ValueError(f"expected shape (m, {Q.n}), got {X.shape}")
    xmax = int(np.abs(X).max()) if X.size else 0
    safe = Q.coefficient_bound() * max(xmax, 1) ** Q.degree < INT64_SAFE
    Xw = X.astype(np.int64) if safe else X.astype(object)
    k = Q.degree
    if Q.kind is FormKind.DIAGONAL:
        out = (Xw**k) @ np.array(Q.coefficients, dtype=Xw.dtype)
    elif Q.kind is FormKind.QUADRATIC:
        G = np.array(Q.gram, dtype=Xw.dtype)
        out = np.einsum("mi,ij,mj->m", Xw, G, Xw) if safe else np.sum((Xw @ G) * Xw, axis=1)
    else:
        out = np.zeros(X.shape[0], dtype=Xw.dtype)
        for expo, c in Q.terms:
            term = np.full(X.shape[0], c, dtype=Xw.dtype)
            for i, e in enumerate(expo):
                if e:
                    term = term * Xw[:, i] ** e
            out = out + term
    return out


def eval_real(Q: IntegralForm, X: np.ndarray) -> np.ndarray:
    """Q on rows of a float array."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    k = Q.degree
    if Q.kind is FormKind.DIAGONAL:
        return (X**k) @ np.array(Q.coefficients, dtype=float)
    if Q.kind is FormKind.QUADRATIC:
        G = np.array(Q.gram, dtype=float)
        return np.einsum("mi,ij,mj->m", X, G, X)
    out = np.zeros(X.shape[0])
    for expo, c in Q.terms:
        term = np.full(X.shape[0], float(c))
        for i, e in enumerate(expo):
            if e:
                term *= X[:, i] ** e
        out += term
    return out


def eval_gradient(Q: IntegralForm, x) -> np.ndarray:
    """Gradient of Q at one point (1-d input) or at each row (2-d input)."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != Q.n:
        raise ValueError(f"dimension mismatch: form has n={Q.n}, input has {X.shape[1]}")
    k = Q.degree
    if Q.kind is FormKind.DIAGONAL:
        g = k * np.array(Q.coefficients, dtype=float) * X ** (k - 1)
    elif Q.kind is FormKind.QUADRATIC:
        g = 2.0 * X @ np.array(Q.gram, dtype=float)
    else:
        g = np.zeros_like(X)
        for expo, c in Q.terms:
            for i, e in enumerate(expo):
                if not e:
                    continue
                term = np.full(X.shape[0], c * e, dtype=float)
                for j, ej in enumerate(expo):
                    p = ej - 1 if j == i else ej
                    if p:
                        term *= X[:, j] ** p
                g[:, i] += term
    return g[0] if single else g


class BirchVerdict(str, Enum):
    VERIFIED = "verified"
    ASSUMED = "assumed"
    INCONSISTENT = "inconsistent"


@dataclass(frozen=True)
class BirchReport:
    verdict: BirchVerdict
    declared: int | None
    computed: int | None
    threshold: int
    regular: bool

    def as_dict(self) -> dict:
        return {"verdict": self.verdict.value, "declared": self.declared, "computed": self.computed,
                "threshold": self.threshold, "regular": self.regular}


def regularity_threshold(k: int) -> int:
    """(k-1) 2^k; regularity needs Birch rank strictly above this."""
    return (k - 1) * 2**k


def verify_birch_rank(Q: IntegralForm) -> BirchReport:
    computed: int | None = None
    if Q.kind is FormKind.DIAGONAL:
        computed = Q.n
    elif Q.kind is FormKind.QUADRATIC:
        # exact rank over Q via fractions keeps large Gram entries honest
        computed = _exact_rank([[Fraction(v) for v in row] for row in Q.gram])
    declared = Q.birch_rank
    if computed is None:
        verdict = BirchVerdict.ASSUMED
    elif declared is None or declared == computed:
        verdict = BirchVerdict.VERIFIED
    else:
        verdict = BirchVerdict.INCONSISTENT
    rank = declared if declared is not None else computed
    thr = regularity_threshold(Q.degree)
    return BirchReport(verdict, declared, computed, thr, rank is not None and rank > thr)


def _exact_rank(rows: list[list[Fraction]]) -> int:
    m = [r[:] for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        piv = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                f = m[r][col] / m[rank][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def decay_exponent_K(Q: IntegralForm) -> float:
    """K = ((B - (k-1)2^(k-1)) / 2^k - 1) / 2 from the declared Birch rank."""
    k = Q.degree
    B = Q.birch_rank if Q.birch_rank is not None else Q.n
    return 0.5 * ((B - (k - 1) * 2 ** (k - 1)) / 2**k - 1.0)


# -- cutoffs ------------------------------------------------------------------


def _smooth_step(s: np.ndarray) -> np.ndarray:
    """0 for s <= 0, 1 for s >= 1, C-infinity in between."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


class PsiKind(str, Enum):
    UNIT = "unit"
    POSITIVE_ORTHANT = "positive_orthant_smooth"
    CUSTOM_RADIAL = "custom_radial"


@dataclass(frozen=True)
class CutoffPsi:
    """Cutoff psi with values in [0, 1].

    ``positive_orthant_smooth`` ramps from 0 at x_i <= 0 to 1 at x_i >= ``width`` in every
    coordinate. ``custom_radial`` linearly interpolates ``profile`` = ((r, value), ...) in |x|,
    constant beyond the last sample.
    """

    kind: PsiKind = PsiKind.UNIT
    width: float = 0.1
    profile: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if self.kind is PsiKind.CUSTOM_RADIAL:
            if len(self.profile) < 2:
                raise ValueError("custom radial profile needs at least two samples")
            rs = [r for r, _ in self.profile]
            if rs != sorted(rs) or any(not 0 <= v <= 1 for _, v in self.profile):
                raise ValueError("radial profile must have increasing radii and values in [0,1]")

    @property
    def is_unit(self) -> bool:
        return self.kind is PsiKind.UNIT

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind is PsiKind.UNIT:
            return np.ones(X.shape[0])
        if self.kind is PsiKind.POSITIVE_ORTHANT:
            return np.prod(_smooth_step(X / self.width), axis=1)
        r = np.linalg.norm(X, axis=1)
        rs, vs = zip(*self.profile)
        return np.interp(r, rs, vs)

    def weights(self, X: np.ndarray, lam: float, k: int) -> np.ndarray:
        """psi(x / lam^(1/k)) at integer points X."""
        if self.kind is PsiKind.UNIT:
            return np.ones(np.asarray(X).shape[0])
        scale = float(lam) ** (1.0 / k) if lam > 0 else 1.0
        return self(np.asarray(X, dtype=float) / scale)

    def label(self) -> str:
        return self.kind.value


UNIT_PSI = CutoffPsi()


# -- config -------------------------------------------------------------------


def parse_form_config(cfg: Mapping[str, str]) -> tuple[IntegralForm, CutoffPsi]:
    """Build (Q, psi) from key=value settings.

    Keys: kind (sphere|diagonal|quadratic|generic), n, degree, coefficients (comma list),
    gram (rows separated by ';'), terms ('coef:e1,e2,..;...'), rank, positive_definite,
    norm_bound, psi (unit|positive_orthant_smooth), psi_width.
    """
    kind = cfg.get("kind", "sphere").strip().lower()
    rank = int(cfg["rank"]) if "rank" in cfg else None
    if kind == "sphere":
        Q = IntegralForm.sphere(int(cfg.get("n", 5)))
    elif kind == "diagonal":
        coeffs = [int(v) for v in cfg["coefficients"].split(",")] if "coefficients" in cfg \
            else [1] * int(cfg["n"])
        Q = IntegralForm.diagonal(coeffs, int(cfg.get("degree", 2)))
    elif kind == "quadratic":
        gram = [[int(v) for v in row.split(",")] for row in cfg["gram"].split(";")]
        Q = IntegralForm.quadratic(gram, birch_rank=rank)
    elif kind == "generic":
        terms = {}
        for chunk in cfg["terms"].split(";"):
            coef, expo = chunk.split(":")
            terms[tuple(int(e) for e in expo.split(","))] = int(coef)
        if rank is None:
            raise ValueError("generic forms need a declared rank")
        pd = cfg.get("positive_definite", "false").lower() in ("1", "true", "yes")
        nb = float(cfg["norm_bound"]) if "norm_bound" in cfg else None
        Q = IntegralForm.generic(terms, rank, positive_definite=pd, norm_bound=nb)
    else:
        raise ValueError(f"unknown form kind {kind!r}")
    if rank is not None and kind in ("sphere", "diagonal"):
        Q = dataclasses.replace(Q, birch_rank=rank)
    psi_kind = cfg.get("psi", "unit")
    psi = CutoffPsi(PsiKind(psi_kind), width=float(cfg.get("psi_width", 0.1)))
    return Q, psi

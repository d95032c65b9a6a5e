"""Lattice-point counting: representation numbers, solution counts mod d, ball counts,
the Lipschitz-principle fit and the per-residue window maximizer."""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .arith import check_budget
from .expsums import mod_distribution
from .forms import UNIT_PSI, CutoffPsi, FormKind, IntegralForm, PsiKind, eval_form, eval_many

Congruence = tuple[int, tuple[int, ...]]

_HEADER = struct.Struct("<4q")


def _normalize_congruence(Q: IntegralForm, congruence) -> Congruence | None:
    if congruence is None:
        return None
    q, b = congruence
    q = int(q)
    if q < 1:
        raise ValueError("modulus must be positive")
    if b is None or (isinstance(b, str) and b == "all") or q == 1:
        return None
    b = tuple(int(v) % q for v in b)
    if len(b) != Q.n:
        raise ValueError(f"residue vector must have length {Q.n}")
    return q, b


@dataclass
class RepCountTable:
    """r(lam) for 0 <= lam <= cap, optionally restricted to x = b mod q."""

    form: str
    n: int
    k: int
    cap: int
    modulus: int
    residues: tuple[int, ...] | None
    counts: np.ndarray
    psi: str = "unit"
    backend: str = ""

    def __getitem__(self, lam: int) -> int:
        if lam < 0:
            return 0
        if lam > self.cap:
            raise IndexError(f"lambda={lam} exceeds table cap {self.cap}")
        return int(self.counts[lam])

    def ball(self, R: int) -> int:
        """sum_{lam <= R} counts(lam)."""
        if R < 0:
            return 0
        if R > self.cap:
            raise IndexError(f"R={R} exceeds table cap {self.cap}")
        return int(self.counts[: R + 1].sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "count"])
            for lam, c in enumerate(self.counts.tolist()):
                w.writerow([lam, c])

    def to_binary(self, path) -> None:
        """Little-endian int64 header (n, k, q, cap) followed by cap+1 int64 counts."""
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(self.n, self.k, self.modulus, self.cap))
            fh.write(np.asarray(self.counts, dtype="<i8").tobytes())

    @classmethod
    def from_binary(cls, path, form: str = "") -> "RepCountTable":
        data = Path(path).read_bytes()
        n, k, q, cap = _HEADER.unpack_from(data)
        counts = np.frombuffer(data, dtype="<i8", offset=_HEADER.size).astype(np.int64)
        if counts.size != cap + 1:
            raise ValueError(f"corrupt table: expected {cap + 1} counts, found {counts.size}")
        return cls(form, n, k, cap, q, None, counts)


# -- per-coordinate arrays and convolution -------------------------------------


def _coordinate_counts(c: int, k: int, cap: int, q: int = 1, b: int = 0) -> np.ndarray:
    """h(m) = #{x = b mod q : c x^k = m}, 0 <= m <= cap."""
    if c <= 0:
        raise ValueError("negative monomial contributions are not supported by the convolution backend")
    h = np.zeros(cap + 1, dtype=np.int64)
    R = int(math.floor((cap / c) ** (1.0 / k) + 1e-9)) + 1
    for x in range(-R, R + 1):
        if (x - b) % q:
            continue
        m = c * x**k
        if 0 <= m <= cap:
            h[m] += 1
    return h


def _sparse_convolve(acc: np.ndarray, h: np.ndarray, cap: int) -> np.ndarray:
    out = np.zeros(cap + 1, dtype=np.int64)
    for m in np.flatnonzero(h):
        out[m:] += h[m] * acc[: cap + 1 - m]
    return out


def _fft_convolve(acc: np.ndarray, h: np.ndarray, cap: int) -> np.ndarray:
    size = 1 << int(2 * (cap + 1) - 1).bit_length()
    raw = np.fft.irfft(np.fft.rfft(acc.astype(float), size) * np.fft.rfft(h.astype(float), size), size)
    raw = raw[: cap + 1]
    out = np.rint(raw).astype(np.int64)
    if np.max(np.abs(raw - out), initial=0.0) > 0.25:
        raise ArithmeticError("transform convolution lost integer precision")
    # exact total: sum_{i+j<=cap} acc[i] h[j]
    total = int(sum(int(a) * int(c) for a, c in zip(acc.tolist(), np.cumsum(h)[::-1].tolist())))
    if int(out.sum()) != total:
        raise ArithmeticError("transform convolution failed the integer-total check")
    return out


def _convolution_table(Q: IntegralForm, cap: int, cong: Congruence | None,
                       use_fft: bool) -> np.ndarray:
    q, b = cong if cong else (1, (0,) * Q.n)
    acc = np.zeros(cap + 1, dtype=np.int64)
    acc[0] = 1
    for c, bi in zip(Q.coefficients, b):
        h = _coordinate_counts(c, Q.degree, cap, q, bi)
        acc = _fft_convolve(acc, h, cap) if use_fft else _sparse_convolve(acc, h, cap)
    return acc


def _box_points(Q: IntegralForm, R: int, budget: int | None, nonneg: bool = False) -> np.ndarray:
    side = R + 1 if nonneg else 2 * R + 1
    check_budget(f"box enumeration side={side}, n={Q.n}", side**Q.n * Q.n, budget)
    axis = np.arange(0, R + 1) if nonneg else np.arange(-R, R + 1)
    grids = np.meshgrid(*([axis] * Q.n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)


def _congruence_mask(X: np.ndarray, cong: Congruence | None) -> np.ndarray:
    if cong is None:
        return np.ones(X.shape[0], dtype=bool)
    q, b = cong
    return np.all((X - np.array(b)) % q == 0, axis=1)


def _brute_table(Q: IntegralForm, cap: int, cong: Congruence | None, budget) -> np.ndarray:
    X = _box_points(Q, Q.box_radius(cap), budget)
    vals = eval_many(Q, X)
    keep = _congruence_mask(X, cong)
    vals = np.asarray(vals[keep], dtype=np.int64)
    vals = vals[(vals >= 0) & (vals <= cap)]
    return np.bincount(vals, minlength=cap + 1).astype(np.int64)


def build_rep_table(Q: IntegralForm, cap: int, congruence=None, backend: str = "auto",
                    budget: int | None = None) -> RepCountTable:
    """Representation counts for 0..cap.

    backend: "convolution" (diagonal, schoolbook sparse), "fft" (diagonal, rounded and
    verified), "brute" (box enumeration, any positive definite kind) or "auto".
    """
    if cap < 0:
        raise ValueError("cap must be >= 0")
    cong = _normalize_congruence(Q, congruence)
    if backend == "auto":
        backend = "convolution" if Q.kind is FormKind.DIAGONAL else "brute"
    if backend in ("convolution", "fft"):
        if Q.kind is not FormKind.DIAGONAL:
            raise ValueError("convolution backend needs a diagonal form")
        if not Q.positive_definite:
            raise ValueError("negative monomial contributions: form is not positive definite")
        step = cong[0] if cong else 1
        per = sum(int(2 * (cap / c) ** (1.0 / Q.degree) / step + 3) for c in Q.coefficients)
        check_budget("convolution table", per * (cap + 1), budget)
        counts = _cached_conv(Q, cap, cong, backend == "fft")
    elif backend == "brute":
        counts = _brute_table(Q, cap, cong, budget)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    q, b = cong if cong else (1, None)
    return RepCountTable(Q.name, Q.n, Q.degree, cap, q, b, counts, backend=backend)


@lru_cache(maxsize=1024)
def _cached_conv(Q: IntegralForm, cap: int, cong: Congruence | None, use_fft: bool) -> np.ndarray:
    out = _convolution_table(Q, cap, cong, use_fft)
    out.setflags(write=False)
    return out


# -- solution sets ---------------------------------------------------------------


def _int_root(values: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(root, exact) with root^k == value where exact."""
    r = np.rint(np.power(np.maximum(values, 0).astype(float), 1.0 / k)).astype(np.int64)
    best = r.copy()
    exact = np.zeros(values.shape, dtype=bool)
    for delta in (-1, 0, 1):
        cand = np.maximum(r + delta, 0)
        hit = cand**k == values
        best = np.where(hit, cand, best)
        exact |= hit
    return best, exact


def enumerate_solutions(Q: IntegralForm, lam: int, budget: int | None = None,
                        nonneg: bool = False) -> np.ndarray:
    """All x in Z^n with Q(x) = lam as an (r, n) int64 array.

    ``nonneg`` restricts to the closed positive orthant, which makes odd-degree diagonal
    forms with positive coefficients enumerable.
    """
    if lam < 0:
        return np.zeros((0, Q.n), dtype=np.int64)
    if not Q.positive_definite and not (nonneg and Q.kind is FormKind.DIAGONAL
                                        and min(Q.coefficients) > 0):
        raise ValueError(f"{Q.name}: unsupported unbounded level set")
    if Q.kind is FormKind.DIAGONAL:
        return _enumerate_diagonal(Q, lam, budget, nonneg)
    X = _box_points(Q, Q.box_radius(lam), budget, nonneg)
    vals = eval_many(Q, X)
    return X[np.asarray(vals == lam, dtype=bool)]


def _enumerate_diagonal(Q: IntegralForm, lam: int, budget, nonneg: bool) -> np.ndarray:
    k, coeffs = Q.degree, Q.coefficients
    partial = np.zeros((1, 0), dtype=np.int64)
    sums = np.zeros(1, dtype=np.int64)
    for c in coeffs[:-1]:
        R = int(math.floor((lam / c) ** (1.0 / k) + 1e-9))
        xs = np.arange(0 if nonneg else -R, R + 1, dtype=np.int64)
        vals = c * xs**k
        check_budget("solution enumeration", partial.shape[0] * xs.size, budget)
        tot = sums[:, None] + vals[None, :]
        ii, jj = np.nonzero(tot <= lam)
        partial = np.concatenate([partial[ii], xs[jj, None]], axis=1)
        sums = tot[ii, jj]
    c = coeffs[-1]
    rem = lam - sums
    ok = rem % c == 0
    root, exact = _int_root(rem // c, k)
    ok &= exact
    base, root = partial[ok], root[ok]
    pos = np.concatenate([base, root[:, None]], axis=1)
    if nonneg or k % 2:
        return pos
    neg_rows = root > 0
    neg = np.concatenate([base[neg_rows], -root[neg_rows, None]], axis=1)
    out = np.concatenate([pos, neg], axis=0)
    return out[np.lexsort(out.T[::-1])]


@dataclass
class SolutionSet:
    """All x with Q(x) = lam with cutoff weights psi(x / lam^(1/k))."""

    lam: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def count(self) -> float:
        return float(self.weights.sum())

    @property
    def radius(self) -> int:
        return int(np.abs(self.points).max()) if self.points.size else 0


@lru_cache(maxsize=64)
def _solution_cache(Q: IntegralForm, psi: CutoffPsi, lam: int) -> SolutionSet:
    nonneg = psi.kind is PsiKind.POSITIVE_ORTHANT and not Q.positive_definite
    X = enumerate_solutions(Q, lam, budget=None, nonneg=nonneg)
    w = psi.weights(X, lam, Q.degree)
    keep = w > 0
    return SolutionSet(lam, X[keep], w[keep])


def solution_set(Q: IntegralForm, psi: CutoffPsi, lam: int, budget: int | None = None) -> SolutionSet:
    if Q.kind is FormKind.DIAGONAL:
        est = ball_volume_estimate(Q, lam)
        check_budget("solution set", int(est) + 1, budget)
    return _solution_cache(Q, psi, int(lam))


def ball_volume_estimate(Q: IntegralForm, R: float) -> float:
    try:
        return ball_volume(Q) * max(R, 1) ** (Q.n / Q.degree)
    except ValueError:
        return 0.0


def count_representations(Q: IntegralForm, psi: CutoffPsi = UNIT_PSI, lam: int = 0,
                          budget: int | None = None) -> float:
    """r_{Q,psi}(lam); an exact int when psi is identically 1."""
    if lam < 0:
        return 0
    if psi.is_unit and Q.kind is FormKind.DIAGONAL and Q.positive_definite:
        return build_rep_table(Q, lam, budget=budget)[lam]
    if psi.is_unit:
        return int(enumerate_solutions(Q, lam, budget).shape[0])
    return solution_set(Q, psi, lam, budget).count


# -- residues mod d --------------------------------------------------------------


@dataclass(frozen=True)
class ModSolutionCount:
    d: int
    target: int
    value: int


def count_mod(Q: IntegralForm, lam: int, d: int, budget: int | None = None) -> ModSolutionCount:
    """|{s in Z_d^n : Q(s) = lam mod d}|."""
    dist = mod_distribution(Q, d, budget)
    return ModSolutionCount(d, lam % d, dist[lam % d])


# -- balls and the Lipschitz principle ------------------------------------------------


def ball_volume(Q: IntegralForm) -> float:
    """Lebesgue volume of {Q(x) <= 1} (closed form for diagonal and quadratic kinds)."""
    if not Q.positive_definite:
        raise ValueError("volume of {Q <= 1} is infinite for indefinite forms")
    n, k = Q.n, Q.degree
    if Q.kind is FormKind.DIAGONAL:
        logv = n * math.log(2 * math.gamma(1 + 1 / k)) - math.lgamma(1 + n / k)
        logv -= sum(math.log(c) for c in Q.coefficients) / k
        return math.exp(logv)
    if Q.kind is FormKind.QUADRATIC:
        unit = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
        return unit / math.sqrt(float(np.linalg.det(np.array(Q.gram, dtype=float))))
    raise ValueError("no closed-form volume for generic forms")


def count_ball(Q: IntegralForm, R: int, congruence=None, budget: int | None = None) -> int:
    """#{x in Z^n : Q(x) <= R, x = b mod q}."""
    if R < 0:
        return 0
    cong = _normalize_congruence(Q, congruence)
    if Q.kind is FormKind.DIAGONAL and Q.positive_definite:
        return build_rep_table(Q, int(R), cong, budget=budget).ball(int(R))
    X = _box_points(Q, Q.box_radius(R), budget)
    vals = eval_many(Q, X)
    return int(np.count_nonzero((np.asarray(vals <= R, dtype=bool)) & _congruence_mask(X, cong)))


@dataclass
class LipschitzFit:
    R: list[int]
    counts: list[int]
    modulus: int
    C_hat: float
    C_reference: float | None
    beta: float
    beta_bound: float
    beta_ok: bool
    errors: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def lipschitz_fit(Q: IntegralForm, R_list: Sequence[int], congruence=None, slack: float = 0.3,
                  budget: int | None = None) -> LipschitzFit:
    """Fit count(R) = C R^(n/k) + O(R^(n/k-1)); report C and the error exponent."""
    R_list = sorted(int(r) for r in R_list)
    if len(R_list) < 4 or len(set(R_list)) < 4:
        raise ValueError("need at least 4 distinct radii")
    cong = _normalize_congruence(Q, congruence)
    q = cong[0] if cong else 1
    n, k = Q.n, Q.degree
    if Q.kind is FormKind.DIAGONAL and Q.positive_definite:
        table = build_rep_table(Q, R_list[-1], cong, budget=budget)
        cum = np.cumsum(table.counts)
        counts = [int(cum[r]) for r in R_list]
    else:
        counts = [count_ball(Q, r, cong, budget) for r in R_list]
    Rs = np.array(R_list, dtype=float)
    y = np.array(counts, dtype=float) / Rs ** (n / k)
    A = np.vstack([np.ones_like(Rs), 1.0 / Rs]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    C_hat = float(coef[0])
    try:
        C_ref = ball_volume(Q) / q**n
    except ValueError:
        C_ref = None
    lead = C_ref if C_ref is not None else C_hat
    errs = np.abs(np.array(counts, dtype=float) - lead * Rs ** (n / k))
    errs = np.maximum(errs, 1.0)
    slope = float(np.polyfit(np.log(Rs), np.log(errs), 1)[0])
    bound = n / k - 1 + slack
    return LipschitzFit(R_list, counts, q, C_hat, C_ref, slope, bound, slope <= bound, errs.tolist())


# -- windows (Prop. 7.1) ---------------------------------------------------------------


@dataclass(frozen=True)
class WindowMax:
    lam: int
    count: int
    ratio: float
    residue: tuple[int, ...]
    window: tuple[int, int]


def residue_window_counts(Q: IntegralForm, modulus: int, b: Sequence[int], R: int,
                          budget: int | None = None) -> dict[int, int]:
    """N(lam; b, modulus) for every lam in [R, 2R) with lam = Q(b) mod modulus."""
    target = eval_form(Q, b) % modulus
    lams = [lam for lam in range(R, 2 * R) if lam % modulus == target]
    if not lams:
        raise ValueError(f"window [{R}, {2 * R}) holds no lambda = {target} mod {modulus}")
    table = build_rep_table(Q, 2 * R - 1, (modulus, tuple(b)), budget=budget)
    return {lam: table[lam] for lam in lams}


def prop71_maximizer(Q: IntegralForm, p: int, J: int, b: Sequence[int], R: int,
                     r0: int | None = None, budget: int | None = None) -> WindowMax:
    """The lam in [R, 2R), lam = Q(b) mod p^J, maximizing #{Q(x)=lam, x = b mod p^J}."""
    if r0 is not None and R < r0:
        raise ValueError(f"R={R} is below the configured R_0={r0}")
    modulus = p**J
    b = tuple(int(v) % modulus for v in b)
    counts = residue_window_counts(Q, modulus, b, R, budget)
    lam = max(counts, key=lambda m: (counts[m], -m))
    cnt = counts[lam]
    scale = modulus ** (-(Q.n - 1)) * lam ** (Q.n / Q.degree - 1)
    return WindowMax(lam, cnt, cnt / scale, b, (R, 2 * R))

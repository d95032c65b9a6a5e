"""Torus multipliers: the exact normalized exponential sum over a level set, the localized
main terms and their completed versions, divisor constants, the plateau bump zeta and the
Fourier transform of the surface measure on {Q = 1}.

All transforms use the positive phase e(+x.xi), matching
    omega_hat_lam(xi) = r(lam)^-1 sum_{Q(x)=lam} psi(x/lam^(1/k)) e(x.xi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .arith import check_budget, divisors, dyadic_block, mobius, units
from .counting import build_rep_table, solution_set
from .expsums import coordinate_tables, roots_of_unity, weyl_sums_all_freq
from .forms import (UNIT_PSI, CutoffPsi, FormKind, IntegralForm, PsiKind, _smooth_step,
                    decay_exponent_K, eval_real)

# -- the bump zeta ------------------------------------------------------------------


def zeta(t) -> np.ndarray:
    """1 on [-1/10, 1/10], 0 off (-1/5, 1/5), smooth and even in between."""
    t = np.asarray(t, dtype=float)
    return _smooth_step((0.2 - np.abs(t)) / 0.1)


def zeta_vec(X) -> np.ndarray:
    """Tensor-product bump: prod_i zeta(x_i) over the last axis."""
    return np.prod(zeta(X), axis=-1)


@lru_cache(maxsize=1)
def _zeta_nodes(m: int = 400) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Legendre on the transition zone; the plateau part is integrated exactly
    x, w = np.polynomial.legendre.leggauss(m)
    u = 0.15 + 0.05 * x
    return u, 0.05 * w


def zeta_hat(s) -> np.ndarray:
    """int zeta(u) e(-s u) du (real, since zeta is even)."""
    s = np.asarray(s, dtype=float)
    u, w = _zeta_nodes()
    with np.errstate(invalid="ignore", divide="ignore"):
        plateau = np.where(s == 0, 0.2, np.sin(0.2 * np.pi * s) / np.where(s == 0, 1, np.pi * s))
    tail = 2 * (np.cos(2 * np.pi * np.multiply.outer(s, u)) * zeta(u)) @ w
    return plateau + tail


ZETA_INTEGRAL = float(zeta_hat(0.0))

# -- surface measure ------------------------------------------------------------------

DSIGMA_BACKENDS = ("sphere_closed_form", "monte_carlo_surface", "radial_standin")


def sphere_area(n: int) -> float:
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _gibbs_directions(Q: IntegralForm, rng: np.random.Generator, samples: int) -> np.ndarray | None:
    """Draws from the density proportional to exp(-Q(y)) when it has a direct sampler."""
    if not Q.positive_definite:
        return None
    if Q.kind is FormKind.DIAGONAL and Q.degree % 2 == 0:
        k = Q.degree
        g = rng.gamma(1.0 / k, 1.0, (samples, Q.n)) / np.array(Q.coefficients, dtype=float)
        return g ** (1.0 / k) * rng.choice([-1.0, 1.0], (samples, Q.n))
    if Q.kind is FormKind.QUADRATIC:
        L = np.linalg.cholesky(np.array(Q.gram, dtype=float))
        z = rng.standard_normal((samples, Q.n)) / math.sqrt(2.0)
        return np.linalg.solve(L.T, z.T).T
    return None


@lru_cache(maxsize=32)
def _surface_samples(Q: IntegralForm, psi: CutoffPsi, samples: int, seed: int):
    """Points x on {Q = 1} with weights w such that int g dsigma ~ mean(g(x) w).

    When y ~ exp(-Q(y)) can be drawn directly, x = y/Q(y)^(1/k) carries the constant weight
    (n/k) vol{Q <= 1}. Otherwise rays are uniform on the sphere, x = t u with
    t = Q(u)^(-1/k), and the weight is area(S^(n-1)) t^n / k.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    Y = _gibbs_directions(Q, rng, samples)
    if Y is not None:
        from .counting import ball_volume

        X = Y / eval_real(Q, Y)[:, None] ** (1.0 / Q.degree)
        w = psi(X) * (Q.n / Q.degree) * ball_volume(Q)
    else:
        U = rng.standard_normal((samples, Q.n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        q = eval_real(Q, U)
        hit = q > 0
        t = np.zeros(samples)
        t[hit] = q[hit] ** (-1.0 / Q.degree)
        X = U * t[:, None]
        w = np.where(hit, psi(X) * t**Q.n / Q.degree, 0.0) * sphere_area(Q.n)
    X.setflags(write=False)
    w.setflags(write=False)
    return X, w


@dataclass(frozen=True)
class SurfaceMeasureFT:
    """d~sigma(xi) = int_{Q=1} e(x.xi) psi(x) dmu(x)/|grad Q(x)|.

    ``sphere_closed_form`` is the Bessel formula, transported to any positive definite
    quadratic form by a linear change of variables. ``monte_carlo_surface`` integrates over
    seeded random rays; ``radial_standin`` is an arbitrary smooth profile used to show that
    arithmetic identities do not depend on the radial factor.
    """

    form: IntegralForm
    psi: CutoffPsi = UNIT_PSI
    backend: str = "sphere_closed_form"
    samples: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.backend not in DSIGMA_BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "sphere_closed_form" and not self.has_closed_form(self.form, self.psi):
            raise ValueError("closed form needs an unweighted positive definite quadratic form")

    @staticmethod
    def has_closed_form(Q: IntegralForm, psi: CutoffPsi) -> bool:
        return Q.degree == 2 and Q.positive_definite and psi.is_unit \
            and Q.kind in (FormKind.DIAGONAL, FormKind.QUADRATIC)

    @property
    def _inverse_gram(self) -> tuple[np.ndarray, float]:
        Q = self.form
        G = np.diag(np.array(Q.coefficients, dtype=float)) if Q.kind is FormKind.DIAGONAL \
            else np.array(Q.gram, dtype=float)
        return np.linalg.inv(G), float(np.linalg.det(G))

    @classmethod
    def default(cls, Q: IntegralForm, psi: CutoffPsi = UNIT_PSI, samples: int = 200_000,
                seed: int = 0) -> "SurfaceMeasureFT":
        if Q.is_sphere and psi.is_unit:
            return cls(Q, psi)
        return cls(Q, psi, "monte_carlo_surface", samples, seed)

    @property
    def decay_K(self) -> float:
        return decay_exponent_K(self.form)

    @property
    def mass(self) -> float:
        return float(self(np.zeros(self.form.n)).real)

    def _points(self):
        X, w = _surface_samples(self.form, self.psi, self.samples, self.seed)
        if not np.any(w > 0):
            raise RuntimeError("surface sampling found no real points of {Q=1} in supp psi")
        return X, w

    def evaluate(self, xi, with_error: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """(values, standard errors) for xi of shape (..., n); closed forms report 0 error."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.form.n:
            raise ValueError(f"frequency must have {self.form.n} coordinates")
        flat, inverse = np.unique(xi.reshape(-1, self.form.n), axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        n = self.form.n
        if self.backend == "sphere_closed_form":
            # x = G^(-1/2) y maps {x'Gx = 1} to the unit sphere with Jacobian det(G)^(-1/2)
            Ginv, det = self._inverse_gram
            r = np.sqrt(np.maximum(np.einsum("mi,ij,mj->m", flat, Ginv, flat), 0.0))
            val = np.empty(r.shape, dtype=complex)
            small = r < 1e-12
            val[small] = sphere_area(n) / 2
            rr = r[~small]
            val[~small] = math.pi * rr ** (1 - n / 2) * special.jv(n / 2 - 1, 2 * math.pi * rr)
            val /= math.sqrt(det)
            err = np.zeros(r.shape)
        elif self.backend == "radial_standin":
            r2 = np.einsum("ij,ij->i", flat, flat)
            val = (np.exp(-math.pi * r2) * (1 + 0.5j * np.sin(flat.sum(axis=1)))).astype(complex)
            err = np.zeros(r2.shape)
        else:
            X, w = self._points()
            val = np.empty(flat.shape[0], dtype=complex)
            err = np.empty(flat.shape[0])
            N = X.shape[0]
            step = max(1, 2_000_000 // N)
            for i in range(0, flat.shape[0], step):
                ph = np.exp(2j * np.pi * (X @ flat[i:i + step].T)) * w[:, None]
                val[i:i + step] = ph.mean(axis=0)
                if with_error:
                    err[i:i + step] = np.sqrt(ph.real.var(axis=0) + ph.imag.var(axis=0)) / math.sqrt(N)
                else:
                    err[i:i + step] = np.nan
        shape = xi.shape[:-1]
        return val[inverse].reshape(shape), err[inverse].reshape(shape)

    def __call__(self, xi) -> np.ndarray:
        return self.evaluate(xi, with_error=False)[0]


def dsigma_ft(Q: IntegralForm, psi: CutoffPsi, xi, backend: str | None = None,
              samples: int = 200_000, seed: int = 0) -> np.ndarray:
    ds = SurfaceMeasureFT.default(Q, psi, samples, seed) if backend is None \
        else SurfaceMeasureFT(Q, psi, backend, samples, seed)
    return ds(xi)


@dataclass
class DecayFit:
    exponent: float
    exponents_per_ray: list[float]
    radii: list[float]
    threshold: float
    passed: bool
    points_used: int
    seed: int


def _refined_peaks(f, r: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interior local maxima of v on the grid r, each polished by a bounded scalar search."""
    idx = np.flatnonzero((v[1:-1] >= v[:-2]) & (v[1:-1] >= v[2:])) + 1
    rs, vs = [], []
    for i in idx:
        res = optimize.minimize_scalar(lambda t: -f(t), bounds=(r[i - 1], r[i + 1]),
                                       method="bounded", options={"xatol": 1e-6})
        rs.append(float(res.x))
        vs.append(max(float(-res.fun), float(v[i])))
    return np.array(rs), np.array(vs)


def _grid_peaks(r: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interior local maxima of v, polished by a parabola through log v in log r."""
    idx = np.flatnonzero((v[1:-1] >= v[:-2]) & (v[1:-1] >= v[2:])) + 1
    rs, vs = [], []
    for i in idx:
        x = np.log(r[i - 1:i + 2])
        y = np.log(np.maximum(v[i - 1:i + 2], 1e-300))
        c2, c1, c0 = np.polyfit(x - x[1], y, 2)
        t = -c1 / (2 * c2) if c2 < 0 else 0.0
        t = float(np.clip(t, x[0] - x[1], x[2] - x[1]))
        rs.append(float(np.exp(x[1] + t)))
        vs.append(max(float(np.exp(c0 + c1 * t + c2 * t * t)), float(v[i])))
    return np.array(rs), np.array(vs)


def ray_decay_fit(ds: SurfaceMeasureFT, n_rays: int = 8, r_min: float = 1.0, r_max: float = 10.0,
                  n_radii: int = 400, threshold: float | None = None, seed: int = 0) -> DecayFit:
    """Fit |d~sigma(r theta)| ~ (1 + r)^-gamma through the local maxima along random rays.

    Monte-Carlo peaks below 4 standard errors are dropped as noise.
    """
    rng = np.random.Generator(np.random.Philox(seed + 1))
    n = ds.form.n
    radii = np.geomspace(r_min, r_max, n_radii)
    exps = []
    used = 0
    for _ in range(n_rays):
        th = rng.standard_normal(n)
        th /= np.linalg.norm(th)
        val, err = ds.evaluate(radii[:, None] * th[None, :])
        a = np.abs(val)
        if ds.backend == "monte_carlo_surface":
            r, peaks = _grid_peaks(radii, a)
        else:
            r, peaks = _refined_peaks(lambda t: float(np.abs(ds(t * th))), radii, a)
        if r.size:
            noise = np.interp(r, radii, err)
            keep = peaks > 4 * noise
            r, peaks = r[keep], peaks[keep]
        if r.size < 2:
            continue
        # the bound has the form C (1 + |xi|)^-gamma, so xi = 0 anchors the fit
        r = np.r_[0.0, r]
        peaks = np.r_[abs(ds.mass), peaks]
        used += r.size
        exps.append(-float(np.polyfit(np.log1p(r), np.log(peaks), 1)[0]))
    if not exps:
        raise RuntimeError("no ray had enough resolvable peaks for a decay fit")
    if threshold is None:
        threshold = (n - 1) / 2 if ds.form.is_sphere else ds.decay_K
    gamma = float(np.median(exps))
    return DecayFit(gamma, exps, radii.tolist(), float(threshold), gamma >= threshold, used, seed)


# -- exact normalized exponential sums ----------------------------------------------------------


def _as_freqs(xi, n: int) -> tuple[np.ndarray, tuple]:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != n:
        raise ValueError(f"frequency must have {n} coordinates")
    return xi.reshape(-1, n), xi.shape[:-1]


def omega_hat(Q: IntegralForm, psi: CutoffPsi, lam: int, xi, budget: int | None = None) -> np.ndarray:
    """r(lam)^-1 sum_{Q(x)=lam} psi(x/lam^(1/k)) e(x.xi) for xi of shape (..., n)."""
    flat, shape = _as_freqs(xi, Q.n)
    separable = psi.kind in (PsiKind.UNIT, PsiKind.POSITIVE_ORTHANT)
    if Q.kind is FormKind.DIAGONAL and Q.positive_definite and separable:
        out = _omega_hat_diagonal(Q, psi, int(lam), flat, budget)
    else:
        S = solution_set(Q, psi, int(lam), budget)
        if S.count <= 0:
            raise ValueError(f"lambda={lam} is not represented")
        out = np.empty(flat.shape[0], dtype=complex)
        step = max(1, 4_000_000 // max(1, S.points.shape[0]))
        P = S.points.astype(float)
        for i in range(0, flat.shape[0], step):
            out[i:i + step] = S.weights @ np.exp(2j * np.pi * (P @ flat[i:i + step].T)) / S.count
    return out.reshape(shape)


def _omega_hat_diagonal(Q: IntegralForm, psi: CutoffPsi, lam: int, flat: np.ndarray,
                        budget) -> np.ndarray:
    """Coefficient of t^lam in prod_i sum_{x} w_i(x) e(x xi_i) t^(c_i x^k)."""
    k = Q.degree
    m = flat.shape[0]
    scale = lam ** (1.0 / k) if lam > 0 else 1.0
    coords = []
    for c in Q.coefficients:
        R = int(math.floor((lam / c) ** (1.0 / k) + 1e-9))
        xs = np.arange(-R, R + 1)
        w = np.ones(xs.size) if psi.is_unit else _smooth_step(xs / (scale * psi.width))
        keep = w > 0
        coords.append((xs[keep], c * xs[keep] ** k, w[keep]))
    check_budget("level-set exponential sum", m * (lam + 1) * sum(x.size for x, _, _ in coords), budget)
    total = 0.0
    acc = np.zeros((m, lam + 1), dtype=complex)
    acc[:, 0] = 1.0
    tot_acc = np.zeros(lam + 1)
    tot_acc[0] = 1.0
    for i, (xs, ms, w) in enumerate(coords):
        last = i == Q.n - 1
        ph = np.exp(2j * np.pi * np.multiply.outer(flat[:, i], xs)) * w
        if last:
            out = np.zeros(m, dtype=complex)
            for j, mm in enumerate(ms):
                out += ph[:, j] * acc[:, lam - mm]
                total += w[j] * tot_acc[lam - mm]
            break
        new = np.zeros_like(acc)
        new_tot = np.zeros_like(tot_acc)
        for j, mm in enumerate(ms):
            new[:, mm:] += ph[:, j, None] * acc[:, : lam + 1 - mm]
            new_tot[mm:] += w[j] * tot_acc[: lam + 1 - mm]
        acc, tot_acc = new, new_tot
    if total <= 0:
        raise ValueError(f"lambda={lam} is not represented")
    return out / total


def representation_weight(Q: IntegralForm, psi: CutoffPsi, lam: int) -> float:
    """r_{Q,psi}(lam)."""
    if psi.is_unit and Q.kind is FormKind.DIAGONAL and Q.positive_definite:
        return float(build_rep_table(Q, lam)[lam])
    return solution_set(Q, psi, lam).count


# -- main terms -------------------------------------------------------------------------


def _weyl_at(Q: IntegralForm, q: int, a: int, avecs: np.ndarray) -> np.ndarray:
    """F_q(a, avec) for each row of avecs (entries already reduced mod q)."""
    if Q.kind is FormKind.DIAGONAL:
        out = np.ones(avecs.shape[0], dtype=complex)
        for G, col in zip(coordinate_tables(Q, q), avecs.T):
            out *= G[a, col]
        return out
    grid = _all_freq_cached(Q, q, a)
    return grid[tuple(avecs.T)]


@lru_cache(maxsize=512)
def _all_freq_cached(Q: IntegralForm, q: int, a: int) -> np.ndarray:
    return weyl_sums_all_freq(Q, q, a)


def localize(xi: np.ndarray, q: int, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest avec/q to each xi on the torus, the offset xi - avec/q and the bump factor.

    For q in I_j the bumps zeta(10^j(. - avec/q)) have disjoint supports, so the nearest
    rational is the only possible contributor.
    """
    A = np.rint(xi * q)
    diff = xi - A / q
    diff -= np.rint(diff)
    bump = zeta_vec(10.0**j * diff)
    return (A.astype(np.int64) % q), diff, bump


def _term(Q: IntegralForm, lam: int, j: int, q: int, flat: np.ndarray, ds: SurfaceMeasureFT,
          complete: bool) -> np.ndarray:
    A, diff, bump = localize(flat, q, j)
    out = np.zeros(flat.shape[0], dtype=complex)
    act = np.flatnonzero(bump > 0)
    if act.size == 0:
        return out
    roots = roots_of_unity(q)
    arith = np.zeros(act.size, dtype=complex)
    for a in (range(q) if complete else units(q)):
        arith += _weyl_at(Q, q, a, A[act]) * roots[(-lam * a) % q]
    radial = ds(lam ** (1.0 / Q.degree) * diff[act])
    out[act] = arith * bump[act] * radial
    return out


def main_term(Q: IntegralForm, psi: CutoffPsi, lam: int, j: int, q: int, xi,
              ds: SurfaceMeasureFT | None = None) -> np.ndarray:
    """m_{lam,j,q}(xi) = sum_{a in U_q} sum_{avec} F_q(a,avec) e(-a lam/q)
    zeta(10^j(xi - avec/q)) d~sigma(lam^(1/k)(xi - avec/q))."""
    if q not in dyadic_block(j):
        raise ValueError(f"q={q} is not in I_{j} = [{2 ** (j - 1)}, {2**j})")
    flat, shape = _as_freqs(xi, Q.n)
    ds = ds or SurfaceMeasureFT.default(Q, psi)
    return _term(Q, lam, j, q, flat, ds, complete=False).reshape(shape)


def completed_term(Q: IntegralForm, psi: CutoffPsi, lam: int, j: int, d: int, xi,
                   ds: SurfaceMeasureFT | None = None) -> np.ndarray:
    """Omega_{lam,j,d}: as the main term but with a over all of Z_d."""
    if d < 1 or j < 1:
        raise ValueError("need d >= 1 and j >= 1")
    flat, shape = _as_freqs(xi, Q.n)
    ds = ds or SurfaceMeasureFT.default(Q, psi)
    return _term(Q, lam, j, d, flat, ds, complete=True).reshape(shape)


def main_term_direct(Q: IntegralForm, lam: int, j: int, q: int, xi: np.ndarray,
                     ds: SurfaceMeasureFT, complete: bool = False) -> complex:
    """Unpruned reference: every avec in Z_q^n and every lattice shift in {-1,0,1}^n."""
    from .expsums import residue_grid, weyl_sum

    xi = np.asarray(xi, dtype=float)
    total = 0j
    shifts = residue_grid(Q.n, 3) - 1
    for avec in residue_grid(Q.n, q):
        for sh in shifts:
            diff = xi - (avec / q + sh)
            b = float(zeta_vec(10.0**j * diff))
            if b == 0.0:
                continue
            rad = complex(ds(lam ** (1.0 / Q.degree) * diff))
            for a in (range(q) if complete else units(q)):
                F = weyl_sum(Q, q, a, avec).value
                total += F * np.exp(-2j * np.pi * lam * a / q) * b * rad
    return total


def level_multiplier(Q: IntegralForm, psi: CutoffPsi, lam: int, j: int, xi,
                     ds: SurfaceMeasureFT | None = None) -> np.ndarray:
    """m_{lam,j} = sum_{q in I_j} m_{lam,j,q}."""
    flat, shape = _as_freqs(xi, Q.n)
    ds = ds or SurfaceMeasureFT.default(Q, psi)
    out = np.zeros(flat.shape[0], dtype=complex)
    for q in dyadic_block(j):
        out += _term(Q, lam, j, q, flat, ds, complete=False)
    return out.reshape(shape)


def truncated_multiplier(Q: IntegralForm, psi: CutoffPsi, lam: int, J_max: int, xi,
                         ds: SurfaceMeasureFT | None = None, normalized: bool = True) -> np.ndarray:
    """sum_{j <= J_max} m_{lam,j}, scaled by lam^(n/k-1)/r(lam) when ``normalized`` so that it
    approximates omega_hat_lam."""
    flat, shape = _as_freqs(xi, Q.n)
    ds = ds or SurfaceMeasureFT.default(Q, psi)
    out = np.zeros(flat.shape[0], dtype=complex)
    for j in range(1, J_max + 1):
        out += level_multiplier(Q, psi, lam, j, flat, ds)
    if normalized:
        out *= main_term_normalization(Q, psi, lam)
    return out.reshape(shape)


def main_term_normalization(Q: IntegralForm, psi: CutoffPsi, lam: int) -> float:
    r = representation_weight(Q, psi, lam)
    if r <= 0:
        raise ValueError(f"lambda={lam} is not represented")
    return lam ** (Q.n / Q.degree - 1) / r


# -- divisor constants and the completion identity ---------------------------------------------


@dataclass(frozen=True)
class DivisorConstant:
    j: int
    d: int
    value: int

    @property
    def bound(self) -> float:
        return 2**self.j / self.d if self.d <= 2**self.j else 0.0


def divisor_constant(j: int, d: int) -> int:
    """C_j(d) = sum_{h >= 1} mu(h) 1_{I_j}(d h)."""
    if j < 1 or d < 1:
        raise ValueError("need j >= 1 and d >= 1")
    lo, hi = 2 ** (j - 1), 2**j
    return sum(mobius(h) for h in range(-(-lo // d), (hi - 1) // d + 1))


def divisor_constants(j: int) -> dict[int, int]:
    """All nonzero C_j(d); d ranges over 1..2^j - 1."""
    out = {}
    for d in range(1, 2**j):
        v = divisor_constant(j, d)
        if v:
            out[d] = v
    return out


@dataclass
class CompletionResidual:
    lam: int
    j: int
    q: int
    residual: float
    summed_residual: float | None = None


def completion_frequencies(n: int, random_count: int = 50, q_max: int = 4, seed: int = 0,
                           jitter: float = 0.004) -> np.ndarray:
    """Uniform random xi, every avec/q with q <= q_max, and those rationals jittered."""
    rng = np.random.Generator(np.random.Philox(seed))
    pts = [rng.uniform(-0.5, 0.5, (random_count, n))]
    seen = set()
    rats = []
    for q in range(1, q_max + 1):
        for A in np.indices((q,) * n).reshape(n, -1).T:
            key = tuple(np.round(((A / q + 0.5) % 1.0) - 0.5, 12))
            if key not in seen:
                seen.add(key)
                rats.append(key)
    rats = np.array(rats, dtype=float)
    pts += [rats, rats + rng.uniform(-jitter, jitter, rats.shape)]
    return np.concatenate(pts)


def mobius_completion_check(Q: IntegralForm, psi: CutoffPsi, lam: int, j: int, xi,
                            ds: SurfaceMeasureFT | None = None, qs=None,
                            mobius_fn=mobius) -> list[CompletionResidual]:
    """max_xi |m_{lam,j,q} - sum_{d|q} mu(q/d) Omega_{lam,j,d}| per q in I_j, plus the summed
    form m_{lam,j} = sum_d C_j(d) Omega_{lam,j,d} on the last record."""
    flat, _ = _as_freqs(xi, Q.n)
    ds = ds or SurfaceMeasureFT.default(Q, psi)
    block = list(dyadic_block(j))
    qs = block if qs is None else list(qs)
    omegas: dict[int, np.ndarray] = {}

    def omega(d: int) -> np.ndarray:
        if d not in omegas:
            omegas[d] = _term(Q, lam, j, d, flat, ds, complete=True)
        return omegas[d]

    out = []
    level = np.zeros(flat.shape[0], dtype=complex)
    for q in qs:
        if q not in dyadic_block(j):
            raise ValueError(f"q={q} is not in I_{j}")
        m = _term(Q, lam, j, q, flat, ds, complete=False)
        level += m
        rhs = sum(mobius_fn(q // d) * omega(d) for d in divisors(q))
        out.append(CompletionResidual(lam, j, q, float(np.max(np.abs(m - rhs), initial=0.0))))
    if qs == block:
        if mobius_fn is mobius:
            consts = divisor_constants(j)
        else:
            consts = {d: sum(mobius_fn(h) for h in range(1, 2**j) if d * h in dyadic_block(j))
                      for d in range(1, 2**j)}
        summed = sum(c * omega(d) for d, c in consts.items())
        out[-1].summed_residual = float(np.max(np.abs(level - summed), initial=0.0))
    return out


# -- error term ---------------------------------------------------------------------------------


@dataclass
class ErrorDecayReport:
    lams: list[int]
    errors: list[float]
    error_at_zero: list[float]
    delta_hat: float
    correlation: float
    J_max: int
    n_samples: int
    seed: int
    tail_bound: float
    passed: bool
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def error_tail_bound(Q: IntegralForm, J_max: int, alpha: float | None = None) -> float:
    """Crude size of sum_{j > J_max} |m_j| in units of d~sigma(0): sum_{q >= 2^J_max} q^(1-alpha)
    with alpha = n/k (reported only; the series may diverge when alpha <= 2)."""
    alpha = Q.n / Q.degree if alpha is None else alpha
    if alpha <= 2:
        return float("inf")
    q0 = 2**J_max
    return q0 ** (2 - alpha) / (alpha - 2) + q0 ** (1 - alpha)


def error_term_decay(Q: IntegralForm, psi: CutoffPsi, lams, J_max: int, n_samples: int = 100,
                     seed: int = 0, xi=None, ds: SurfaceMeasureFT | None = None,
                     budget: int | None = None) -> ErrorDecayReport:
    """e(lam) = max over sampled xi of |omega_hat_lam(xi) - norm * sum_{j<=J_max} m_{lam,j}(xi)|,
    where norm = lam^(n/k-1)/r(lam); then fits e(lam) ~ lam^(-delta)."""
    lams = [int(v) for v in lams]
    if len(lams) < 2:
        raise ValueError("need at least two lambda values to fit a decay rate")
    if J_max < 0:
        raise ValueError("J_max must be >= 0")
    ds = ds or SurfaceMeasureFT.default(Q, psi)
    if xi is None:
        rng = np.random.Generator(np.random.Philox(seed))
        xi = rng.uniform(-0.5, 0.5, (n_samples, Q.n))
    xi = np.asarray(xi, dtype=float)
    zero = np.zeros((1, Q.n))
    errors, at_zero = [], []
    for lam in lams:
        pts = np.concatenate([xi, zero])
        w = omega_hat(Q, psi, lam, pts, budget)
        m = truncated_multiplier(Q, psi, lam, J_max, pts, ds) if J_max > 0 else np.zeros_like(w)
        diff = np.abs(w - m)
        errors.append(float(diff[:-1].max()))
        at_zero.append(float(diff[-1]))
    x = np.log(np.array(lams, dtype=float))
    y = np.log(np.maximum(np.array(errors), 1e-300))
    slope = float(np.polyfit(x, y, 1)[0])
    corr = float(np.corrcoef(x, y)[0, 1]) if np.std(y) > 0 else 0.0
    return ErrorDecayReport(lams, errors, at_zero, -slope, corr, J_max, int(xi.shape[0]), seed,
                            error_tail_bound(Q, J_max), -slope > 0)


# -- the convolution kernel V_{t,d} ---------------------------------------------------------------


def kernel_Vtd(d: int, t: int, x, Q: IntegralForm) -> np.ndarray:
    """d 1_{Q(x) = t mod d} int_{[-1/2,1/2]^n} zeta(d xi) e(-x.xi) dxi for x of shape (..., n).

    The integral factorizes as prod_i d^-1 zeta_hat(x_i/d) because supp zeta(d .) lies
    inside [-1/5, 1/5].
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    X = np.asarray(x, dtype=np.int64)
    flat = X.reshape(-1, Q.n)
    from .forms import eval_many

    vals = eval_many(Q, flat)
    ind = np.array([(int(v) - t) % d == 0 for v in vals])
    inner = np.prod(zeta_hat(flat / d), axis=1) / d**Q.n
    return (d * ind * inner).reshape(X.shape[:-1])


def kernel_envelope(d: int, x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    return d / (d**n * (math.sqrt(n) + 1 + r / d) ** (n + 1))


@dataclass
class EnvelopeCheck:
    d: int
    t: int
    fitted_C: float
    max_ratio: float
    within: bool
    points: int


def kernel_envelope_check(Q: IntegralForm, d: int, t: int, count: int = 500, radius: int = 60,
                          seed: int = 0, C: float | None = None) -> EnvelopeCheck:
    """Compare |V_{t,d}(x)| with the envelope at random lattice points.

    ``C`` defaults to the value fitted on a separate calibration draw, so the check is not
    circular.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    if C is None:
        cal = rng.integers(-radius, radius + 1, (count, Q.n))
        cal_ratio = np.abs(kernel_Vtd(d, t, cal, Q)) / kernel_envelope(d, cal, Q.n)
        C = float(max(cal_ratio.max(), 1e-300)) * 1.5
    X = rng.integers(-radius, radius + 1, (count, Q.n))
    ratio = np.abs(kernel_Vtd(d, t, X, Q)) / kernel_envelope(d, X, Q.n)
    return EnvelopeCheck(d, t, C, float(ratio.max()), bool(ratio.max() <= C), count)


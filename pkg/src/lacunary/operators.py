"""Averaging operators A_lam, Fourier multiplier operators and empirical maximal-norm probes
on finite boxes and discrete tori."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .arith import dyadic_block
from .counting import SolutionSet, solution_set
from .forms import CutoffPsi, IntegralForm
from .multipliers import (SurfaceMeasureFT, level_multiplier, main_term_normalization,
                          omega_hat, truncated_multiplier)

_HEADER = struct.Struct("<4q")


@dataclass(frozen=True)
class GridFunction:
    """Values on the torus Z_N^n (``kind="torus"``) or on the box [-T, T]^n (``kind="box"``).

    Box arrays are indexed so that entry i along an axis is the lattice coordinate i - T.
    """

    kind: str
    n: int
    size: int
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("torus", "box"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        side = self.size if self.kind == "torus" else 2 * self.size + 1
        if self.values.shape != (side,) * self.n:
            raise ValueError(f"values must have shape {(side,) * self.n}")
        v = np.array(self.values, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def torus(cls, values) -> "GridFunction":
        v = np.asarray(values)
        return cls("torus", v.ndim, v.shape[0], v)

    @classmethod
    def box(cls, values) -> "GridFunction":
        v = np.asarray(values)
        if v.shape[0] % 2 == 0:
            raise ValueError("box side must be odd")
        return cls("box", v.ndim, v.shape[0] // 2, v)

    @classmethod
    def delta(cls, kind: str, n: int, size: int) -> "GridFunction":
        side = size if kind == "torus" else 2 * size + 1
        v = np.zeros((side,) * n)
        v[(0 if kind == "torus" else size,) * n] = 1.0
        return cls(kind, n, size, v)

    @property
    def T(self) -> int:
        if self.kind != "box":
            raise AttributeError("only box functions have a half-width")
        return self.size

    def coordinates(self) -> np.ndarray:
        """Lattice coordinate along one axis for each array index."""
        side = self.values.shape[0]
        return np.arange(side) - (self.size if self.kind == "box" else 0)

    def norm(self, p: float) -> float:
        a = np.abs(self.values)
        if np.isinf(p):
            return float(a.max(initial=0.0))
        if p <= 0:
            raise ValueError("p must be positive")
        return float(np.sum(a**p) ** (1.0 / p))

    def to_binary(self, path) -> None:
        """Header (n, k, side, T) then values; k = 1 for float64, 2 for complex128, T = -1 on a torus."""
        cplx = np.iscomplexobj(self.values)
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(self.n, 2 if cplx else 1, self.values.shape[0],
                                  self.size if self.kind == "box" else -1))
            fh.write(np.ascontiguousarray(self.values, dtype="<c16" if cplx else "<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "GridFunction":
        data = Path(path).read_bytes()
        n, k, side, T = _HEADER.unpack_from(data)
        dtype = "<c16" if k == 2 else "<f8"
        v = np.frombuffer(data, dtype=dtype, offset=_HEADER.size)
        if v.size != side**n:
            raise ValueError("corrupt grid file")
        v = v.reshape((side,) * n)
        return cls("torus", n, side, v) if T < 0 else cls("box", n, T, v)


def _solutions(Q: IntegralForm, psi: CutoffPsi, lam: int) -> SolutionSet:
    S = solution_set(Q, psi, lam)
    if S.count <= 0:
        raise ValueError(f"r({lam}) = 0")
    return S


def apply_average(Q: IntegralForm, psi: CutoffPsi, lam: int, f: GridFunction,
                  pad: bool = True) -> GridFunction:
    """(A_lam f)(y) = r(lam)^-1 sum_{Q(x)=lam} psi(x/lam^(1/k)) f(y - x).

    Torus inputs wrap around. Box inputs are padded by max |x|_inf over the solution set so
    no mass is lost; with ``pad=False`` the output keeps the input box and any mass that would
    leave it raises.
    """
    if f.n != Q.n:
        raise ValueError("dimension mismatch")
    S = _solutions(Q, psi, lam)
    vals = f.values
    if f.kind == "torus":
        out = np.zeros_like(vals, dtype=np.result_type(vals, float))
        axes = tuple(range(Q.n))
        for x, w in zip(S.points, S.weights):
            out += w * np.roll(vals, tuple(int(v) for v in x), axis=axes)
        return GridFunction("torus", Q.n, f.size, out / S.count)
    R = S.radius
    T = f.size
    if not pad and R:
        inner = tuple(slice(R, 2 * T + 1 - R) for _ in range(Q.n))
        shell = np.abs(vals).sum() - np.abs(vals[inner]).sum() if 2 * T + 1 > 2 * R else np.abs(vals).sum()
        if shell > 0:
            raise ValueError("unpadded box overflow: translates leave the box")
    Tout = T + R
    side = 2 * Tout + 1
    out = np.zeros((side,) * Q.n, dtype=np.result_type(vals, float))
    for x, w in zip(S.points, S.weights):
        sl = tuple(slice(R + int(v), R + int(v) + 2 * T + 1) for v in x)
        out[sl] += w * vals
    if not pad:
        # the overflow check above guarantees nothing lands outside the input box
        out = out[tuple(slice(R, R + 2 * T + 1) for _ in range(Q.n))]
        return GridFunction("box", Q.n, T, out / S.count)
    return GridFunction("box", Q.n, Tout, out / S.count)


def torus_frequencies(N: int, n: int) -> np.ndarray:
    """The grid xi = m/N, m in Z_N^n, as an (N,)*n + (n,) array with entries in [-1/2, 1/2)."""
    k = np.fft.fftfreq(N)
    return np.stack(np.meshgrid(*([k] * n), indexing="ij"), axis=-1)


def forward_transform(values: np.ndarray) -> np.ndarray:
    """f_hat(m/N) = sum_x f(x) e(x.m/N)."""
    return np.fft.ifftn(values) * values.size


def inverse_transform(coeffs: np.ndarray) -> np.ndarray:
    """g(y) = N^-n sum_m c(m) e(-y.m/N)."""
    return np.fft.fftn(coeffs) / coeffs.size


def naive_forward_transform(values: np.ndarray) -> np.ndarray:
    """O(N^(2n)) reference for ``forward_transform``."""
    N, n = values.shape[0], values.ndim
    X = np.indices(values.shape).reshape(n, -1).T
    phase = np.exp(2j * np.pi * (X @ X.T) / N)
    return (phase @ values.reshape(-1)).reshape(values.shape)


def apply_multiplier(m, f: GridFunction) -> GridFunction:
    """Inverse transform of m(xi) f_hat(xi) on Z_N^n.

    ``m`` is either an array of samples at xi = m/N (in ``torus_frequencies`` order) or a
    callable evaluated on that grid.
    """
    if f.kind != "torus":
        raise ValueError("multipliers act on torus functions only")
    N, n = f.size, f.n
    if callable(m):
        m = np.asarray(m(torus_frequencies(N, n)))
    m = np.asarray(m)
    if m.shape != f.values.shape:
        raise ValueError(f"multiplier samples must have shape {f.values.shape}")
    return GridFunction("torus", n, N, inverse_transform(m * forward_transform(f.values)))


def omega_hat_grid(Q: IntegralForm, psi: CutoffPsi, lam: int, N: int) -> np.ndarray:
    return omega_hat(Q, psi, lam, torus_frequencies(N, Q.n))


def apply_main_term(Q: IntegralForm, psi: CutoffPsi, lam: int, J_max: int, f: GridFunction,
                    ds: SurfaceMeasureFT | None = None) -> GridFunction:
    """M_lam f with the normalized truncated multiplier sum_{j <= J_max} m_{lam,j}."""
    return apply_multiplier(lambda xi: truncated_multiplier(Q, psi, lam, J_max, xi, ds), f)


def _common_box(outs: list[GridFunction]) -> list[np.ndarray]:
    T = max(g.size for g in outs)
    arrs = []
    for g in outs:
        off = T - g.size
        a = np.zeros((2 * T + 1,) * g.n, dtype=g.values.dtype)
        a[tuple(slice(off, off + 2 * g.size + 1) for _ in range(g.n))] = g.values
        arrs.append(a)
    return arrs


def maximal_apply(Q: IntegralForm, psi: CutoffPsi, lams: Sequence[int], f: GridFunction,
                  mode: str = "average", J_max: int = 2,
                  ds: SurfaceMeasureFT | None = None) -> GridFunction:
    """sup over lam in ``lams`` of |A_lam f| (or |M_lam f| with ``mode="multiplier"``)."""
    lams = list(lams)
    if not lams:
        raise ValueError("empty lambda list")
    if mode == "average":
        outs = [apply_average(Q, psi, lam, f) for lam in lams]
    elif mode == "multiplier":
        outs = [apply_main_term(Q, psi, lam, J_max, f, ds) for lam in lams]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if f.kind == "torus":
        sup = np.max([np.abs(g.values) for g in outs], axis=0)
        return GridFunction("torus", f.n, f.size, sup)
    arrs = _common_box(outs)
    sup = np.max([np.abs(a) for a in arrs], axis=0)
    return GridFunction("box", f.n, (sup.shape[0] - 1) // 2, sup)


def norm_ratio(out: GridFunction, f: GridFunction, p: float) -> float:
    """||out||_p / ||f||_p, a lower bound for the norm of whatever produced ``out``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    base = f.norm(p)
    if base == 0:
        raise ValueError("zero input")
    return out.norm(p) / base


# -- M_{*,j} probe ------------------------------------------------------------------------


@dataclass
class MstarProbe:
    j: int
    p: float
    N: int
    lower_bound: float
    best_trial: str
    history: list[float]
    ceiling_unit: float
    extras: dict = field(default_factory=dict)

    @property
    def ceiling_ratio(self) -> float:
        """lower_bound / (j^2 2^j)."""
        return self.lower_bound / self.ceiling_unit


def default_trials(n: int, N: int, seed: int = 0, random_count: int = 4) -> list[tuple[str, np.ndarray]]:
    """Deltas, congruence indicators and random +-1 functions on Z_N^n."""
    trials = [("delta", GridFunction.delta("torus", n, N).values)]
    idx = np.indices((N,) * n)
    for q in (2, 3, 4):
        if N % q == 0:
            trials.append((f"indicator_mod{q}", np.all(idx % q == 0, axis=0).astype(float)))
    rng = np.random.Generator(np.random.Philox(seed))
    for i in range(random_count):
        trials.append((f"random_sign_{i}", rng.choice([-1.0, 1.0], (N,) * n)))
    return trials


def probe_Mstar_j(Q: IntegralForm, psi: CutoffPsi, lams: Sequence[int], j: int, p: float, N: int,
                  trials: list[tuple[str, np.ndarray]] | None = None, seed: int = 0,
                  ds: SurfaceMeasureFT | None = None) -> MstarProbe:
    """Best ||sup_lam |M_{lam,j} f| ||_p / ||f||_p over the trial set.

    M_{lam,j} uses lam^(n/k-1)/r(lam) m_{lam,j}; only denominators q in I_j dividing N see
    their rational points on the grid.
    """
    if not 1 < p < np.inf:
        raise ValueError("p must lie in (1, inf)")
    lams = list(lams)
    if not lams:
        raise ValueError("empty lambda list")
    trials = trials if trials is not None else default_trials(Q.n, N, seed)
    ds = ds or SurfaceMeasureFT.default(Q, psi)
    grid = torus_frequencies(N, Q.n)
    mults = [main_term_normalization(Q, psi, lam) * level_multiplier(Q, psi, lam, j, grid, ds)
             for lam in lams]
    best, best_name, history = 0.0, "", []
    for name, vals in trials:
        f = GridFunction.torus(vals)
        fh = forward_transform(f.values)
        sup = np.max([np.abs(inverse_transform(m * fh)) for m in mults], axis=0)
        r = float(np.sum(sup**p) ** (1 / p) / f.norm(p))
        if r > best:
            best, best_name = r, name
        history.append(best)
    on_grid = [q for q in dyadic_block(j) if N % q == 0]
    return MstarProbe(j, p, N, best, best_name, history, float(j * j * 2**j),
                      {"denominators_on_grid": on_grid, "lambdas": lams})

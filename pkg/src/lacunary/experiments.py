"""Named, reproducible experiments that wire the library together and emit JSON reports."""

from __future__ import annotations

import configparser
import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .arith import BudgetExceeded, dyadic_block, is_prime, mobius, units
from .counting import build_rep_table, lipschitz_fit
from .expsums import (bound_C_and_K_check, estimate_alpha, generalized_weyl_sum, identity_F_check,
                      identity_U_check, weyl_sum, weyl_sum_direct)
from .forms import IntegralForm, parse_form_config
from .multipliers import (SurfaceMeasureFT, completion_frequencies, error_term_decay,
                          mobius_completion_check, ray_decay_fit)
from .sequences import build_counterexample, first_regular_values

DEFAULT_CONFIG = {"kind": "sphere", "n": "5"}


class ConfigError(ValueError):
    """Bad or missing configuration."""


def load_config(path) -> dict[str, str]:
    """Plain key=value lines; '#' starts a comment. An empty file is an error."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    cfg = dict(parser["config"])
    if not cfg:
        raise ConfigError(f"{path} holds no settings")
    return cfg


def _ints(cfg: Mapping[str, str], key: str, default: list[int]) -> list[int]:
    return [int(v) for v in cfg[key].split(",")] if key in cfg else list(default)


def _floats(cfg: Mapping[str, str], key: str, default: list[float]) -> list[float]:
    return [float(v) for v in cfg[key].split(",")] if key in cfg else list(default)


def _form(cfg: Mapping[str, str]):
    if not cfg:
        raise ConfigError("empty configuration")
    try:
        return parse_form_config(cfg)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad form configuration: {exc}") from exc


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    params: dict = field(default_factory=dict)
    comparison: str = "<="

    def as_dict(self) -> dict:
        return {"check": self.name, "params": self.params, "value": self.value,
                "tolerance": self.tolerance, "comparison": self.comparison, "pass": self.passed}


def _check(name: str, value: float, tol: float, comparison: str = "<=", **params) -> Check:
    ok = {"<=": value <= tol, ">=": value >= tol, "<": value < tol, ">": value > tol}[comparison]
    return Check(name, float(value), float(tol), bool(ok), params, comparison)


@dataclass
class ExperimentReport:
    name: str
    config: dict
    seed: int
    results: dict
    checks: list[Check]
    outputs: list[str] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self, deterministic: bool = False) -> dict:
        prov = {"version": _version(), "seed": self.seed}
        if not deterministic:
            prov["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
            prov["elapsed_seconds"] = round(self.elapsed, 3)
        return {"experiment": self.name, "config": self.config, "results": self.results,
                "checks": [c.as_dict() for c in self.checks], "pass": self.passed,
                "provenance": prov, "outputs": self.outputs}

    def to_json(self, deterministic: bool = False) -> str:
        return json.dumps(_plain(self.as_dict(deterministic)), indent=2, sort_keys=True)

    def summary_lines(self) -> list[str]:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: {c.value:.6g} "
                         f"{c.comparison} {c.tolerance:.6g}")
        return lines


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _write_csv(out_dir, name: str, header: list[str], rows) -> str:
    path = Path(out_dir) / name
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def _finish(name, cfg, seed, results, checks, t0, out_dir=None, sidecars=()) -> ExperimentReport:
    rep = ExperimentReport(name, dict(cfg), seed, results, checks, elapsed=time.perf_counter() - t0)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        for fname, header, rows in sidecars:
            rep.outputs.append(_write_csv(out_dir, fname, header, rows))
    return rep


# -- identities ----------------------------------------------------------------------------


def lemma31_tuples(Q: IntegralForm, count: int, rng: np.random.Generator, q_max: int = 12):
    """Random (a in U_q, avec in U_qvec) with some q_i not dividing q."""
    out = []
    while len(out) < count:
        q = int(rng.integers(1, q_max + 1))
        qvec = [int(v) for v in rng.integers(1, q_max + 1, Q.n)]
        if all(q % qi == 0 for qi in qvec):
            continue
        a = int(rng.choice(units(q)))
        avec = [int(rng.choice(units(qi))) for qi in qvec]
        out.append((a, q, avec, qvec))
    return out


def _completion_check(Q, psi, lams, q_max, xi, ds, mobius_fn, tol) -> list[Check]:
    worst, worst_sum, worst_at = 0.0, 0.0, {}
    for lam in lams:
        for j in range(1, q_max.bit_length() + 1):
            qs = [q for q in dyadic_block(j) if q <= q_max]
            for r in mobius_completion_check(Q, psi, lam, j, xi, ds, qs=qs, mobius_fn=mobius_fn):
                if r.residual > worst:
                    worst, worst_at = r.residual, {"lambda": lam, "j": j, "q": r.q}
                if r.summed_residual is not None:
                    worst_sum = max(worst_sum, r.summed_residual)
    return [_check("mobius_completion", worst, tol, lambdas=lams, q_max=q_max,
                   frequencies=int(xi.shape[0]), worst=worst_at),
            _check("divisor_constant_completion", worst_sum, tol, lambdas=lams)]


def _fu_check(Q, q_max, tol, budget) -> list[Check]:
    worst_F = worst_U = 0.0
    for q in range(1, q_max + 1):
        for lam in range(q):
            worst_U = max(worst_U, identity_U_check(Q, q, lam, budget).residual)
            if q >= 2:
                worst_F = max(worst_F, identity_F_check(Q, q, lam, budget).residual)
    return [_check("identity_F", worst_F, tol, q_range=[2, q_max]),
            _check("identity_U", worst_U, tol, q_range=[1, q_max])]


def _k_check(Q, q_max, tol, budget) -> list[Check]:
    reports = [bound_C_and_K_check(Q, q, budget) for q in range(2, q_max + 1)]
    margin = min(b.k_worst_margin for b in reports)
    c_max = max(b.c_max for b in reports)
    return [_check("identity_K_constant_one", margin, -tol, ">=", q_range=[2, q_max], C_max_density=c_max)]


def _lemma31_check(Q, count, seed, tol, budget) -> list[Check]:
    rng = np.random.Generator(np.random.Philox(seed))
    tuples = lemma31_tuples(Q, count, rng)
    vals = [abs(generalized_weyl_sum(Q, a, q, av, qv, budget).value) for a, q, av, qv in tuples]
    return [_check("generalized_sum_vanishing", max(vals), tol, tuples=len(tuples), seed=seed)]


def _guarded(name: str, fn) -> list[Check]:
    """Run one sub-check; a budget failure becomes a failed check instead of aborting the suite."""
    try:
        return fn()
    except BudgetExceeded as exc:
        return [Check(name, math.inf, 0.0, False, {"budget_exhausted": str(exc)})]


def run_identities(cfg: Mapping[str, str], seed: int = 0, budget: int | None = None,
                   out_dir=None, mobius_fn: Callable[[int], int] = mobius,
                   tol: float = 1e-9) -> ExperimentReport:
    """Completion identity, (F), (U), (K) with constant 1 and the vanishing of generalized sums.

    ``mobius_fn`` replaces the Moebius function in the completion identity (a mutation hook).
    Sub-checks run on a thread pool of ``workers`` threads; results keep a fixed order.
    """
    t0 = time.perf_counter()
    Q, psi = _form(cfg)
    q_comp = int(cfg.get("q_max_completion", 24))
    q_fu = int(cfg.get("q_max_identities", 36))
    lams = first_regular_values(Q, int(cfg.get("lambda_count", 5)))
    ds = SurfaceMeasureFT.default(Q, psi, samples=int(cfg.get("mc_samples", 4096)), seed=seed)
    xi = completion_frequencies(Q.n, int(cfg.get("random_frequencies", 50)), 4, seed)
    jobs = [
        ("mobius_completion", lambda: _completion_check(Q, psi, lams, q_comp, xi, ds, mobius_fn, tol)),
        ("identity_F_U", lambda: _fu_check(Q, q_fu, tol, budget)),
        ("identity_K_constant_one", lambda: _k_check(Q, q_fu, tol, budget)),
        ("generalized_sum_vanishing",
         lambda: _lemma31_check(Q, int(cfg.get("lemma31_tuples", 200)), seed, tol, budget)),
    ]
    workers = int(cfg.get("workers", 1))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        groups = list(pool.map(lambda job: _guarded(*job), jobs))
    checks = [c for g in groups for c in g]
    results = {"lambdas": lams, "surface_backend": ds.backend}
    return _finish("identities", cfg, seed, results, checks, t0, out_dir)


# -- Weyl sums -----------------------------------------------------------------------------


def run_weyl(cfg: Mapping[str, str], seed: int = 0, budget: int | None = None,
             out_dir=None, tol: float = 1e-10) -> ExperimentReport:
    """|F_p(a, 0)| against p^(-n/2) for odd primes, with a brute-force cross-check."""
    t0 = time.perf_counter()
    Q, _ = _form(cfg)
    primes = _ints(cfg, "primes", [3, 5, 7, 11])
    brute = set(_ints(cfg, "brute_primes", [3, 5]))
    rows, checks = [], []
    worst = worst_brute = 0.0
    for p in primes:
        if not is_prime(p):
            raise ConfigError(f"{p} is not prime")
        for a in units(p):
            v = weyl_sum(Q, p, a, None, budget).value
            dev = abs(abs(v) - p ** (-Q.n / 2))
            worst = max(worst, dev)
            rows.append([p, a, v.real, v.imag, abs(v)])
            if p in brute:
                worst_brute = max(worst_brute, abs(v - weyl_sum_direct(Q, p, a, (0,) * Q.n, budget)))
    if Q.degree == 2:
        checks.append(_check("gauss_sum_modulus", worst, tol, primes=primes))
    checks.append(_check("brute_force_agreement", worst_brute, tol, primes=sorted(brute)))
    sidecar = [("weyl.csv", ["p", "a", "re", "im", "abs"], rows)]
    return _finish("weyl", cfg, seed, {"values": rows}, checks, t0, out_dir, sidecar)


# -- alpha ---------------------------------------------------------------------------------


def run_alpha(cfg: Mapping[str, str], seed: int = 0, budget: int | None = None,
              out_dir=None) -> ExperimentReport:
    t0 = time.perf_counter()
    Q, _ = _form(cfg)
    q_max = int(cfg.get("q_max", 200))
    sqf = cfg.get("squarefree_only", "true").lower() in ("1", "true", "yes")
    est = estimate_alpha(Q, q_max, squarefree_only=sqf, method=cfg.get("alpha_method", "upper_envelope"),
                         budget=budget, seed=seed)
    a = est.alpha_hat
    expected = float(cfg.get("alpha_expected", Q.n / Q.degree))
    tol = float(cfg.get("alpha_tolerance", 0.3))
    results = {**est.summary(),
               "lacunary_exponent_predicted": (2 * a - 2) / (2 * a - 3) if a > 1.5 else None,
               "full_maximal_critical_exponent": Q.n / (Q.n - Q.degree) if Q.n > Q.degree else None,
               "expected": expected}
    checks = [_check("alpha_within_tolerance", abs(a - expected), tol, alpha_hat=a)]
    sidecar = [("alpha.csv", ["q", "sup_abs_F"], list(zip(est.qs, est.sup_values)))]
    return _finish("alpha", cfg, seed, results, checks, t0, out_dir, sidecar)


# -- error term ----------------------------------------------------------------------------


def run_error_decay(cfg: Mapping[str, str], seed: int = 0, budget: int | None = None,
                    out_dir=None) -> ExperimentReport:
    t0 = time.perf_counter()
    Q, psi = _form(cfg)
    lams = _ints(cfg, "lambdas", [5 * 4**t for t in range(6)])
    J_max = int(cfg.get("J_max", 3))
    samples = int(cfg.get("samples", 100))
    ds = SurfaceMeasureFT.default(Q, psi, samples=int(cfg.get("mc_samples", 20000)), seed=seed)
    rep = error_term_decay(Q, psi, lams, J_max, samples, seed, ds=ds, budget=budget)
    corr_tol = float(cfg.get("correlation_max", -0.8))
    checks = [_check("delta_hat_positive", rep.delta_hat, 0.0, ">"),
              _check("loglog_correlation", rep.correlation, corr_tol, "<=")]
    results = rep.as_dict()
    sidecar = [("error_decay.csv", ["lambda", "error", "error_at_zero"],
                list(zip(rep.lams, rep.errors, rep.error_at_zero)))]
    return _finish("error-decay", cfg, seed, results, checks, t0, out_dir, sidecar)


# -- Lipschitz -----------------------------------------------------------------------------


def run_lipschitz(cfg: Mapping[str, str], seed: int = 0, budget: int | None = None,
                  out_dir=None) -> ExperimentReport:
    t0 = time.perf_counter()
    Q, _ = _form(cfg)
    Rs = _ints(cfg, "radii", [2**e for e in range(8, 15)])
    q = int(cfg.get("congruence_q", 3))
    b = _ints(cfg, "congruence_b", [1] + [0] * (Q.n - 1))
    slack = float(cfg.get("slack", 0.3))
    full = lipschitz_fit(Q, Rs, slack=slack, budget=budget)
    cong = lipschitz_fit(Q, Rs, (q, b), slack=slack, budget=budget)
    checks = []
    if full.C_reference is not None:
        checks.append(_check("leading_constant_rel_error",
                             abs(full.C_hat - full.C_reference) / full.C_reference, 0.05))
    checks.append(_check("congruence_constant_rel_error",
                         abs(cong.C_hat - full.C_hat / q**Q.n) / (full.C_hat / q**Q.n), 0.10))
    checks.append(_check("error_exponent", full.beta, full.beta_bound, "<="))
    checks.append(_check("congruence_error_exponent", cong.beta, cong.beta_bound, "<="))
    results = {"full": full.as_dict(), "congruence": cong.as_dict()}
    sidecar = [("lipschitz.csv", ["R", "count", "count_congruence"],
                list(zip(full.R, full.counts, cong.counts)))]
    return _finish("lipschitz", cfg, seed, results, checks, t0, out_dir, sidecar)


# -- surface measure -----------------------------------------------------------------------


def run_dsigma(cfg: Mapping[str, str], seed: int = 0, budget: int | None = None,
               out_dir=None) -> ExperimentReport:
    """Ray decay of d~sigma, and agreement of the closed form with Monte Carlo where both exist."""
    t0 = time.perf_counter()
    Q, psi = _form(cfg)
    samples = int(cfg.get("mc_samples", 200_000))
    n_freq = int(cfg.get("frequencies", 20))
    r_max = float(cfg.get("r_max", 10.0))
    mc = SurfaceMeasureFT(Q, psi, "monte_carlo_surface", samples, seed)
    checks, rows, results = [], [], {}
    rng = np.random.Generator(np.random.Philox(seed + 7))
    if SurfaceMeasureFT.has_closed_form(Q, psi):
        cf = SurfaceMeasureFT(Q, psi)
        dirs = rng.standard_normal((n_freq, Q.n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        xi = dirs * rng.uniform(0, r_max, n_freq)[:, None]
        v, err = mc.evaluate(xi)
        c = cf(xi)
        z = np.abs(v - c) / np.maximum(err, 1e-300)
        checks.append(_check("closed_form_vs_monte_carlo_sigmas", float(z.max()), 3.0,
                             frequencies=n_freq, samples=samples, seed=seed))
        results["agreement"] = {"max_sigma": float(z.max()), "max_abs_diff": float(np.abs(v - c).max())}
        primary = cf
    else:
        primary = mc
    if cfg.get("decay_backend", "auto") == "monte_carlo_surface":
        primary = mc
    fit = ray_decay_fit(primary, n_rays=int(cfg.get("rays", 8)), r_max=r_max,
                        n_radii=int(cfg.get("radii", 400 if primary is not mc else 120)), seed=seed)
    checks.append(_check("ray_decay_exponent", fit.exponent, fit.threshold, ">=", backend=primary.backend))
    results["decay"] = {"exponent": fit.exponent, "per_ray": fit.exponents_per_ray,
                        "threshold": fit.threshold, "points_used": fit.points_used, "seed": fit.seed}
    results["K"] = primary.decay_K
    results["mass"] = primary.mass
    radii = np.linspace(0, r_max, 101)
    th = np.ones(Q.n) / math.sqrt(Q.n)
    vals, errs = primary.evaluate(radii[:, None] * th)
    rows = [[r, v.real, v.imag, e] for r, v, e in zip(radii, vals, errs)]
    sidecar = [("dsigma_ray.csv", ["radius", "re", "im", "stderr"], rows)]
    return _finish("dsigma", cfg, seed, results, checks, t0, out_dir, sidecar)


# -- counterexample ------------------------------------------------------------------------


def _interior_class_counts(modulus: int, n: int, half: int, classes) -> np.ndarray:
    """#{x in [-half, half]^n : x = c mod modulus} for each class c."""
    axis = np.arange(-half, half + 1) % modulus
    per = np.bincount(axis, minlength=modulus).astype(float)
    return np.array([np.prod([per[ci] for ci in c]) for c in classes])


@dataclass
class NormBound:
    certified: float
    extrapolated: float
    values: list[float]


def congruence_norm_bound(Q: IntegralForm, lams, classes, modulus: int, p_exp: float, T: int,
                          budget: int | None = None) -> NormBound:
    """Lower bound for ||sup_i |A_{lam_i} f_T| ||_p / ||f_T||_p, f_T = 1 on (modulus Z cap [-T,T])^n.

    On the interior box [-(T - R), T - R]^n, R = max lam_i^(1/k), one has
    A_lam f_T(x) = N(lam; x mod modulus) / r(lam), so only the listed classes are summed.
    ``extrapolated`` rescales the covered classes to all modulus^n classes.
    """
    lams = [int(v) for v in lams]
    cap = max(lams)
    R = max(math.ceil(lam ** (1.0 / Q.degree)) for lam in lams)
    if T < 2 * R:
        raise ValueError(f"T={T} is too small: need T >= {2 * R} for the largest lambda")
    full = build_rep_table(Q, cap, budget=budget)
    V = []
    for c in classes:
        tab = build_rep_table(Q, cap, (modulus, tuple(c)), budget=budget)
        V.append(max(tab[lam] / full[lam] for lam in lams))
    V = np.array(V)
    cnt = _interior_class_counts(modulus, Q.n, T - R, classes)
    f_mass = float((2 * (T // modulus) + 1) ** Q.n)
    certified = float((np.sum(cnt * V**p_exp) / f_mass) ** (1 / p_exp))
    scale = modulus**Q.n / len(classes)
    extrapolated = float((scale * np.sum(V**p_exp)) ** (1 / p_exp))
    return NormBound(certified, extrapolated, V.tolist())


def run_counterexample(cfg: Mapping[str, str], seed: int = 0, budget: int | None = None,
                       out_dir=None) -> ExperimentReport:
    """Norm-ratio lower bounds for the residue-window sequence against a dyadic control."""
    t0 = time.perf_counter()
    Q, _ = _form(cfg)
    p = int(cfg.get("p", 3))
    Js = _ints(cfg, "J", [1, 2])
    M = int(cfg.get("M", 8))
    p_exps = _floats(cfg, "p_exponents", [1.1, 2.0])
    K_fixed = int(cfg["K"]) if "K" in cfg else None
    c0 = float(cfg.get("c0", 0.05))
    growth_cap = float(cfg.get("control_growth_max", 1.1))
    critical = Q.n / (Q.n - 1)
    per_J, checks, rows = {}, [], []
    for J in Js:
        plan = build_counterexample(Q, p, J, M, K_fixed, c0=c0, budget=budget)
        modulus = p**J
        classes = [e.b for e in plan.entries]
        control = [2 ** (plan.K + i) for i in range(M)]
        R = max(math.ceil(lam ** (1.0 / Q.degree)) for lam in plan.terms + control)
        T = int(cfg["T"]) if "T" in cfg else modulus * math.ceil(4 * R / modulus)
        entry = {"plan": plan.as_dict(), "control_terms": control, "T": T, "by_p": {}}
        for pe in p_exps:
            ours = congruence_norm_bound(Q, plan.terms, classes, modulus, pe, T, budget)
            ctrl = congruence_norm_bound(Q, control, classes, modulus, pe, T, budget)
            entry["by_p"][pe] = {"certified": ours.certified, "extrapolated": ours.extrapolated,
                                 "control_certified": ctrl.certified,
                                 "control_extrapolated": ctrl.extrapolated,
                                 "advantage": ours.certified / ctrl.certified if ctrl.certified else math.inf,
                                 "predicted_trend": p ** (J * (Q.n / pe - (Q.n - 1)))}
            rows.append([J, pe, ours.certified, ours.extrapolated, ctrl.certified, ctrl.extrapolated])
            if pe < critical:
                checks.append(_check("beats_dyadic_control", ours.certified - ctrl.certified, 0.0, ">",
                                     J=J, p_exponent=pe))
        per_J[J] = entry
    growth = {}
    for pe in p_exps:
        for J1, J2 in zip(Js, Js[1:]):
            g = per_J[J2]["by_p"][pe]["extrapolated"] / per_J[J1]["by_p"][pe]["extrapolated"]
            growth[f"{pe}:{J1}->{J2}"] = g
            if pe < critical:
                checks.append(_check("grows_with_J", g, 1.0, ">", p_exponent=pe, J=[J1, J2]))
            elif pe >= 2:
                checks.append(_check("control_growth_at_l2", g, growth_cap, "<=", p_exponent=pe, J=[J1, J2]))
    results = {"per_J": per_J, "growth": growth, "critical_exponent": critical,
               "normalization": "extrapolated = covered classes rescaled to all residues"}
    sidecar = [("counterexample.csv", ["J", "p", "certified", "extrapolated", "control_certified",
                                       "control_extrapolated"], rows)]
    return _finish("counterexample", cfg, seed, results, checks, t0, out_dir, sidecar)


EXPERIMENTS = {
    "identities": run_identities,
    "weyl": run_weyl,
    "alpha": run_alpha,
    "error-decay": run_error_decay,
    "counterexample": run_counterexample,
    "lipschitz": run_lipschitz,
    "dsigma": run_dsigma,
}

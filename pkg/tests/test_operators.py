from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lacunary.counting import count_representations
from lacunary.forms import IntegralForm, UNIT_PSI, eval_many
from lacunary.multipliers import error_term_decay, truncated_multiplier
from lacunary.operators import (GridFunction, apply_average, apply_main_term, apply_multiplier,
                                default_trials, forward_transform, inverse_transform, maximal_apply,
                                naive_forward_transform, norm_ratio, omega_hat_grid, probe_Mstar_j,
                                torus_frequencies)

S3, S5 = IntegralForm.sphere(3), IntegralForm.sphere(5)


def test_delta_spreads_uniformly_on_level_set():
    Q = S3
    out = apply_average(Q, UNIT_PSI, 5, GridFunction.delta("box", 3, 4))
    Y = np.stack(np.meshgrid(*[out.coordinates()] * 3, indexing="ij"), -1).reshape(-1, 3)
    on = eval_many(Q, Y) == 5
    vals = out.values.reshape(-1)
    r = count_representations(Q, lam=5)
    np.testing.assert_allclose(vals[on], 1 / r)
    assert (vals[~on] == 0).all()


def test_constant_is_fixed_on_torus():
    f = GridFunction.torus(np.ones((6, 6, 6)))
    np.testing.assert_allclose(apply_average(S3, UNIT_PSI, 6, f).values, 1.0)


def test_parity_indicator_at_odd_point():
    # every unit neighbour of an odd-parity point has even parity
    idx = np.indices((4,) * 5)
    even = (idx.sum(axis=0) % 2 == 0).astype(float)
    out = apply_average(S5, UNIT_PSI, 1, GridFunction.torus(even))
    assert out.values[1, 0, 0, 0, 0] == pytest.approx(1.0)
    assert out.values[0, 0, 0, 0, 0] == pytest.approx(0.0)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3, 5, 6]))
def test_mass_preservation_on_padded_box(seed, lam):
    v = np.random.default_rng(seed).normal(size=(7, 7, 7))
    out = apply_average(S3, UNIT_PSI, lam, GridFunction.box(v))
    assert out.values.sum() == pytest.approx(v.sum(), abs=1e-10)


def test_unpadded_box_overflow():
    with pytest.raises(ValueError, match="overflow"):
        apply_average(S3, UNIT_PSI, 2, GridFunction.box(np.ones((3, 3, 3))), pad=False)


def test_unpadded_box_keeps_interior_mass():
    f = GridFunction.delta("box", 3, 3)
    tight = apply_average(S3, UNIT_PSI, 2, f, pad=False)
    padded = apply_average(S3, UNIT_PSI, 2, f)
    assert tight.size == 3 and tight.values.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(tight.values, padded.values[1:-1, 1:-1, 1:-1])


@pytest.mark.parametrize("p", [1, 1.5, 2, np.inf])
def test_contraction(p):
    rng = np.random.default_rng(8)
    for _ in range(50):
        f = GridFunction.box(rng.normal(size=(5, 5, 5)))
        assert apply_average(S3, UNIT_PSI, 3, f).norm(p) <= f.norm(p) * (1 + 1e-12)


@pytest.mark.parametrize("N", [4, 5, 6])
def test_fft_matches_naive_transform(N):
    v = np.random.default_rng(N).normal(size=(N, N)) + 1j * np.random.default_rng(N + 1).normal(size=(N, N))
    np.testing.assert_allclose(forward_transform(v), naive_forward_transform(v), atol=1e-10)
    np.testing.assert_allclose(inverse_transform(forward_transform(v)), v, atol=1e-12)


def test_frequency_grid_is_centered():
    g = torus_frequencies(6, 2)
    assert g.shape == (6, 6, 2) and g.min() == -0.5 and g.max() < 0.5


def test_identity_multiplier():
    v = np.random.default_rng(0).normal(size=(8, 8, 8))
    out = apply_multiplier(np.ones(v.shape), GridFunction.torus(v))
    np.testing.assert_allclose(out.values, v, atol=1e-12)


def test_multiplier_rejects_box():
    with pytest.raises(ValueError):
        apply_multiplier(np.ones((3, 3)), GridFunction.box(np.ones((3, 3))))


@pytest.mark.parametrize("lam", [1, 2, 3, 5, 6])
def test_convolution_theorem(lam):
    N = 16
    rng = np.random.default_rng(lam)
    for f in (GridFunction.delta("torus", 3, N), GridFunction.torus(rng.normal(size=(N,) * 3))):
        direct = apply_average(S3, UNIT_PSI, lam, f).values
        via = apply_multiplier(omega_hat_grid(S3, UNIT_PSI, lam, N), f).values
        np.testing.assert_allclose(via, direct, atol=1e-10)


def test_plancherel_bound_for_main_term():
    N, lam, J = 12, 20, 3
    f = GridFunction.torus(np.random.default_rng(1).normal(size=(N,) * 3))
    grid = torus_frequencies(N, 3)
    gap = np.abs(omega_hat_grid(S3, UNIT_PSI, lam, N) - truncated_multiplier(S3, UNIT_PSI, lam, J, grid))
    diff = apply_average(S3, UNIT_PSI, lam, f).values - apply_main_term(S3, UNIT_PSI, lam, J, f).values
    lhs = float(np.sqrt((np.abs(diff) ** 2).sum()))
    assert lhs <= gap.max() * f.norm(2) + 1e-9
    rep = error_term_decay(S3, UNIT_PSI, [lam, 2 * lam], J, xi=grid.reshape(-1, 3))
    assert lhs / f.norm(2) <= rep.errors[0] + 1e-9


def test_maximal_of_singleton_is_modulus():
    f = GridFunction.torus(np.random.default_rng(2).normal(size=(6, 6, 6)))
    np.testing.assert_allclose(maximal_apply(S3, UNIT_PSI, [3], f).values,
                               np.abs(apply_average(S3, UNIT_PSI, 3, f).values))


def test_maximal_monotone_in_list():
    f = GridFunction.box(np.abs(np.random.default_rng(3).normal(size=(5, 5, 5))))
    small = maximal_apply(S3, UNIT_PSI, [1, 4], f)
    big = maximal_apply(S3, UNIT_PSI, [1, 4, 9], f)
    T, t = big.size, small.size
    inner = big.values[tuple(slice(T - t, T + t + 1) for _ in range(3))]
    assert (inner >= small.values - 1e-15).all()


def test_maximal_delta_values():
    out = maximal_apply(S5, UNIT_PSI, [1, 4], GridFunction.delta("box", 5, 0))
    T = out.size
    at = lambda *y: out.values[tuple(T + v for v in y)]
    assert at(1, 0, 0, 0, 0) == pytest.approx(1 / 10)
    assert at(2, 0, 0, 0, 0) == pytest.approx(1 / count_representations(S5, lam=4))
    assert at(1, 1, 1, 1, 0) == pytest.approx(1 / count_representations(S5, lam=4))
    assert sorted(set(np.round(out.values.reshape(-1), 12))) == [0, round(1 / 90, 12), 0.1]


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
def test_norm_ratio_of_delta(p):
    lam = 5
    out = apply_average(S3, UNIT_PSI, lam, GridFunction.delta("box", 3, 0))
    r = count_representations(S3, lam=lam)
    assert norm_ratio(out, GridFunction.delta("box", 3, 0), p) == pytest.approx(r ** (1 / p - 1))


def test_norm_ratio_identity_and_errors():
    f = GridFunction.torus(np.arange(27.0).reshape(3, 3, 3))
    assert norm_ratio(f, f, 2) == 1
    with pytest.raises(ValueError):
        norm_ratio(f, GridFunction.torus(np.zeros((3, 3, 3))), 2)


def test_grid_binary_round_trip(tmp_path):
    for g in (GridFunction.torus(np.random.default_rng(0).normal(size=(4, 4))),
              GridFunction.box(np.ones((5, 5, 5)) * (1 + 2j))):
        g.to_binary(tmp_path / "g.bin")
        back = GridFunction.from_binary(tmp_path / "g.bin")
        assert back.kind == g.kind and back.size == g.size
        np.testing.assert_array_equal(back.values, g.values)


def test_probe_delta_positive():
    trials = default_trials(3, 12)[:1]
    rep = probe_Mstar_j(S3, UNIT_PSI, [5, 10, 20], 1, 1.5, 12, trials)
    assert 0 < rep.lower_bound < np.inf and rep.best_trial == "delta"


def test_probe_history_nondecreasing():
    rep = probe_Mstar_j(S3, UNIT_PSI, [5, 10, 20, 40], 2, 1.2, 12)
    assert all(b >= a for a, b in zip(rep.history, rep.history[1:]))


def test_probe_stays_under_fitted_ceiling():
    ratios = [probe_Mstar_j(S5, UNIT_PSI, [5, 20, 80], j, 1.2, 8).ceiling_ratio for j in range(1, 5)]
    c = max(ratios)
    assert all(r <= c for r in ratios) and c < 10

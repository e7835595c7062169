import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magweyl.errors import InputError
from magweyl.hull import HullFunction, HullModel, OmegaGrid
from magweyl.symbols import (X, XI, AtomSum, GridSpec, SampledSymbol, apply_weights, as_sampled,
                             evaluate_symbol, involution, inverse_partial_fourier, partial_fourier,
                             seminorm)

M1 = HullModel(np.eye(1))


def gaussian_1d(**kw):
    return AtomSum.gaussian(M1, **kw)


def test_grid_spec_geometry():
    g = GridSpec(8.0, 64, 1)
    assert g.h == 0.25 and g.axis[0] == -8.0 and g.weight == 0.25
    assert g.dual().L == pytest.approx(4 * np.pi) and g.dual().realization == XI
    with pytest.raises(InputError):
        GridSpec(8.0, 48, 1)
    with pytest.raises(InputError):
        GridSpec(-1.0, 64, 1)


def test_atom_value_at_center():
    assert evaluate_symbol(gaussian_1d(), [0.0], [0.0]) == pytest.approx(1.0)


def test_atom_decays():
    S = gaussian_1d()
    for x in (5.0, 10.0, 40.0):
        assert abs(evaluate_symbol(S, [0.0], [x])) <= np.exp(-0.5 * x * x) + 1e-300


def test_sampled_interpolation_is_fourth_order():
    S = AtomSum.gaussian(M1, hull=HullFunction.constant(M1) + 0.5 * HullFunction.cos_mode(M1, [1]),
                         gamma=0.5, momentum=[0.3])
    rng = np.random.default_rng(0)
    x = rng.uniform(-3, 3, size=(30, 1))
    w = rng.uniform(0, 2 * np.pi, size=(3, 1))
    exact = S.evaluate(w, x)
    errs = []
    hs = []
    for N in (64, 128, 256):
        Ss = S.sample(GridSpec(8.0, N, 1), OmegaGrid(1, 4))
        errs.append(np.abs(Ss.evaluate(w, x) - exact).max())
        hs.append(16.0 / N)
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert order >= 3.7


def test_gaussian_self_transform():
    g = GridSpec(8.0, 64, 1)
    F = partial_fourier(gaussian_1d(), g, OmegaGrid(1, 2))
    xi = F.grid.axis
    ref = np.sqrt(2 * np.pi) * np.exp(-xi ** 2 / 2)
    assert F.realization == XI
    assert np.abs(F.values[0] - ref).max() <= 1e-8 * ref.max()


def test_fourier_round_trip():
    rng = np.random.default_rng(1)
    model = HullModel(np.eye(2))
    S = AtomSum.gaussian(model, hull=HullFunction.constant(model) + 0.3 * HullFunction.cos_mode(model, [1, 1]),
                         gamma=0.7, center=rng.normal(size=2) * 0.3, momentum=rng.normal(size=2))
    Ss = S.sample(GridSpec(8.0, 32, 2), OmegaGrid(2, 4))
    back = inverse_partial_fourier(partial_fourier(Ss))
    assert back.realization == X and back.grid == Ss.grid
    assert np.abs(back.values - Ss.values).max() <= 1e-10


def test_modulation_shifts_transform():
    # (F e^{i x xi0} g)(xi) = (F g)(xi + xi0) with the positive-exponent transform
    g = GridSpec(8.0, 64, 1)
    step = np.pi / g.L
    xi0 = 3 * step
    F0 = partial_fourier(gaussian_1d(), g, OmegaGrid(1, 1)).values[0]
    F1 = partial_fourier(gaussian_1d(momentum=[xi0]), g, OmegaGrid(1, 1)).values[0]
    assert np.abs(F1[:-3] - F0[3:]).max() <= 1e-10


def test_parseval():
    g = GridSpec(8.0, 64, 1)
    S = gaussian_1d(gamma=0.4, center=[0.5], momentum=[1.0]).sample(g, OmegaGrid(1, 1))
    F = partial_fourier(S)
    lhs = np.sum(np.abs(S.values) ** 2) * g.h
    rhs = np.sum(np.abs(F.values) ** 2) * F.grid.h / (2 * np.pi)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_atom_transform_matches_sampled_transform():
    S = AtomSum.gaussian(M1, hull=HullFunction.sin_mode(M1, [1]), poly=[1.0, 0.5, -0.2],
                         gamma=0.6, center=[0.3], momentum=[-0.4])
    g = GridSpec(10.0, 128, 1)
    og = OmegaGrid(1, 4)
    sampled = partial_fourier(S, g, og)
    exact = S.fourier().evaluate(og.points, sampled.grid.points)
    assert np.abs(sampled.values - exact).max() <= 1e-10


def test_apply_weights_identity_and_orbit_derivative():
    S = gaussian_1d(gamma=0.8)
    assert apply_weights(S) is S
    assert apply_weights(S, beta=[1]).is_zero()
    Ss = S.sample(GridSpec(8.0, 64, 1), OmegaGrid(1, 4))
    assert np.abs(apply_weights(Ss, beta=[2]).values).max() <= 1e-14


def test_sampled_derivative_is_fourth_order():
    S = gaussian_1d(gamma=0.5, momentum=[0.7])
    exact_d = apply_weights(S, alpha=[1])
    errs, hs = [], []
    for N in (32, 64, 128):
        g = GridSpec(8.0, N, 1)
        D = apply_weights(S.sample(g, OmegaGrid(1, 1)), alpha=[1])
        errs.append(np.abs(D.values[0] - exact_d.evaluate([[0.0]], g.points)[0]).max())
        hs.append(g.h)
    assert np.polyfit(np.log(hs), np.log(errs), 1)[0] >= 3.7


def test_seminorm_examples():
    assert seminorm(gaussian_1d()).value == pytest.approx(1.0)
    assert seminorm(gaussian_1d(), beta=[1]).value == 0.0
    val = seminorm(gaussian_1d(), a=[1], grid=GridSpec(8.0, 4096, 1)).value
    assert val == pytest.approx(np.exp(-0.5), rel=1e-6)


def test_seminorms_are_finite():
    model = HullModel(np.eye(2))
    S = AtomSum.gaussian(model, hull=HullFunction.cos_mode(model, [1, 0]), gamma=0.5, momentum=[0.3, 0.1])
    for a in ([0, 0], [3, 0], [1, 2]):
        for alpha in ([0, 0], [0, 3], [2, 1]):
            for beta in ([0, 0], [3, 0]):
                assert np.isfinite(seminorm(S, a, alpha, beta, OmegaGrid(2, 4), GridSpec(8, 16, 2)).value)


def test_involution_fixed_point_and_square():
    S = gaussian_1d(gamma=0.3)
    g = GridSpec(8.0, 64, 1)
    pts = g.points
    assert np.allclose(involution(S).evaluate([[0.0]], pts), S.evaluate([[0.0]], pts))
    T = AtomSum.gaussian(M1, hull=HullFunction.exp_mode(M1, [1]), poly=[0.5, 1j], gamma=0.5,
                         center=[0.4], momentum=[1.2])
    w = np.array([[0.3], [2.0]])
    assert np.allclose(involution(involution(T)).evaluate(w, pts), T.evaluate(w, pts))
    Ts = T.sample(g, OmegaGrid(1, 4))
    assert np.array_equal(involution(involution(Ts)).values[:, 1:], Ts.values[:, 1:])


def test_involution_with_momentum_matches_pointwise():
    T = AtomSum.gaussian(M1, hull=HullFunction.exp_mode(M1, [1]), gamma=0.5, center=[0.4], momentum=[1.2])
    rng = np.random.default_rng(2)
    w = rng.uniform(0, 2 * np.pi, (4, 1))
    x = rng.uniform(-3, 3, (7, 1))
    assert np.allclose(involution(T).evaluate(w, x), np.conj(T.evaluate(w, -x)), atol=1e-14)
    Ts = T.sample(GridSpec(8.0, 64, 1), OmegaGrid(1, 8))
    grid_x = Ts.grid.points[1:]
    assert np.allclose(involution(Ts).evaluate(w, grid_x), np.conj(Ts.evaluate(w, -grid_x)), atol=1e-12)


@given(st.integers(0, 2 ** 31))
def test_sampling_consistency(seed):
    rng = np.random.default_rng(seed)
    model = HullModel(np.eye(2))
    S = AtomSum.gaussian(model, hull=HullFunction.constant(model) + rng.normal() * HullFunction.cos_mode(model, [1, 0]),
                         gamma=rng.uniform(0.3, 1.0), center=rng.normal(size=2) * 0.3,
                         momentum=rng.normal(size=2))
    g, og = GridSpec(8.0, 16, 2), OmegaGrid(2, 4)
    Ss = S.sample(g, og)
    assert np.abs(Ss.evaluate(og.points, g.points) - S.evaluate(og.points, g.points)).max() \
        <= Ss.tolerance + 1e-12


def test_sampled_bytes_round_trip():
    S = gaussian_1d(momentum=[0.5]).sample(GridSpec(8.0, 16, 1), OmegaGrid(1, 2))
    back = SampledSymbol.from_bytes(S.to_bytes())
    assert back.grid == S.grid and np.array_equal(back.values, S.values)


def test_symbol_json_round_trip():
    model = HullModel(np.eye(2))
    S = AtomSum.gaussian(model, hull=HullFunction.sin_mode(model, [0, 1]), gamma=0.6,
                         center=[0.1, 0.2], momentum=[0.3, -0.4])
    back = AtomSum.from_json(model, json.loads(json.dumps(S.to_json())))
    pts = GridSpec(4, 8, 2).points
    og = OmegaGrid(2, 3).points
    assert np.allclose(back.evaluate(og, pts), S.evaluate(og, pts), atol=0)


def test_realization_mismatch_is_rejected():
    S = gaussian_1d()
    with pytest.raises(InputError):
        S + S.fourier()
    assert as_sampled(S, GridSpec(8.0, 16, 1), OmegaGrid(1, 1)).realization == X

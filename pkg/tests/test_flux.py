import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magweyl.errors import InputError
from magweyl.flux import (MagneticField, cocycle, cocycle_identity_defect, lemma3_check, scaled_flux,
                          scaled_flux_oracle, stokes_defect, translation_identity_defect, triangle_flux,
                          triangle_flux_oracle, validate_field, vector_potential_transverse)
from magweyl.hull import HullFunction, HullModel, OmegaGrid, orbit_function

coord = st.floats(-3, 3, allow_nan=False)
vec2 = st.lists(coord, min_size=2, max_size=2).map(np.array)
ORIGIN = np.zeros(2)

# independent mpmath evaluation of the parametrized triangle integral
TRIANGLE = dict(a=[0.3, -0.2], b=[1.1, 0.4], c=[-0.5, 0.9], omega=[0.7, 1.3])
FLUX_COS = 0.34822388662488274247
FLUX_COS_SIN = 0.67818825947083952151


def test_validate_two_dimensional_field(cos_field):
    rep = validate_field(cos_field)
    assert rep.antisymmetric and rep.closed and rep.triples_checked == 0


def test_validate_non_closed_three_dimensional_field():
    model = HullModel(np.eye(3))
    B = MagneticField.from_upper(model, {(0, 1): HullFunction.cos_mode(model, [0, 0, 1])})
    rep = validate_field(B)
    assert rep.antisymmetric and not rep.closed
    assert rep.closedness_max_coefficient == pytest.approx(0.5)
    assert rep.closedness_defect == pytest.approx(1.0)


def test_validate_zero_field(model2):
    rep = validate_field(MagneticField.zero(model2))
    assert rep.antisymmetry_defect == 0.0 and rep.closedness_defect == 0.0


def test_field_rejects_lower_indices(model2):
    with pytest.raises(InputError):
        MagneticField.from_upper(model2, {(1, 0): HullFunction.constant(model2)})


def test_zero_field_has_zero_flux(model2):
    B = MagneticField.zero(model2)
    assert triangle_flux(B, ORIGIN, [1, 0], [1, 1]).value.is_zero()
    assert triangle_flux_oracle(B, ORIGIN, [1, 0], [1, 1], [0, 0]) == 0.0


def test_constant_field_flux_is_signed_area(model2):
    B = MagneticField.constant(model2, 1.0)
    flux = triangle_flux(B, ORIGIN, [1, 0], [1, 1])
    assert np.allclose(flux.on_grid(OmegaGrid(2, 4)), 0.5, atol=1e-15)
    assert triangle_flux_oracle(B, ORIGIN, [1, 0], [0, 1], [0, 0]) == pytest.approx(0.5, abs=1e-12)


def test_degenerate_triangle_has_zero_flux(cos_field):
    a = np.array([0.4, -0.1])
    assert triangle_flux(cos_field, a, a, [1, 2])([0.3, 0.2]) == 0.0
    assert triangle_flux_oracle(cos_field, a, a, [1, 2], [0.3, 0.2]) == pytest.approx(0.0, abs=1e-12)


def test_quasi_periodic_flux_matches_oracle(cos_field):
    flux = triangle_flux(cos_field, ORIGIN, [1, 0], [1, 1])([0, 0])
    assert flux == pytest.approx(triangle_flux_oracle(cos_field, ORIGIN, [1, 0], [1, 1], [0, 0]), abs=1e-8)


def test_flux_frozen_values(model2, cos_field):
    t = TRIANGLE
    assert triangle_flux(cos_field, t["a"], t["b"], t["c"])(t["omega"]) == pytest.approx(FLUX_COS, rel=1e-13)
    B = MagneticField.from_upper(model2, {(0, 1): HullFunction.cos_mode(model2, [1, 0])
                                          + 0.5 * HullFunction.sin_mode(model2, [0, 1])})
    assert triangle_flux(B, t["a"], t["b"], t["c"])(t["omega"]) == pytest.approx(FLUX_COS_SIN, rel=1e-13)


def test_flux_small_phase_region_matches_oracle():
    model = HullModel(np.array([[1e-6, 0.0], [0.0, 1.0]]))
    B = MagneticField.from_upper(model, {(0, 1): HullFunction.cos_mode(model, [1, 1])})
    a, b, c, w = [0.1, 0.2], [1.3, -0.4], [0.2, 1e-5], [0.3, 2.0]
    assert triangle_flux(B, a, b, c)(w) == pytest.approx(triangle_flux_oracle(B, a, b, c, w), abs=1e-10)


@given(vec2, vec2, vec2)
def test_orientation_antisymmetry(a, b, c):
    model = HullModel(np.eye(2))
    B = MagneticField.from_upper(model, {(0, 1): HullFunction.cos_mode(model, [1, 0])})
    f = triangle_flux(B, a, b, c).value.coeffs
    g = triangle_flux(B, a, c, b).value.coeffs
    assert np.allclose(f, -g, rtol=1e-12, atol=1e-14)


@given(vec2, vec2, st.lists(st.floats(0, 6.28), min_size=2, max_size=2))
def test_restriction_along_orbit(a, x, w):
    model = HullModel(np.eye(2))
    B = MagneticField.from_upper(model, {(0, 1): HullFunction.cos_mode(model, [1, 0])})
    b, c = a + np.array([1.0, 0.2]), a + np.array([0.3, 1.1])
    along = orbit_function(triangle_flux(B, ORIGIN, b - a, c - a).value, np.array(w), [a])[0]
    direct = triangle_flux(B, a, b, c)(w)
    assert np.real(along) == pytest.approx(direct, abs=1e-10)


def test_scaled_flux_constant_field(model2):
    B = MagneticField.constant(model2, 1.0)
    for hb in (1.0, 0.3):
        assert np.allclose(scaled_flux(B, hb, [1, 0], [0, 1]).on_grid(OmegaGrid(2, 3)), -0.5, atol=1e-15)


@given(vec2, vec2, st.floats(0.01, 1.0))
def test_scaled_flux_constant_closed_form(x, y, hb):
    model = HullModel(np.eye(2))
    b = np.array([[0.0, 1.3], [-1.3, 0.0]])
    B = MagneticField.constant(model, b)
    expected = 0.5 * y @ b @ (x - y)
    assert scaled_flux(B, hb, x, y)([0.0, 0.0]) == pytest.approx(expected, abs=1e-12)


def test_scaled_flux_zero_field_all_orders(model2):
    B = MagneticField.zero(model2)
    for order in (0, 1, 2):
        assert scaled_flux(B, 0.5, [1, 2], [0.3, -1], order).value.is_zero()


def test_scaled_flux_rejects_bad_hbar(cos_field):
    for hb in (0.0, 1.5, -0.1):
        with pytest.raises(InputError):
            scaled_flux(cos_field, hb, [1, 0], [0, 1])
    with pytest.raises(InputError):
        scaled_flux(cos_field, 0.5, [1, 0], [0, 1], order=3)


def test_scaled_flux_matches_quadrature(cos_field):
    rng = np.random.default_rng(5)
    for _ in range(5):
        x, y = rng.normal(size=(2, 2)) * 2
        hb = rng.uniform(0.05, 1.0)
        w = rng.uniform(0, 2 * np.pi, 2)
        assert scaled_flux(cos_field, hb, x, y)(w) == pytest.approx(
            scaled_flux_oracle(cos_field, hb, x, y, w), abs=1e-8)


def _richardson_order(f, g, eps, steps):
    errs = [abs((f(eps + s) - f(eps - s)) / (2 * s) - g) for s in steps]
    return np.polyfit(np.log(steps), np.log(errs), 1)[0]


def test_first_derivative_in_hbar(cos_field):
    x, y, w, hb = np.array([1.2, -0.7]), np.array([0.4, 1.5]), np.array([0.3, 1.0]), 0.6
    f = lambda e: scaled_flux(cos_field, e, x, y)(w)
    assert _richardson_order(f, scaled_flux(cos_field, hb, x, y, 1)(w), hb, [0.04, 0.02, 0.01]) >= 1.9


def test_second_derivative_in_hbar(cos_field):
    x, y, w, hb = np.array([1.2, -0.7]), np.array([0.4, 1.5]), np.array([0.3, 1.0]), 0.6
    f = lambda e: scaled_flux(cos_field, e, x, y, 1)(w)
    assert _richardson_order(f, scaled_flux(cos_field, hb, x, y, 2)(w), hb, [0.04, 0.02, 0.01]) >= 1.9


def test_cocycle_examples(model2, cos_field):
    grid = OmegaGrid(2, 8)
    assert np.array_equal(cocycle(MagneticField.zero(model2), 0.5, [1, 2], [3, 4], grid), np.ones(64))
    assert np.allclose(cocycle(cos_field, 0.5, [1, 2], [0, 0], grid), 1.0, atol=1e-12)
    assert np.allclose(cocycle(cos_field, 0.5, [0, 0], [1, 2], grid), 1.0, atol=1e-12)
    B = MagneticField.constant(model2, 1.0)
    assert np.allclose(cocycle(B, 1.0, [1, 0], [0, 1], grid), np.exp(-0.5j), atol=1e-15)


@given(vec2, vec2, st.floats(0.01, 1.0))
def test_cocycle_is_unitary(x, y, hb):
    model = HullModel(np.eye(2))
    B = MagneticField.from_upper(model, {(0, 1): HullFunction.cos_mode(model, [1, 0])})
    vals = cocycle(B, hb, x, y, OmegaGrid(2, 8))
    assert np.abs(np.abs(vals) - 1).max() <= 1e-12


def test_cocycle_identity(model2, cos_field):
    rng = np.random.default_rng(1)
    grid = OmegaGrid(2, 16)
    assert cocycle_identity_defect(MagneticField.zero(model2), 0.5, *rng.normal(size=(3, 2)), grid) == 0.0
    B = MagneticField.constant(model2, 1.3)
    for _ in range(5):
        assert cocycle_identity_defect(B, 0.7, *rng.normal(size=(3, 2)) * 3, grid) <= 1e-12
    for _ in range(20):
        assert cocycle_identity_defect(cos_field, 0.5, *rng.normal(size=(3, 2)) * 3, grid) <= 1e-9


def test_translation_identity(model2, cos_field):
    rng = np.random.default_rng(2)
    y, z = rng.normal(size=(2, 2))
    assert translation_identity_defect(cos_field, ORIGIN, y, z, [0.1, 0.2]) == 0.0
    assert translation_identity_defect(MagneticField.zero(model2), y, y, z, [0.1, 0.2]) == 0.0
    for _ in range(10):
        x, y, z = rng.normal(size=(3, 2)) * 3
        assert translation_identity_defect(cos_field, x, y, z, rng.uniform(0, 6, 2)) <= 1e-9


def test_flux_estimates_zero_and_constant_fields(model2):
    rng = np.random.default_rng(3)
    samples = [(*rng.normal(size=(2, 2)), 0.5, 0.5) for _ in range(3)]
    assert lemma3_check(MagneticField.zero(model2), samples, polynomial_orders=1).passed
    rep = lemma3_check(MagneticField.constant(model2, 1.0), samples, polynomial_orders=1)
    assert rep.passed and rep.worst_ratio["first_derivative"] == 0.0


def test_flux_estimates_quasi_periodic(cos_field):
    rng = np.random.default_rng(4)
    samples = [(*rng.normal(size=(2, 2)) * 2, rng.uniform(0.01, 1), rng.uniform(0.01, 1)) for _ in range(200)]
    rep = lemma3_check(cos_field, samples, polynomial_orders=1, polynomial_samples=20)
    assert rep.passed, rep.violations[:3]


def test_flux_estimates_reject_bad_scale(cos_field):
    with pytest.raises(InputError):
        lemma3_check(cos_field, [([1, 0], [0, 1], 0.5, 0.0)])


def test_vector_potential_examples(model2, cos_field):
    assert np.array_equal(vector_potential_transverse(MagneticField.zero(model2), [0, 0], [1, 2]), [0, 0])
    assert np.allclose(vector_potential_transverse(cos_field, [0.3, 0.1], [0, 0]), 0.0)
    b = 1.3
    A = vector_potential_transverse(MagneticField.constant(model2, b), [0, 0], [0.7, -0.4])
    assert np.allclose(A, [b * 0.4 / 2, b * 0.7 / 2], atol=1e-15)


def test_stokes(model2, cos_field):
    assert stokes_defect(MagneticField.zero(model2), [0, 0], ORIGIN, [1, 0], [0, 1]) == 0.0
    assert stokes_defect(MagneticField.constant(model2, 1.3), [0, 0], ORIGIN, [1, 0], [0, 1]) <= 1e-10
    rng = np.random.default_rng(6)
    a, b, c = rng.normal(size=(3, 2)) * 2
    assert stokes_defect(cos_field, rng.uniform(0, 6, 2), a, b, c) <= 1e-7

import numpy as np
import pytest
from scipy import signal

from magweyl.errors import InputError
from magweyl.flux import MagneticField, vector_potential_transverse
from magweyl.hull import HullFunction, HullModel, OmegaGrid, act
from magweyl.representation import (KernelMatrix, covariance_check, equivariance_defect, interior_indices,
                                    intertwiner, morphism_defect, norm_estimate, op_matrix,
                                    op_matrix_with_potential, representation_grid, rep_matrix, shift_matrix,
                                    spectral_norm)
from magweyl.symbols import XI, AtomSum, GridSpec, involution

M1 = HullModel(np.eye(1))
SMALL = GridSpec(4.0, 16, 2)
# interior blocks drop two lattice steps per side on SMALL and four on WIDE
WIDE = GridSpec(8.0, 32, 2)
OMEGA0 = np.array([0.7, 1.3])
# flat-top symbol (3 - x^2) exp(-x^2/2); its transform 2 sqrt(2 pi)(1 + xi^2/2) exp(-xi^2/2) peaks at xi = 0
FLAT_TOP_SUP = 2 * np.sqrt(2 * np.pi)


def hull_atom(model, seed, realization="X"):
    rng = np.random.default_rng(seed)
    one = HullFunction.constant(model)
    return AtomSum.gaussian(model, hull=one + 0.3 * HullFunction.cos_mode(model, [1, 0]),
                            gamma=rng.uniform(0.4, 0.8), center=rng.normal(size=2) * 0.2,
                            momentum=rng.normal(size=2) * 0.3, realization=realization)


def test_flat_field_gives_toeplitz_convolution():
    phi = AtomSum.gaussian(M1, gamma=0.5, center=[0.3], momentum=[0.4])
    grid = GridSpec(8.0, 128, 1)
    hb = 0.5
    B = MagneticField.zero(M1)
    M = rep_matrix(B, hb, [0.0], phi, grid)
    u = np.random.default_rng(0).normal(size=grid.N)
    offsets = grid.h * np.arange(-(grid.N - 1), grid.N)
    c = phi.evaluate([[0.0]], (offsets / hb)[:, None])[0] * grid.h / hb
    ref = signal.fftconvolve(u, c[::-1], mode="full")[grid.N - 1:2 * grid.N - 1]
    assert np.abs(M.apply(u) - ref).max() <= 1e-8 * np.abs(ref).max()


def test_self_adjoint_symbol_gives_hermitian_matrix(cos_field, model2):
    chi = hull_atom(model2, 1)
    phi = chi + involution(chi)
    M = rep_matrix(cos_field, 0.5, OMEGA0, phi, SMALL)
    assert M.hermitian_defect() <= 1e-8 * M.norm()


def test_zero_symbol_gives_zero_matrix(cos_field, model2):
    M = rep_matrix(cos_field, 0.5, OMEGA0, AtomSum.zero(model2), SMALL)
    assert not np.any(M.entries) and M.norm() == 0.0


def test_sampled_symbol_on_scaled_lattice_matches_atoms(cos_field, gaussian_pair):
    phi, _ = gaussian_pair
    sg = GridSpec(8.0, 16, 2)
    hb = 0.5
    exact = rep_matrix(cos_field, hb, OMEGA0, phi, representation_grid(sg, hb)).entries
    sampled = rep_matrix(cos_field, hb, OMEGA0, phi.sample(sg, OmegaGrid(2, 8)), representation_grid(sg, hb))
    assert np.abs(sampled.entries - exact).max() <= 1e-12 * np.abs(exact).max()


def test_fourier_multiplier_eigenvalues():
    f = AtomSum.gaussian(M1, gamma=0.5, center=[0.2], realization=XI)
    grid = GridSpec(16.0, 256, 1)
    hb = 0.5
    H = op_matrix(MagneticField.zero(M1), hb, [0.0], f, grid)
    x = grid.axis
    rows = interior_indices(grid, 0.5)
    for k in (0.0, 1.0, -2.5):
        wave = np.exp(1j * k * x)
        expected = f.evaluate([[0.0]], [[hb * k]])[0, 0]
        got = H.apply(wave)[rows] / wave[rows]
        assert np.abs(got - expected).max() <= 1e-6 * abs(expected)


def test_real_symbol_gives_hermitian_operator(cos_field, model2):
    f = AtomSum.gaussian(model2, hull=HullFunction.constant(model2) + 0.3 * HullFunction.cos_mode(model2, [1, 0]),
                         gamma=0.5, center=[0.2, -0.1], realization=XI)
    H = op_matrix(cos_field, 0.5, OMEGA0, f, SMALL)
    assert H.hermitian_defect() <= 1e-8 * H.norm()


def test_convention_lock(cos_field, gaussian_pair):
    f = gaussian_pair[0].fourier()
    for hb in (1.0, 0.5):
        a = op_matrix(cos_field, hb, OMEGA0, f, SMALL)
        b = op_matrix(cos_field, hb, OMEGA0, f, SMALL, method="quadrature")
        assert np.abs(a.entries - b.entries).max() <= 1e-8


def test_convention_lock_for_sampled_symbols(cos_field, gaussian_pair):
    phi = gaussian_pair[0]
    from magweyl.symbols import partial_fourier
    f = partial_fourier(phi, GridSpec(12.0, 64, 2), OmegaGrid(2, 4))
    exact = op_matrix(cos_field, 0.5, OMEGA0, phi.fourier(), GridSpec(4.0, 8, 2)).entries
    quad = op_matrix(cos_field, 0.5, OMEGA0, f, GridSpec(4.0, 8, 2), method="quadrature").entries
    assert np.abs(quad - exact).max() <= 1e-8


def test_op_matrix_rejects_bad_input(cos_field, gaussian_pair):
    phi = gaussian_pair[0]
    with pytest.raises(InputError):
        op_matrix(cos_field, 0.5, OMEGA0, phi, SMALL)
    with pytest.raises(InputError):
        op_matrix(cos_field, 0.5, OMEGA0, phi.fourier(), SMALL, method="spline")


def test_covariance_flat_field(model2):
    rng = np.random.default_rng(0)
    hb = 0.5
    samples = [(rng.integers(-2, 3, 2) * WIDE.h / hb, rng.integers(-2, 3, 2) * WIDE.h / hb, None)
               for _ in range(5)]
    rep = covariance_check(MagneticField.zero(model2), hb, OMEGA0, samples, WIDE)
    assert rep.max_product_defect <= 1e-12


def test_covariance_constant_field(constant_field):
    rng = np.random.default_rng(1)
    hb = 0.5
    samples = [(rng.integers(-2, 3, 2) * WIDE.h / hb, rng.integers(-2, 3, 2) * WIDE.h / hb, None)
               for _ in range(5)]
    assert covariance_check(constant_field, hb, OMEGA0, samples, WIDE).max_product_defect <= 1e-9


def test_covariance_quasi_periodic_field(cos_field, model2):
    rng = np.random.default_rng(2)
    hb = 0.5
    samples = []
    for _ in range(20):
        phi = HullFunction(model2, rng.integers(-2, 3, (3, 2)), rng.normal(size=3) + 1j * rng.normal(size=3))
        samples.append((rng.integers(-2, 3, 2) * WIDE.h / hb, rng.integers(-2, 3, 2) * WIDE.h / hb, phi))
    rep = covariance_check(cos_field, hb, OMEGA0, samples, WIDE)
    assert rep.max_product_defect <= 1e-9 and rep.max_conjugation_defect <= 1e-9
    assert rep.to_json()["samples"] == 20


def test_covariance_rejects_off_lattice_shift(cos_field):
    with pytest.raises(InputError):
        covariance_check(cos_field, 0.5, OMEGA0, [([0.1, 0.0], [0.0, 0.0], None)], SMALL)


def test_intertwiner_examples(cos_field, model2):
    U = intertwiner(cos_field, 0.5, OMEGA0, [0.0, 0.0], SMALL)
    assert np.array_equal(U.entries, np.eye(SMALL.size))
    steps = np.array([2, -1])
    V = intertwiner(MagneticField.zero(model2), 0.5, OMEGA0, steps * SMALL.h, SMALL)
    assert np.array_equal(V.entries, shift_matrix(SMALL, steps))
    W = intertwiner(cos_field, 0.5, OMEGA0, steps * SMALL.h, SMALL).entries
    rows = interior_indices(SMALL)
    block = (W.conj().T @ W)[np.ix_(rows, rows)]
    assert np.abs(block - np.eye(len(rows))).max() <= 1e-10
    with pytest.raises(InputError):
        intertwiner(cos_field, 0.5, OMEGA0, [0.1, 0.0], SMALL)


def test_equivariance(cos_field, model2, gaussian_pair):
    f = gaussian_pair[0].fourier()
    assert equivariance_defect(cos_field, 0.5, OMEGA0, [0.0, 0.0], f, SMALL) <= 1e-12
    flat = AtomSum.gaussian(model2, gamma=0.5, momentum=[0.3, 0.1], realization=XI)
    assert equivariance_defect(MagneticField.zero(model2), 0.5, OMEGA0, 2 * SMALL.h * np.ones(2), flat,
                               SMALL) <= 1e-10
    rng = np.random.default_rng(3)
    for _ in range(3):
        x = rng.integers(-2, 3, 2) * SMALL.h
        assert equivariance_defect(cos_field, 0.5, OMEGA0, x, f, SMALL) <= 5e-3


def test_equivariance_is_constant_along_orbits(cos_field, gaussian_pair):
    f = gaussian_pair[0].fourier()
    x = np.array([2, 1]) * SMALL.h
    base = equivariance_defect(cos_field, 0.5, OMEGA0, x, f, SMALL)
    moved = equivariance_defect(cos_field, 0.5, act(cos_field.model, OMEGA0, [3 * SMALL.h, -SMALL.h]), x, f, SMALL)
    assert abs(base - moved) <= 1e-10


def test_gauge_covariance(model2):
    b = 1.3
    B = MagneticField.constant(model2, b)
    f = AtomSum.gaussian(model2, gamma=0.5, center=[0.2, -0.1], momentum=[0.3, 0.2], realization=XI)
    hb = 0.5
    chi = lambda p: 0.3 * np.sin(p[..., 0]) + 0.1 * p[..., 0] * p[..., 1]
    grad = lambda p: np.stack([0.3 * np.cos(p[..., 0]) + 0.1 * p[..., 1], 0.1 * p[..., 0]], axis=-1)
    potential = lambda p: vector_potential_transverse(B, [0.0, 0.0], p) + grad(p)
    K = op_matrix(B, hb, [0.0, 0.0], f, SMALL).entries
    D = np.exp(1j * chi(SMALL.points) / hb)
    conj = D[:, None] * K * np.conj(D)[None, :]
    gauged = op_matrix_with_potential(hb, [0.0, 0.0], f, SMALL, potential).entries
    assert np.abs(conj - gauged).max() <= 1e-6 * np.abs(K).max()


def test_morphism_examples(cos_field, model2, gaussian_pair):
    phi, psi = gaussian_pair
    sg, og = GridSpec(8.0, 16, 2), OmegaGrid(2, 16)
    assert morphism_defect(cos_field, 0.5, OMEGA0, phi, AtomSum.zero(model2), representation_grid(sg, 0.5),
                           symbol_grid=sg, omega_grid=og) == 0.0
    a = AtomSum.gaussian(model2, gamma=0.5, center=[0.2, 0.0], momentum=[0.5, -0.3])
    b = AtomSum.gaussian(model2, gamma=0.6, center=[-0.3, 0.1], momentum=[-0.2, 0.4])
    wide = GridSpec(16.0, 32, 2)
    assert morphism_defect(MagneticField.zero(model2), 0.5, OMEGA0, a, b, representation_grid(wide, 0.5),
                           symbol_grid=wide, omega_grid=OmegaGrid(2, 1)) <= 1e-6
    assert morphism_defect(cos_field, 0.5, OMEGA0, phi, psi, representation_grid(sg, 0.5),
                           symbol_grid=sg, omega_grid=og) <= 5e-3


def test_norm_of_flat_top_symbol_is_fourier_max():
    phi = AtomSum.gaussian(M1, poly=[3.0, 0.0, -1.0], gamma=0.5)
    sg = GridSpec(128.0, 512, 1)
    sampled = phi.sample(sg, OmegaGrid(1, 1))
    B = MagneticField.zero(M1)
    lowers = []
    for hb in (1.0, 0.5, 0.25):
        est = norm_estimate(B, hb, sampled, [[0.0]], representation_grid(sg, hb))
        assert est.lower <= est.upper
        lowers.append(est.lower)
    assert np.abs(np.array(lowers) - FLAT_TOP_SUP).max() <= 1e-6 * FLAT_TOP_SUP


def test_norm_sandwich(cos_field, model2, gaussian_pair):
    phi = gaussian_pair[0]
    assert norm_estimate(cos_field, 0.5, AtomSum.zero(model2), [OMEGA0], SMALL).lower == 0.0
    omegas = np.random.default_rng(4).uniform(0, 2 * np.pi, (4, 2))
    for hb in (1.0, 0.5):
        est = norm_estimate(cos_field, hb, phi, omegas, representation_grid(GridSpec(8.0, 16, 2), hb))
        assert 0.0 < est.lower <= est.upper
    with pytest.raises(InputError):
        norm_estimate(cos_field, 0.5, phi, np.zeros((0, 2)), SMALL)


def test_spectral_norm_paths():
    rng = np.random.default_rng(5)
    d = rng.uniform(0.1, 1.0, 1100)
    d[17] = 3.5
    Q, _ = np.linalg.qr(rng.normal(size=(1100, 1100)))
    assert spectral_norm(Q * d) == pytest.approx(3.5, rel=1e-10)
    small = rng.normal(size=(20, 20))
    assert spectral_norm(small) == pytest.approx(np.linalg.svd(small, compute_uv=False)[0], rel=1e-12)
    assert spectral_norm(np.zeros((3, 3))) == 0.0


def test_kernel_matrix_serialization(cos_field, gaussian_pair):
    M = rep_matrix(cos_field, 0.5, OMEGA0, gaussian_pair[0], GridSpec(4.0, 4, 2))
    header, payload = M.to_bytes().split(b"\n", 1)
    assert np.array_equal(np.frombuffer(payload, dtype="<c16").reshape(16, 16), M.entries)
    assert isinstance(M @ M, KernelMatrix)

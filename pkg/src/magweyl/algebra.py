"""Products, brackets and norms of symbols.

The twisted product of ``X``-realized symbols is

    ``(Phi o_h Psi)(omega; x) = int dy Phi(theta_{h(y-x)/2} omega; y)
                                    Psi(theta_{h y/2} omega; x - y) exp(-i h Lambda_h(x, y))``

and is discretized by the rectangle rule on a uniform grid, with ``x - y``
running over the difference lattice of the grid.  The untwisted product
uses the very same sums, so differences between the two carry no
discretization floor.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import InputError, ToleranceWarning
from .flux import MagneticField, scaled_flux_coeffs
from .hull import HullFunction, HullModel, OmegaGrid, act
from .symbols import (X, XI, AtomSum, GridSpec, SampledSymbol, Symbol, apply_weights,
                      as_sampled, inverse_partial_fourier, partial_fourier)

EPS = np.finfo(float).eps
DIRECT_MODE_LIMIT = 32
TAIL_BUDGET = 1e-6


def _check_hbar(hbar):
    if not (0.0 < hbar <= 1.0):
        raise InputError(f"hbar must lie in (0, 1], got {hbar}")


def _common_grids(model: HullModel, inputs, grid, omega_grid, realization=X):
    """Pick the output grids: explicit, else from a sampled input, else defaults."""
    for S in inputs:
        if isinstance(S, SampledSymbol):
            grid = grid or S.grid
            omega_grid = omega_grid or S.omega_grid
    if grid is None:
        L = max(S.default_grid().L for S in inputs)
        grid = GridSpec(L, 64 if model.n == 1 else 32, model.n, realization)
    omega_grid = omega_grid or OmegaGrid(model.d, 32)
    if grid.realization != realization:
        grid = GridSpec(grid.L, grid.N, grid.n, realization)
    return grid, omega_grid


def _modal_on_points(S: Symbol, grid: GridSpec, points, offsets: bool):
    """Hull modes of ``S`` and their coefficient functions on grid points or offsets."""
    if isinstance(S, SampledSymbol) and S.grid == grid:
        modes = S.omega_grid.mode_indices()
        vals = S.mode_values()
        if offsets:
            embedded = SampledSymbol(S.model, grid, S.omega_grid, vals)
            vals = embedded.at_offsets()
        return modes, vals
    return S.modal(points)


def _to_omega(modes, coeffs, omega_grid: OmegaGrid, phase_points=None):
    """Evaluate ``sum_m coeffs[m, ...] exp(i m . omega)`` on the hull grid, shape (W, ...)."""
    K = len(modes)
    rest = coeffs.shape[1:]
    if K <= DIRECT_MODE_LIMIT:
        E = np.exp(1j * omega_grid.points @ modes.T)
        return (E @ coeffs.reshape(K, -1)).reshape((omega_grid.size,) + rest)
    M, d = omega_grid.M, omega_grid.d
    grid = np.zeros((M,) * d + rest, dtype=complex)
    idx = tuple(np.mod(modes[:, j], M) for j in range(d))
    np.add.at(grid, idx, coeffs)
    vals = np.fft.ifftn(grid, axes=tuple(range(d))) * omega_grid.size
    return vals.reshape((omega_grid.size,) + rest)


def _tail_fraction(vals, grid: GridSpec) -> float:
    """Fraction of the sampled mass carried by the outermost grid layer."""
    T = np.abs(vals).reshape((-1,) + grid.shape).max(axis=0)
    total = T.sum()
    if total == 0:
        return 0.0
    inner = T[(slice(1, -1),) * grid.n].sum()
    return float((total - inner) / total)


def _tolerance_of(S: Symbol) -> float:
    return float(getattr(S, "tolerance", 0.0))


def compose_zero(Phi: Symbol, Psi: Symbol, grid: GridSpec | None = None,
                 omega_grid: OmegaGrid | None = None) -> SampledSymbol:
    """Untwisted product: pointwise in ``omega``, convolution in ``x``.

    ``h^n sum_j Phi(omega; y_j) Psi(omega; x_i - y_j)`` via FFT convolution,
    with ``Psi`` evaluated on the difference lattice of the grid.
    """
    Phi._require(X)
    Psi._require(X)
    if Phi.model != Psi.model:
        raise InputError("symbols live on different hull models")
    grid, omega_grid = _common_grids(Phi.model, (Phi, Psi), grid, omega_grid)
    N, n = grid.N, grid.n
    a = as_sampled(Phi, grid, omega_grid).values
    if isinstance(Psi, SampledSymbol) and Psi.grid == grid:
        b = as_sampled(Psi, grid, omega_grid).at_offsets()
    else:
        b = Psi.evaluate(omega_grid.points, grid.offsets())
    A = a.reshape((omega_grid.size,) + grid.shape)
    Bx = b.reshape((omega_grid.size,) + (2 * N - 1,) * n)
    axes = tuple(range(1, n + 1))
    full = signal.fftconvolve(A, Bx, mode="full", axes=axes)
    out = full[(slice(None),) + (slice(N - 1, 2 * N - 1),) * n] * grid.weight
    tail = _tail_fraction(a, grid)
    scale = float(np.abs(a).sum(axis=1).max(initial=0)) * grid.weight
    tol = _tolerance_of(Phi) * float(np.abs(b).sum(axis=1).max(initial=0)) * grid.weight \
        + _tolerance_of(Psi) * scale + 64 * EPS * float(np.abs(out).max(initial=0))
    notes = ()
    if tail > TAIL_BUDGET:
        notes = (f"box truncation carries {tail:.2e} of the mass",)
    return SampledSymbol(Phi.model, grid, omega_grid, out.reshape(omega_grid.size, -1), tol, notes)


def compose_magnetic(B: MagneticField, hbar: float, Phi: Symbol, Psi: Symbol,
                     omega_grid: OmegaGrid | None = None, grid: GridSpec | None = None,
                     chunk: int | None = None) -> SampledSymbol:
    """Magnetic twisted product on ``omega_grid x grid``.

    For every output point the ``y``-integral is a rectangle sum over the
    grid; the translated factors are evaluated through the hull modes of
    the inputs and the phase comes from the closed-form scaled flux.
    """
    _check_hbar(hbar)
    Phi._require(X)
    Psi._require(X)
    if not (Phi.model == Psi.model == B.model):
        raise InputError("symbols and field live on different hull models")
    grid, omega_grid = _common_grids(Phi.model, (Phi, Psi), grid, omega_grid)
    N, n = grid.N, grid.n
    pts = grid.points
    modes_a, phi_y = _modal_on_points(Phi, grid, pts, offsets=False)
    modes_b, psi_off = _modal_on_points(Psi, grid, grid.offsets(), offsets=True)
    ka = Phi.model.wavevectors(modes_a)
    kb = Psi.model.wavevectors(modes_b)
    Wb = omega_grid.size
    n_pts = grid.size
    # index of x_i - y_j in the difference lattice, per axis: i - j + N - 1
    grid_idx = np.stack(np.unravel_index(np.arange(n_pts), grid.shape), axis=-1)
    strides = (2 * N - 1) ** np.arange(n - 1, -1, -1)
    if chunk is None:
        budget = 2 ** 22
        chunk = max(1, budget // max(1, Wb * n_pts))
    out = np.zeros((Wb, n_pts), dtype=complex)
    phase_y_b = np.exp(0.5j * hbar * (pts @ kb.T)).T  # (Kb, Ny): theta_{hbar y/2}
    for start in range(0, n_pts, chunk):
        sl = slice(start, min(start + chunk, n_pts))
        xs = pts[sl]
        # first factor: Phi(theta_{hbar (y - x)/2} omega; y)
        shift = 0.5j * hbar * ((pts @ ka.T)[None, :, :] - (xs @ ka.T)[:, None, :])  # (c, Ny, Ka)
        ta = np.moveaxis(np.exp(shift), -1, 0) * phi_y[:, None, :]  # (Ka, c, Ny)
        fa = _to_omega(modes_a, ta, omega_grid)
        # second factor: Psi(theta_{hbar y/2} omega; x - y)
        off = ((grid_idx[sl][:, None, :] - grid_idx[None, :, :]) + (N - 1)) @ strides  # (c, Ny)
        tb = psi_off[:, off] * phase_y_b[:, None, :]
        fb = _to_omega(modes_b, tb, omega_grid)
        integrand = fa * fb
        if len(B.modes):
            lam = scaled_flux_coeffs(B, hbar, xs[:, None, :], pts[None, :, :], 0)  # (KB, c, Ny)
            lam_w = np.real(_to_omega(B.modes, lam, omega_grid))
            integrand = integrand * np.exp(-1j * hbar * lam_w)
        out[:, sl] = integrand.sum(axis=-1) * grid.weight
    tail = _tail_fraction(_to_omega(modes_a, phi_y, omega_grid), grid)
    l1_phi = float(np.abs(phi_y).sum(axis=0).sum()) * grid.weight
    l1_psi = float(np.abs(psi_off).sum(axis=0).sum()) * grid.weight
    tol = (tail + 64 * EPS) * l1_phi * l1_psi + _tolerance_of(Phi) * l1_psi + _tolerance_of(Psi) * l1_phi
    notes = ()
    if tail > TAIL_BUDGET:
        warnings.warn(f"box truncation carries {tail:.2e} of the first factor's mass",
                      ToleranceWarning, stacklevel=2)
        notes = (f"box truncation carries {tail:.2e} of the mass",)
    return SampledSymbol(Phi.model, grid, omega_grid, out, tol, notes)


def _to_x(S: Symbol, grid: GridSpec | None) -> Symbol:
    """``F^{-1}``: exact for atom sums, discrete for sampled symbols."""
    S._require(XI)
    if isinstance(S, AtomSum):
        return S.inverse_fourier()
    return inverse_partial_fourier(S)


def moyal_magnetic(B: MagneticField, hbar: float, f: Symbol, g: Symbol,
                   omega_grid: OmegaGrid | None = None, grid: GridSpec | None = None) -> SampledSymbol:
    """Magnetic Moyal product ``F[F^{-1} f o_h F^{-1} g]``.

    ``grid`` is the ``x``-grid of the intermediate product; the result lives
    on its dual ``xi``-grid.
    """
    f._require(XI)
    g._require(XI)
    Phi, Psi = _to_x(f, grid), _to_x(g, grid)
    prod = compose_magnetic(B, hbar, Phi, Psi, omega_grid, grid)
    return partial_fourier(prod)


def _pointwise_hull(S: SampledSymbol, phi: HullFunction) -> SampledSymbol:
    return S * phi


def poisson_X(B: MagneticField, Phi: Symbol, Psi: Symbol, grid: GridSpec | None = None,
              omega_grid: OmegaGrid | None = None) -> SampledSymbol:
    """Bracket transported to the ``X`` realization.

    ``i sum_j (Q_j Phi o_0 delta_j Psi - delta_j Phi o_0 Q_j Psi)
    + sum_jk B^{jk} (Q_j Phi o_0 Q_k Psi)``; the sign of the first sum
    follows from the Fourier convention of :mod:`magweyl.symbols`.
    """
    Phi._require(X)
    Psi._require(X)
    grid, omega_grid = _common_grids(Phi.model, (Phi, Psi), grid, omega_grid)
    n = Phi.n
    e = np.eye(n, dtype=int)
    zero = np.zeros(n, dtype=int)
    Q_phi = [apply_weights(Phi, e[j], zero, zero) for j in range(n)]
    Q_psi = [apply_weights(Psi, e[j], zero, zero) for j in range(n)]
    total = None
    for j in range(n):
        d_psi = apply_weights(Psi, zero, zero, e[j])
        d_phi = apply_weights(Phi, zero, zero, e[j])
        term = (compose_zero(Q_phi[j], d_psi, grid, omega_grid)
                - compose_zero(d_phi, Q_psi[j], grid, omega_grid)) * 1j
        total = term if total is None else total + term
    for j in range(n):
        for k in range(n):
            bjk = B.component(j, k)
            if bjk.is_zero():
                continue
            total = total + _pointwise_hull(compose_zero(Q_phi[j], Q_psi[k], grid, omega_grid), bjk)
    return total


def _xi_derivative(S: Symbol, j: int) -> Symbol:
    e = np.zeros(S.n, dtype=int)
    e[j] = 1
    return apply_weights(S, None, e, None)


def _orbit_derivative(S: Symbol, j: int) -> Symbol:
    e = np.zeros(S.n, dtype=int)
    e[j] = 1
    return apply_weights(S, None, None, e)


def poisson_Xi(B: MagneticField, f: Symbol, g: Symbol) -> Symbol:
    """``sum_j (d_xi_j f delta_j g - delta_j f d_xi_j g) - sum_jk B^{jk} d_xi_j f d_xi_k g``.

    Exact (an atom sum) for atom-sum inputs.
    """
    f._require(XI)
    g._require(XI)
    n = f.n
    df = [_xi_derivative(f, j) for j in range(n)]
    dg = [_xi_derivative(g, j) for j in range(n)]
    total = None
    for j in range(n):
        term = df[j] * _orbit_derivative(g, j) - _orbit_derivative(f, j) * dg[j]
        total = term if total is None else total + term
    for j in range(n):
        for k in range(n):
            bjk = B.component(j, k)
            if not bjk.is_zero():
                total = total - (df[j] * dg[k]) * bjk
    return total


def jacobi_defect(B: MagneticField, f: Symbol, g: Symbol, h: Symbol, omega, xi) -> float:
    """``max |{f,{g,h}} + {g,{h,f}} + {h,{f,g}}|`` over hull points ``omega`` and points ``xi``.

    The cyclic sum vanishes exactly when the field is closed.
    """
    total = (poisson_Xi(B, f, poisson_Xi(B, g, h)) + poisson_Xi(B, g, poisson_Xi(B, h, f))
             + poisson_Xi(B, h, poisson_Xi(B, f, g)))
    vals = np.atleast_2d(total.evaluate(np.atleast_2d(omega), np.atleast_2d(xi)))
    return float(np.abs(vals).max(initial=0.0))


# -- phase space -----------------------------------------------------------------

@dataclass(frozen=True)
class PhaseSpaceSample:
    """Function of ``(x, xi)`` sampled on ``x_grid x xi_grid``; ``values`` has shape
    ``x_grid.shape + xi_grid.shape``."""

    x_grid: GridSpec
    xi_grid: GridSpec
    values: np.ndarray


def pi_omega(S: Symbol, omega, x_grid: GridSpec, xi_grid: GridSpec) -> PhaseSpaceSample:
    """``f_omega(x, xi) = f(theta_x omega; xi)`` on a phase-space grid."""
    S._require(XI)
    omega = np.asarray(omega, dtype=float)
    orbit = act(S.model, omega, x_grid.points)
    vals = S.evaluate(orbit, xi_grid.points)
    return PhaseSpaceSample(x_grid, xi_grid, np.asarray(vals).reshape(x_grid.shape + xi_grid.shape))


def _central(T, axis, h):
    """Second-order central difference (one-sided second order at the edges)."""
    return np.gradient(T, h, axis=axis, edge_order=2)


def poisson_phase_space(B: MagneticField, omega, F: PhaseSpaceSample, G: PhaseSpaceSample) -> np.ndarray:
    """Canonical magnetic bracket on phase space by central differences.

    ``sum_j (d_xi_j F d_x_j G - d_x_j F d_xi_j G) - sum_jk B^{jk}(theta_x omega) d_xi_j F d_xi_k G``
    """
    n = F.x_grid.n
    hx, hk = F.x_grid.h, F.xi_grid.h
    dxF = [_central(F.values, j, hx) for j in range(n)]
    dxG = [_central(G.values, j, hx) for j in range(n)]
    dkF = [_central(F.values, n + j, hk) for j in range(n)]
    dkG = [_central(G.values, n + j, hk) for j in range(n)]
    out = sum(dkF[j] * dxG[j] - dxF[j] * dkG[j] for j in range(n))
    Bw = B.at(act(B.model, np.asarray(omega, float), F.x_grid.points)).reshape(F.x_grid.shape + (n, n))
    expand = (Ellipsis,) + (None,) * n
    for j in range(n):
        for k in range(n):
            out = out - Bw[..., j, k][expand] * dkF[j] * dkG[k]
    return out


def interior(T: np.ndarray, fraction: float = 0.75) -> np.ndarray:
    """Central block keeping ``fraction`` of each axis."""
    sl = []
    for N in T.shape:
        drop = int(round(N * (1 - fraction) / 2))
        sl.append(slice(drop, N - drop))
    return T[tuple(sl)]


# -- norms ----------------------------------------------------------------------

def l1_norm(Phi: Symbol, omega_grid: OmegaGrid | None = None, grid: GridSpec | None = None) -> float:
    """``h^n sum_x max_omega |Phi(omega; x)|``: quadrature of the grid sup over the hull."""
    Phi._require(X)
    S = as_sampled(Phi, grid, omega_grid) if not isinstance(Phi, SampledSymbol) or grid or omega_grid \
        else Phi
    return float(np.abs(S.values).max(axis=0).sum() * S.grid.weight)


def l1_norm_upper(Phi: Symbol, grid: GridSpec | None = None) -> float:
    """Quadrature of a pointwise upper bound of ``sup_omega |Phi(omega; x)|``.

    Atom sums use the coefficient l1 norm of the hull modes at each ``x``;
    sampled symbols use the grid sup plus the provenance tolerance.
    """
    Phi._require(X)
    if isinstance(Phi, AtomSum):
        grid = grid or Phi.default_grid()
        _, vals = Phi.modal(grid.points)
        return float(np.abs(vals).sum(axis=0).sum() * grid.weight)
    return l1_norm(Phi) + Phi.tolerance * Phi.grid.size * Phi.grid.weight


# -- expansion ------------------------------------------------------------------

@dataclass
class ExpansionReport:
    """Three tiers of the product expansion and their L1 norms.

    ``leading + hbar * subleading + hbar**2 * remainder`` reproduces the
    twisted product; ``subleading`` already contains the factor ``-i/2``.
    """

    hbar: float
    product: SampledSymbol
    leading: SampledSymbol
    subleading: SampledSymbol
    remainder: SampledSymbol
    leading_norm: float
    subleading_norm: float
    remainder_norm: float
    first_order_defect: float
    tolerance: float
    reliable: bool

    def reconstruction_defect(self) -> float:
        rec = self.leading + self.subleading * self.hbar + self.remainder * (self.hbar ** 2)
        return l1_norm(rec - self.product)

    def to_json(self) -> dict:
        return {"hbar": self.hbar, "leading_norm": self.leading_norm,
                "subleading_norm": self.subleading_norm, "remainder_norm": self.remainder_norm,
                "first_order_defect": self.first_order_defect, "tolerance": self.tolerance,
                "reliable": self.reliable}


def expansion_remainder(B: MagneticField, hbar: float, Phi: Symbol, Psi: Symbol,
                        omega_grid: OmegaGrid | None = None, grid: GridSpec | None = None,
                        leading: SampledSymbol | None = None,
                        bracket: SampledSymbol | None = None) -> ExpansionReport:
    """``R = hbar^-2 (Phi o_h Psi - Phi o_0 Psi + hbar (i/2) {Phi, Psi})`` with all tiers.

    ``leading`` and ``bracket`` may be passed in to reuse them across a sweep.
    The subtraction is flagged unreliable when its rounding budget exceeds
    10 % of the remainder norm.
    """
    _check_hbar(hbar)
    grid, omega_grid = _common_grids(Phi.model, (Phi, Psi), grid, omega_grid)
    prod = compose_magnetic(B, hbar, Phi, Psi, omega_grid, grid)
    lead = leading if leading is not None else compose_zero(Phi, Psi, grid, omega_grid)
    br = bracket if bracket is not None else poisson_X(B, Phi, Psi, grid, omega_grid)
    sub = br * (-0.5j)
    first = prod - lead
    rem = (first - sub * hbar) * (hbar ** -2)
    tol_abs = prod.tolerance + lead.tolerance + hbar * 0.5 * br.tolerance \
        + 64 * EPS * (np.abs(prod.values).max(initial=0) + np.abs(lead.values).max(initial=0))
    tol = float(tol_abs) * grid.size * grid.weight / hbar ** 2
    rem_norm = l1_norm(rem)
    reliable = tol <= 0.1 * rem_norm if rem_norm > 0 else tol == 0.0
    return ExpansionReport(hbar, prod, lead, sub, rem, l1_norm(lead), l1_norm(sub), rem_norm,
                           l1_norm(first), tol, bool(reliable))

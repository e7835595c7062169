"""Kernel matrices of the covariant representations on a grid of ``L^2(R^n)``.

The integrated representation of an ``X``-realized symbol has kernel

    ``K(x, y) = hbar^-n Phi(theta_{(x+y)/2} omega; (y - x)/hbar) exp(-(i/hbar) Gamma^{B_omega}<0, x, y>)``

and the operator of an ``X*``-realized symbol ``f`` is the representation of
``F^{-1} f``.  Matrices carry the quadrature weight ``h^n``, so applying a
matrix to a vector of samples is the discretized integral operator.

Representation grids are usually the symbol grid scaled by ``hbar``
(:func:`representation_grid`): then ``(y - x)/hbar`` lands on the symbol
lattice.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import svds

from .errors import InputError
from .flux import MagneticField, triangle_flux_coeffs
from .hull import HullFunction, OmegaGrid, act
from .symbols import X, XI, AtomSum, GridSpec, SampledSymbol, Symbol, inverse_partial_fourier

DENSE_NORM_LIMIT = 1024
INTERIOR_FRACTION = 0.75


def _check_hbar(hbar):
    if not (0.0 < hbar <= 1.0):
        raise InputError(f"hbar must lie in (0, 1], got {hbar}")


@dataclass
class KernelMatrix:
    """Discretized integral operator on ``grid`` (weights included)."""

    grid: GridSpec
    entries: np.ndarray
    hbar: float
    omega: np.ndarray
    tolerance: float = 0.0
    notes: tuple = ()

    def apply(self, u) -> np.ndarray:
        return self.entries @ np.asarray(u)

    def __matmul__(self, other: "KernelMatrix") -> "KernelMatrix":
        return KernelMatrix(self.grid, self.entries @ other.entries, self.hbar, self.omega,
                            self.tolerance + other.tolerance)

    def norm(self) -> float:
        return spectral_norm(self.entries)

    def hermitian_defect(self) -> float:
        return float(np.abs(self.entries - self.entries.conj().T).max(initial=0.0))

    def interior(self, fraction: float = INTERIOR_FRACTION) -> np.ndarray:
        idx = interior_indices(self.grid, fraction)
        return self.entries[np.ix_(idx, idx)]

    def to_bytes(self) -> bytes:
        import json
        header = {"kind": "kernel_matrix", "grid": self.grid.to_json(), "hbar": self.hbar,
                  "omega": np.asarray(self.omega).tolist(), "tolerance": self.tolerance,
                  "shape": list(self.entries.shape), "dtype": "complex128", "order": "C"}
        return json.dumps(header, sort_keys=True).encode() + b"\n" + \
            np.ascontiguousarray(self.entries, dtype="<c16").tobytes()


def spectral_norm(mat: np.ndarray) -> float:
    """Largest singular value: dense SVD for small matrices, ARPACK otherwise."""
    mat = np.asarray(mat)
    if mat.size == 0 or not np.any(mat):
        return 0.0
    if min(mat.shape) <= DENSE_NORM_LIMIT:
        return float(np.linalg.norm(mat, 2))
    s = svds(mat, k=1, tol=1e-12, return_singular_vectors=False, random_state=0)
    return float(s[0])


def interior_indices(grid: GridSpec, fraction: float = INTERIOR_FRACTION) -> np.ndarray:
    """Flat indices of grid points whose every coordinate lies in the central block."""
    N = grid.N
    drop = int(round(N * (1 - fraction) / 2))
    keep = np.arange(drop, N - drop)
    mesh = np.meshgrid(*([keep] * grid.n), indexing="ij")
    return np.ravel_multi_index(tuple(m.ravel() for m in mesh), grid.shape)


def representation_grid(symbol_grid: GridSpec, hbar: float) -> GridSpec:
    """Grid of ``L^2`` on which ``(y - x)/hbar`` runs over the symbol lattice."""
    return GridSpec(symbol_grid.L * hbar, symbol_grid.N, symbol_grid.n, X)


def flux_phase_matrix(B: MagneticField, hbar: float, omega, grid: GridSpec, rows=None) -> np.ndarray:
    """``exp(-(i/hbar) Gamma^{B_omega}<0, x, y>)`` for grid rows ``x`` and all columns ``y``."""
    pts = grid.points
    xs = pts if rows is None else pts[rows]
    if not len(B.modes):
        return np.ones((len(xs), len(pts)), dtype=complex)
    coeffs = triangle_flux_coeffs(B, np.zeros(grid.n), xs[:, None, :], pts[None, :, :] - xs[:, None, :])
    flux = np.real(np.tensordot(np.exp(1j * (B.modes @ np.asarray(omega, float))), coeffs, axes=(0, 0)))
    return np.exp(-1j * flux / hbar)


def _row_chunks(size, other, budget=2 ** 21):
    step = max(1, budget // max(1, other))
    for start in range(0, size, step):
        yield slice(start, min(start + step, size))


def _mode_count(S: Symbol) -> int:
    if isinstance(S, SampledSymbol):
        return S.omega_grid.size
    return max(1, sum(len(a.modes) for a in S.atoms))


def _on_symbol_lattice(Phi: Symbol, grid: GridSpec, hbar: float) -> bool:
    return (isinstance(Phi, SampledSymbol) and Phi.grid.N == grid.N
            and abs(grid.h - hbar * Phi.grid.h) <= 1e-12 * grid.h)


def _offset_mode_values(Phi: SampledSymbol) -> np.ndarray:
    """Hull mode values on the difference lattice, shape (K, (2N-1)**n), zero outside the box."""
    N, n = Phi.grid.N, Phi.n
    K = Phi.omega_grid.size
    ext = np.zeros((K,) + (2 * N - 1,) * n, dtype=complex)
    ext[(slice(None),) + (slice(N // 2 - 1, N // 2 - 1 + N),) * n] = \
        Phi.mode_values().reshape((K,) + (N,) * n)
    return ext.reshape(K, -1)


def rep_matrix(B: MagneticField, hbar: float, omega, Phi: Symbol, grid: GridSpec) -> KernelMatrix:
    """Kernel matrix of the integrated representation at the hull point ``omega``.

    Sampled symbols on the ``hbar``-scaled grid are read off the lattice
    directly; otherwise they are interpolated.
    """
    _check_hbar(hbar)
    Phi._require(X)
    omega = np.asarray(omega, dtype=float)
    pts = grid.points
    P, n, N = grid.size, grid.n, grid.N
    lattice = _on_symbol_lattice(Phi, grid, hbar)
    if lattice:
        modes = Phi.omega_grid.mode_indices()
        table = _offset_mode_values(Phi)
        idx = np.stack(np.unravel_index(np.arange(P), grid.shape), axis=-1)
        strides = (2 * N - 1) ** np.arange(n - 1, -1, -1)
    else:
        modes, _ = Phi.modal(pts[:1])
    k = Phi.model.wavevectors(modes)
    half = np.exp(0.5j * (k @ pts.T))  # (K, P): exp(i k.x/2)
    weight = np.exp(1j * (modes @ omega))
    mat = np.zeros((P, P), dtype=complex)
    for rows in _row_chunks(P, P * (len(modes) + len(B.modes))):
        r = np.arange(P)[rows]
        if lattice:
            off = ((idx[None, :, :] - idx[r, None, :] + N - 1) @ strides).ravel()
            vals = table[:, off]
        else:
            z = ((pts[None, :, :] - pts[r, None, :]) / hbar).reshape(-1, n)
            got, vals = Phi.modal(z)
            if got.shape != modes.shape or np.any(got != modes):
                modes, vals = got, vals
                k = Phi.model.wavevectors(modes)
                half = np.exp(0.5j * (k @ pts.T))
                weight = np.exp(1j * (modes @ omega))
        vals = vals.reshape(len(modes), len(r), P) * half[:, None, :]
        sym = np.einsum("mr,mrp->rp", weight[:, None] * half[:, r], vals)
        mat[rows] = sym * flux_phase_matrix(B, hbar, omega, grid, rows)
    mat *= grid.weight / hbar ** n
    notes = []
    tol = 0.0
    if isinstance(Phi, SampledSymbol):
        tol = Phi.tolerance * grid.weight / hbar ** n * P
        if 2 * grid.L / hbar > Phi.grid.L:
            notes.append("kernel arguments beyond the symbol box are treated as zero")
    return KernelMatrix(grid, mat, hbar, omega, tol, tuple(notes))


def _as_x_symbol(f: Symbol) -> Symbol:
    f._require(XI)
    if isinstance(f, AtomSum):
        return f.inverse_fourier()
    return inverse_partial_fourier(f)


def _atom_xi_transform(atom, z, step_factor=1.0):
    """``(2 pi)^-n int exp(i z . xi) atom(xi) d xi`` per mode, by separable rectangle sums.

    ``z`` has shape (P, n); returns (K, P).
    """
    n = atom.n
    g = atom.gamma
    c = atom.center
    zmax = float(np.abs(z).max(initial=0.0)) + float(np.abs(atom.momentum).max(initial=0.0))
    # Poisson summation: aliases sit at 2 pi / step from z; keep them beyond the decay
    step = 2 * np.pi / (zmax + np.sqrt(160.0 * g) + 1.0) / step_factor
    half = np.sqrt(50.0 / g) + 2.0
    shape = atom.coeffs.shape[1:]
    axes_vals = []
    for j in range(n):
        t = np.arange(-half, half + step, step)
        xi = c[j] + t
        w = np.exp(-g * t ** 2 + 1j * xi * atom.momentum[j]) * step
        powers = t[None, :] ** np.arange(shape[j])[:, None]  # (D, T)
        ker = np.exp(1j * np.outer(z[:, j], xi))  # (P, T)
        axes_vals.append(ker @ (powers * w).T)  # (P, D)
    # combine: sum_p coeffs[m, p] prod_j axes_vals[j][:, p_j]
    out = np.zeros((len(atom.modes), len(z)), dtype=complex)
    for idx in np.ndindex(*shape):
        col = np.ones(len(z), dtype=complex)
        for j, p in enumerate(idx):
            col = col * axes_vals[j][:, p]
        out += atom.coeffs[(slice(None),) + idx][:, None] * col[None, :]
    return out * (2 * np.pi) ** (-n)


def op_matrix(B: MagneticField, hbar: float, omega, f: Symbol, grid: GridSpec,
              method: str = "fourier") -> KernelMatrix:
    """Kernel matrix of the operator with ``X*``-realized symbol ``f``.

    ``method="fourier"`` represents the inverse Fourier transform of ``f``
    (exact for atom sums).  ``method="quadrature"`` integrates the
    oscillatory ``xi``-integral of the kernel directly by rectangle sums.
    """
    _check_hbar(hbar)
    f._require(XI)
    if method == "fourier":
        return rep_matrix(B, hbar, omega, _as_x_symbol(f), grid)
    if method != "quadrature":
        raise InputError("method must be 'fourier' or 'quadrature'")
    omega = np.asarray(omega, dtype=float)
    pts = grid.points
    P = grid.size
    mat = np.zeros((P, P), dtype=complex)
    for rows in _row_chunks(P, P * (_mode_count(f) + len(B.modes))):
        xs = pts[rows]
        z = ((xs[:, None, :] - pts[None, :, :]) / hbar).reshape(-1, grid.n)
        mid = 0.5 * (xs[:, None, :] + pts[None, :, :]).reshape(-1, grid.n)
        block = np.zeros(len(z), dtype=complex)
        if isinstance(f, AtomSum):
            for atom in f.atoms:
                vals = _atom_xi_transform(atom, z)
                phase = np.exp(1j * ((atom.modes @ omega)[:, None] + atom.wavevectors @ mid.T))
                block += np.sum(phase * vals, axis=0)
        else:
            xi = f.grid.points
            modes = f.omega_grid.mode_indices()
            coef = f.mode_values()  # (K, Nxi)
            ker = np.exp(1j * z @ xi.T) * (f.grid.weight / (2 * np.pi) ** grid.n)  # (pairs, Nxi)
            vals = coef @ ker.T  # (K, pairs)
            phase = np.exp(1j * ((modes @ omega)[:, None] + f.model.wavevectors(modes) @ mid.T))
            block = np.sum(phase * vals, axis=0)
        mat[rows] = block.reshape(len(xs), P) * flux_phase_matrix(B, hbar, omega, grid, rows)
    mat *= grid.weight / hbar ** grid.n
    return KernelMatrix(grid, mat, hbar, omega, float(getattr(f, "tolerance", 0.0)))


def op_matrix_with_potential(hbar: float, omega, f: Symbol, grid: GridSpec, potential,
                             nodes: int = 16) -> KernelMatrix:
    """Operator kernel with circulation phases ``exp(-(i/hbar) int_[x,y] A)`` of a potential.

    ``potential(points)`` returns the vector potential at points (P, n).  The
    segment integrals use Gauss-Legendre quadrature with ``nodes`` nodes.
    """
    _check_hbar(hbar)
    Phi = _as_x_symbol(f)
    omega = np.asarray(omega, dtype=float)
    t, w = np.polynomial.legendre.leggauss(nodes)
    t, w = 0.5 * (t + 1), 0.5 * w
    pts = grid.points
    P = grid.size
    mat = np.zeros((P, P), dtype=complex)
    for rows in _row_chunks(P, P * (nodes + _mode_count(Phi))):
        xs = pts[rows]
        d = pts[None, :, :] - xs[:, None, :]
        circ = np.zeros(d.shape[:2])
        for tk, wk in zip(t, w):
            A = potential((xs[:, None, :] + tk * d).reshape(-1, grid.n)).reshape(d.shape)
            circ += wk * np.sum(A * d, axis=-1)
        z = (d / hbar).reshape(-1, grid.n)
        modes, vals = Phi.modal(z)
        mid = 0.5 * (xs[:, None, :] + pts[None, :, :]).reshape(-1, grid.n)
        phase = np.exp(1j * ((modes @ omega)[:, None] + Phi.model.wavevectors(modes) @ mid.T))
        mat[rows] = np.sum(phase * vals, axis=0).reshape(len(xs), P) * np.exp(-1j * circ / hbar)
    mat *= grid.weight / hbar ** grid.n
    return KernelMatrix(grid, mat, hbar, omega)


# -- covariant pair -------------------------------------------------------------

def multiplication_operator(phi: HullFunction, omega, grid: GridSpec) -> np.ndarray:
    """``r_omega(phi)``: diagonal of ``phi(theta_x omega)`` on the grid."""
    vals = phi(act(phi.model, np.asarray(omega, float), grid.points))
    return np.diag(np.atleast_1d(vals))


def _lattice_steps(vec, grid: GridSpec) -> np.ndarray:
    steps = np.asarray(vec, dtype=float) / grid.h
    r = np.rint(steps)
    if np.any(np.abs(steps - r) > 1e-9):
        raise InputError("shift is not on the grid lattice")
    return r.astype(int)


def shift_matrix(grid: GridSpec, steps) -> np.ndarray:
    """``(S u)(x) = u(x + steps h)`` with zero fill outside the box."""
    steps = np.asarray(steps, dtype=int)
    idx = np.stack(np.unravel_index(np.arange(grid.size), grid.shape), axis=-1)
    target = idx + steps
    ok = np.all((target >= 0) & (target < grid.N), axis=1)
    S = np.zeros((grid.size, grid.size))
    rows = np.nonzero(ok)[0]
    S[rows, np.ravel_multi_index(tuple(target[ok].T), grid.shape)] = 1.0
    return S


def translation_operator(B: MagneticField, hbar: float, omega, y, grid: GridSpec) -> np.ndarray:
    """``(T(y) u)(p) = exp(-(i/hbar) Gamma^{B_omega}<0, p, p + hbar y>) u(p + hbar y)``.

    ``hbar y`` must lie on the grid lattice.
    """
    y = np.asarray(y, dtype=float)
    steps = _lattice_steps(hbar * y, grid)
    pts = grid.points
    phase = np.ones(grid.size, dtype=complex)
    if len(B.modes):
        coeffs = triangle_flux_coeffs(B, np.zeros(grid.n), pts, np.broadcast_to(hbar * y, pts.shape))
        flux = np.real(np.exp(1j * (B.modes @ np.asarray(omega, float))) @ coeffs)
        phase = np.exp(-1j * flux / hbar)
    return phase[:, None] * shift_matrix(grid, steps)


@dataclass
class CovarianceReport:
    product_defects: list = field(default_factory=list)
    conjugation_defects: list = field(default_factory=list)

    @property
    def max_product_defect(self) -> float:
        return max(self.product_defects, default=0.0)

    @property
    def max_conjugation_defect(self) -> float:
        return max(self.conjugation_defects, default=0.0)

    def to_json(self) -> dict:
        return {"max_product_defect": self.max_product_defect,
                "max_conjugation_defect": self.max_conjugation_defect,
                "samples": len(self.product_defects)}


def covariance_check(B: MagneticField, hbar: float, omega, samples, grid: GridSpec,
                     fraction: float = INTERIOR_FRACTION) -> CovarianceReport:
    """Check the twisted-translation identities of the covariant pair on the grid.

    ``samples`` holds ``(x, y, phi)`` with ``hbar x`` and ``hbar y`` on the
    lattice.  Checked in operator norm on the interior rows:

    * ``T(x) T(y) = r[kappa(x, y)] T(x + y)``
    * ``T(x) r(phi) T(x)^* = r[theta_{hbar x} phi]``
    """
    _check_hbar(hbar)
    from .flux import cocycle_flux
    from .hull import translate

    rows = interior_indices(grid, fraction)
    pts = grid.points
    omega = np.asarray(omega, float)
    report = CovarianceReport()
    for x, y, phi in samples:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        Tx = translation_operator(B, hbar, omega, x, grid)
        Ty = translation_operator(B, hbar, omega, y, grid)
        Txy = translation_operator(B, hbar, omega, x + y, grid)
        kap_flux = cocycle_flux(B, hbar, x, y)
        kap = np.exp(-1j * kap_flux(act(B.model, omega, pts)) / hbar)
        lhs = Tx @ Ty
        rhs = kap[:, None] * Txy
        report.product_defects.append(spectral_norm((lhs - rhs)[rows]))
        if phi is not None:
            r_phi = multiplication_operator(phi, omega, grid)
            conj = Tx @ r_phi @ Tx.conj().T
            target = multiplication_operator(translate(phi, hbar * x), omega, grid)
            report.conjugation_defects.append(spectral_norm((conj - target)[np.ix_(rows, rows)]))
    return report


def intertwiner(B: MagneticField, hbar: float, omega_prime, x0, grid: GridSpec) -> KernelMatrix:
    """``(U u)(x) = exp(-(i/hbar) Gamma^{B_omega'}<0, x0, x0 + x>) u(x + x0)``, zero fill.

    Raises
    ------
    InputError
        If ``x0`` is not on the grid lattice.
    """
    _check_hbar(hbar)
    x0 = np.asarray(x0, dtype=float)
    steps = _lattice_steps(x0, grid)
    pts = grid.points
    phase = np.ones(grid.size, dtype=complex)
    if len(B.modes):
        coeffs = triangle_flux_coeffs(B, np.zeros(grid.n), np.broadcast_to(x0, pts.shape), pts)
        flux = np.real(np.exp(1j * (B.modes @ np.asarray(omega_prime, float))) @ coeffs)
        phase = np.exp(-1j * flux / hbar)
    S = shift_matrix(grid, steps)
    leak = float(grid.size - S.sum()) / grid.size
    return KernelMatrix(grid, phase[:, None] * S, hbar, np.asarray(omega_prime, float), leak,
                        ("boundary rows are zero-filled",) if leak else ())


def equivariance_defect(B: MagneticField, hbar: float, omega, x, f: Symbol, grid: GridSpec,
                        fraction: float = INTERIOR_FRACTION) -> float:
    """Relative interior-block defect of ``H_{theta_x omega} = U^{-1} H_omega U``.

    ``H`` is :func:`op_matrix`; ``U`` is the intertwiner at ``theta_x omega``
    shifting by ``-x``.
    """
    omega = np.asarray(omega, float)
    x = np.asarray(x, float)
    omega2 = act(B.model, omega, x)
    H1 = op_matrix(B, hbar, omega, f, grid).entries
    H2 = op_matrix(B, hbar, omega2, f, grid).entries
    U = intertwiner(B, hbar, omega2, -x, grid).entries
    conj = U.conj().T @ H1 @ U
    rows = interior_indices(grid, fraction)
    block = np.ix_(rows, rows)
    scale = spectral_norm(H2[block])
    if scale == 0.0:
        return 0.0
    return spectral_norm((conj - H2)[block]) / scale


def morphism_defect(B: MagneticField, hbar: float, omega, Phi: Symbol, Psi: Symbol,
                    grid: GridSpec, product: SampledSymbol | None = None,
                    symbol_grid: GridSpec | None = None, omega_grid: OmegaGrid | None = None,
                    fraction: float = INTERIOR_FRACTION) -> float:
    """``||Rep(Phi o Psi) - Rep(Phi) Rep(Psi)|| / (||Rep Phi|| ||Rep Psi||)`` on the interior block.

    The twisted product is computed on ``symbol_grid`` unless given.
    """
    from .algebra import compose_magnetic

    RA = rep_matrix(B, hbar, omega, Phi, grid).entries
    RB = rep_matrix(B, hbar, omega, Psi, grid).entries
    na, nb = spectral_norm(RA), spectral_norm(RB)
    if na == 0.0 or nb == 0.0:
        return 0.0
    if product is None:
        product = compose_magnetic(B, hbar, Phi, Psi, omega_grid, symbol_grid)
    RP = rep_matrix(B, hbar, omega, product, grid).entries
    rows = interior_indices(grid, fraction)
    block = np.ix_(rows, rows)
    return spectral_norm((RP - RA @ RB)[block]) / (na * nb)


@dataclass(frozen=True)
class NormBracket:
    """``lower <= ||Phi||_hbar <= upper`` from representations and the L1 norm."""

    lower: float
    upper: float


def norm_estimate(B: MagneticField, hbar: float, Phi: Symbol, omega_samples, grid: GridSpec,
                  upper_grid: GridSpec | None = None) -> NormBracket:
    """Max spectral norm over hull samples, bracketed above by the L1 norm."""
    from .algebra import l1_norm_upper

    omega_samples = np.atleast_2d(np.asarray(omega_samples, float))
    if len(omega_samples) == 0:
        raise InputError("need at least one hull sample")
    lower = max(rep_matrix(B, hbar, w, Phi, grid).norm() for w in omega_samples)
    if isinstance(Phi, AtomSum):
        upper = l1_norm_upper(Phi, upper_grid or GridSpec(2 * grid.L / hbar, 2 * grid.N, grid.n))
    else:
        upper = l1_norm_upper(Phi)
    return NormBracket(lower, upper)

"""Symbols on ``Omega x R^n`` with two backing stores.

An :class:`AtomSum` is a finite sum of atoms

    ``sum_m exp(i m . omega) P_m(x - x0) exp(-gamma |x - x0|^2) exp(i x . xi0)``

which evaluate exactly anywhere and are closed under the operations of the
calculus (products, ``x``-multiplication, ``x``-derivatives, orbit
derivatives, conjugation, reflection and the exact Fourier transform).

A :class:`SampledSymbol` stores values on a hull grid times a uniform
``x``-grid.  It is the output type of the twisted products.

Fourier convention: ``(F f)(xi) = int exp(+i x . xi) f(x) dx`` with inverse
``(2 pi)^{-n} int exp(-i x . xi) g(xi) d xi``.  This is the sign for which
the kernel of an operator with Weyl symbol ``f`` equals the representation
of ``F^{-1} f``.
"""
from __future__ import annotations

import io
import itertools
import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal
from scipy.special import comb

from .errors import InputError
from .hull import HullFunction, HullModel, OmegaGrid

X = "X"
XI = "Xi"


def _flip(realization: str) -> str:
    return XI if realization == X else X


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``x_i = -L + i h`` with ``h = 2 L / N`` on every axis."""

    L: float
    N: int
    n: int
    realization: str = X

    def __post_init__(self):
        if not (self.L > 0 and np.isfinite(self.L)):
            raise InputError("grid half-width L must be positive")
        if self.N < 4 or self.N & (self.N - 1):
            raise InputError("grid size N must be a power of two >= 4")
        if self.n < 1:
            raise InputError("dimension n must be positive")
        if self.realization not in (X, XI):
            raise InputError(f"realization must be {X!r} or {XI!r}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N ** self.n

    @property
    def weight(self) -> float:
        return self.h ** self.n

    @property
    def points(self) -> np.ndarray:
        """All grid points, shape (N**n, n), C order."""
        mesh = np.meshgrid(*([self.axis] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def dual(self) -> "GridSpec":
        """Reciprocal grid of the discrete Fourier transform (same ``N``)."""
        return GridSpec(np.pi / self.h, self.N, self.n, _flip(self.realization))

    def scaled(self, factor: float) -> "GridSpec":
        return replace(self, L=self.L * factor)

    def offsets(self) -> np.ndarray:
        """Difference lattice ``(i - j) h`` for ``|i - j| < N``, shape ((2N-1)**n, n)."""
        ax = self.h * np.arange(-(self.N - 1), self.N)
        mesh = np.meshgrid(*([ax] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def to_json(self) -> dict:
        return {"L": self.L, "N": self.N, "n": self.n, "realization": self.realization}

    @classmethod
    def from_json(cls, obj: dict) -> "GridSpec":
        try:
            return cls(float(obj["L"]), int(obj["N"]), int(obj["n"]), obj.get("realization", X))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad grid descriptor: {exc}") from exc


# -- polynomial tensors --------------------------------------------------------
# A polynomial in n variables is a complex array of shape (D_1+1, ..., D_n+1)
# holding the coefficient of u^p at index p.  Atom coefficient arrays carry a
# leading mode axis.

def _binomial_shift_matrix(deg: int, d: float) -> np.ndarray:
    """``T[i, j]`` = coefficient of ``v^j`` in ``(v + d)^i``."""
    i = np.arange(deg + 1)[:, None]
    j = np.arange(deg + 1)[None, :]
    with np.errstate(invalid="ignore"):
        mat = comb(i, j) * np.where(i >= j, float(d) ** np.maximum(i - j, 0), 0.0)
    return np.where(i >= j, mat, 0.0)


def _apply_axis(P, mat, axis):
    """Replace polynomial axis ``axis`` by ``sum_i P[.., i, ..] mat[i, :]``."""
    out = np.tensordot(P, mat, axes=([axis], [0]))
    return np.moveaxis(out, -1, axis)


def _shift_poly(P, d):
    """Coefficients of ``v -> P(v + d)``; ``P`` has a leading mode axis."""
    for ax, dj in enumerate(d):
        if dj != 0.0:
            P = _apply_axis(P, _binomial_shift_matrix(P.shape[ax + 1] - 1, dj), ax + 1)
    return P


def _trim(P):
    """Drop trailing all-zero degrees on every polynomial axis."""
    for ax in range(1, P.ndim):
        moved = np.moveaxis(P, ax, 0)
        nz = np.nonzero(np.any(moved.reshape(moved.shape[0], -1) != 0, axis=1))[0]
        keep = (nz[-1] + 1) if len(nz) else 1
        if keep < P.shape[ax]:
            P = np.take(P, np.arange(keep), axis=ax)
    return P


def _monomials(u, shape):
    """Matrix of monomials ``u^p`` for every index ``p`` of a tensor of ``shape``.

    ``u`` has shape (P, n); returns (P, prod(shape)).
    """
    cols = []
    for ax, deg in enumerate(shape):
        cols.append(u[:, ax:ax + 1] ** np.arange(deg))
    out = cols[0]
    for c in cols[1:]:
        out = (out[:, :, None] * c[:, None, :]).reshape(len(u), -1)
    return out


def _fourier_axis_matrix(deg: int, gamma: float) -> np.ndarray:
    """``M[p, q]`` with ``(-i d/d eta)^p exp(-eta^2/(4 gamma)) = sum_q M[p, q] eta^q exp(...)``."""
    mat = np.zeros((deg + 1, deg + 1), dtype=complex)
    r = np.zeros(deg + 1, dtype=complex)
    r[0] = 1.0
    mat[0] = r
    for p in range(1, deg + 1):
        der = np.zeros_like(r)
        der[:-1] = r[1:] * np.arange(1, deg + 1)
        eta_r = np.zeros_like(r)
        eta_r[1:] = r[:-1]
        r = -1j * (der - eta_r / (2.0 * gamma))
        mat[p] = r
    return mat


# -- atoms ---------------------------------------------------------------------

class Atom:
    """``sum_m exp(i m.omega) P_m(x - x0) exp(-gamma |x - x0|^2) exp(i x.xi0)``.

    Parameters
    ----------
    model : HullModel
    modes : (K, d) int array_like
    coeffs : (K, D_1+1, ..., D_n+1) complex array_like
        Polynomial coefficient tensor for every mode.
    gamma : float
        Gaussian width parameter, positive.
    center, momentum : (n,) array_like
    """

    __slots__ = ("model", "modes", "coeffs", "gamma", "center", "momentum")

    def __init__(self, model: HullModel, modes, coeffs, gamma, center=None, momentum=None):
        n = model.n
        modes = np.asarray(modes, dtype=np.int64).reshape(-1, model.d)
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim != n + 1 or coeffs.shape[0] != modes.shape[0]:
            raise InputError(f"coefficient tensor must have shape (K, ...) with {n} polynomial axes")
        if not (gamma > 0 and np.isfinite(gamma)):
            raise InputError("gamma must be positive")
        center = np.zeros(n) if center is None else np.asarray(center, dtype=float).reshape(n)
        momentum = np.zeros(n) if momentum is None else np.asarray(momentum, dtype=float).reshape(n)
        if len(modes):
            uniq, inv = np.unique(modes, axis=0, return_inverse=True)
            merged = np.zeros((len(uniq),) + coeffs.shape[1:], dtype=complex)
            np.add.at(merged, inv.ravel(), coeffs)
            modes, coeffs = uniq, _trim(merged)
        for arr in (modes, coeffs, center, momentum):
            arr.setflags(write=False)
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "gamma", float(gamma))
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "momentum", momentum)

    def __setattr__(self, name, value):
        raise AttributeError("Atom is immutable")

    @classmethod
    def from_parts(cls, hull: HullFunction, poly=1.0, gamma=0.5, center=None, momentum=None):
        """Separable atom ``hull(omega) * poly(x - x0) * Gaussian * plane wave``."""
        n = hull.model.n
        poly = np.asarray(poly, dtype=complex)
        if poly.ndim == 0:
            poly = poly.reshape((1,) * n)
        if poly.ndim != n:
            raise InputError(f"polynomial must have {n} axes")
        coeffs = hull.coeffs.reshape((-1,) + (1,) * n) * poly[None]
        return cls(hull.model, hull.modes, coeffs, gamma, center, momentum)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def envelope_key(self):
        return (self.gamma, self.center.tobytes(), self.momentum.tobytes())

    @property
    def degree(self) -> int:
        return int(sum(s - 1 for s in self.coeffs.shape[1:]))

    @property
    def wavevectors(self):
        return self.model.wavevectors(self.modes)

    def with_coeffs(self, modes, coeffs, gamma=None, center=None, momentum=None) -> "Atom":
        return Atom(self.model, modes, coeffs,
                    self.gamma if gamma is None else gamma,
                    self.center if center is None else center,
                    self.momentum if momentum is None else momentum)

    # -- evaluation ---------------------------------------------------
    def envelope(self, x) -> np.ndarray:
        """``exp(-gamma |u|^2 + i x.xi0)`` at points of shape (P, n)."""
        u = x - self.center
        return np.exp(-self.gamma * np.sum(u * u, axis=-1) + 1j * (x @ self.momentum))

    def modal_values(self, x) -> np.ndarray:
        """``P_m(x - x0) * envelope(x)`` for every mode, shape (K, P)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        mono = _monomials(x - self.center, self.coeffs.shape[1:])
        vals = self.coeffs.reshape(len(self.modes), -1) @ mono.T
        return vals * self.envelope(x)[None, :]

    def values(self, omega, x) -> np.ndarray:
        """Values on ``omega`` points (W, d) times ``x`` points (P, n), shape (W, P)."""
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        phase = np.exp(1j * (omega @ self.modes.T))
        return phase @ self.modal_values(x)

    # -- closed operations --------------------------------------------
    def scale(self, c) -> "Atom":
        return self.with_coeffs(self.modes, self.coeffs * c)

    def multiply_x(self, j: int) -> "Atom":
        """``x_j`` times the atom: ``(u_j + x0_j) P``."""
        P = self.coeffs
        pad = [(0, 0)] * P.ndim
        pad[j + 1] = (1, 0)
        shifted = np.pad(P, pad)
        pad[j + 1] = (0, 1)
        out = shifted + self.center[j] * np.pad(P, pad)
        return self.with_coeffs(self.modes, out)

    def derive_x(self, j: int) -> "Atom":
        """``d/dx_j``: ``P -> d_j P - 2 gamma u_j P + i xi0_j P``."""
        P = self.coeffs
        ax = j + 1
        deg = P.shape[ax]
        pad = [(0, 0)] * P.ndim
        pad[ax] = (0, 1)
        Pp = np.pad(P, pad)
        der = np.zeros_like(Pp)
        idx = [slice(None)] * P.ndim
        src = [slice(None)] * P.ndim
        idx[ax] = slice(0, deg - 1)
        src[ax] = slice(1, deg)
        der[tuple(idx)] = P[tuple(src)] * np.arange(1, deg).reshape(
            [-1 if a == ax else 1 for a in range(P.ndim)])
        up = np.zeros_like(Pp)
        idx[ax] = slice(1, deg + 1)
        up[tuple(idx)] = P
        out = der - 2.0 * self.gamma * up + 1j * self.momentum[j] * Pp
        return self.with_coeffs(self.modes, out)

    def derive_omega(self, beta) -> "Atom":
        """Orbit derivative ``delta^beta`` (exact on modes)."""
        beta = np.asarray(beta, dtype=int)
        factor = np.prod((1j * self.wavevectors) ** beta, axis=1)
        return self.with_coeffs(self.modes, self.coeffs * factor.reshape((-1,) + (1,) * self.n))

    def translate_omega(self, z) -> "Atom":
        """``theta_z`` applied to the hull dependence."""
        factor = np.exp(1j * self.wavevectors @ np.asarray(z, float))
        return self.with_coeffs(self.modes, self.coeffs * factor.reshape((-1,) + (1,) * self.n))

    def multiply_hull(self, phi: HullFunction) -> "Atom":
        m = (self.modes[:, None, :] + phi.modes[None, :, :]).reshape(-1, self.model.d)
        c = (self.coeffs[:, None] * phi.coeffs.reshape((1, -1) + (1,) * self.n))
        return self.with_coeffs(m, c.reshape((-1,) + self.coeffs.shape[1:]))

    def conj(self) -> "Atom":
        return self.with_coeffs(-self.modes, np.conj(self.coeffs), momentum=-self.momentum)

    def reflect(self) -> "Atom":
        """``x -> -x``: center and momentum flip, ``P(v) -> P(-v)``."""
        P = self.coeffs
        for ax in range(1, P.ndim):
            sign = (-1.0) ** np.arange(P.shape[ax])
            P = P * sign.reshape([-1 if a == ax else 1 for a in range(P.ndim)])
        return self.with_coeffs(self.modes, P, center=-self.center, momentum=-self.momentum)

    def __mul__(self, other: "Atom") -> "Atom":
        """Pointwise product; again an atom."""
        g1, g2 = self.gamma, other.gamma
        g = g1 + g2
        c = (g1 * self.center + g2 * other.center) / g
        dist2 = float(np.sum((self.center - other.center) ** 2))
        const = math.exp(-g1 * g2 / g * dist2)
        P1 = _shift_poly(self.coeffs, c - self.center)
        P2 = _shift_poly(other.coeffs, c - other.center)
        K1, K2 = len(self.modes), len(other.modes)
        modes = (self.modes[:, None, :] + other.modes[None, :, :]).reshape(-1, self.model.d)
        prods = [signal.convolve(P1[i], P2[j]) for i in range(K1) for j in range(K2)]
        shape = (K1 * K2,) + (prods[0].shape if prods else P1.shape[1:])
        coeffs = np.array(prods).reshape(shape) * const
        return Atom(self.model, modes, coeffs, g, c, self.momentum + other.momentum)

    def fourier(self) -> "Atom":
        """Exact transform ``int exp(i x.xi) atom(x) dx`` as an atom in ``xi``."""
        gamma2 = 1.0 / (4.0 * self.gamma)
        P = self.coeffs
        for ax in range(1, P.ndim):
            P = _apply_axis(P, _fourier_axis_matrix(P.shape[ax] - 1, self.gamma), ax)
        # transform in eta = xi + xi0; prefactor exp(i x0.xi0) (pi/gamma)^{n/2}
        pref = np.exp(1j * self.center @ self.momentum) * (np.pi / self.gamma) ** (self.n / 2)
        return Atom(self.model, self.modes, P * pref, gamma2, -self.momentum, self.center)

    def inverse_fourier(self) -> "Atom":
        """Exact ``(2 pi)^{-n} int exp(-i x.xi) atom(xi) d xi`` as an atom in ``x``."""
        return self.fourier().reflect().scale((2.0 * np.pi) ** (-self.n))

    def sup_bound(self) -> float:
        """Upper bound of ``sup |atom|`` from coefficient and envelope bounds."""
        # |P(u)| e^{-gamma u^2} <= sum |c_p| prod_j max_u |u_j|^p_j e^{-gamma u_j^2}
        total = 0.0
        for idx in np.ndindex(*self.coeffs.shape[1:]):
            c = np.abs(self.coeffs[(slice(None),) + idx]).sum()
            if c:
                f = 1.0
                for p in idx:
                    f *= (p / (2 * math.e * self.gamma)) ** (p / 2) if p else 1.0
                total += c * f
        return total

    def to_json(self) -> dict:
        return {"modes": self.modes.tolist(),
                "poly_re": np.real(self.coeffs).tolist(), "poly_im": np.imag(self.coeffs).tolist(),
                "gamma": self.gamma, "center": self.center.tolist(),
                "momentum": self.momentum.tolist()}


def _merge_atoms(atoms):
    """Add atoms that share their envelope."""
    groups = {}
    for a in atoms:
        groups.setdefault(a.envelope_key, []).append(a)
    out = []
    for group in groups.values():
        if len(group) == 1:
            merged = group[0]
        else:
            shape = tuple(max(a.coeffs.shape[ax] for a in group) for ax in range(1, group[0].n + 1))
            modes = np.vstack([a.modes for a in group])
            coeffs = np.concatenate([
                np.pad(a.coeffs, [(0, 0)] + [(0, s - cs) for s, cs in zip(shape, a.coeffs.shape[1:])])
                for a in group])
            merged = group[0].with_coeffs(modes, coeffs)
        keep = np.any(merged.coeffs.reshape(len(merged.modes), -1) != 0, axis=1)
        if np.any(keep):
            out.append(merged.with_coeffs(merged.modes[keep], merged.coeffs[keep]))
    return tuple(out)


# -- symbols -------------------------------------------------------------------

class Symbol:
    """Common interface of the two backing stores."""

    model: HullModel
    realization: str

    @property
    def n(self) -> int:
        return self.model.n

    def evaluate(self, omega, x) -> np.ndarray:
        raise NotImplementedError

    def modal(self, x):
        """``(modes, values)``: hull modes and their coefficient functions at ``x``."""
        raise NotImplementedError

    def _require(self, realization):
        if self.realization != realization:
            raise InputError(f"operation needs the {realization} realization, got {self.realization}")


class AtomSum(Symbol):
    """Finite sum of atoms; exact everywhere."""

    tolerance = 0.0

    def __init__(self, model: HullModel, atoms=(), realization: str = X):
        if realization not in (X, XI):
            raise InputError(f"realization must be {X!r} or {XI!r}")
        for a in atoms:
            if a.model != model:
                raise InputError("atoms live on a different hull model")
        self.model = model
        self.realization = realization
        self.atoms = _merge_atoms(atoms)

    @classmethod
    def gaussian(cls, model, hull=None, poly=1.0, gamma=0.5, center=None, momentum=None,
                 realization=X) -> "AtomSum":
        hull = HullFunction.constant(model) if hull is None else hull
        return cls(model, [Atom.from_parts(hull, poly, gamma, center, momentum)], realization)

    @classmethod
    def zero(cls, model, realization=X) -> "AtomSum":
        return cls(model, (), realization)

    def _new(self, atoms, realization=None) -> "AtomSum":
        return AtomSum(self.model, atoms, realization or self.realization)

    def _check(self, other):
        if not isinstance(other, AtomSum):
            raise InputError("expected an AtomSum")
        if other.model != self.model:
            raise InputError("symbols live on different hull models")
        if other.realization != self.realization:
            raise InputError("realization mismatch")

    def __add__(self, other):
        self._check(other)
        return self._new(self.atoms + other.atoms)

    def __neg__(self):
        return self._new([a.scale(-1) for a in self.atoms])

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, AtomSum):
            self._check(other)
            return self._new([a * b for a in self.atoms for b in other.atoms])
        if isinstance(other, HullFunction):
            return self._new([a.multiply_hull(other) for a in self.atoms])
        return self._new([a.scale(other) for a in self.atoms])

    def __rmul__(self, other):
        return self * other

    def is_zero(self) -> bool:
        return not self.atoms

    def evaluate(self, omega, x) -> np.ndarray:
        """Values at hull points (W, d) times points (P, n), shape (W, P); scalars squeeze."""
        omega_a = np.atleast_2d(np.asarray(omega, dtype=float))
        x_a = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((len(omega_a), len(x_a)), dtype=complex)
        for a in self.atoms:
            out += a.values(omega_a, x_a)
        if np.ndim(omega) == 1 and np.ndim(x) == 1:
            return out[0, 0]
        return out

    def modal(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.atoms:
            return np.zeros((1, self.model.d), dtype=np.int64), np.zeros((1, len(x)), complex)
        modes = np.vstack([a.modes for a in self.atoms])
        vals = np.vstack([a.modal_values(x) for a in self.atoms])
        uniq, inv = np.unique(modes, axis=0, return_inverse=True)
        out = np.zeros((len(uniq), len(x)), dtype=complex)
        np.add.at(out, inv.ravel(), vals)
        return uniq, out

    def multiply_x(self, j):
        return self._new([a.multiply_x(j) for a in self.atoms])

    def derive_x(self, j):
        return self._new([a.derive_x(j) for a in self.atoms])

    def derive_omega(self, beta):
        return self._new([a.derive_omega(beta) for a in self.atoms])

    def translate_omega(self, z):
        return self._new([a.translate_omega(z) for a in self.atoms])

    def conj(self):
        return self._new([a.conj() for a in self.atoms])

    def reflect(self):
        return self._new([a.reflect() for a in self.atoms])

    def fourier(self) -> "AtomSum":
        self._require(X)
        return self._new([a.fourier() for a in self.atoms], XI)

    def inverse_fourier(self) -> "AtomSum":
        self._require(XI)
        return self._new([a.inverse_fourier() for a in self.atoms], X)

    def default_grid(self, N: int | None = None) -> GridSpec:
        """Box of eight standard deviations around the widest atom."""
        if not self.atoms:
            L = 8.0
        else:
            L = max(8.0 / math.sqrt(2 * a.gamma) + float(np.abs(a.center).max()) for a in self.atoms)
        N = N or (64 if self.n == 1 else 32)
        return GridSpec(L, N, self.n, self.realization)

    def sample(self, grid: GridSpec | None = None, omega_grid: OmegaGrid | None = None) -> "SampledSymbol":
        grid = grid or self.default_grid()
        omega_grid = omega_grid or OmegaGrid(self.model.d)
        vals = self.evaluate(omega_grid.points, grid.points)
        return SampledSymbol(self.model, replace(grid, realization=self.realization), omega_grid, vals, 0.0)

    def sup_bound(self) -> float:
        return sum(a.sup_bound() for a in self.atoms)

    def to_json(self) -> dict:
        return {"realization": self.realization, "atoms": [a.to_json() for a in self.atoms]}

    @classmethod
    def from_json(cls, model: HullModel, obj: dict) -> "AtomSum":
        """Parse a symbol descriptor.

        Each atom is either ``{"hull": {...}, "poly": [...], "gamma", "center", "momentum"}``
        with a separable hull part, or the general form written by :meth:`to_json`.
        """
        try:
            atoms = []
            for e in obj["atoms"]:
                gamma = float(e["gamma"])
                center = e.get("center")
                momentum = e.get("momentum")
                if "hull" in e:
                    hull = HullFunction.from_json(model, e["hull"])
                    poly = np.asarray(e.get("poly", 1.0), dtype=float) \
                        + 1j * np.asarray(e.get("poly_im", 0.0), dtype=float)
                    atoms.append(Atom.from_parts(hull, poly, gamma, center, momentum))
                else:
                    coeffs = np.asarray(e["poly_re"], float) + 1j * np.asarray(e["poly_im"], float)
                    atoms.append(Atom(model, e["modes"], coeffs, gamma, center, momentum))
            return cls(model, atoms, obj.get("realization", X))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad symbol descriptor: {exc}") from exc


def _lagrange_weights(t):
    """Cubic Lagrange weights for nodes -1, 0, 1, 2 at fractional offset ``t``."""
    return np.stack([-t * (t - 1) * (t - 2) / 6, (t + 1) * (t - 1) * (t - 2) / 2,
                     -(t + 1) * t * (t - 2) / 2, (t + 1) * t * (t - 1) / 6], axis=-1)


class SampledSymbol(Symbol):
    """Values on ``omega_grid x grid``, stored as an array of shape (M**d, N**n).

    Off-grid ``x`` uses separable cubic Lagrange interpolation with zero
    values outside the box; off-grid ``omega`` uses trigonometric
    interpolation of the hull modes.
    """

    def __init__(self, model: HullModel, grid: GridSpec, omega_grid: OmegaGrid, values,
                 tolerance: float = 0.0, notes: tuple = ()):
        values = np.asarray(values, dtype=complex)
        if grid.n != model.n or omega_grid.d != model.d:
            raise InputError("grid dimensions do not match the model")
        if values.shape != (omega_grid.size, grid.size):
            raise InputError(f"values must have shape {(omega_grid.size, grid.size)}, got {values.shape}")
        values.setflags(write=False)
        self.model = model
        self.grid = grid
        self.omega_grid = omega_grid
        self.values = values
        self.tolerance = float(tolerance)
        self.notes = tuple(notes)

    @property
    def realization(self) -> str:
        return self.grid.realization

    def _new(self, values, tolerance=None, grid=None, notes=()):
        return SampledSymbol(self.model, grid or self.grid, self.omega_grid, values,
                             self.tolerance if tolerance is None else tolerance,
                             self.notes + tuple(notes))

    def _check(self, other):
        if not isinstance(other, SampledSymbol) or other.grid != self.grid \
                or other.omega_grid != self.omega_grid or other.model != self.model:
            raise InputError("sampled symbols live on different grids")

    def __add__(self, other):
        self._check(other)
        return self._new(self.values + other.values, self.tolerance + other.tolerance)

    def __neg__(self):
        return self._new(-self.values)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, SampledSymbol):
            self._check(other)
            tol = self.tolerance * np.abs(other.values).max(initial=0) \
                + other.tolerance * np.abs(self.values).max(initial=0)
            return self._new(self.values * other.values, tol)
        if isinstance(other, HullFunction):
            w = other(self.omega_grid.points)[:, None]
            return self._new(self.values * w, self.tolerance * other.l1())
        return self._new(self.values * other, self.tolerance * abs(other))

    def __rmul__(self, other):
        return self * other

    def tensor(self) -> np.ndarray:
        return self.values.reshape(self.omega_grid.shape + self.grid.shape)

    def mode_values(self) -> np.ndarray:
        """Hull Fourier coefficients per grid point, FFT order, shape (M**d, N**n)."""
        d = self.model.d
        coef = np.fft.fftn(self.tensor(), axes=tuple(range(d))) / self.omega_grid.size
        return coef.reshape(self.omega_grid.size, -1)

    def _interp_matrix_axis(self, coords):
        """Sparse-free interpolation: indices (P, 4) and weights (P, 4) along one axis."""
        h, L, N = self.grid.h, self.grid.L, self.grid.N
        s = (coords + L) / h
        i0 = np.floor(s).astype(int)
        t = s - i0
        idx = i0[:, None] + np.arange(-1, 3)[None, :]
        w = _lagrange_weights(t)
        w = np.where((idx >= 0) & (idx < N), w, 0.0)
        return np.clip(idx, 0, N - 1), w

    def interpolate_x(self, data, x) -> np.ndarray:
        """Interpolate ``data`` of shape (R, N**n) to points ``x`` (P, n); returns (R, P)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, N = self.n, self.grid.N
        parts = [self._interp_matrix_axis(x[:, j]) for j in range(n)]
        out = np.zeros((data.shape[0], len(x)), dtype=complex)
        strides = [N ** (n - 1 - j) for j in range(n)]
        for combo in itertools.product(range(4), repeat=n):
            flat = np.zeros(len(x), dtype=int)
            w = np.ones(len(x))
            for j, c in enumerate(combo):
                flat += parts[j][0][:, c] * strides[j]
                w = w * parts[j][1][:, c]
            out += data[:, flat] * w[None, :]
        return out

    def modal(self, x):
        modes = self.omega_grid.mode_indices()
        return modes, self.interpolate_x(self.mode_values(), x)

    def evaluate(self, omega, x) -> np.ndarray:
        """Values at hull points (W, d) times points (P, n), shape (W, P); scalars squeeze."""
        omega_a = np.atleast_2d(np.asarray(omega, dtype=float))
        modes, vals = self.modal(x)
        out = np.exp(1j * omega_a @ modes.T) @ vals
        if np.ndim(omega) == 1 and np.ndim(x) == 1:
            return out[0, 0]
        return out

    def at_offsets(self) -> np.ndarray:
        """Values on the difference lattice ``(i - j) h`` (zero outside the box).

        Returns shape (M**d, (2N-1)**n).  The lattice point ``k h`` is grid
        index ``k + N/2``, so no interpolation is involved.
        """
        N, n = self.grid.N, self.n
        ext = np.zeros((self.omega_grid.size,) + (2 * N - 1,) * n, dtype=complex)
        src = self.values.reshape((self.omega_grid.size,) + (N,) * n)
        # grid index g sits at (g - N/2) h, i.e. offset index g + N/2 - 1
        ext[(slice(None),) + (slice(N // 2 - 1, N // 2 - 1 + N),) * n] = src
        return ext.reshape(self.omega_grid.size, -1)

    def to_bytes(self) -> bytes:
        header = {"kind": "sampled_symbol", "grid": self.grid.to_json(),
                  "omega_M": self.omega_grid.M, "d": self.model.d,
                  "model": self.model.to_json(), "tolerance": self.tolerance,
                  "shape": list(self.values.shape), "dtype": "complex128", "order": "C"}
        buf = io.BytesIO()
        buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        buf.write(np.ascontiguousarray(self.values, dtype="<c16").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SampledSymbol":
        head, _, body = data.partition(b"\n")
        try:
            header = json.loads(head)
            model = HullModel.from_json(header["model"])
            grid = GridSpec.from_json(header["grid"])
            omega_grid = OmegaGrid(model.d, int(header["omega_M"]))
            vals = np.frombuffer(body, dtype="<c16").reshape(header["shape"])
        except (KeyError, ValueError, TypeError) as exc:
            raise InputError(f"bad sampled symbol payload: {exc}") from exc
        return cls(model, grid, omega_grid, vals.copy(), float(header["tolerance"]))


# -- operations ----------------------------------------------------------------

def evaluate_symbol(S: Symbol, omega, x):
    """Pointwise value(s); exact for atoms, interpolated for sampled symbols."""
    return S.evaluate(omega, x)


def as_sampled(S: Symbol, grid: GridSpec | None = None,
               omega_grid: OmegaGrid | None = None) -> SampledSymbol:
    if isinstance(S, SampledSymbol):
        if (grid is None or grid == S.grid) and (omega_grid is None or omega_grid == S.omega_grid):
            return S
        grid = grid or S.grid
        omega_grid = omega_grid or S.omega_grid
        vals = S.evaluate(omega_grid.points, grid.points)
        return SampledSymbol(S.model, grid, omega_grid, vals, S.tolerance,
                             S.notes + ("resampled by interpolation",))
    return S.sample(grid, omega_grid)


def _dft_phases(grid: GridSpec):
    """Per-axis matrix ``exp(i x_j xi_k)`` between a grid and its dual."""
    return np.exp(1j * np.outer(grid.axis, grid.dual().axis))


def partial_fourier(S: Symbol, grid: GridSpec | None = None,
                    omega_grid: OmegaGrid | None = None) -> SampledSymbol:
    """Discrete ``(F f)(xi_k) = h^n sum_j exp(i x_j . xi_k) f(x_j)`` in ``x`` only.

    Atom sums are sampled on ``grid`` first.  The output lives on the dual
    grid (``L_xi = pi / h``, same ``N``) with the realization flipped.
    """
    Ss = as_sampled(S, grid, omega_grid)
    g = Ss.grid
    mat = _dft_phases(g) * g.h
    T = Ss.values.reshape((Ss.omega_grid.size,) + g.shape)
    for ax in range(1, g.n + 1):
        T = _apply_axis(T, mat, ax)
    return SampledSymbol(Ss.model, g.dual(), Ss.omega_grid, T.reshape(Ss.omega_grid.size, -1),
                         Ss.tolerance * g.size * g.weight, Ss.notes)


def inverse_partial_fourier(S: Symbol, grid: GridSpec | None = None,
                            omega_grid: OmegaGrid | None = None) -> SampledSymbol:
    """Inverse of :func:`partial_fourier`: ``(N h)^{-n} sum_k exp(-i x_j . xi_k) F_k``."""
    Ss = as_sampled(S, grid, omega_grid)
    g = Ss.grid  # the xi grid
    xgrid = g.dual()
    mat = np.conj(_dft_phases(xgrid)).T / (xgrid.N * xgrid.h)
    T = Ss.values.reshape((Ss.omega_grid.size,) + g.shape)
    for ax in range(1, g.n + 1):
        T = _apply_axis(T, mat, ax)
    return SampledSymbol(Ss.model, xgrid, Ss.omega_grid, T.reshape(Ss.omega_grid.size, -1),
                         Ss.tolerance, Ss.notes)


_FD4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def _fd4(T, axis, h):
    """Fourth-order centered first derivative with zero values beyond the box."""
    pad = [(0, 0)] * T.ndim
    pad[axis] = (2, 2)
    P = np.pad(T, pad)
    N = T.shape[axis]
    out = np.zeros_like(T)
    for off, c in zip(range(-2, 3), _FD4):
        if c:
            out += c * np.take(P, np.arange(2 + off, 2 + off + N), axis=axis)
    return out / h


def apply_weights(S: Symbol, a=None, alpha=None, beta=None) -> Symbol:
    """``Q^a d^alpha delta^beta S`` in the symbol's own variable.

    Exact for atom sums.  Sampled symbols get exact orbit derivatives and
    multiplications and fourth-order centered differences for ``d``; each
    difference adds an ``h^4``-scaled estimate to the provenance tolerance.
    """
    n = S.n
    a = np.zeros(n, int) if a is None else np.asarray(a, int)
    alpha = np.zeros(n, int) if alpha is None else np.asarray(alpha, int)
    beta = np.zeros(n, int) if beta is None else np.asarray(beta, int)
    if any(v.shape != (n,) or np.any(v < 0) for v in (a, alpha, beta)):
        raise InputError(f"multi-indices must be nonnegative of length {n}")
    if isinstance(S, AtomSum):
        out = S.derive_omega(beta) if beta.any() else S
        for j in range(n):
            for _ in range(alpha[j]):
                out = out.derive_x(j)
        for j in range(n):
            for _ in range(a[j]):
                out = out.multiply_x(j)
        return out
    g = S.grid
    modes = S.omega_grid.mode_indices()
    coef = S.mode_values()
    if beta.any():
        coef = coef * np.prod((1j * S.model.wavevectors(modes)) ** beta, axis=1)[:, None]
    T = coef.reshape((S.omega_grid.size,) + g.shape)
    tol = S.tolerance
    notes = []
    for j in range(n):
        for _ in range(alpha[j]):
            T = _fd4(T, j + 1, g.h)
            tol = tol / g.h + g.h ** 4 * float(np.abs(T).max(initial=0.0))
    if alpha.any() and g.h > 0.5:
        notes.append(f"finite differences on a coarse grid (h={g.h:.3g})")
    pts = g.points
    weight = np.prod(pts ** a, axis=1).reshape(g.shape)
    T = T * weight
    tol = tol * float(np.abs(weight).max(initial=1.0))
    d = S.model.d
    vals = np.fft.ifftn(T.reshape(S.omega_grid.shape + g.shape), axes=tuple(range(d))) \
        * S.omega_grid.size
    return S._new(vals.reshape(S.omega_grid.size, -1), tol, notes=notes)


@dataclass(frozen=True)
class SeminormValue:
    value: float
    tolerance: float


def seminorm(S: Symbol, a=None, alpha=None, beta=None, omega_grid: OmegaGrid | None = None,
             grid: GridSpec | None = None) -> SeminormValue:
    """Grid sup of ``|Q^a d^alpha delta^beta S|`` (a lower bound of the true sup)."""
    W = apply_weights(S, a, alpha, beta)
    if isinstance(W, AtomSum):
        grid = grid or S.default_grid()
        omega_grid = omega_grid or OmegaGrid(S.model.d)
        vals = W.evaluate(omega_grid.points, grid.points)
        return SeminormValue(float(np.abs(vals).max(initial=0.0)), 0.0)
    return SeminormValue(float(np.abs(W.values).max(initial=0.0)), W.tolerance)


def involution(S: Symbol) -> Symbol:
    """``x -> conj(S(omega, -x))``."""
    if isinstance(S, AtomSum):
        return S.reflect().conj()
    g = S.grid
    T = S.values.reshape((S.omega_grid.size,) + g.shape)
    # grid index i sits at -L + i h; -x_i = x_{N-i}, and x_{N} lies outside (zero)
    R = np.zeros_like(T)
    src = (slice(None),) + (slice(1, None),) * g.n
    dst = (slice(None),) + (slice(None, 0, -1),) * g.n
    R[src] = T[dst]
    return S._new(np.conj(R).reshape(S.omega_grid.size, -1))

"""Torus hulls with linear flows and hull functions as finite Fourier series.

The hull is ``T^d`` with the action ``theta_x[omega] = omega + F x (mod 2 pi)``
of ``R^n``.  A hull function is a finite sum ``sum_m c_m exp(i m . omega)``;
translations and the orbit derivations act diagonally on the modes, so both
are exact.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InputError

TWO_PI = 2.0 * np.pi


def reduce_angles(omega):
    """Map angles to ``[0, 2 pi)`` with a single mod."""
    r = np.mod(omega, TWO_PI)
    # np.mod of a tiny negative number can round up to exactly 2 pi
    return np.where(r >= TWO_PI, 0.0, r)


@dataclass(frozen=True, eq=False)
class HullModel:
    """Kronecker flow on the ``d``-torus driven by ``R^n``.

    Parameters
    ----------
    F : (d, n) array_like
        Frequency matrix of the flow.
    """

    F: np.ndarray

    def __post_init__(self):
        F = np.array(self.F, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        if F.ndim != 2 or F.shape[0] < 1 or F.shape[1] < 1:
            raise InputError(f"F must be a non-empty d x n matrix, got shape {F.shape}")
        if not np.all(np.isfinite(F)):
            raise InputError("F has non-finite entries")
        F.setflags(write=False)
        object.__setattr__(self, "F", F)

    @property
    def d(self) -> int:
        return self.F.shape[0]

    @property
    def n(self) -> int:
        return self.F.shape[1]

    def wavevectors(self, m):
        """Return ``F^T m`` for integer modes ``m`` of shape (K, d)."""
        return np.asarray(m, dtype=float) @ self.F

    def __eq__(self, other):
        return isinstance(other, HullModel) and np.array_equal(self.F, other.F)

    def __hash__(self):
        return hash(self.F.tobytes())

    def to_json(self) -> dict:
        return {"d": self.d, "n": self.n, "F": self.F.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "HullModel":
        try:
            F = np.array(obj["F"], dtype=float).reshape(int(obj["d"]), int(obj["n"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad model descriptor: {exc}") from exc
        return cls(F)


def act(model: HullModel, omega, x):
    """Flow the hull point ``omega`` by ``x``: ``(omega + F x) mod 2 pi``.

    Both arguments may carry leading batch dimensions.
    """
    omega = np.asarray(omega, dtype=float)
    x = np.asarray(x, dtype=float)
    if omega.shape[-1:] != (model.d,) or x.shape[-1:] != (model.n,):
        raise InputError(
            f"dimension mismatch: omega {omega.shape}, x {x.shape} for d={model.d}, n={model.n}"
        )
    return reduce_angles(omega + x @ model.F.T)


@dataclass(frozen=True)
class OmegaGrid:
    """Uniform grid with ``M`` points per torus axis, ``omega_j = 2 pi j / M``."""

    d: int
    M: int = 32

    def __post_init__(self):
        if self.d < 1 or self.M < 1:
            raise InputError("empty omega grid")

    @property
    def shape(self) -> tuple:
        return (self.M,) * self.d

    @property
    def size(self) -> int:
        return self.M ** self.d

    @property
    def points(self) -> np.ndarray:
        axes = [TWO_PI * np.arange(self.M) / self.M] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def mode_indices(self) -> np.ndarray:
        """Integer modes in FFT order, shape (M**d, d)."""
        freq = np.rint(np.fft.fftfreq(self.M) * self.M).astype(int)
        mesh = np.meshgrid(*([freq] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)


class HullFunction:
    """Finite Fourier series on the hull of ``model``.

    Parameters
    ----------
    model : HullModel
    modes : (K, d) int array_like
    coeffs : (K,) complex array_like

    Duplicate modes are merged.  Values are immutable.
    """

    __slots__ = ("model", "modes", "coeffs")

    def __init__(self, model: HullModel, modes, coeffs):
        modes = np.asarray(modes, dtype=np.int64).reshape(-1, model.d)
        coeffs = np.asarray(coeffs, dtype=complex).reshape(-1)
        if modes.shape[0] != coeffs.shape[0]:
            raise InputError("modes and coeffs have different lengths")
        if modes.shape[0]:
            uniq, inv = np.unique(modes, axis=0, return_inverse=True)
            merged = np.zeros(len(uniq), dtype=complex)
            np.add.at(merged, inv.ravel(), coeffs)
            modes, coeffs = uniq, merged
        modes.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("HullFunction is immutable")

    # -- constructors -------------------------------------------------
    @classmethod
    def constant(cls, model: HullModel, c=1.0) -> "HullFunction":
        return cls(model, np.zeros((1, model.d), dtype=int), [c])

    @classmethod
    def zero(cls, model: HullModel) -> "HullFunction":
        return cls(model, np.zeros((0, model.d), dtype=int), [])

    @classmethod
    def exp_mode(cls, model: HullModel, m, c=1.0) -> "HullFunction":
        return cls(model, [m], [c])

    @classmethod
    def cos_mode(cls, model: HullModel, m, amplitude=1.0) -> "HullFunction":
        m = np.asarray(m, dtype=int)
        return cls(model, [m, -m], [amplitude / 2, amplitude / 2])

    @classmethod
    def sin_mode(cls, model: HullModel, m, amplitude=1.0) -> "HullFunction":
        m = np.asarray(m, dtype=int)
        return cls(model, [m, -m], [amplitude / 2j, -amplitude / 2j])

    # -- structure ----------------------------------------------------
    @property
    def cutoff(self) -> int:
        return int(np.abs(self.modes).max()) if len(self.modes) else 0

    @property
    def is_real(self) -> bool:
        return np.allclose(self.coeffs, np.conj(self.conj_reflected_coeffs()), rtol=0,
                           atol=1e-14 * max(1.0, self.l1()))

    def conj_reflected_coeffs(self):
        """Coefficient at ``-m`` for every stored ``m`` (zero when absent)."""
        lookup = {tuple(m): c for m, c in zip(self.modes.tolist(), self.coeffs)}
        return np.array([lookup.get(tuple(-np.asarray(m)), 0.0) for m in self.modes.tolist()],
                        dtype=complex)

    @property
    def wavevectors(self) -> np.ndarray:
        return self.model.wavevectors(self.modes)

    def l1(self) -> float:
        """Coefficient l1 norm: an upper bound for the sup over the hull."""
        return float(np.abs(self.coeffs).sum())

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    # -- algebra ------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, HullFunction):
            raise InputError("expected a HullFunction")
        if other.model != self.model:
            raise InputError("hull functions live on different models")

    def __add__(self, other):
        if np.isscalar(other):
            other = HullFunction.constant(self.model, other)
        self._check(other)
        return HullFunction(self.model, np.vstack([self.modes, other.modes]),
                            np.concatenate([self.coeffs, other.coeffs]))

    __radd__ = __add__

    def __neg__(self):
        return HullFunction(self.model, self.modes, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if np.isscalar(other):
            return HullFunction(self.model, self.modes, self.coeffs * other)
        self._check(other)
        m = (self.modes[:, None, :] + other.modes[None, :, :]).reshape(-1, self.model.d)
        c = (self.coeffs[:, None] * other.coeffs[None, :]).ravel()
        return HullFunction(self.model, m, c)

    __rmul__ = __mul__

    def conj(self) -> "HullFunction":
        """Pointwise complex conjugate."""
        return HullFunction(self.model, -self.modes, np.conj(self.coeffs))

    def truncate(self, K: int) -> "HullFunction":
        """Drop every mode with ``max |m_i| > K``."""
        keep = np.abs(self.modes).max(axis=1, initial=0) <= K if len(self.modes) else []
        return HullFunction(self.model, self.modes[keep], self.coeffs[keep])

    def pruned(self, atol=0.0) -> "HullFunction":
        keep = np.abs(self.coeffs) > atol
        return HullFunction(self.model, self.modes[keep], self.coeffs[keep])

    def __call__(self, omega):
        return evaluate(self, omega)

    def __repr__(self):
        return f"HullFunction(K={len(self.coeffs)}, cutoff={self.cutoff})"

    # -- serialization ------------------------------------------------
    def to_json(self) -> dict:
        return {"modes": [{"m": m, "re": float(c.real), "im": float(c.imag)}
                          for m, c in zip(self.modes.tolist(), self.coeffs)]}

    @classmethod
    def from_json(cls, model: HullModel, obj: dict) -> "HullFunction":
        try:
            entries = obj["modes"]
            modes = [e["m"] for e in entries]
            coeffs = [complex(e.get("re", 0.0), e.get("im", 0.0)) for e in entries]
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad hull function descriptor: {exc}") from exc
        if not modes:
            return cls.zero(model)
        if any(len(m) != model.d for m in modes):
            raise InputError("mode index has the wrong dimension")
        return cls(model, modes, coeffs)


def translate(phi: HullFunction, x) -> HullFunction:
    """``theta_x[phi]``: multiply each coefficient by ``exp(i m . F x)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (phi.model.n,):
        raise InputError(f"translation vector must have shape ({phi.model.n},)")
    return HullFunction(phi.model, phi.modes, phi.coeffs * np.exp(1j * phi.wavevectors @ x))


def derive(phi: HullFunction, alpha) -> HullFunction:
    """Orbit derivative ``delta^alpha phi``; exact on the modes."""
    alpha = np.asarray(alpha, dtype=int)
    if alpha.shape != (phi.model.n,) or np.any(alpha < 0):
        raise InputError(f"alpha must be a multi-index of length {phi.model.n}")
    factor = np.prod((1j * phi.wavevectors) ** alpha, axis=1) if len(phi.modes) else []
    return HullFunction(phi.model, phi.modes, phi.coeffs * factor)


def evaluate(phi: HullFunction, omega):
    """Evaluate ``sum_m c_m exp(i m . omega)`` at one or many hull points."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape[-1:] != (phi.model.d,):
        raise InputError(f"hull point must have {phi.model.d} angles")
    if not len(phi.modes):
        return np.zeros(omega.shape[:-1], dtype=complex)[()]
    phase = np.exp(1j * (omega @ phi.modes.T))
    return (phase @ phi.coeffs)[()]


def orbit_function(phi: HullFunction, omega, xs):
    """Values ``phi(theta_x[omega])`` for each ``x`` in ``xs``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    omega = np.asarray(omega, dtype=float)
    # exp(i m.(omega + F x)) without reducing the angle, which is exact for integer m
    phase = np.exp(1j * (omega @ phi.modes.T + xs @ phi.wavevectors.T))
    return phase @ phi.coeffs


@dataclass(frozen=True)
class SeminormBracket:
    """Bracket ``lower <= s^alpha(phi) <= upper`` for a sup over the hull."""

    lower: float
    upper: float


def seminorm_salpha(phi: HullFunction, alpha, omega_grid: OmegaGrid | np.ndarray) -> SeminormBracket:
    """Bracket the orbit seminorm ``sup_omega |delta^alpha phi|``.

    The grid maximum is a lower bound converging as the grid refines; the
    coefficient l1 sum of ``delta^alpha phi`` is an upper bound.
    """
    pts = omega_grid.points if isinstance(omega_grid, OmegaGrid) else np.atleast_2d(omega_grid)
    if pts.size == 0:
        raise InputError("empty omega grid")
    dphi = derive(phi, alpha)
    lower = float(np.abs(evaluate(dphi, pts)).max())
    return SeminormBracket(lower, dphi.l1())


@dataclass
class StabilizerReport:
    free: bool
    conclusive: bool
    kind: str  # "free_up_to_bound", "lattice", "continuous"
    generators: list = field(default_factory=list)
    kernel_dim: int = 0
    bound: int = 0

    def describe(self) -> str:
        if self.kind == "continuous":
            return f"not free: stabilizer contains a {self.kernel_dim}-dimensional subspace"
        if self.kind == "lattice":
            return f"not free: stabilizer lattice with generators {self.generators}"
        return f"free up to bound Q={self.bound}"


def _as_rational(value: float, bound: int):
    frac = Fraction(value).limit_denominator(bound)
    if abs(float(frac) - value) <= 8 * np.finfo(float).eps * max(1.0, abs(value)):
        return frac
    return None


def stabilizer_report(model: HullModel, denominator_bound: int = 10**6,
                      search_bound: int = 12) -> StabilizerReport:
    """Decide whether ``F x in 2 pi Z^d`` has only the solution ``x = 0``.

    Rational relations are detected with continued fractions of bounded
    denominator; an irrational answer is therefore "free up to the bound".
    """
    F = model.F
    d, n = F.shape
    rank = np.linalg.matrix_rank(F)
    if rank < n:
        return StabilizerReport(False, True, "continuous", kernel_dim=n - rank,
                                bound=denominator_bound)
    # pick n independent rows; the others must map the lattice to integers
    rows = []
    for i in range(d):
        if np.linalg.matrix_rank(F[rows + [i]]) > len(rows):
            rows.append(i)
        if len(rows) == n:
            break
    rest = [i for i in range(d) if i not in rows]
    FS_inv = np.linalg.inv(F[rows])
    G = F[rest] @ FS_inv
    fracs = [_as_rational(v, denominator_bound) for v in G.ravel()]
    if all(f is not None for f in fracs):
        D = 1
        for f in fracs:
            D = D * f.denominator // math.gcd(D, f.denominator)
        if n == 1:
            gens = [[float(TWO_PI * FS_inv[0, 0] * D)]]
        else:
            gens = (TWO_PI * D * FS_inv).T.tolist()
        return StabilizerReport(False, True, "lattice", generators=gens, bound=denominator_bound)
    # partial relations: bounded integer search
    found = []
    for m in itertools.product(range(-search_bound, search_bound + 1), repeat=n):
        if not any(m):
            continue
        vals = G @ np.array(m, dtype=float)
        if np.all(np.abs(vals - np.rint(vals)) < 1e-9):
            found.append((TWO_PI * FS_inv @ np.array(m, dtype=float)).tolist())
            break
    if found:
        return StabilizerReport(False, False, "lattice", generators=found, bound=denominator_bound)
    return StabilizerReport(True, False, "free_up_to_bound", bound=denominator_bound)

"""Magnetic fields on the hull, triangle fluxes, and the magnetic 2-cocycle.

A field is an antisymmetric ``n x n`` matrix of real hull functions.  Fluxes
are linear in the field, so every flux is computed mode by mode: a mode with
wave vector ``k`` contributes ``C^{jk} u_j v_k exp(i k.a) J(k.u, k.v)`` to the
flux through ``<a, a + u, a + u + v>``, where ``J`` is the closed-form
square integral from :mod:`magweyl._triangle`.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from . import _triangle
from .errors import InputError, NumericError
from .hull import HullFunction, HullModel, OmegaGrid, act, derive, evaluate, translate


class MagneticField:
    """Antisymmetric matrix of real hull functions ``B^{jk}``.

    Parameters
    ----------
    model : HullModel
    components : sequence of sequences of HullFunction
        Full ``n x n`` matrix.  It is stored as given so that
        :func:`validate_field` can report antisymmetry defects; use
        :meth:`from_upper` to build a field from its ``j < k`` entries.
    """

    def __init__(self, model: HullModel, components):
        n = model.n
        rows = [list(r) for r in components]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise InputError(f"field must be an {n} x {n} matrix of hull functions")
        for r in rows:
            for phi in r:
                if not isinstance(phi, HullFunction) or phi.model != model:
                    raise InputError("field entries must be hull functions on the same model")
                if not phi.is_real:
                    raise InputError("field components must be real-valued")
        self.model = model
        self.components = tuple(tuple(r) for r in rows)
        # stacked representation: union of modes, coefficients C[K, j, k]
        table: dict = {}
        for j in range(n):
            for k in range(n):
                for m, c in zip(rows[j][k].modes.tolist(), rows[j][k].coeffs):
                    table.setdefault(tuple(m), np.zeros((n, n), dtype=complex))[j, k] += c
        keys = sorted(table)
        self.modes = np.array(keys, dtype=np.int64).reshape(-1, model.d)
        self.coeffs = (np.stack([table[k] for k in keys]) if keys
                       else np.zeros((0, n, n), dtype=complex))
        self.wavevectors = model.wavevectors(self.modes)
        for arr in (self.modes, self.coeffs, self.wavevectors):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.model.n

    @classmethod
    def from_upper(cls, model: HullModel, upper: dict) -> "MagneticField":
        """Build from ``{(j, k): phi}`` with zero-based ``j < k``; the rest is completed."""
        n = model.n
        zero = HullFunction.zero(model)
        mat = [[zero] * n for _ in range(n)]
        for (j, k), phi in upper.items():
            if not (0 <= j < k < n):
                raise InputError(f"component index ({j}, {k}) must satisfy 0 <= j < k < {n}")
            mat[j][k] = phi
            mat[k][j] = -phi
        return cls(model, mat)

    @classmethod
    def zero(cls, model: HullModel) -> "MagneticField":
        return cls.from_upper(model, {})

    @classmethod
    def constant(cls, model: HullModel, b) -> "MagneticField":
        """Constant field; ``b`` is a scalar ``B^{12}`` for ``n = 2`` or an antisymmetric matrix."""
        b = np.asarray(b, dtype=float)
        n = model.n
        if b.ndim == 0:
            if n != 2:
                raise InputError("a scalar constant field needs n = 2")
            b = np.array([[0.0, float(b)], [-float(b), 0.0]])
        return cls.from_upper(model, {(j, k): HullFunction.constant(model, b[j, k])
                                      for j in range(n) for k in range(j + 1, n) if b[j, k]})

    def component(self, j: int, k: int) -> HullFunction:
        return self.components[j][k]

    def contract(self, u, v) -> HullFunction:
        """The hull function ``sum_jk B^{jk} u_j v_k``."""
        c = np.einsum("kjl,j,l->k", self.coeffs, np.asarray(u, float), np.asarray(v, float))
        return HullFunction(self.model, self.modes, c)

    def translate(self, x) -> "MagneticField":
        return MagneticField(self.model, [[translate(phi, x) for phi in row]
                                          for row in self.components])

    def derive(self, alpha) -> "MagneticField":
        """Componentwise orbit derivative; antisymmetry is kept, reality too."""
        return MagneticField(self.model, [[derive(phi, alpha) for phi in row]
                                          for row in self.components])

    def at(self, omega) -> np.ndarray:
        """Matrix ``B(omega)`` (real), batched over leading dimensions of ``omega``."""
        omega = np.asarray(omega, dtype=float)
        phase = np.exp(1j * (omega @ self.modes.T))
        return np.real(np.tensordot(phase, self.coeffs, axes=(-1, 0)))

    def l1_norms(self) -> np.ndarray:
        """Coefficient l1 norm of every component: upper bounds of ``||B^{jk}||``."""
        return np.abs(self.coeffs).sum(axis=0)

    def is_constant(self) -> bool:
        return not np.any(self.coeffs[np.any(self.modes != 0, axis=1)])

    # -- serialization ------------------------------------------------
    def to_json(self) -> dict:
        comps = []
        for j in range(self.n):
            for k in range(j + 1, self.n):
                phi = self.components[j][k]
                if not phi.is_zero():
                    comps.append({"j": j + 1, "k": k + 1, **phi.to_json()})
        return {"components": comps}

    @classmethod
    def from_json(cls, model: HullModel, obj: dict) -> "MagneticField":
        """Parse ``{"components": [{"j", "k", "modes"}]}`` with one-based ``j < k``."""
        try:
            entries = obj["components"]
            upper = {}
            for e in entries:
                j, k = int(e["j"]) - 1, int(e["k"]) - 1
                if (j, k) in upper:
                    raise InputError(f"component ({j + 1}, {k + 1}) given twice")
                upper[(j, k)] = HullFunction.from_json(model, e)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad field descriptor: {exc}") from exc
        return cls.from_upper(model, upper)


@dataclass(frozen=True)
class FieldReport:
    """Defects of a candidate field.

    ``closedness_defect`` is the largest coefficient l1 norm of
    ``delta_j B^{kl} + delta_k B^{lj} + delta_l B^{jk}`` over triples, which
    bounds the sup of the defect; ``closedness_max_coefficient`` is the
    largest single coefficient.
    """

    antisymmetry_defect: float
    closedness_defect: float
    closedness_max_coefficient: float
    triples_checked: int

    @property
    def antisymmetric(self) -> bool:
        return self.antisymmetry_defect == 0.0

    @property
    def closed(self) -> bool:
        return self.closedness_defect <= 1e-12

    def to_json(self) -> dict:
        return {"antisymmetry_defect": self.antisymmetry_defect,
                "closedness_defect": self.closedness_defect,
                "closedness_max_coefficient": self.closedness_max_coefficient,
                "triples_checked": self.triples_checked,
                "antisymmetric": self.antisymmetric, "closed": self.closed}


def validate_field(B: MagneticField) -> FieldReport:
    """Report antisymmetry and closedness defects mode by mode."""
    C = B.coeffs
    anti = float(np.abs(C + np.swapaxes(C, 1, 2)).max(initial=0.0))
    ik = 1j * B.wavevectors
    worst_l1 = worst_coef = 0.0
    triples = list(itertools.combinations(range(B.n), 3))
    for j, k, l in triples:
        defect = ik[:, j] * C[:, k, l] + ik[:, k] * C[:, l, j] + ik[:, l] * C[:, j, k]
        worst_l1 = max(worst_l1, float(np.abs(defect).sum()))
        worst_coef = max(worst_coef, float(np.abs(defect).max(initial=0.0)))
    return FieldReport(anti, worst_l1, worst_coef, len(triples))


@dataclass(frozen=True)
class FluxValue:
    """A flux as a function of the hull point (a real hull function)."""

    value: HullFunction

    def __call__(self, omega):
        return np.real(evaluate(self.value, omega))

    def on_grid(self, omega_grid: OmegaGrid) -> np.ndarray:
        return np.real(evaluate(self.value, omega_grid.points))


def _as_points(arr, n):
    arr = np.asarray(arr, dtype=float)
    if arr.shape[-1:] != (n,):
        raise InputError(f"expected vectors of length {n}, got shape {arr.shape}")
    return arr


def triangle_flux_coeffs(B: MagneticField, a, u, v) -> np.ndarray:
    """Mode coefficients of the flux through ``<a, a+u, a+u+v>``.

    ``a, u, v`` have shape (..., n); the result has shape (K, ...), aligned
    with ``B.modes``.
    """
    a, u, v = (_as_points(t, B.n) for t in (a, u, v))
    a, u, v = np.broadcast_arrays(a, u, v)
    k = B.wavevectors
    ka, ku, kv = (np.tensordot(k, t, axes=(1, -1)) for t in (a, u, v))
    weight = np.einsum("mjl,...j,...l->m...", B.coeffs, u, v)
    return weight * np.exp(1j * ka) * _triangle.square_weight(ku, kv)


def triangle_flux(B: MagneticField, a, b, c) -> FluxValue:
    """Flux ``omega -> Gamma^{B_omega}<a, b, c>`` through the oriented triangle."""
    a, b, c = (_as_points(t, B.n) for t in (a, b, c))
    coeffs = triangle_flux_coeffs(B, a, b - a, c - b)
    return FluxValue(HullFunction(B.model, B.modes, coeffs))


def triangle_flux_oracle(B: MagneticField, a, b, c, omega, tol: float = 1e-11) -> float:
    """Flux at one hull point by adaptive 2-D quadrature of the parametrized integrand.

    The integrand ``s sum_jk u_j v_k B^{jk}(theta_{a + s u + s t v}[omega])`` is
    evaluated pointwise through the hull action.

    Raises
    ------
    NumericError
        If the quadrature error estimate exceeds ``tol``.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    a, b, c = (_as_points(t, B.n) for t in (a, b, c))
    u, v = b - a, c - b
    w = B.contract(u, v)
    omega = np.asarray(omega, dtype=float)
    modes, coeffs = w.modes, w.coeffs
    if not len(coeffs) or not np.any(coeffs):
        return 0.0

    def integrand(t, s):
        point = act(B.model, omega, a + s * u + s * t * v)
        return s * float(np.real(np.exp(1j * (modes @ point)) @ coeffs))

    val, err = integrate.dblquad(integrand, 0.0, 1.0, 0.0, 1.0, epsabs=tol, epsrel=tol)
    if not np.isfinite(val) or err > 10 * tol:
        raise NumericError(f"flux quadrature did not converge: error estimate {err:.3g}")
    return float(val)


def _check_hbar(hbar, name="hbar"):
    if not (0.0 < hbar <= 1.0):
        raise InputError(f"{name} must lie in (0, 1], got {hbar}")


def scaled_flux_coeffs(B: MagneticField, hbar: float, x, y, order: int = 0) -> np.ndarray:
    """Mode coefficients of ``d^order/d eps^order Lambda_eps(x, y)`` at ``eps = hbar``.

    ``x`` and ``y`` have shape (..., n); the result has shape (K, ...).
    """
    _check_hbar(hbar)
    x, y = np.broadcast_arrays(_as_points(x, B.n), _as_points(y, B.n))
    k = B.wavevectors
    kx = np.tensordot(k, x, axes=(1, -1))
    ky = np.tensordot(k, y, axes=(1, -1))
    weight = np.einsum("mjl,...j,...l->m...", B.coeffs, y, x - y)
    if order == 0:
        integral = np.exp(-0.5j * hbar * kx) * _triangle.square_weight(hbar * ky, hbar * (kx - ky))
    elif order in (1, 2):
        # phase along the triangle is s a + t b + c
        integral = _triangle.triangle_phase_derivatives(order, kx - ky, ky, -0.5 * kx, hbar)
    else:
        raise InputError("order must be 0, 1 or 2")
    return weight * integral


def scaled_flux(B: MagneticField, hbar: float, x, y, order: int = 0) -> FluxValue:
    """Scaled flux ``Lambda_hbar(x, y)`` or its first or second ``hbar``-derivative."""
    coeffs = scaled_flux_coeffs(B, hbar, x, y, order)
    return FluxValue(HullFunction(B.model, B.modes, coeffs))


def scaled_flux_oracle(B: MagneticField, hbar: float, x, y, omega, tol: float = 1e-11) -> float:
    """Order-0 scaled flux at one hull point by adaptive quadrature over ``0 <= s <= t <= 1``."""
    _check_hbar(hbar)
    x, y = _as_points(x, B.n), _as_points(y, B.n)
    w = B.contract(y, x - y)
    omega = np.asarray(omega, dtype=float)

    def integrand(s, t):
        point = act(B.model, omega, hbar * (s - 0.5) * x + hbar * (t - s) * y)
        return float(np.real(np.exp(1j * (w.modes @ point)) @ w.coeffs))

    val, err = integrate.dblquad(integrand, 0.0, 1.0, 0.0, lambda t: t, epsabs=tol, epsrel=tol)
    if err > 10 * tol:
        raise NumericError(f"scaled flux quadrature did not converge: error estimate {err:.3g}")
    return float(val)


def cocycle_flux(B: MagneticField, hbar: float, x, y) -> FluxValue:
    """The flux ``Gamma^{B_omega}<0, hbar x, hbar x + hbar y>`` behind the scaled cocycle."""
    _check_hbar(hbar)
    x, y = _as_points(x, B.n), _as_points(y, B.n)
    return triangle_flux(B, np.zeros(B.n), hbar * x, hbar * (x + y))


def cocycle(B: MagneticField, hbar: float, x, y, omega_grid: OmegaGrid) -> np.ndarray:
    """Scaled magnetic cocycle ``exp(-(i/hbar) Gamma<0, hbar x, hbar(x+y)>)`` on a hull grid."""
    flux = cocycle_flux(B, hbar, x, y).on_grid(omega_grid)
    return np.exp(-1j * flux / hbar)


def cocycle_identity_defect(B: MagneticField, hbar: float, x, y, z, omega_grid: OmegaGrid) -> float:
    """Max over the grid of ``|k(x+y, z) k(x, y) - theta_{hbar x}[k(y, z)] k(x, y+z)|``."""
    _check_hbar(hbar)
    x, y, z = (_as_points(t, B.n) for t in (x, y, z))
    pts = omega_grid.points
    k_xy_z = np.exp(-1j * cocycle_flux(B, hbar, x + y, z)(pts) / hbar)
    k_x_y = np.exp(-1j * cocycle_flux(B, hbar, x, y)(pts) / hbar)
    shifted = FluxValue(translate(cocycle_flux(B, hbar, y, z).value, hbar * x))
    k_y_z = np.exp(-1j * shifted(pts) / hbar)
    k_x_yz = np.exp(-1j * cocycle_flux(B, hbar, x, y + z)(pts) / hbar)
    return float(np.abs(k_xy_z * k_x_y - k_y_z * k_x_yz).max())


def translation_identity_defect(B: MagneticField, x, y, z, omega) -> float:
    """``|Gamma^{B_{theta_x omega}}<0, y, y+z> - Gamma^{B_omega}<x, x+y, x+y+z>|``."""
    x, y, z = (_as_points(t, B.n) for t in (x, y, z))
    zero = np.zeros(B.n)
    lhs = triangle_flux(B, zero, y, y + z)(act(B.model, omega, x))
    rhs = triangle_flux(B, x, x + y, x + y + z)(omega)
    return float(abs(lhs - rhs))


# -- flux estimates ----------------------------------------------------------

@dataclass
class Lemma3Report:
    """Outcome of :func:`lemma3_check`.

    ``violations`` lists ``(kind, sample, lhs, rhs)`` for every failed
    inequality.  ``worst_ratio`` holds the largest ``lhs / rhs`` per kind.
    """

    n_samples: int
    violations: list = field(default_factory=list)
    worst_ratio: dict = field(default_factory=dict)
    polynomial_fits: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations


def _uniform_bounds(B: MagneticField, x, y):
    """Right-hand sides of the three hbar-uniform flux estimates."""
    n = B.n
    ay, axy = np.abs(y), np.abs(x - y)
    base = np.outer(ay, axy)  # |y_j| |x_k - y_k|
    norm0 = B.l1_norms()
    ik = 1j * B.wavevectors
    norm1 = np.stack([np.abs(B.coeffs * ik[:, l, None, None]).sum(axis=0) for l in range(n)])
    norm2 = np.stack([[np.abs(B.coeffs * (ik[:, l] * ik[:, m])[:, None, None]).sum(axis=0)
                       for m in range(n)] for l in range(n)])
    r0 = float((norm0 * base).sum())
    w1 = axy + ay
    r1 = float(np.einsum("ljk,jk,l->", norm1, base, w1))
    w2 = np.outer(axy, axy) + np.outer(ay, axy) + np.outer(ay, ay)
    r2 = float(np.einsum("lmjk,jk,lm->", norm2, base, w2))
    return r0, r1, r2


def _leibniz_flux_derivative(B: MagneticField, hbar, x, y, a, alpha) -> np.ndarray:
    """Mode coefficients of ``d_x^a delta^alpha Lambda_hbar(x, y)`` for ``|a| <= 2``."""
    a = np.asarray(a, dtype=int)
    alpha = np.asarray(alpha, dtype=int)
    k = B.wavevectors
    kx, ky = k @ x, k @ y
    A, Bt = hbar * (kx - ky), hbar * ky
    pref = np.exp(-0.5j * hbar * kx)

    def g_derivative(r):
        # d_x^a of int_T exp(i hbar k.p) with |a| = r: (i hbar)^r k^a int_T (s - 1/2)^r e^{...}
        poly = np.polynomial.polynomial.polypow([-0.5, 1.0], r)
        mom = sum(cf * _triangle.triangle_moment(p, 0, A, Bt) for p, cf in enumerate(poly))
        return pref * mom

    def g_term(avec):
        r = int(avec.sum())
        return (1j * hbar) ** r * np.prod(k ** avec, axis=1) * g_derivative(r)

    C = B.coeffs
    out = np.einsum("mjl,j,l->m", C, y, x - y) * g_term(a)
    for l in range(B.n):
        if a[l] >= 1:
            lower = a.copy()
            lower[l] -= 1
            # d_{x_l} hits the factor (x - y)_k; only k = l survives
            out = out + a[l] * np.einsum("mj,j->m", C[:, :, l], y) * g_term(lower)
    return out * np.prod((1j * k) ** alpha, axis=1)


def _multi_indices(n, max_order):
    return [np.array(t) for t in itertools.product(range(max_order + 1), repeat=n)
            if sum(t) <= max_order]


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def _exp_phase_derivative_sup(B, hbar, x, y, a, alpha, pts) -> float:
    """Grid sup of ``|d_x^a delta^alpha exp(-i hbar Lambda_hbar(x, y))|`` (Faa di Bruno)."""
    ops = [("x", l) for l in range(B.n) for _ in range(a[l])] + \
          [("w", l) for l in range(B.n) for _ in range(alpha[l])]
    phase = np.exp(1j * pts @ B.modes.T)
    cache = {}

    def block_values(block):
        key = tuple(sorted(block))
        if key not in cache:
            av = np.zeros(B.n, dtype=int)
            alv = np.zeros(B.n, dtype=int)
            for i in block:
                kind, l = ops[i]
                (av if kind == "x" else alv)[l] += 1
            cache[key] = -1j * hbar * np.real(phase @ _leibniz_flux_derivative(B, hbar, x, y, av, alv))
        return cache[key]

    lam = block_values(())
    total = np.zeros(len(pts), dtype=complex)
    for part in _set_partitions(list(range(len(ops)))):
        term = np.ones(len(pts), dtype=complex)
        for block in part:
            term = term * block_values(block)
        total = total + term
    return float(np.abs(np.exp(lam) * total).max())


def _fit_dominating(features, values):
    """Nonnegative ``K`` minimizing ``sum(features @ K)`` subject to ``features @ K >= values``."""
    res = optimize.linprog(features.sum(axis=0), A_ub=-features, b_ub=-(values + 1e-12),
                           bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericError(f"polynomial domination fit failed: {res.message}")
    return res.x


def flux_derivative_constants(B: MagneticField, a, alpha):
    """Constants ``(C1[j], C2[j, k])`` with
    ``||d_x^a delta^alpha Lambda_hbar(x, y)|| <= sum C1_j |y_j| + sum C2_jk |y_j| |x_k - y_k|``.

    Valid for every ``hbar`` in (0, 1]: the derivatives bring down
    ``hbar k (s - 1/2)`` factors with ``|s - 1/2| <= 1/2`` on a triangle of
    area ``1/2``, and one ``x``-derivative may hit the linear factor.
    """
    a = np.asarray(a, dtype=int)
    alpha = np.asarray(alpha, dtype=int)
    k = np.abs(B.wavevectors)
    absC = np.abs(B.coeffs)
    r = int(a.sum())
    kal = np.prod(k ** alpha, axis=1)
    c2 = np.einsum("m,mjl->jl", kal * np.prod(k ** a, axis=1) * 0.5 ** (r + 1), absC)
    c1 = np.zeros(B.n)
    for l in range(B.n):
        if a[l] >= 1:
            lower = a.copy()
            lower[l] -= 1
            c1 += a[l] * np.einsum("m,mj->j", kal * np.prod(k ** lower, axis=1) * 0.5 ** r,
                                   absC[:, :, l])
    return c1, c2


def _estimate_polynomial(B, a, alpha, ay, axy):
    c1, c2 = flux_derivative_constants(B, a, alpha)
    return c1 @ ay + ay @ c2 @ axy


def phase_derivative_bound(B: MagneticField, a, alpha, x, y) -> float:
    """Polynomial bound of ``||d_x^a delta^alpha exp(-i hbar Lambda_hbar(x, y))||``.

    Faa di Bruno writes the derivative as ``exp(-i hbar Lambda)`` times a sum
    over set partitions of products of derivatives of ``-i hbar Lambda``;
    each factor is bounded by :func:`flux_derivative_constants`, so the
    bound is a polynomial with nonnegative coefficients of degree at most
    ``2(|a| + |alpha|)`` in ``|y_j|`` and ``|x_k - y_k|``.
    """
    ops = [("x", l) for l in range(B.n) for _ in range(a[l])] + \
          [("w", l) for l in range(B.n) for _ in range(alpha[l])]
    ay, axy = np.abs(np.asarray(y, float)), np.abs(np.asarray(x, float) - np.asarray(y, float))
    total = 0.0
    for part in _set_partitions(list(range(len(ops)))):
        term = 1.0
        for block in part:
            av = np.zeros(B.n, dtype=int)
            alv = np.zeros(B.n, dtype=int)
            for i in block:
                kind, l = ops[i]
                (av if kind == "x" else alv)[l] += 1
            term *= _estimate_polynomial(B, av, alv, ay, axy)
        total += term
    return float(total)


def lemma3_check(B: MagneticField, samples, omega_grid: OmegaGrid | None = None,
                 polynomial_orders: int = 2, polynomial_samples: int | None = None) -> Lemma3Report:
    """Check the flux estimates on samples ``(x, y, hbar, tau)``.

    The three hbar-uniform inequalities are checked for every sample with
    coefficient l1 norms on both sides, which makes the left side an upper
    bound and the right side exact for the l1 norm.

    The existence statements for ``d_x^a delta^alpha Lambda_hbar`` and for
    the derivatives of ``exp(-i hbar Lambda_hbar)`` are checked
    constructively for ``|a|, |alpha| <= polynomial_orders`` on the first
    ``polynomial_samples`` samples: the explicit witnesses of
    :func:`flux_derivative_constants` and :func:`phase_derivative_bound` must
    dominate the computed left sides.  The smallest dominating nonnegative
    coefficients on the samples are also fitted by linear programming and
    stored in ``polynomial_fits`` for comparison.
    """
    samples = [(np.asarray(x, float), np.asarray(y, float), float(h), float(tau))
               for x, y, h, tau in samples]
    for _, _, h, tau in samples:
        _check_hbar(h)
        _check_hbar(tau, "tau")
    report = Lemma3Report(len(samples))
    worst = {"flux": 0.0, "first_derivative": 0.0, "second_derivative": 0.0}
    for s in samples:
        x, y, h, tau = s
        eps = h * tau
        rhs = _uniform_bounds(B, x, y)
        for order, kind in enumerate(worst):
            lhs = float(np.abs(scaled_flux_coeffs(B, eps, x, y, order)).sum())
            if lhs > rhs[order] * (1 + 1e-12) + 1e-300:
                report.violations.append((kind, s, lhs, rhs[order]))
            if rhs[order] > 0:
                worst[kind] = max(worst[kind], lhs / rhs[order])
    report.worst_ratio = worst
    if polynomial_orders >= 0 and samples:
        subset = samples[:polynomial_samples] if polynomial_samples else samples
        _polynomial_checks(B, subset, omega_grid or OmegaGrid(B.model.d, 16),
                           polynomial_orders, report)
    return report


def _polynomial_checks(B, samples, omega_grid, max_order, report):
    n = B.n
    pts = omega_grid.points
    ay = np.array([np.abs(s[1]) for s in samples])
    axy = np.array([np.abs(s[0] - s[1]) for s in samples])
    lin = np.hstack([ay, np.einsum("pj,pk->pjk", ay, axy).reshape(len(samples), -1)])
    for a in _multi_indices(n, max_order):
        for alpha in _multi_indices(n, max_order):
            deg = 2 * int(a.sum() + alpha.sum())
            monos = [(b, c) for b in _multi_indices(n, deg) for c in _multi_indices(n, deg)
                     if b.sum() + c.sum() <= deg]
            poly = np.array([[np.prod(ay[p] ** b) * np.prod(axy[p] ** c) for b, c in monos]
                             for p in range(len(samples))])
            lhs_flux = np.array([np.abs(_leibniz_flux_derivative(B, s[2], s[0], s[1], a, alpha)).sum()
                                 for s in samples])
            rhs_flux = np.array([_estimate_polynomial(B, a, alpha, ay[p], axy[p])
                                 for p in range(len(samples))])
            lhs_phase = np.array([_exp_phase_derivative_sup(B, s[2], s[0], s[1], a, alpha, pts)
                                  for s in samples])
            rhs_phase = np.array([phase_derivative_bound(B, a, alpha, s[0], s[1]) for s in samples])
            tag = f"a={tuple(a.tolist())}:alpha={tuple(alpha.tolist())}"
            for kind, feats, lhs, rhs in (("flux_derivative", lin, lhs_flux, rhs_flux),
                                          ("phase_derivative", poly, lhs_phase, rhs_phase)):
                key = f"{kind}:{tag}"
                report.polynomial_fits[key] = _fit_dominating(feats, lhs)
                for p in np.nonzero(lhs > rhs * (1 + 1e-12) + 1e-14)[0]:
                    report.violations.append((key, samples[p], float(lhs[p]), float(rhs[p])))


# -- gauge and Stokes ---------------------------------------------------------

def vector_potential_transverse(B: MagneticField, omega, x) -> np.ndarray:
    """Transverse-gauge potential ``A_omega(x)_k = sum_j x_j int_0^1 s B^{jk}(theta_{sx} omega) ds``.

    With this sign the circulation around ``<a, b, c>`` equals the flux.
    ``x`` may be batched as (..., n); the result has the same shape.
    """
    x = _as_points(x, B.n)
    omega = np.asarray(omega, dtype=float)
    kx = np.tensordot(B.wavevectors, x, axes=(1, -1))  # (K, ...)
    weight = np.exp(1j * (B.modes @ omega)).reshape((-1,) + (1,) * (x.ndim - 1)) \
        * _triangle.power_moment(1, kx)
    # A_k = sum_m weight_m sum_j x_j C_m^{jk}
    out = np.einsum("m...,mjk,...j->...k", weight, B.coeffs, x)
    return np.real(out)


def stokes_defect(B: MagneticField, omega, a, b, c, tol: float = 1e-8) -> float:
    """``|flux through <a,b,c> - circulation of A_omega along [a,b], [b,c], [c,a]|``.

    Raises
    ------
    NumericError
        If a segment quadrature misses ``tol``.
    """
    a, b, c = (_as_points(t, B.n) for t in (a, b, c))
    circulation = 0.0
    for p, q in ((a, b), (b, c), (c, a)):
        d = q - p

        def integrand(t, p=p, d=d):
            return float(vector_potential_transverse(B, omega, p + t * d) @ d)

        val, err = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)
        if err > tol:
            raise NumericError(f"segment circulation quadrature error {err:.3g} exceeds {tol}")
        circulation += val
    flux = triangle_flux(B, a, b, c)(omega)
    return float(abs(flux - circulation))

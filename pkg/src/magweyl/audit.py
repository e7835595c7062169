"""Deformation-quantization audit: norm scans, axiom defect sweeps and slope fits.

The quantization maps are the inclusions of the symbol class, so the axioms
become statements about products of the same symbols at different ``hbar``.
All algebra-level norms are L1 norms (upper surrogates); representation
spectral norms give the matching lower channel.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .algebra import (EPS, compose_magnetic, compose_zero, expansion_remainder, jacobi_defect,
                      l1_norm, moyal_magnetic, poisson_X, poisson_Xi)
from .config import RunConfig, worker_count
from .errors import InputError
from .flux import MagneticField, cocycle, cocycle_identity_defect, validate_field
from .hull import HullFunction, OmegaGrid
from .representation import norm_estimate, representation_grid
from .symbols import AtomSum, GridSpec, Symbol, as_sampled, inverse_partial_fourier, seminorm

FOURIER_CONVENTION = "F f(xi) = int exp(+i x.xi) f(x) dx; inverse carries (2 pi)^-n"

# slope name -> (record column, budget column, hbar powers applied to value and budget)
SLOPE_COLUMNS = {
    "first_order": ("first_order_defect", "remainder_tolerance", 0, 2),
    "second_order": ("remainder_norm", "remainder_tolerance", 2, 2),
    "von_neumann": ("vn_defect", "vn_tolerance", 0, 0),
    "dirac": ("dirac_defect", "dirac_tolerance", 0, 0),
}


class Defect(float):
    """A defect value with its rounding budget and a cancellation flag."""

    def __new__(cls, value, tolerance=0.0, reliable=True):
        obj = super().__new__(cls, value)
        obj.tolerance = float(tolerance)
        obj.reliable = bool(reliable)
        return obj


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares slope of ``log value`` against ``log hbar``.

    ``residual`` is the root-mean-square of the log residuals; ``dropped``
    lists the ``hbar`` values whose value was not positive.
    """

    slope: float
    residual: float
    dropped: tuple = ()


def slope_fit(values, hbars) -> SlopeFit:
    """Fit ``log(value) = slope * log(hbar) + c``.

    Raises
    ------
    InputError
        If fewer than three positive points remain.
    """
    values = np.asarray(values, dtype=float)
    hbars = np.asarray(hbars, dtype=float)
    if values.shape != hbars.shape:
        raise InputError("values and hbars differ in length")
    keep = np.isfinite(values) & (values > 0) & (hbars > 0)
    dropped = tuple(float(h) for h in hbars[~keep])
    if keep.sum() < 3:
        raise InputError("slope fit needs at least three positive points")
    lx, ly = np.log(hbars[keep]), np.log(values[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + intercept)
    return SlopeFit(float(slope), float(np.sqrt(np.mean(res ** 2))), dropped)


def _check_sweep(hbars):
    hb = [float(h) for h in hbars]
    if not hb or any(not (0.0 < h <= 1.0) for h in hb):
        raise InputError("every hbar must lie in (0, 1]")
    if any(b >= a for a, b in zip(hb, hb[1:])):
        raise InputError("hbar values must be strictly decreasing")
    return hb


# -- defects --------------------------------------------------------------------

def _subtraction_budget(*parts) -> float:
    return 64 * EPS * sum(float(np.abs(p.values).max(initial=0.0)) for p in parts)


def von_neumann_defect(B: MagneticField, hbar: float, Phi: Symbol, Psi: Symbol,
                       grid: GridSpec | None = None, omega_grid: OmegaGrid | None = None,
                       products=None) -> Defect:
    """``|| (Phi o Psi + Psi o Phi)/2 - Phi o_0 Psi ||_L1``.

    ``products`` may carry ``(Phi o Psi, Psi o Phi, Phi o_0 Psi)`` computed elsewhere.
    """
    ab, ba, lead = products or _products(B, hbar, Phi, Psi, grid, omega_grid)
    D = (ab + ba) * 0.5 - lead
    g = D.grid
    tol = (ab.tolerance + ba.tolerance + lead.tolerance + _subtraction_budget(ab, ba, lead)) \
        * g.size * g.weight
    value = l1_norm(D)
    return Defect(value, tol, tol <= 0.1 * value if value > 0 else tol == 0.0)


def dirac_defect(B: MagneticField, hbar: float, Phi: Symbol, Psi: Symbol,
                 grid: GridSpec | None = None, omega_grid: OmegaGrid | None = None,
                 products=None, bracket=None) -> Defect:
    """``|| (i/hbar)(Phi o Psi - Psi o Phi) - {Phi, Psi} ||_L1``.

    Flagged unreliable when the subtraction's rounding budget exceeds 10 %
    of the value.
    """
    ab, ba, _ = products or _products(B, hbar, Phi, Psi, grid, omega_grid)
    br = bracket if bracket is not None else poisson_X(B, Phi, Psi, ab.grid, ab.omega_grid)
    D = (ab - ba) * (1j / hbar) - br
    g = D.grid
    tol = ((ab.tolerance + ba.tolerance + _subtraction_budget(ab, ba)) / hbar + br.tolerance) \
        * g.size * g.weight
    value = l1_norm(D)
    return Defect(value, tol, tol <= 0.1 * value if value > 0 else tol == 0.0)


def _products(B, hbar, Phi, Psi, grid, omega_grid, lead=None):
    ab = compose_magnetic(B, hbar, Phi, Psi, omega_grid, grid)
    ba = compose_magnetic(B, hbar, Psi, Phi, ab.omega_grid, ab.grid)
    if lead is None:
        lead = compose_zero(Phi, Psi, ab.grid, ab.omega_grid)
    return ab, ba, lead


# -- sweeps ---------------------------------------------------------------------

@dataclass
class SweepRecord:
    hbar: float
    norm_lower: float = float("nan")
    norm_upper: float = float("nan")
    vn_defect: float = float("nan")
    dirac_defect: float = float("nan")
    remainder_norm: float = float("nan")
    first_order_defect: float = float("nan")
    reliable: bool = True
    vn_tolerance: float = 0.0
    dirac_tolerance: float = 0.0
    remainder_tolerance: float = 0.0


@dataclass
class AuditSweep:
    """Per-``hbar`` records with fitted slopes and scan flags."""

    hbars: tuple
    records: list
    slopes: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        self.hbars = tuple(_check_sweep(self.hbars))

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def scaled_column(self, slope_name) -> tuple:
        """Values and rounding budgets of the sequence behind a named slope."""
        col, tol_col, value_power, tol_power = SLOPE_COLUMNS[slope_name]
        hb = np.asarray(self.hbars)
        return self.column(col) * hb ** value_power, self.column(tol_col) * hb ** tol_power

    def to_json(self) -> dict:
        return {"hbars": list(self.hbars), "records": [asdict(r) for r in self.records],
                "slopes": {k: asdict(v) for k, v in self.slopes.items()}, "flags": list(self.flags)}


def resolved(values, tolerances) -> bool:
    """True when some value exceeds its rounding budget.

    A sequence that stays within its budget is zero to working precision;
    slopes and monotonicity are then undefined and the checks built on them
    pass vacuously.
    """
    values = np.asarray(values, dtype=float)
    return bool(np.any(values > np.asarray(tolerances, dtype=float)))


def discontinuity_flags(values, hbars, factor: float = 3.0) -> list:
    """Indices ``i`` where the jump ``values[i+1] - values[i]`` exceeds ``factor`` times
    the larger neighbouring secant trend (a heuristic, never a proof)."""
    v = np.asarray(values, dtype=float)
    h = np.asarray(hbars, dtype=float)
    if len(v) < 3:
        return []
    floor = 1e-8 * max(1.0, float(np.abs(v).max()))
    sec = np.diff(v) / np.diff(h)
    flags = []
    for i in range(len(v) - 1):
        neighbours = [abs(sec[j]) for j in (i - 1, i + 1) if 0 <= j < len(sec)]
        trend = max(neighbours) * (h[i + 1] - h[i])
        if abs(v[i + 1] - v[i]) > factor * abs(trend) + floor:
            flags.append(i)
    return flags


def rieffel_scan(B: MagneticField, Phi: Symbol, hbars, omega_samples, grid: GridSpec) -> AuditSweep:
    """Representation lower bounds and L1 upper bounds of ``||Phi||_hbar`` across the sweep.

    ``grid`` is the symbol grid; each ``hbar`` uses its scaled representation grid.
    """
    hbars = _check_sweep(hbars)
    records = []
    for hb in hbars:
        br = norm_estimate(B, hb, Phi, omega_samples, representation_grid(grid, hb))
        records.append(SweepRecord(hb, norm_lower=br.lower, norm_upper=br.upper))
    sweep = AuditSweep(tuple(hbars), records)
    sweep.flags = [f"norm jump between hbar={hbars[i]} and hbar={hbars[i + 1]}"
                   for i in discontinuity_flags(sweep.column("norm_lower"), hbars)]
    return sweep


def defect_sweep(B: MagneticField, Phi: Symbol, Psi: Symbol, hbars, grid: GridSpec,
                 omega_grid: OmegaGrid, workers: int | None = None) -> tuple:
    """Expansion tiers and axiom defects across the sweep, sharing every product.

    Returns the :class:`AuditSweep` and the per-``hbar`` products ``Phi o Psi``.
    """
    hbars = _check_sweep(hbars)
    lead = compose_zero(Phi, Psi, grid, omega_grid)
    bracket = poisson_X(B, Phi, Psi, grid, omega_grid)

    def run(hb):
        rep = expansion_remainder(B, hb, Phi, Psi, omega_grid, grid, leading=lead, bracket=bracket)
        ba = compose_magnetic(B, hb, Psi, Phi, omega_grid, grid)
        prods = (rep.product, ba, lead)
        vn = von_neumann_defect(B, hb, Phi, Psi, products=prods)
        dd = dirac_defect(B, hb, Phi, Psi, products=prods, bracket=bracket)
        rec = SweepRecord(hb, vn_defect=float(vn), dirac_defect=float(dd),
                          remainder_norm=rep.remainder_norm, first_order_defect=rep.first_order_defect,
                          reliable=rep.reliable and dd.reliable, vn_tolerance=vn.tolerance,
                          dirac_tolerance=dd.tolerance, remainder_tolerance=rep.tolerance)
        return rec, rep.product

    with ThreadPoolExecutor(max_workers=workers or worker_count()) as pool:
        results = list(pool.map(run, hbars))
    sweep = AuditSweep(tuple(hbars), [r for r, _ in results])
    if len(hbars) >= 3:
        for name in SLOPE_COLUMNS:
            vals, tols = sweep.scaled_column(name)
            if resolved(vals, tols):
                sweep.slopes[name] = slope_fit(vals, hbars)
    return sweep, [p for _, p in results]


def realization_defects(B: MagneticField, hbar: float, Phi: AtomSum, Psi: AtomSum,
                        grid: GridSpec, omega_grid: OmegaGrid) -> tuple:
    """Dirac defect computed in the ``X*`` realization and transported back, next to the
    ``X`` value and the grid tolerance separating them.

    The ``X*`` path uses the magnetic Moyal product and the phase-space bracket
    sampled on the dual grid.  The products agree with the ``X`` path up to
    rounding, so the two values differ by at most the L1 norm of the bracket's
    transport error, which is returned as the tolerance.
    """
    f, g = Phi.fourier(), Psi.fourier()
    fg = moyal_magnetic(B, hbar, f, g, omega_grid, grid)
    gf = moyal_magnetic(B, hbar, g, f, omega_grid, grid)
    br_xi = as_sampled(poisson_Xi(B, f, g), grid.dual(), omega_grid)
    xi_value = l1_norm(inverse_partial_fourier((fg - gf) * (1j / hbar) - br_xi))
    br_x = poisson_X(B, Phi, Psi, grid, omega_grid)
    x_value = dirac_defect(B, hbar, Phi, Psi, grid, omega_grid, bracket=br_x)
    transport = l1_norm(inverse_partial_fourier(br_xi) - br_x)
    tol = transport + x_value.tolerance + 1e-12 * float(x_value)
    return float(x_value), xi_value, tol


# -- report -----------------------------------------------------------------------

@dataclass
class CheckRow:
    name: str
    hbar: float | None
    defect: float
    tolerance: float
    passed: bool


def _row(name, hbar, defect, tolerance, passed):
    return CheckRow(name, None if hbar is None else float(hbar), float(defect), float(tolerance),
                    bool(passed))


def _band(fit: SlopeFit, centre, width):
    return abs(fit.slope - centre) <= width


def _slope_row(doc, sweep, name, centre, width):
    """Slope check; passes vacuously when the sequence is zero to working precision."""
    fit = sweep.slopes.get(name)
    if fit is None:
        doc["notes"].append(f"{name} slope not fitted: defects within their rounding budget")
        return _row(f"{name}_slope", None, 0.0, width, True)
    return _row(f"{name}_slope", None, fit.slope, width, _band(fit, centre, width))


def _is_monotone_decreasing(vals) -> bool:
    return bool(np.all(np.diff(vals) < 0))


def audit_report(config: RunConfig) -> dict:
    """Run the configured checks and assemble the report document.

    The document holds ``rows`` (one per check: name, hbar, defect,
    tolerance, pass), the sweeps, the slopes and an overall ``passed`` flag.
    """
    B = config.field
    Phi, Psi = config.Phi, config.Psi
    grid, og = config.grid, config.omega_grid
    hbars = list(config.hbar_list)
    rng = np.random.default_rng(config.seed)
    rows = []
    doc = {"config_digest": config.digest(), "seed": config.seed, "hbar_list": hbars,
           "fourier_convention": FOURIER_CONVENTION, "notes": []}
    checks = config.checks

    if "field" in checks:
        rep = validate_field(B)
        doc["field"] = rep.to_json()
        rows.append(_row("field_antisymmetry", None, rep.antisymmetry_defect, 1e-12, rep.antisymmetric))
        rows.append(_row("field_closedness", None, rep.closedness_defect, 1e-12, rep.closed))

    if "cocycle" in checks:
        samples = int(config.option("cocycle_samples", 10))
        cgrid = OmegaGrid(config.model.d, int(config.option("cocycle_omega_points", 8)))
        zero = np.zeros(config.model.n)
        for hb in hbars:
            worst = norm_worst = 0.0
            for _ in range(samples):
                x, y, z = rng.normal(size=(3, config.model.n))
                worst = max(worst, cocycle_identity_defect(B, hb, x, y, z, cgrid))
                norm_worst = max(norm_worst,
                                 float(np.abs(cocycle(B, hb, x, zero, cgrid) - 1).max()),
                                 float(np.abs(cocycle(B, hb, zero, y, cgrid) - 1).max()))
            rows.append(_row("cocycle_identity", hb, worst, 1e-9, worst <= 1e-9))
            rows.append(_row("cocycle_normalization", hb, norm_worst, 1e-12, norm_worst <= 1e-12))

    if "jacobi" in checks:
        n, d = config.model.n, config.model.d
        hull = HullFunction.constant(config.model, 1.0) \
            + 0.25 * HullFunction.cos_mode(config.model, np.ones(d, dtype=int))
        third = AtomSum.gaussian(config.model, hull=hull, gamma=0.55, center=0.3 * rng.normal(size=n),
                                 momentum=0.3 * rng.normal(size=n))
        f, g, h = Phi.fourier(), Psi.fourier(), third.fourier()
        omegas = rng.uniform(0, 2 * np.pi, size=(8, d))
        xis = rng.normal(size=(32, n))
        jd = jacobi_defect(B, f, g, h, omegas, xis)
        rows.append(_row("jacobi", None, jd, 1e-6, jd <= 1e-6))

    sweep = products = None
    if {"expansion", "axioms", "stability"} & set(checks):
        sweep, products = defect_sweep(B, Phi, Psi, hbars, grid, og)

    if "expansion" in checks:
        rem = sweep.column("remainder_norm")
        rem_tol = sweep.column("remainder_tolerance")
        doc["remainder_bound"] = float(np.max(rem))
        for r in sweep.records:
            within = r.remainder_norm <= r.remainder_tolerance
            rows.append(_row("remainder_norm", r.hbar, r.remainder_norm, r.remainder_tolerance,
                             np.isfinite(r.remainder_norm) and (r.reliable or within)))
        if len(hbars) >= 3:
            rows.append(_slope_row(doc, sweep, "first_order", 1.0, 0.15))
            rows.append(_slope_row(doc, sweep, "second_order", 2.0, 0.2))
            if resolved(rem, rem_tol):
                growth = slope_fit(rem, hbars)
                rows.append(_row("remainder_growth_slope", None, growth.slope, 0.2, growth.slope >= -0.2))
            else:
                rows.append(_row("remainder_growth_slope", None, 0.0, 0.2, True))

    if "axioms" in checks:
        for r in sweep.records:
            rows.append(_row("von_neumann_defect", r.hbar, r.vn_defect, r.vn_tolerance,
                             np.isfinite(r.vn_defect)))
            rows.append(_row("dirac_defect", r.hbar, r.dirac_defect, r.dirac_tolerance,
                             np.isfinite(r.dirac_defect)))
        if len(hbars) >= 3:
            rows.append(_slope_row(doc, sweep, "von_neumann", 2.0, 0.2))
            rows.append(_slope_row(doc, sweep, "dirac", 1.0, 0.2))
        for name, col, tol_col in (("von_neumann_monotone", "vn_defect", "vn_tolerance"),
                                   ("dirac_monotone", "dirac_defect", "dirac_tolerance")):
            vals = sweep.column(col)
            ok = _is_monotone_decreasing(vals) or not resolved(vals, sweep.column(tol_col))
            rows.append(_row(name, None, 0.0, 0.0, ok))

    if "stability" in checks:
        order = int(config.option("seminorm_order", 1))
        idx = [np.array(m) for m in np.ndindex(*([order + 1] * config.model.n)) if sum(m) <= order]
        table = []
        for P in products:
            table.append(max(seminorm(P, a, al, be).value for a in idx for al in idx for be in idx))
        table = np.array(table)
        ratio = float(table.max() / table[0]) if table[0] > 0 else float("inf")
        doc["seminorm_sweep"] = table.tolist()
        rows.append(_row("product_seminorm_ratio", None, ratio, 10.0,
                         bool(np.all(np.isfinite(table))) and ratio <= 10.0))

    if "rieffel" in checks:
        count = int(config.option("omega_samples", 16))
        omegas = rng.uniform(0, 2 * np.pi, size=(count, config.model.d))
        scan = rieffel_scan(B, Phi, hbars, omegas, grid)
        doc["rieffel_scan"] = scan.to_json()
        for r in scan.records:
            rows.append(_row("norm_sandwich", r.hbar, r.norm_upper - r.norm_lower, 0.0,
                             r.norm_lower <= r.norm_upper))
        rows.append(_row("norm_continuity_flags", None, len(scan.flags), 0.0, not scan.flags))

    if "realization" in checks:
        hb = hbars[0]
        rgrid = GridSpec.from_json(config.option("realization_grid", grid.to_json()))
        x_val, xi_val, tol = realization_defects(B, hb, Phi, Psi, rgrid, og)
        gap = abs(x_val - xi_val)
        doc["realization"] = {"hbar": hb, "x_defect": x_val, "xi_defect": xi_val,
                              "tolerance": tol, "grid": rgrid.to_json()}
        rows.append(_row("realization_consistency", hb, gap, tol, gap <= tol))

    if sweep is not None:
        doc["sweep"] = sweep.to_json()
    doc["rows"] = [asdict(r) for r in rows]
    doc["passed"] = all(r.passed for r in rows)
    return doc


def format_number(v) -> str:
    """Seventeen significant digits in scientific notation; blank for missing values."""
    if v is None:
        return ""
    return format(float(v), ".16e")


def report_csv(doc: dict) -> str:
    """Flat CSV with one row per check: name, hbar, defect, tolerance, pass."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "hbar", "defect", "tolerance", "pass"])
    for r in doc["rows"]:
        w.writerow([r["name"], format_number(r["hbar"]), format_number(r["defect"]),
                    format_number(r["tolerance"]), "true" if r["passed"] else "false"])
    return buf.getvalue()


def report_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, default=float)

"""Command-line front end.

``magweyl <validate|flux|compose|expand|represent|audit> --config PATH [--strict] [--seed N] [--out PREFIX]``

``--hbar``, ``--omega`` and ``--symbol`` override the sweep, the hull grid
and the symbol pair of the config.

Exit status: 0 on success, 1 when ``--strict`` finds a defective field,
2 on malformed or invalid configuration, 3 on numerical failure.  Artifacts
are named ``PREFIX_<subcommand>_<config hash>.<ext>``; on failure the
artifacts of the run are removed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config
from .errors import InputError, MagweylError

log = logging.getLogger("magweyl")

SUBCOMMANDS = ("validate", "flux", "compose", "expand", "represent", "audit")


class ConfigError(Exception):
    """Configuration could not be read; carries the message to print."""


def load_config(path: str, seed: int | None = None, out: str | None = None,
                overrides: dict | None = None) -> RunConfig:
    """Read and validate a JSON config.

    ``seed``, ``out`` and the entries of ``overrides`` (top-level config
    keys) replace the values in the file.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path} at line {exc.lineno} column {exc.colno}: {exc.msg}") \
            from exc
    if isinstance(obj, dict):
        if seed is not None:
            obj["seed"] = seed
        if out is not None:
            obj["output"] = out
        obj.update(overrides or {})
    try:
        return parse_config(obj)
    except InputError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc


def _fmt(v) -> str:
    from .audit import format_number
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_number(v)
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


class Artifacts:
    """Collects files written by one run so that a failure can remove them."""

    def __init__(self, config: RunConfig, command: str):
        prefix = config.output
        sep = "" if prefix.endswith(("/", "_")) else "_"
        self.stem = f"{prefix}{sep}{command}_{config.digest()}"
        self.written: list[Path] = []

    def write(self, ext: str, text: str) -> Path:
        path = Path(f"{self.stem}.{ext}")
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".part")
        self.written.append(tmp)
        tmp.write_text(text)
        tmp.replace(path)
        self.written[-1] = path
        return path

    def remove(self):
        for p in self.written:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        self.written.clear()


def cmd_validate(config: RunConfig, args, art: Artifacts) -> int:
    from .flux import validate_field
    from .hull import stabilizer_report

    rep = validate_field(config.field)
    stab = stabilizer_report(config.model)
    doc = {"field": rep.to_json(), "stabilizer": stab.describe(), "free": stab.free,
           "conclusive": stab.conclusive, "config_digest": config.digest()}
    art.write("json", json.dumps(doc, indent=2, sort_keys=True))
    print(f"antisymmetry defect {rep.antisymmetry_defect:.3e}, closedness defect {rep.closedness_defect:.3e}")
    print(f"action: {stab.describe()}")
    if args.strict and not (rep.antisymmetric and rep.closed):
        print("field is not a closed antisymmetric 2-form", file=sys.stderr)
        return 1
    return 0


def cmd_flux(config: RunConfig, args, art: Artifacts) -> int:
    from .flux import triangle_flux, triangle_flux_oracle

    rng = np.random.default_rng(config.seed)
    n, d = config.model.n, config.model.d
    count = int(config.option("flux_samples", 10))
    oracle = bool(config.option("flux_oracle", True))
    header = ["index"] + [f"{p}{j + 1}" for p in "abc" for j in range(n)] \
        + [f"omega{j + 1}" for j in range(d)] + ["flux"] + (["oracle", "abs_diff"] if oracle else [])
    rows = []
    for i in range(count):
        a, b, c = rng.normal(size=(3, n))
        w = rng.uniform(0, 2 * np.pi, size=d)
        val = float(triangle_flux(config.field, a, b, c)(w))
        row = [i, *a, *b, *c, *w, val]
        if oracle:
            ref = triangle_flux_oracle(config.field, a, b, c, w)
            row += [ref, abs(val - ref)]
        rows.append(row)
    art.write("csv", _csv(header, rows))
    return 0


def cmd_compose(config: RunConfig, args, art: Artifacts) -> int:
    from .algebra import compose_magnetic, compose_zero, l1_norm

    lead = compose_zero(config.Phi, config.Psi, config.grid, config.omega_grid)
    rows = [[0.0, l1_norm(lead), lead.tolerance, 0.0]]
    for hb in config.hbar_list:
        P = compose_magnetic(config.field, hb, config.Phi, config.Psi, config.omega_grid, config.grid)
        rows.append([hb, l1_norm(P), P.tolerance, l1_norm(P - lead)])
    art.write("csv", _csv(["hbar", "product_l1", "tolerance", "distance_to_untwisted_l1"], rows))
    return 0


def cmd_expand(config: RunConfig, args, art: Artifacts) -> int:
    from .algebra import compose_zero, expansion_remainder, poisson_X
    from .audit import slope_fit

    lead = compose_zero(config.Phi, config.Psi, config.grid, config.omega_grid)
    br = poisson_X(config.field, config.Phi, config.Psi, config.grid, config.omega_grid)
    reports = [expansion_remainder(config.field, hb, config.Phi, config.Psi, config.omega_grid,
                                   config.grid, leading=lead, bracket=br) for hb in config.hbar_list]
    rows = [[r.hbar, r.first_order_defect, r.remainder_norm, r.reliable] for r in reports]
    art.write("csv", _csv(["hbar", "first_order_defect", "remainder_norm", "reliable"], rows))
    doc = {"reports": [r.to_json() for r in reports], "config_digest": config.digest()}
    if len(reports) >= 3:
        hb = np.array(config.hbar_list)
        doc["first_order_slope"] = slope_fit([r.first_order_defect for r in reports], hb).slope
        doc["second_order_slope"] = slope_fit([r.remainder_norm * h ** 2 for r, h in zip(reports, hb)],
                                              hb).slope
    art.write("json", json.dumps(doc, indent=2, sort_keys=True))
    return 0


def cmd_represent(config: RunConfig, args, art: Artifacts) -> int:
    from .representation import (covariance_check, equivariance_defect, morphism_defect,
                                 norm_estimate, op_matrix, representation_grid)

    rng = np.random.default_rng(config.seed)
    B, Phi, Psi = config.field, config.Phi, config.Psi
    n, d = config.model.n, config.model.d
    omega = rng.uniform(0, 2 * np.pi, size=d)
    f = Phi.fourier()
    reach = max(1, config.grid.N // 8)
    rows = []
    for hb in config.hbar_list:
        g = representation_grid(config.grid, hb)
        steps = rng.integers(-reach, reach + 1, size=(3, n))
        x = steps[0] * g.h
        cov = covariance_check(B, hb, omega, [(steps[1] * config.grid.h, steps[2] * config.grid.h, None)], g)
        lock = op_matrix(B, hb, omega, f, g).entries - op_matrix(B, hb, omega, f, g, "quadrature").entries
        bracket = norm_estimate(B, hb, Phi, omega[None, :], g)
        rows.append([hb, bracket.lower, bracket.upper,
                     morphism_defect(B, hb, omega, Phi, Psi, g, symbol_grid=config.grid,
                                     omega_grid=config.omega_grid),
                     equivariance_defect(B, hb, omega, x, f, g), cov.max_product_defect,
                     float(np.abs(lock).max())])
    art.write("csv", _csv(["hbar", "norm_lower", "norm_upper", "morphism_defect", "equivariance_defect",
                           "covariance_defect", "convention_lock"], rows))
    return 0


def cmd_audit(config: RunConfig, args, art: Artifacts) -> int:
    from .audit import audit_report, report_csv, report_json

    doc = audit_report(config)
    art.write("json", report_json(doc))
    art.write("csv", report_csv(doc))
    failed = [r["name"] for r in doc["rows"] if not r["passed"]]
    print("audit " + ("passed" if not failed else "failed: " + ", ".join(sorted(set(failed)))))
    return 0


COMMANDS = {"validate": cmd_validate, "flux": cmd_flux, "compose": cmd_compose,
            "expand": cmd_expand, "represent": cmd_represent, "audit": cmd_audit}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="magweyl", description="Magnetic Weyl calculus on a hull.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--strict", action="store_true", help="fail when the field is defective")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="artifact path prefix")
    p.add_argument("--hbar", type=float, nargs="+", default=None, help="replace the hbar sweep")
    p.add_argument("--omega", type=int, default=None, help="hull grid points per torus axis")
    p.add_argument("--symbol", nargs=2, default=None, metavar=("FIRST", "SECOND"),
                   help="names of the two symbols to use")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("MAGWEYL_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    try:
        overrides = {key: val for key, val in (("hbar_list", args.hbar), ("omega_grid", args.omega),
                                               ("pair", args.symbol)) if val is not None}
        config = load_config(args.config, args.seed, args.out, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    art = Artifacts(config, args.command)
    try:
        return COMMANDS[args.command](config, args, art)
    except InputError as exc:
        art.remove()
        print(f"error in {args.command}: {exc}", file=sys.stderr)
        return 2
    except (MagweylError, ArithmeticError) as exc:
        art.remove()
        print(f"numerical failure in {args.command}: {exc}", file=sys.stderr)
        return 3
    except BaseException:
        art.remove()
        raise


if __name__ == "__main__":
    sys.exit(main())

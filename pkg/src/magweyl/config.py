"""Run configurations: parsing, validation, canonical serialization and hashing."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .flux import MagneticField
from .hull import HullFunction, HullModel, OmegaGrid
from .symbols import X, AtomSum, GridSpec

ALL_CHECKS = ("field", "cocycle", "stability", "expansion", "axioms", "rieffel", "realization", "jacobi")


def default_pair(model: HullModel) -> dict:
    """Two distinct Gaussians with nonzero hull modes and nonzero momenta."""
    n, d = model.n, model.d
    first = np.zeros(d, dtype=int)
    first[0] = 1
    last = np.zeros(d, dtype=int)
    last[-1] = 1
    c1 = np.zeros(n)
    c1[0] = 0.2
    p1 = np.array([0.5 if j % 2 == 0 else -0.3 for j in range(n)])
    c2 = np.full(n, 0.1)
    c2[0] = -0.3
    p2 = np.array([-0.2 if j % 2 == 0 else 0.4 for j in range(n)])
    one = HullFunction.constant(model, 1.0)
    phi = AtomSum.gaussian(model, hull=one + 0.3 * HullFunction.cos_mode(model, first),
                           gamma=0.5, center=c1, momentum=p1)
    psi = AtomSum.gaussian(model, hull=one + 0.4 * HullFunction.sin_mode(model, last),
                           gamma=0.6, center=c2, momentum=p2)
    return {"Phi": phi, "Psi": psi}


@dataclass
class RunConfig:
    """Everything a batch run needs; see :func:`parse_config` for the JSON schema."""

    model: HullModel
    field: MagneticField
    symbols: dict
    grid: GridSpec
    omega_grid: OmegaGrid
    hbar_list: tuple
    seed: int = 0
    output: str = "magweyl"
    checks: tuple = ALL_CHECKS
    pair: tuple = ("Phi", "Psi")
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        hb = tuple(float(h) for h in self.hbar_list)
        if not hb:
            raise InputError("hbar_list must not be empty")
        if any(not (0.0 < h <= 1.0) for h in hb):
            raise InputError("every hbar must lie in (0, 1]")
        if any(b >= a for a, b in zip(hb, hb[1:])):
            raise InputError("hbar_list must be strictly decreasing")
        self.hbar_list = hb
        for name in self.pair:
            if name not in self.symbols:
                raise InputError(f"symbol {name!r} is not defined")
        unknown = set(self.checks) - set(ALL_CHECKS)
        if unknown:
            raise InputError(f"unknown checks: {sorted(unknown)}")
        if self.grid.n != self.model.n:
            raise InputError("grid dimension differs from the model")

    @property
    def Phi(self) -> AtomSum:
        return self.symbols[self.pair[0]]

    @property
    def Psi(self) -> AtomSum:
        return self.symbols[self.pair[1]]

    def option(self, name, default):
        return self.options.get(name, default)

    def to_json(self) -> dict:
        return {
            "model": self.model.to_json(),
            "field": self.field.to_json(),
            "symbols": {k: v.to_json() for k, v in self.symbols.items()},
            "grid": {"L": self.grid.L, "N": self.grid.N, "n": self.grid.n},
            "omega_grid": self.omega_grid.M,
            "hbar_list": list(self.hbar_list),
            "seed": self.seed,
            "output": self.output,
            "checks": list(self.checks),
            "pair": list(self.pair),
            "options": self.options,
        }

    def digest(self) -> str:
        """Short hash of the numerical content (the output prefix is excluded)."""
        doc = self.to_json()
        doc.pop("output")
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def parse_config(obj: dict) -> RunConfig:
    """Build a :class:`RunConfig` from a decoded JSON document.

    Keys: ``model`` ({"d", "n", "F"}), ``field`` ({"components": [...]}),
    ``symbols`` (name to atom-sum descriptor; two defaults when absent),
    ``grid`` ({"L", "N", "n"}), ``omega_grid`` (points per torus axis),
    ``hbar_list``, ``seed``, ``output``, ``checks``, ``pair`` and ``options``.
    """
    if not isinstance(obj, dict):
        raise InputError("config must be a JSON object")
    try:
        model = HullModel.from_json(obj["model"])
        B = MagneticField.from_json(model, obj.get("field", {"components": []}))
        if obj.get("symbols"):
            symbols = {str(k): AtomSum.from_json(model, v) for k, v in obj["symbols"].items()}
        else:
            symbols = default_pair(model)
        for name, S in symbols.items():
            if S.realization != X:
                raise InputError(f"symbol {name!r} must be X-realized")
        grid_obj = obj.get("grid", {"L": 8.0, "N": 16, "n": model.n})
        grid = GridSpec.from_json({"n": model.n, **grid_obj})
        omega_grid = OmegaGrid(model.d, int(obj.get("omega_grid", 16)))
        hbar_list = obj.get("hbar_list", [1.0, 0.5, 0.25, 0.125, 0.0625])
        pair = tuple(obj.get("pair", list(symbols)[:2]))
        if len(pair) != 2:
            raise InputError("pair must name exactly two symbols")
        return RunConfig(model, B, symbols, grid, omega_grid, tuple(hbar_list),
                         int(obj.get("seed", 0)), str(obj.get("output", "magweyl")),
                         tuple(obj.get("checks", ALL_CHECKS)), pair, dict(obj.get("options", {})))
    except KeyError as exc:
        raise InputError(f"missing config key: {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad config value: {exc}") from exc


def worker_count() -> int:
    """Parallelism cap from ``MAGWEYL_THREADS`` (default: all CPUs)."""
    raw = os.environ.get("MAGWEYL_THREADS")
    if raw is None:
        return max(1, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise InputError(f"MAGWEYL_THREADS must be an integer, got {raw!r}") from exc

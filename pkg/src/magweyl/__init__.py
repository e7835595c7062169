"""Magnetic Weyl calculus for symbols over a hull of quasi-periodic dynamics.

Modules
-------
hull            torus hulls, hull functions and the translation action
flux            magnetic fields on the hull, triangle fluxes and cocycles
symbols         Gaussian atom sums, sampled symbols and the Fourier realizations
algebra         twisted products, Poisson brackets, expansions and L1 norms
representation  kernel matrices of the covariant representations
audit           deformation-quantization checks and slope fits
cli             batch front end
"""
from .errors import InputError, MagweylError, NumericError, ToleranceWarning
from .hull import HullFunction, HullModel, OmegaGrid, act, stabilizer_report
from .flux import MagneticField, triangle_flux, scaled_flux, cocycle, validate_field
from .symbols import X, XI, AtomSum, GridSpec, SampledSymbol, partial_fourier, inverse_partial_fourier
from .algebra import (compose_magnetic, compose_zero, expansion_remainder, l1_norm, moyal_magnetic,
                      poisson_X, poisson_Xi)
from .representation import (KernelMatrix, op_matrix, rep_matrix, morphism_defect, equivariance_defect,
                             norm_estimate, representation_grid)
from .audit import audit_report, dirac_defect, slope_fit, von_neumann_defect

__version__ = "0.1.0"

__all__ = [
    "InputError", "MagweylError", "NumericError", "ToleranceWarning",
    "HullFunction", "HullModel", "OmegaGrid", "act", "stabilizer_report",
    "MagneticField", "triangle_flux", "scaled_flux", "cocycle", "validate_field",
    "X", "XI", "AtomSum", "GridSpec", "SampledSymbol", "partial_fourier", "inverse_partial_fourier",
    "compose_magnetic", "compose_zero", "expansion_remainder", "l1_norm", "moyal_magnetic",
    "poisson_X", "poisson_Xi",
    "KernelMatrix", "op_matrix", "rep_matrix", "morphism_defect", "equivariance_defect",
    "norm_estimate", "representation_grid",
    "audit_report", "dirac_defect", "slope_fit", "von_neumann_defect",
]

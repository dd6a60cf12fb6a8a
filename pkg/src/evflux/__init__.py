"""Pseudo-spectral barotropic Navier-Stokes with mollified-density viscosities and effective-viscous-flux diagnostics."""

__version__ = "0.1.0"

from .grid import Grid, integrate, lp_norm  # noqa: E402
from .spectral import Spectral, set_workers  # noqa: E402
from .constitutive import (  # noqa: E402
    AdmissibilityError,
    MollifierKernel,
    PressureParams,
    ViscosityLaw,
    mollify,
    viscosity_law,
)
from .solver import Manufactured, Solver, SolverAbort, SolverParams, State, Trajectory, initial_data  # noqa: E402

__all__ = [
    "AdmissibilityError", "Grid", "Manufactured", "MollifierKernel", "PressureParams", "Solver",
    "SolverAbort", "SolverParams", "Spectral", "State", "Trajectory", "ViscosityLaw", "initial_data",
    "integrate", "lp_norm", "mollify", "set_workers", "viscosity_law",
]

"""Magnetic Hartree atoms: 2-D ground states, the hyper-strong 1-D limit and
the lowest-Landau-band confined theory."""
from .flow import SolverError, SolverOptions
from .grid import Density2D, Grid2D, build_grid, read_density, write_density
from .hs1d import graded_grid, hs_energy_exact, hs_exact_density, hs_minimize
from .llband import confined_minimize, l_of_beta
from .mh import EnergyBreakdown, MHParams, Solution, evaluate, extended_energy, minimize
from .regimes import (ScanResult, critical_charge, identity_suite, large_beta_check, scaling_audit,
                      small_beta_check)

__version__ = "0.1.0"

__all__ = [
    "SolverError", "SolverOptions", "Density2D", "Grid2D", "build_grid", "read_density", "write_density",
    "graded_grid", "hs_energy_exact", "hs_exact_density", "hs_minimize", "confined_minimize", "l_of_beta",
    "EnergyBreakdown", "MHParams", "Solution", "evaluate", "extended_energy", "minimize", "ScanResult",
    "critical_charge", "identity_suite", "large_beta_check", "scaling_audit", "small_beta_check",
]

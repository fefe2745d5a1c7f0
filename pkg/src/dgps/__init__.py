"""Solvers and benchmarks for DG time-stepping of parabolic problems.

The per-step system B u = f of the discontinuous Galerkin time
discretization is nonsymmetric.  This package symmetrizes it with the
left preconditioner P^T derived from the parabolic inf-sup theory,
solves the resulting SPD system L u = g by PCG with the block-diagonal
norm preconditioner H, and ships the experiment drivers that reproduce
the condition-number, iteration-count and accuracy benchmarks.
"""

__version__ = "0.1.0"

from .legendre import LegendreWorkspace, workspace, legendre_eval, gauss_legendre_rule
from .temporal_basis import TemporalBasis, PsiBasis, build_basis, build_psi
from .operators import SpatialPair, SpdSolver, ExactSolver
from .fem import assemble_1d, assemble_2d, HeatProblem
from .dg_solver import DgStepOperator, PcgReport, pcg, estimate_condition

__all__ = [
    "__version__",
    "LegendreWorkspace",
    "workspace",
    "legendre_eval",
    "gauss_legendre_rule",
    "TemporalBasis",
    "PsiBasis",
    "build_basis",
    "build_psi",
    "SpatialPair",
    "SpdSolver",
    "ExactSolver",
    "assemble_1d",
    "assemble_2d",
    "HeatProblem",
    "DgStepOperator",
    "PcgReport",
    "pcg",
    "estimate_condition",
]

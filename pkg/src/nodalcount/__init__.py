"""Nodal count statistics of separable quantum systems and 3-D random waves."""

__version__ = "0.1.0"

from .errors import AssumptionViolation, ConvergenceError, ModelError, NodalCountOverflow, NumericalFailure
from .geometry import ShellGeometry, find_j_crit, gamma_volume, shell_geometry
from .limitdist import quadrature_p, sample_limit_distribution, tail_report
from .model import Kind, ModelSpec, ebk_energy, frequencies, hamiltonian_value
from .spectra import Histogram, enumerate_states, exact_count, histogram, weyl_count, window_histogram

__all__ = [
    "AssumptionViolation",
    "ConvergenceError",
    "Histogram",
    "Kind",
    "ModelError",
    "ModelSpec",
    "NodalCountOverflow",
    "NumericalFailure",
    "ShellGeometry",
    "ebk_energy",
    "enumerate_states",
    "exact_count",
    "find_j_crit",
    "frequencies",
    "gamma_volume",
    "hamiltonian_value",
    "histogram",
    "quadrature_p",
    "sample_limit_distribution",
    "shell_geometry",
    "tail_report",
    "weyl_count",
    "window_histogram",
]

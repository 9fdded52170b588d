"""Stochastic slow-manifold reduction for SPDEs with multiplicative noise."""
from .exceptions import (DegeneracyError, DivergenceError, GridMismatchError, OrthogonalityError,
                         OutOfTubeError, ReductionError, UnsupportedError)
from .field import Field, Grid1D, inner_product, l2_norm, laplacian
from .manifold import Chart, FermiPair, fermi_project
from .models import PRESETS, ModelPreset, get_preset
from .noise import QWienerSpec, covariance_check, sample_increment, stream
from .reduction import ReducedSDE, SpdeProblem, reduction_terms, strat_to_ito
from .integrators import EnsembleStats, run_ensemble

__version__ = "0.1.0"

__all__ = [
    "Chart", "DegeneracyError", "DivergenceError", "EnsembleStats", "FermiPair", "Field", "Grid1D",
    "GridMismatchError", "ModelPreset", "OrthogonalityError", "OutOfTubeError", "PRESETS", "QWienerSpec",
    "ReducedSDE", "ReductionError", "SpdeProblem", "UnsupportedError", "covariance_check", "fermi_project",
    "get_preset", "inner_product", "l2_norm", "laplacian", "reduction_terms", "run_ensemble",
    "sample_increment", "strat_to_ito", "stream",
]

"""Spectral statistics: mean differences, local Weyl laws, heat kernels, identity checks."""

from .common import ComparisonReport, PreconditionError, extrapolate, running_mean
from .comparison import bipartite_divergence, divergence_experiment, mean_difference, mean_shift_limit
from .hadamard import HadamardReport, hadamard_identity_check
from .heat import BracketingReport, HeatReport, bracketing_check, heat_kernel_diag
from .isospectral import IsospectralReport, isospectrality_check
from .weyl import WeylReport, local_weyl

__all__ = [
    "BracketingReport",
    "ComparisonReport",
    "HadamardReport",
    "HeatReport",
    "IsospectralReport",
    "PreconditionError",
    "WeylReport",
    "bracketing_check",
    "bipartite_divergence",
    "divergence_experiment",
    "extrapolate",
    "hadamard_identity_check",
    "heat_kernel_diag",
    "isospectrality_check",
    "local_weyl",
    "mean_difference",
    "running_mean",
    "mean_shift_limit",
]

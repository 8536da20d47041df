"""Multilayer simplex-structured matrix factorization for hyperspectral
unmixing under endmember variability, fitted by variational inference."""

from .model import (
    AbundanceMatrix,
    ExpandedEndmembers,
    FactorStack,
    ModelDims,
    PixelMatrix,
    ValidationError,
    compose_expanded,
    reconstruct,
    validate_dims,
)
from .simplex import (
    BETA_FLOOR,
    DirichletParam,
    dirichlet_entropy,
    dirichlet_mean,
    dirichlet_second_moment,
    digamma,
    log_gamma,
    project_simplex,
    project_simplex_columns,
    sample_dirichlet,
    trigamma,
)
from .initialization import InitResult, init_all, scls, vca
from .solver import (
    FitConfig,
    FitResult,
    FitTrace,
    apg_update_factor,
    ElboBreakdown,
    elbo,
    elbo_breakdown,
    elbo_terms,
    fit,
    grad_beta,
    grad_factors,
    update_beta,
    update_sigma2,
)
from .synth import (
    SynthBundle,
    assemble_ground_truth,
    builtin_bases,
    gen_dataset,
    gen_variants,
)
from .metrics import AlignmentResult, aligned_mse, hungarian, singular_spectrum, snr_db

__version__ = "0.1.0"

__all__ = [
    "AbundanceMatrix",
    "AlignmentResult",
    "BETA_FLOOR",
    "DirichletParam",
    "ExpandedEndmembers",
    "FactorStack",
    "FitConfig",
    "FitResult",
    "FitTrace",
    "InitResult",
    "ModelDims",
    "PixelMatrix",
    "SynthBundle",
    "ValidationError",
    "aligned_mse",
    "apg_update_factor",
    "assemble_ground_truth",
    "builtin_bases",
    "compose_expanded",
    "digamma",
    "dirichlet_entropy",
    "dirichlet_mean",
    "dirichlet_second_moment",
    "ElboBreakdown",
    "elbo",
    "elbo_breakdown",
    "elbo_terms",
    "fit",
    "gen_dataset",
    "gen_variants",
    "grad_beta",
    "grad_factors",
    "hungarian",
    "init_all",
    "log_gamma",
    "project_simplex",
    "project_simplex_columns",
    "reconstruct",
    "sample_dirichlet",
    "scls",
    "singular_spectrum",
    "snr_db",
    "trigamma",
    "update_beta",
    "update_sigma2",
    "validate_dims",
    "vca",
]

"""Fine-Gray regression with wild-bootstrap simultaneous confidence bands."""

from .bands import ALL_VARIANTS, BandResult, BandSpec, Variant, band, bands, sigma_hat, sigma_hat_star, w_star
from .bootstrap import (
    BootstrapReplicate,
    MultiplierLaw,
    beta_star,
    bootstrap_score,
    breslow_star,
    c_star,
    cif_star,
    draw_multipliers,
    draw_replicate,
    optional_covariation,
)
from .data import CSVSchema, Dataset, Mode, SubjectRecord, at_risk, counting_increment, load_csv
from .errors import FGWildError
from .estimation import FitResult, breslow, cif, fit_mple, information, risk_sums, score
from .simulation import ScenarioConfig, generate_study, run_coverage, true_cif
from .stepfunction import StepFunction

__version__ = "0.1.0"

__all__ = [
    "ALL_VARIANTS", "BandResult", "BandSpec", "BootstrapReplicate", "CSVSchema", "Dataset",
    "FGWildError", "FitResult", "Mode", "MultiplierLaw", "ScenarioConfig", "StepFunction",
    "SubjectRecord", "Variant", "at_risk", "band", "bands", "beta_star", "bootstrap_score",
    "breslow", "breslow_star", "c_star", "cif", "cif_star", "counting_increment",
    "draw_multipliers", "draw_replicate", "fit_mple", "generate_study", "information",
    "load_csv", "optional_covariation", "risk_sums", "run_coverage", "score", "sigma_hat",
    "sigma_hat_star", "true_cif", "w_star",
]

"""Sparse regression under lasso, elastic-net and copula (Gauss and t) priors."""
__version__ = "0.1.0"

from .copula import Family, PriorSpec, contour_grid, neg_log_prior, q_map, smooth_penalty
from .data import Dataset, StandardizationRecord, load_csv, standardize, write_csv
from .errors import (CopulaPriorError, DataError, DegenerateFeatureError, InvalidParameterError,
                     LinAlgError, NumericalError, ParseError, UsageError)
from .kernels import BACKEND
from .resample import ResampleConfig, ResampleResult, resample_fit
from .sigma import CorrelationMatrix, estimate_sigma, quad_form
from .solver import FitResult, Problem, SolverOptions, fit, solution_path, solve
from .tuning import CVReport, cross_validate, lambda_max, make_lambda_grid, validation_tune

__all__ = [
    "BACKEND", "CVReport", "CopulaPriorError", "CorrelationMatrix", "DataError", "Dataset",
    "DegenerateFeatureError", "Family", "FitResult", "InvalidParameterError", "LinAlgError",
    "NumericalError", "ParseError", "PriorSpec", "Problem", "ResampleConfig", "ResampleResult",
    "SolverOptions", "StandardizationRecord", "UsageError", "contour_grid", "cross_validate",
    "estimate_sigma", "fit", "lambda_max", "load_csv", "make_lambda_grid", "neg_log_prior", "q_map",
    "quad_form", "resample_fit", "smooth_penalty", "solution_path", "solve", "standardize",
    "validation_tune", "write_csv",
]

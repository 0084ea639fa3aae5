"""Gibbs-sampler imputation for random-intercept models with missing covariates."""

from ._core import (
    InputError,
    NumericalError,
    __version__,
    fit,
    fit_ml,
    percentile,
    psrf,
    simulate,
)

__all__ = [
    "InputError",
    "NumericalError",
    "__version__",
    "fit",
    "fit_ml",
    "percentile",
    "psrf",
    "simulate",
]

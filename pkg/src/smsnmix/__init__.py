"""Mixtures of skew-normal scale mixtures for data missing at random."""

from .exceptions import (DataError, DegenerateInit, EmptyComponent, MomentUndefined,
                         NonConvergent, NotPSD, SingularBlock, SmsnMixError)
from .family import (ComponentParams, MixtureModel, ScaleLaw, mixture_logpdf,
                     sample_mixture, sample_smsn, smsn_logpdf, smsn_moments,
                     sn_logpdf, truncnorm_moments)
from .conditioning import MissingPattern, ObservationSet, estep, impute_row
from .ecm import FitConfig, FitReport, aitken_check, bic, fit, observed_loglik

__version__ = "0.1.0"

__all__ = [
    "ComponentParams", "MixtureModel", "ScaleLaw", "MissingPattern", "ObservationSet",
    "FitConfig", "FitReport", "fit", "estep", "impute_row", "observed_loglik",
    "aitken_check", "bic", "sn_logpdf", "smsn_logpdf", "smsn_moments", "mixture_logpdf",
    "sample_smsn", "sample_mixture", "truncnorm_moments",
    "SmsnMixError", "NotPSD", "NonConvergent", "MomentUndefined", "SingularBlock",
    "EmptyComponent", "DegenerateInit", "DataError",
]

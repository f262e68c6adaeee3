"""Classifiers for physical-layer authentication and their comparison with
the logarithmic test (LT): channel scenarios, statistical tests, a sigmoid
MLP, least-squares SVMs, a linear autoencoder and DET-curve evaluation."""

from .channels import (BoxDomain, DomainError, FiniteScenarioConfig, GaussianScenarioConfig,
                       LabeledDataset, MixtureScenarioConfig, log_density, sample,
                       sample_artificial_uniform)
from .evaluation import DetCurve, EquivalenceReport, det_curve, equivalence_report, error_rate_xi
from .stattests import Hypothesis, Threshold, calibrate_threshold, decide, lrt_score, lt_score

__version__ = "0.1.0"

__all__ = [
    "BoxDomain", "DomainError", "FiniteScenarioConfig", "GaussianScenarioConfig",
    "LabeledDataset", "MixtureScenarioConfig", "log_density", "sample",
    "sample_artificial_uniform", "DetCurve", "EquivalenceReport", "det_curve",
    "equivalence_report", "error_rate_xi", "Hypothesis", "Threshold",
    "calibrate_threshold", "decide", "lrt_score", "lt_score",
]

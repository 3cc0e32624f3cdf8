"""Confounding-robust off-policy learning with sharp MSM bounds."""

from .bounds import (BoundReport, Certificate, certificate, calibrate_gamma, dr_value,
                     efficient_regret_upper, efficient_value_lower, efficient_value_upper, ipw_value,
                     plugin_value_bound, sharp_capo)
from .core import Dataset, LearnerConfig, RunConfig, Sample, load_csv, save_csv, split
from .nuisance import NuisanceSet, SensitivitySpec, assemble, oracle_nuisances
from .policy import SoftmaxPolicy, UniformPolicy, policy_grad, policy_probs

__all__ = [
    "BoundReport", "Certificate", "Dataset", "LearnerConfig", "NuisanceSet", "RunConfig", "Sample",
    "SensitivitySpec", "SoftmaxPolicy", "UniformPolicy", "assemble", "calibrate_gamma", "certificate",
    "dr_value", "efficient_regret_upper", "efficient_value_lower", "efficient_value_upper", "ipw_value",
    "load_csv", "oracle_nuisances", "plugin_value_bound", "policy_grad", "policy_probs", "save_csv",
    "sharp_capo", "split",
]

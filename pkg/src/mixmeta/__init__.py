"""Bayesian random-effects meta-analysis with robust extrapolation.

A target study set is analysed together with a source study set under four
pooling models; the models are combined by their posterior probabilities
into a model-averaged effect posterior.
"""

__version__ = "0.1.0"

from .effect_size import Dataset, EffectEstimate, TwoByTwoTable, escalc_dataset, log_odds_ratio, wald_ci
from .errors import InputError, MixmetaError, NumericalError
from .io import bundled_path, load_csv
from .mixture import NormalMixture, ModelAverage, average, bayes_factor, model_posterior_probs
from .models import AnalysisConfig, ModelFit, ModelId, fit_m1, fit_m1_map, fit_m2, fit_m3, fit_m4, fit_models
from .nnhm import EffectPrior, HalfNormal, HierarchicalPrior, NNHMFit, Tabulated, fit
from .report import RunReport, cmd_analyze

__all__ = [
    "AnalysisConfig", "Dataset", "EffectEstimate", "EffectPrior", "HalfNormal", "HierarchicalPrior",
    "InputError", "MixmetaError", "ModelAverage", "ModelFit", "ModelId", "NNHMFit", "NormalMixture",
    "NumericalError", "RunReport", "Tabulated", "TwoByTwoTable", "average", "bayes_factor",
    "bundled_path", "cmd_analyze", "escalc_dataset", "load_csv",
    "fit", "fit_m1", "fit_m1_map", "fit_m2", "fit_m3", "fit_m4", "fit_models", "log_odds_ratio",
    "model_posterior_probs", "wald_ci",
]

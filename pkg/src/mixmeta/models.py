"""The four pooling models relating a source and a target study set.

========  =================  ==========================================
model     shared parameters  target-effect prior
========  =================  ==========================================
M1        mu and tau         source posterior ("complete pooling")
M2        mu only            source information on mu only
M3        tau only           source posterior for tau only
M4        none               vague ("standalone analyses")
========  =================  ==========================================

Every model's log marginal likelihood refers to the full data (source and
target jointly), so the four values are directly comparable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import nnhm
from .effect_size import Dataset
from .errors import InputError
from .mixture import NormalMixture
from .nnhm import EffectPrior, HalfNormal, HeterogeneityPrior, NNHMFit

__all__ = [
    "ModelId",
    "ModelFit",
    "AnalysisConfig",
    "fit_m1",
    "fit_m1_map",
    "fit_m2",
    "fit_m3",
    "fit_m4",
    "fit_models",
]

GRID2D_START = 256
GRID2D_CAP = 2048
GRID2D_TOL = 1e-5
# the effect posterior is smooth in (tau_S, tau_T) and settles on far
# coarser grids than the evidence; it gets its own doubling sequence
MIX2D_START = 32
MIX2D_TOL = 1e-9
_MIX2D_PROBES = (0.001, 0.01, 0.1, 0.5, 0.9, 0.99, 0.999)


class ModelId(str, enum.Enum):
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    M4 = "M4"

    def __str__(self):
        return self.value

    @property
    def description(self) -> str:
        return _DESCRIPTIONS[self]


_DESCRIPTIONS = {
    ModelId.M1: "complete pooling",
    ModelId.M2: "effect pooling",
    ModelId.M3: "heterogeneity pooling",
    ModelId.M4: "standalone analyses",
}

MODEL_IDS = tuple(ModelId)


@dataclass(frozen=True, eq=False)
class ModelFit:
    id: ModelId
    log_marginal: float
    target_mu_posterior: NormalMixture
    # intermediate single-group fits, kept for reporting
    parts: dict = field(default_factory=dict, repr=False)


@dataclass(frozen=True)
class AnalysisConfig:
    effect_prior: EffectPrior = EffectPrior(0.0, 2.0)
    tau_prior: HeterogeneityPrior = HalfNormal(0.5)
    model_priors: tuple[float, float, float, float] = (0.5, 0.0, 0.0, 0.5)
    level: float = 0.95

    def __post_init__(self):
        p = tuple(float(x) for x in self.model_priors)
        if len(p) != 4:
            raise InputError("model_priors needs one probability per model M1..M4")
        if any(x < 0 or not math.isfinite(x) for x in p) or abs(sum(p) - 1.0) > 1e-10:
            raise InputError(f"model priors must be non-negative and sum to 1, got {p}")
        if not 0 < self.level < 1:
            raise InputError(f"level must lie in (0, 1), got {self.level}")
        object.__setattr__(self, "model_priors", p)

    @property
    def active_models(self) -> tuple[ModelId, ...]:
        return tuple(m for m, p in zip(MODEL_IDS, self.model_priors) if p > 0)


def _check(source, target):
    for name, d in (("source", source), ("target", target)):
        if not isinstance(d, Dataset) or d.k < 1:
            raise InputError(f"{name} dataset must be non-empty")


def _vague_fit(data: Dataset, cfg: AnalysisConfig) -> NNHMFit:
    return nnhm.fit(data, cfg.effect_prior, cfg.tau_prior)


def fit_m1(source: Dataset, target: Dataset, cfg: AnalysisConfig = AnalysisConfig()) -> ModelFit:
    """Complete pooling, computed jointly on the concatenated data."""
    _check(source, target)
    joint = _vague_fit(source.concat(target), cfg)
    return ModelFit(ModelId.M1, joint.log_marginal, joint.mu_posterior, {"joint": joint})


def fit_m1_map(source: Dataset, target: Dataset, cfg: AnalysisConfig = AnalysisConfig(),
               source_fit: NNHMFit | None = None) -> ModelFit:
    """Complete pooling via the source posterior used as the target prior."""
    _check(source, target)
    if source_fit is None:
        source_fit = _vague_fit(source, cfg)
    target_fit = nnhm.fit(target, nnhm.posterior_as_prior(source_fit))
    return ModelFit(ModelId.M1, source_fit.log_marginal + target_fit.log_marginal,
                    target_fit.mu_posterior, {"source": source_fit, "target": target_fit})


def _group_stats(data: Dataset, tau: np.ndarray, mean: float):
    v = data.se**2 + tau[:, None] ** 2
    w = 1.0 / v
    r = data.y - mean
    return w.sum(1), (w * r).sum(1), (w * r * r).sum(1), np.log(v).sum(1)


def _m2_on_grid(source, target, cfg, n):
    gs = nnhm._prior_on_grid(cfg.tau_prior, n)
    gt = nnhm._prior_on_grid(cfg.tau_prior, n)
    m0, sd = cfg.effect_prior.mean, cfg.effect_prior.sd
    a_s, b_s, c_s, l_s = _group_stats(source, gs.points, m0)
    a_t, b_t, c_t, l_t = _group_stats(target, gt.points, m0)
    a = a_s[:, None] + a_t[None, :]
    b = b_s[:, None] + b_t[None, :]
    c = c_s[:, None] + c_t[None, :]
    logdet = l_s[:, None] + l_t[None, :]
    prec = 1.0 / sd**2 + a
    k = source.k + target.k
    log_ev = -0.5 * (k * nnhm.LOG_2PI + logdet + np.log1p(sd**2 * a) + c - b * b / prec)
    log_joint = gs.log_mass[:, None] + gt.log_mass[None, :] + log_ev
    log_marginal = float(logsumexp(log_joint))
    return log_marginal, (log_joint, m0 + b / prec, 1.0 / np.sqrt(prec))


def _m2_mixture(source, target, cfg, n) -> NormalMixture:
    log_marginal, (log_joint, mean, sd) = _m2_on_grid(source, target, cfg, n)
    weights = np.exp(log_joint - log_marginal).ravel()
    return NormalMixture(weights / weights.sum(), mean.ravel(), sd.ravel()).pruned(1e-12)


def _m2_posterior(source, target, cfg, cap: int) -> NormalMixture:
    """Effect posterior on the coarsest grid (doubling from ``MIX2D_START``
    up to ``cap``) whose CDF at a few probe quantiles moves by less than
    ``MIX2D_TOL`` when the grid is doubled."""
    n = min(MIX2D_START, cap)
    prev = _m2_mixture(source, target, cfg, n)
    while n < cap:
        n *= 2
        cur = _m2_mixture(source, target, cfg, n)
        probes = [prev.quantile(p) for p in _MIX2D_PROBES]
        if np.max(np.abs(cur.cdf(probes) - prev.cdf(probes))) < MIX2D_TOL:
            return cur
        prev = cur
    return prev


def fit_m2(source: Dataset, target: Dataset, cfg: AnalysisConfig = AnalysisConfig()) -> ModelFit:
    """Effect pooling: one shared effect, separate heterogeneities.

    Integrates over ``(tau_S, tau_T)`` on a 2-D Simpson grid; given the
    pair, all studies inform a single normal effect posterior.  The log
    marginal is refined from 256 intervals per axis; the effect posterior
    is refined separately from a coarser start, since it converges much
    sooner and its component count drives every quantile evaluation.
    """
    _check(source, target)
    if isinstance(cfg.tau_prior, nnhm.Tabulated) and cfg.tau_prior.is_point_mass:
        return ModelFit(ModelId.M2, _m2_on_grid(source, target, cfg, 0)[0],
                        _m2_mixture(source, target, cfg, 0))
    steps = []

    def evidence(n):
        steps.append(n)
        return _m2_on_grid(source, target, cfg, n)[0], None

    log_marginal = nnhm.refine(evidence, GRID2D_START, GRID2D_CAP, GRID2D_TOL)[0]
    return ModelFit(ModelId.M2, log_marginal, _m2_posterior(source, target, cfg, steps[-1]))


def fit_m3(source: Dataset, target: Dataset, cfg: AnalysisConfig = AnalysisConfig(),
           source_fit: NNHMFit | None = None) -> ModelFit:
    """Heterogeneity pooling: the source tau posterior becomes the target tau prior."""
    _check(source, target)
    if source_fit is None:
        source_fit = _vague_fit(source, cfg)
    tau_prior = nnhm.tau_prior_from_posterior(source_fit)
    target_fit = nnhm.fit(target, cfg.effect_prior, tau_prior)
    return ModelFit(ModelId.M3, source_fit.log_marginal + target_fit.log_marginal,
                    target_fit.mu_posterior, {"source": source_fit, "target": target_fit})


def fit_m4(source: Dataset, target: Dataset, cfg: AnalysisConfig = AnalysisConfig(),
           source_fit: NNHMFit | None = None, target_fit: NNHMFit | None = None) -> ModelFit:
    """Standalone analyses of source and target."""
    _check(source, target)
    if source_fit is None:
        source_fit = _vague_fit(source, cfg)
    if target_fit is None:
        target_fit = _vague_fit(target, cfg)
    return ModelFit(ModelId.M4, source_fit.log_marginal + target_fit.log_marginal,
                    target_fit.mu_posterior, {"source": source_fit, "target": target_fit})


def fit_models(source: Dataset, target: Dataset, cfg: AnalysisConfig = AnalysisConfig(),
               models: Sequence[ModelId] | None = None) -> dict[ModelId, ModelFit]:
    """Fit the requested models (default: those with positive prior
    probability), sharing the vague source fit between M3 and M4."""
    _check(source, target)
    models = cfg.active_models if models is None else tuple(ModelId(m) for m in models)
    out = {}
    source_fit = None
    if ModelId.M3 in models or ModelId.M4 in models:
        source_fit = _vague_fit(source, cfg)
    for m in MODEL_IDS:
        if m not in models:
            continue
        if m is ModelId.M1:
            out[m] = fit_m1(source, target, cfg)
        elif m is ModelId.M2:
            out[m] = fit_m2(source, target, cfg)
        elif m is ModelId.M3:
            out[m] = fit_m3(source, target, cfg, source_fit=source_fit)
        else:
            out[m] = fit_m4(source, target, cfg, source_fit=source_fit)
    return out

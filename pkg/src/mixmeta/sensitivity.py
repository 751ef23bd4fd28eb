"""Sensitivity sweeps over the prior model probability and the vague prior sd,
and the multi-component comparison table."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import models as _models
from .effect_size import Dataset
from .errors import InputError
from .mixture import ModelAverage, average
from .models import MODEL_IDS, AnalysisConfig, ModelId
from .nnhm import EffectPrior

__all__ = [
    "PRESETS",
    "SweepRow",
    "SweepResult",
    "PresetRow",
    "sweep_prior_prob",
    "sweep_vague_sd",
    "preset_table",
    "DEFAULT_PRIOR_GRID",
    "DEFAULT_SD_GRID",
]

# Prior model probabilities (M1, M2, M3, M4).  Rows printed as 38/38, 12/12,
# 17/17/17 and 8/8/8 percent are the rounded 3/8, 1/8, 1/6 and 1/12.
PRESETS: dict[str, tuple[float, float, float, float]] = {
    "I": (1.0, 0.0, 0.0, 0.0),
    "II": (0.0, 1.0, 0.0, 0.0),
    "III": (0.0, 0.0, 1.0, 0.0),
    "IV": (0.0, 0.0, 0.0, 1.0),
    "V": (0.25, 0.0, 0.0, 0.75),
    "VI": (0.5, 0.0, 0.0, 0.5),
    "VII": (0.75, 0.0, 0.0, 0.25),
    "VIII": (0.25, 0.0, 0.375, 0.375),
    "IX": (0.5, 0.0, 0.25, 0.25),
    "X": (0.75, 0.0, 0.125, 0.125),
    "XI": (0.25, 0.25, 0.25, 0.25),
    "XII": (0.5, 1 / 6, 1 / 6, 1 / 6),
    "XIII": (0.75, 1 / 12, 1 / 12, 1 / 12),
}

DEFAULT_PRIOR_GRID = np.round(np.linspace(0.0, 1.0, 101), 10)
DEFAULT_SD_GRID = np.geomspace(0.5, 8.0, 25)


@dataclass(frozen=True)
class SweepRow:
    setting: float
    posterior_probs: tuple[float, float, float, float]
    median: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    rows: tuple[SweepRow, ...]

    def __post_init__(self):
        settings = [r.setting for r in self.rows]
        if any(b <= a for a, b in zip(settings, settings[1:])):
            raise InputError("sweep settings must be strictly increasing")

    def to_csv(self, path_or_file) -> None:
        header = [self.parameter, *(f"post_{m}" for m in MODEL_IDS),
                  "median_log_or", "ci_low_log_or", "ci_high_log_or",
                  "median_or", "ci_low_or", "ci_high_or"]
        rows = [[r.setting, *r.posterior_probs, r.median, r.ci_low, r.ci_high,
                 *np.exp([r.median, r.ci_low, r.ci_high])] for r in self.rows]
        _write_csv(path_or_file, header, rows)

    def plot_svg(self, path, xlabel=None, logx=False) -> None:
        from .plots import sweep_svg
        sweep_svg(self, path, xlabel=xlabel or self.parameter, logx=logx)


@dataclass(frozen=True)
class PresetRow:
    name: str
    prior_probs: tuple[float, float, float, float]
    posterior_probs: tuple[float, float, float, float]
    median: float
    ci_low: float
    ci_high: float


def _write_csv(path_or_file, header, rows):
    def fmt(v):
        return format(v, ".17g") if isinstance(v, (float, np.floating)) else v

    if hasattr(path_or_file, "write"):
        writer = csv.writer(path_or_file, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([[fmt(v) for v in row] for row in rows])
        return
    with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
        _write_csv(fh, header, rows)


def _summary_row(avg: ModelAverage, level: float):
    median, lo, hi = avg.summary(level)
    return tuple(float(p) for p in avg.posterior_probs), median, lo, hi


def _average(fits: Mapping[ModelId, _models.ModelFit], priors) -> ModelAverage:
    # zero-probability components are dropped rather than weighted by zero
    return average([fits.get(m) if p > 0 else None for m, p in zip(MODEL_IDS, priors)], priors)


def sweep_prior_prob(source: Dataset, target: Dataset, cfg: AnalysisConfig = AnalysisConfig(),
                     grid: Sequence[float] = DEFAULT_PRIOR_GRID) -> SweepResult:
    """Two-component (M1 vs M4) analysis as a function of the prior ``p(M1)``.

    Both model fits are computed once and reweighted per grid point.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any((grid < 0) | (grid > 1)):
        raise InputError("p(M1) grid values must lie in [0, 1]")
    needed = [m for m, used in ((ModelId.M1, np.any(grid > 0)), (ModelId.M4, np.any(grid < 1))) if used]
    fits = _models.fit_models(source, target, cfg, needed)
    rows = []
    for p in grid:
        priors = (float(p), 0.0, 0.0, 1.0 - float(p))
        rows.append(SweepRow(float(p), *_summary_row(_average(fits, priors), cfg.level)))
    return SweepResult("p_M1", tuple(rows))


def sweep_vague_sd(source: Dataset, target: Dataset, cfg: AnalysisConfig = AnalysisConfig(),
                   grid: Sequence[float] = DEFAULT_SD_GRID) -> SweepResult:
    """Refit the active models for each vague effect-prior sd and average."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or not np.all(np.isfinite(grid)):
        raise InputError("sd grid values must be positive")
    rows = []
    for sd in grid:
        cfg_sd = dataclasses.replace(cfg, effect_prior=EffectPrior(cfg.effect_prior.mean, float(sd)))
        fits = _models.fit_models(source, target, cfg_sd)
        rows.append(SweepRow(float(sd), *_summary_row(_average(fits, cfg.model_priors), cfg.level)))
    return SweepResult("vague_sd", tuple(rows))


def preset_table(source: Dataset, target: Dataset, cfg: AnalysisConfig = AnalysisConfig(),
                 presets: Mapping[str, Sequence[float]] | None = None) -> list[PresetRow]:
    """One model average per preset row, sharing the four model fits."""
    presets = PRESETS if presets is None else presets
    checked = {}
    for name, row in presets.items():
        row = tuple(float(x) for x in row)
        if len(row) != 4 or any(x < 0 for x in row) or abs(sum(row) - 1) > 1e-10:
            raise InputError(f"preset {name!r} must hold four probabilities summing to 1")
        checked[name] = row
    needed = [m for i, m in enumerate(MODEL_IDS) if any(r[i] > 0 for r in checked.values())]
    fits = _models.fit_models(source, target, cfg, needed)
    out = []
    for name, row in checked.items():
        probs, median, lo, hi = _summary_row(_average(fits, row), cfg.level)
        out.append(PresetRow(name, row, probs, median, lo, hi))
    return out


def preset_table_csv(rows: Sequence[PresetRow], path_or_file) -> None:
    header = ["preset", *(f"prior_{m}" for m in MODEL_IDS), *(f"post_{m}" for m in MODEL_IDS),
              "median_or", "ci_low_or", "ci_high_or"]
    body = [[r.name, *r.prior_probs, *r.posterior_probs, *np.exp([r.median, r.ci_low, r.ci_high])]
            for r in rows]
    _write_csv(path_or_file, header, body)

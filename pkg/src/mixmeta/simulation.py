"""Frequentist coverage simulations for the model-averaged target effect.

Random numbers come from Philox streams keyed by ``(seed, replication,
stream)``, so every replication is reproducible on its own and results do
not depend on how replications are spread across worker processes.
Source and target data use separate streams: the target data of a
replication do not change when the number of source studies does.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .effect_size import Dataset
from .errors import InputError, MixmetaError
from .mixture import average
from .models import MODEL_IDS, AnalysisConfig, ModelId, fit_models
from .sensitivity import PRESETS

__all__ = [
    "Scenario",
    "SCENARIOS",
    "PresetSummary",
    "SimulationResult",
    "CalibrationResult",
    "stream",
    "generate_dataset",
    "run_scenario",
    "calibration_run",
    "default_workers",
]

STREAM_SOURCE = 0
STREAM_TARGET = 1
STREAM_PARAMS = 2

WORKERS_ENV = "MIXMETA_WORKERS"


@dataclass(frozen=True)
class Scenario:
    mu_s: float
    tau_s: float
    mu_t: float
    tau_t: float
    k_s: int = 10
    k_t: int = 3
    se_low: float = 0.2
    se_high: float = 1.0

    def __post_init__(self):
        if self.tau_s < 0 or self.tau_t < 0:
            raise InputError("heterogeneity values must be non-negative")
        if self.k_s < 1 or self.k_t < 1:
            raise InputError("each group needs at least one study")
        if not 0 < self.se_low <= self.se_high:
            raise InputError("standard error range must satisfy 0 < se_low <= se_high")


SCENARIOS = {
    "S1": Scenario(0.25, 0.2, 0.25, 0.2),
    "S2": Scenario(0.25, 0.2, 0.25, 0.5),
    "S3": Scenario(0.25, 0.2, 1.0, 0.2),
    "S4": Scenario(0.25, 0.2, 1.0, 0.5),
}


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise InputError(f"{WORKERS_ENV} must be a positive integer") from None


def stream(seed: int, rep: int, stream_id: int) -> np.random.Generator:
    """Independent generator for one (seed, replication, stream) triple."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(rep), int(stream_id)))
    return np.random.Generator(np.random.Philox(ss))


def _draw_group(rng, k, mu, tau, se_low, se_high, label) -> Dataset:
    se = rng.uniform(se_low, se_high, k)
    y = rng.normal(mu, np.sqrt(tau**2 + se**2))
    return Dataset.from_arrays(y, se, group_label=label,
                               labels=[f"{label} {i + 1}" for i in range(k)])


def generate_dataset(sc: Scenario, seed: int, rep_index: int) -> tuple[Dataset, Dataset]:
    source = _draw_group(stream(seed, rep_index, STREAM_SOURCE), sc.k_s, sc.mu_s, sc.tau_s,
                         sc.se_low, sc.se_high, "source")
    target = _draw_group(stream(seed, rep_index, STREAM_TARGET), sc.k_t, sc.mu_t, sc.tau_t,
                         sc.se_low, sc.se_high, "target")
    return source, target


@dataclass(frozen=True)
class PresetSummary:
    name: str
    prior_probs: tuple[float, ...]
    coverage: float  # percent
    mean_width: float
    mean_posterior_probs: tuple[float, ...]


@dataclass(frozen=True)
class SimulationResult:
    scenario: str
    k_s: int
    k_t: int
    n_reps: int
    n_failed: int
    seed: int
    presets: tuple[PresetSummary, ...]

    def to_csv(self, path_or_file, append_header=True) -> None:
        header = ["k_s", "k_t", "preset", *(f"prior_{m}" for m in MODEL_IDS), "scenario",
                  "coverage", "width", *(f"post_{m}" for m in MODEL_IDS),
                  "n_reps", "n_failed", "seed"]
        rows = []
        for p in self.presets:
            rows.append([self.k_s, self.k_t, p.name, *(100 * x for x in p.prior_probs),
                         self.scenario, p.coverage, p.mean_width,
                         *(100 * x for x in p.mean_posterior_probs),
                         self.n_reps, self.n_failed, self.seed])
        _write(path_or_file, header if append_header else None, rows)


@dataclass(frozen=True)
class CalibrationResult:
    coverage: float  # percent
    n_reps: int
    n_failed: int
    seed: int
    k_s: int
    k_t: int
    covered: tuple[bool, ...] = field(repr=False, default=())

    def to_csv(self, path_or_file) -> None:
        _write(path_or_file, ["k_s", "k_t", "coverage", "n_reps", "n_failed", "seed"],
               [[self.k_s, self.k_t, self.coverage, self.n_reps, self.n_failed, self.seed]])


def _write(path_or_file, header, rows):
    def fmt(v):
        return format(v, ".17g") if isinstance(v, (float, np.floating)) else v

    if not hasattr(path_or_file, "write"):
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            return _write(fh, header, rows)
    writer = csv.writer(path_or_file, lineterminator="\n")
    if header:
        writer.writerow(header)
    writer.writerows([[fmt(v) for v in row] for row in rows])


def _analyze_rep(source, target, cfg, preset_rows, truth):
    """Per preset: (covered, width, posterior probabilities)."""
    needed = [m for i, m in enumerate(MODEL_IDS) if any(r[i] > 0 for r in preset_rows)]
    fits = fit_models(source, target, cfg, needed)
    out = []
    for row in preset_rows:
        avg = average([fits.get(m) if p > 0 else None for m, p in zip(MODEL_IDS, row)], row)
        lo, hi = avg.mixture.shortest_interval(cfg.level)
        out.append((lo <= truth <= hi, hi - lo, tuple(float(x) for x in avg.posterior_probs)))
    return out


def _scenario_chunk(args):
    sc, cfg, preset_rows, seed, reps = args
    results = []
    for rep in reps:
        try:
            source, target = generate_dataset(sc, seed, rep)
            results.append((rep, _analyze_rep(source, target, cfg, preset_rows, sc.mu_t)))
        except (MixmetaError, FloatingPointError):
            results.append((rep, None))
    return results


def _run_parallel(func, payload, n_reps, workers):
    chunks = [range(i, min(i + 50, n_reps)) for i in range(0, n_reps, 50)]
    if workers <= 1 or len(chunks) == 1:
        parts = [func((*payload, c)) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(func, [(*payload, c) for c in chunks]))
    results = [r for part in parts for r in part]
    results.sort(key=lambda r: r[0])
    return results


def _resolve_presets(presets) -> dict[str, tuple[float, ...]]:
    if presets is None:
        presets = ["I", "IV", "VI"]
    if isinstance(presets, Mapping):
        items = presets.items()
    else:
        try:
            items = [(name, PRESETS[name]) for name in presets]
        except KeyError as exc:
            raise InputError(f"unknown preset {exc.args[0]!r}") from None
    out = {}
    for name, row in items:
        row = tuple(float(x) for x in row)
        if len(row) != 4 or min(row) < 0 or abs(sum(row) - 1) > 1e-10:
            raise InputError(f"preset {name!r} must hold four probabilities summing to 1")
        out[name] = row
    return out


def run_scenario(sc: Scenario, presets=None, n_reps: int = 2000, seed: int = 1,
                 cfg: AnalysisConfig = AnalysisConfig(), workers: int | None = None,
                 name: str = "") -> SimulationResult:
    """Coverage, mean interval width and mean posterior model probabilities
    of the target effect's shortest credible interval, per preset.

    ``presets`` is a list of preset names or a mapping name -> priors.
    Replications that fail numerically are excluded and counted.
    """
    if n_reps < 1:
        raise InputError("n_reps must be at least 1")
    table = _resolve_presets(presets)
    rows = tuple(table.values())
    workers = default_workers() if workers is None else workers
    results = _run_parallel(_scenario_chunk, (sc, cfg, rows, seed), n_reps, workers)
    good = [r for _, r in results if r is not None]
    n_failed = n_reps - len(good)
    summaries = []
    for j, (pname, prow) in enumerate(table.items()):
        n = len(good)
        if n == 0:
            cov, width, probs = math.nan, math.nan, (math.nan,) * 4
        else:
            cov = 100.0 * sum(1 for r in good if r[j][0]) / n
            width = math.fsum(r[j][1] for r in good) / n
            probs = tuple(math.fsum(r[j][2][i] for r in good) / n for i in range(4))
        summaries.append(PresetSummary(pname, prow, cov, width, probs))
    return SimulationResult(name, sc.k_s, sc.k_t, n_reps, n_failed, int(seed), tuple(summaries))


def _draw_parameters(rng, cfg: AnalysisConfig):
    """Source and target (mu, tau) drawn from the analysis prior mixture."""
    ep, tp = cfg.effect_prior, cfg.tau_prior
    if not hasattr(tp, "sample"):
        raise InputError("calibration needs a heterogeneity prior that can be sampled")
    mu_s, mu_new = rng.normal(ep.mean, ep.sd, 2)
    tau_s, tau_new = tp.sample(rng, 2)
    model = MODEL_IDS[int(rng.choice(4, p=np.asarray(cfg.model_priors)))]
    mu_t = mu_s if model in (ModelId.M1, ModelId.M2) else mu_new
    tau_t = tau_s if model in (ModelId.M1, ModelId.M3) else tau_new
    return float(mu_s), float(tau_s), float(mu_t), float(tau_t)


def _calibration_chunk(args):
    cfg, k_s, k_t, se_low, se_high, seed, reps = args
    results = []
    for rep in reps:
        try:
            mu_s, tau_s, mu_t, tau_t = _draw_parameters(stream(seed, rep, STREAM_PARAMS), cfg)
            source = _draw_group(stream(seed, rep, STREAM_SOURCE), k_s, mu_s, tau_s,
                                 se_low, se_high, "source")
            target = _draw_group(stream(seed, rep, STREAM_TARGET), k_t, mu_t, tau_t,
                                 se_low, se_high, "target")
            (covered, _, _), = _analyze_rep(source, target, cfg, [cfg.model_priors], mu_t)
            results.append((rep, bool(covered)))
        except (MixmetaError, FloatingPointError):
            results.append((rep, None))
    return results


def calibration_run(cfg: AnalysisConfig = AnalysisConfig(), k_s: int = 10, k_t: int = 3,
                    n_reps: int = 2000, seed: int = 1, workers: int | None = None,
                    se_low: float = 0.2, se_high: float = 1.0) -> CalibrationResult:
    """Coverage of the target effect when all parameters are drawn from the
    analysis prior; exact at the nominal level by construction."""
    if n_reps < 1:
        raise InputError("n_reps must be at least 1")
    if k_s < 1 or k_t < 1 or not 0 < se_low <= se_high:
        raise InputError("invalid study counts or standard error range")
    workers = default_workers() if workers is None else workers
    results = _run_parallel(_calibration_chunk, (cfg, k_s, k_t, se_low, se_high, seed),
                            n_reps, workers)
    covered = tuple(r for _, r in results if r is not None)
    cov = 100.0 * sum(covered) / len(covered) if covered else math.nan
    return CalibrationResult(cov, n_reps, n_reps - len(covered), int(seed), k_s, k_t, covered)

"""Analysis orchestration and the machine-readable run report.

JSON reports are fully determined by data and configuration: floats are
written with 17 significant digits, keys in a fixed order, and no wall
time or host information is included.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import nnhm
from .effect_size import Dataset
from .errors import InputError
from .mixture import average
from .models import MODEL_IDS, AnalysisConfig, fit_models
from .nnhm import HalfNormal, Tabulated

__all__ = ["RunReport", "cmd_analyze", "dumps_json", "dataset_hash", "config_dict"]


def dumps_json(obj, indent: int = 2) -> str:
    """JSON text with floats fixed at 17 significant digits; non-finite -> null."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {enc(v, level + 1)}"
                     for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if o is None:
            return "null"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            x = float(o)
            return format(x, ".17g") if math.isfinite(x) else "null"
        return json.dumps(str(o), ensure_ascii=False)

    return enc(obj, 0) + "\n"


def dataset_hash(data: Dataset) -> str:
    h = hashlib.sha256()
    for e in data.estimates:
        h.update(f"{e.study_label}\t{e.group_label}\t{e.y:.17g}\t{e.se:.17g}\n".encode("utf-8"))
    return h.hexdigest()


def config_dict(cfg: AnalysisConfig) -> dict:
    tp = cfg.tau_prior
    if isinstance(tp, HalfNormal):
        tau = {"family": "half-normal", "scale": tp.scale}
    elif isinstance(tp, Tabulated):
        tau = {"family": "tabulated", "support_max": tp.tau_max, "points": int(tp.support.size)}
    else:  # pragma: no cover
        tau = {"family": type(tp).__name__}
    return {
        "effect_prior": {"mean": cfg.effect_prior.mean, "sd": cfg.effect_prior.sd},
        "tau_prior": tau,
        "model_priors": {str(m): p for m, p in zip(MODEL_IDS, cfg.model_priors)},
        "level": cfg.level,
    }


def _effect_summary(mixture, level) -> dict:
    median = mixture.median()
    lo, hi = mixture.shortest_interval(level)
    log_scale = {"median": median, "ci_low": lo, "ci_high": hi,
                 "mean": mixture.mean, "sd": mixture.sd}
    return {
        "log_or": log_scale,
        "or": {"median": math.exp(median), "ci_low": math.exp(lo), "ci_high": math.exp(hi)},
    }


@dataclass(frozen=True)
class RunReport:
    content: dict
    wall_time: float = 0.0

    def to_json(self) -> str:
        return dumps_json(self.content)

    def to_text(self) -> str:
        c = self.content
        inp, cfg = c["input"], c["config"]
        lines = [
            f"mixmeta {c['software']['version']}",
            f"source: {inp['source_group']} (k={inp['k_source']})   "
            f"target: {inp['target_group']} (k={inp['k_target']})",
            f"effect prior N({cfg['effect_prior']['mean']:g}, {cfg['effect_prior']['sd']:g}^2); "
            f"tau prior {_tau_text(cfg['tau_prior'])}; level {cfg['level']:g}",
            "",
            f"{'model':<6}{'description':<24}{'prior':>8}{'log p(y|M)':>14}{'posterior':>11}",
        ]
        for m in c["models"]:
            lm = "-" if m["log_marginal"] is None or not math.isfinite(m["log_marginal"]) \
                else f"{m['log_marginal']:.4f}"
            lines.append(f"{m['id']:<6}{m['description']:<24}{m['prior']:>8.3f}{lm:>14}"
                         f"{m['posterior']:>11.3f}")
        if c["bayes_factors"]:
            lines.append("")
            lines.append("Bayes factors: " + ", ".join(f"{k} = {v:.3f}" for k, v in c["bayes_factors"].items()))
        lines.append("")
        for label, key in (("source alone", "source_standalone"), ("target alone", "target_standalone"),
                           ("model average", "target_effect")):
            o = c[key]["or"]
            lines.append(f"{label:<14} OR {o['median']:.3f} [{o['ci_low']:.3f}, {o['ci_high']:.3f}]")
        if self.wall_time:
            lines.append("")
            lines.append(f"wall time {self.wall_time:.2f} s")
        return "\n".join(lines) + "\n"


def _tau_text(t):
    if t["family"] == "half-normal":
        return f"half-normal({t['scale']:g})"
    return t["family"]


def cmd_analyze(data: Dataset, source_group: str, target_group: str,
                cfg: AnalysisConfig = AnalysisConfig()) -> RunReport:
    """Fit the active models, average them and assemble the report."""
    import time

    start = time.perf_counter()
    groups = data.groups
    for g in (source_group, target_group):
        if g not in groups:
            raise InputError(f"group {g!r} not found in data (groups: {', '.join(groups)})")
    if source_group == target_group:
        raise InputError("source and target groups must differ")
    source = data.subset(source_group)
    target = data.subset(target_group)
    fits = fit_models(source, target, cfg)
    avg = average([fits.get(m) for m in MODEL_IDS], cfg.model_priors)
    source_alone = nnhm.fit(source, cfg.effect_prior, cfg.tau_prior)
    target_alone = nnhm.fit(target, cfg.effect_prior, cfg.tau_prior)

    models = []
    for i, m in enumerate(MODEL_IDS):
        fit = fits.get(m)
        models.append({
            "id": str(m),
            "description": m.description,
            "prior": cfg.model_priors[i],
            "log_marginal": None if fit is None else fit.log_marginal,
            "posterior": float(avg.posterior_probs[i]),
        })
    content = {
        "software": {"name": "mixmeta", "version": __version__},
        "input": {
            "source_group": source_group,
            "target_group": target_group,
            "k_source": source.k,
            "k_target": target.k,
            "source_sha256": dataset_hash(source),
            "target_sha256": dataset_hash(target),
        },
        "config": config_dict(cfg),
        "models": models,
        "bayes_factors": dict(avg.bayes_factors),
        "source_standalone": _effect_summary(source_alone.mu_posterior, cfg.level),
        "target_standalone": _effect_summary(target_alone.mu_posterior, cfg.level),
        "target_effect": _effect_summary(avg.mixture, cfg.level),
    }
    return RunReport(content, wall_time=time.perf_counter() - start)

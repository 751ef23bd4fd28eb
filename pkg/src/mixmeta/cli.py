"""Command-line interface.

Errors are reported on stderr as one line ``mixmeta: error[CODE]: message``
with exit status 2 for input errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .effect_size import wald_ci
from .errors import InputError, MixmetaError
from .io import resolve_data
from .models import AnalysisConfig
from .nnhm import EffectPrior, HalfNormal
from .report import cmd_analyze

# options that may also come from a --config file, with their defaults
CONFIG_DEFAULTS = {
    "prior_mean": 0.0,
    "prior_sd": 2.0,
    "tau_scale": 0.5,
    "model_priors": "0.5,0,0,0.5",
    "level": 0.95,
    "schema": "counts",
    "source": None,
    "target": None,
    "seed": 1,
    "n_reps": 2000,
    "workers": None,
    "k_source": 10,
    "k_target": 3,
}
_FLOAT_KEYS = {"prior_mean", "prior_sd", "tau_scale", "level"}
_INT_KEYS = {"seed", "n_reps", "workers", "k_source", "k_target"}


def _read_config(path) -> dict:
    parser = configparser.ConfigParser()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    try:
        parser.read_string("[mixmeta]\n" + text)
    except configparser.Error as exc:
        raise InputError(f"malformed config file {path}: {exc}") from exc
    out = {}
    for key, raw in parser["mixmeta"].items():
        key = key.replace("-", "_")
        if key not in CONFIG_DEFAULTS:
            raise InputError(f"unknown config key {key!r}")
        out[key] = raw
    return out


def _settle(args):
    """Fill unset options from the config file, then from defaults (flags win)."""
    cfg_file = _read_config(args.config) if getattr(args, "config", None) else {}
    for key, default in CONFIG_DEFAULTS.items():
        if not hasattr(args, key) or getattr(args, key) is not None:
            continue
        value = cfg_file.get(key, default)
        if value is not None and key in _FLOAT_KEYS:
            value = _to_number(float, key, value)
        elif value is not None and key in _INT_KEYS:
            value = _to_number(int, key, value)
        setattr(args, key, value)
    return args


def _to_number(kind, key, value):
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise InputError(f"option {key!r} expects a number, got {value!r}") from None


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise InputError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _parse_grid(text: str | None, what: str):
    """Either ``start:stop:step`` or a comma-separated list."""
    if text is None:
        return None
    if ":" in text:
        parts = _parse_floats(text.replace(":", ","), what)
        if len(parts) != 3 or parts[2] <= 0:
            raise InputError(f"{what}: expected start:stop:step with positive step")
        start, stop, step = parts
        n = int(round((stop - start) / step))
        return np.round(start + step * np.arange(n + 1), 12)
    return np.array(_parse_floats(text, what))


def _config(args) -> AnalysisConfig:
    priors = _parse_floats(args.model_priors, "--model-priors")
    if len(priors) != 4:
        raise InputError("--model-priors needs four comma-separated probabilities (M1,M2,M3,M4)")
    return AnalysisConfig(EffectPrior(args.prior_mean, args.prior_sd), HalfNormal(args.tau_scale),
                          tuple(priors), args.level)


def _groups(args, data, defaults):
    source = args.source or (defaults[0] if defaults else None)
    target = args.target or (defaults[1] if defaults else None)
    if source is None or target is None:
        raise InputError("--source and --target groups are required for this dataset")
    return source, target


def _load(args):
    tables, data, defaults = resolve_data(args.data, args.schema)
    return tables, data, defaults


def _emit(text: str, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_escalc(args):
    _, data, _ = _load(args)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["study", "patients", "y", "se", "ci_low", "ci_high", "or", "or_low", "or_high"])
    for e in data.estimates:
        lo, hi = wald_ci(e, args.level)
        vals = [e.y, e.se, lo, hi, *np.exp([e.y, lo, hi])]
        writer.writerow([e.study_label, e.group_label, *(format(v, ".17g") for v in vals)])
    _emit(buf.getvalue(), args.out)


def cmd_analyze_cli(args):
    _, data, defaults = _load(args)
    source, target = _groups(args, data, defaults)
    report = cmd_analyze(data, source, target, _config(args))
    if args.json:
        _emit(report.to_json(), args.json)
    if not args.json or args.json != "-":
        sys.stdout.write(report.to_text())


def _source_target(args):
    _, data, defaults = _load(args)
    source, target = _groups(args, data, defaults)
    return data.subset(source), data.subset(target)


def cmd_sweep_prior(args):
    from .sensitivity import DEFAULT_PRIOR_GRID, sweep_prior_prob

    source, target = _source_target(args)
    grid = _parse_grid(args.grid, "--grid")
    result = sweep_prior_prob(source, target, _config(args),
                              DEFAULT_PRIOR_GRID if grid is None else grid)
    _write_sweep(result, args, "prior probability p(M1)", logx=False)


def cmd_sweep_sd(args):
    from .sensitivity import DEFAULT_SD_GRID, sweep_vague_sd

    source, target = _source_target(args)
    grid = _parse_grid(args.grid, "--grid")
    result = sweep_vague_sd(source, target, _config(args), DEFAULT_SD_GRID if grid is None else grid)
    _write_sweep(result, args, "vague prior sd", logx=True)


def _write_sweep(result, args, xlabel, logx):
    if args.out in (None, "-"):
        result.to_csv(sys.stdout)
    else:
        result.to_csv(args.out)
    if args.svg:
        result.plot_svg(args.svg, xlabel=xlabel, logx=logx)


def cmd_presets(args):
    from .sensitivity import PRESETS, preset_table, preset_table_csv

    source, target = _source_target(args)
    names = [n.strip() for n in args.presets.split(",")] if args.presets else list(PRESETS)
    unknown = [n for n in names if n not in PRESETS]
    if unknown:
        raise InputError(f"unknown preset(s): {', '.join(unknown)}")
    rows = preset_table(source, target, _config(args), {n: PRESETS[n] for n in names})
    if args.out in (None, "-"):
        preset_table_csv(rows, sys.stdout)
    else:
        preset_table_csv(rows, args.out)


def cmd_simulate(args):
    import dataclasses

    from .simulation import SCENARIOS, run_scenario

    names = [s.strip() for s in args.scenario.split(",")]
    presets = [p.strip() for p in args.presets.split(",")]
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="", encoding="utf-8")
    try:
        for i, name in enumerate(names):
            if name not in SCENARIOS:
                raise InputError(f"unknown scenario {name!r}")
            sc = dataclasses.replace(SCENARIOS[name], k_s=args.k_source, k_t=args.k_target)
            res = run_scenario(sc, presets, args.n_reps, args.seed, _config(args),
                               workers=args.workers, name=name)
            res.to_csv(out, append_header=(i == 0))
            if res.n_failed:
                print(f"mixmeta: warning: {res.n_failed} replication(s) failed in {name}", file=sys.stderr)
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_calibrate(args):
    from .simulation import calibration_run

    res = calibration_run(_config(args), args.k_source, args.k_target, args.n_reps, args.seed,
                          workers=args.workers)
    if args.out in (None, "-"):
        res.to_csv(sys.stdout)
    else:
        res.to_csv(args.out)


def cmd_forest_cli(args):
    from .plots import cmd_forest

    _, data, defaults = _load(args)
    report = None
    if not args.no_combined:
        source, target = _groups(args, data, defaults)
        report = cmd_analyze(data, source, target, _config(args))
    text, _ = cmd_forest(data, report, args.svg)
    sys.stdout.write(text)


class _Parser(argparse.ArgumentParser):
    """Usage errors follow the same one-line format as runtime errors."""

    def error(self, message):
        print(f"mixmeta: error[USAGE_ERROR]: {' '.join(message.split())}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="mixmeta",
        description="Robust extrapolation in random-effects meta-analysis by model averaging.")
    parser.add_argument("--version", action="version", version=f"mixmeta {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def analysis_opts(p, with_groups=True):
        p.add_argument("data", help="bundled dataset name (migraine, transplant) or CSV path")
        p.add_argument("--schema", choices=["counts", "precomputed"], default=None)
        p.add_argument("--config", help="key = value file providing option defaults")
        if with_groups:
            p.add_argument("--source", help="group label of the source studies")
            p.add_argument("--target", help="group label of the target studies")
        p.add_argument("--prior-mean", type=float, default=None, help="vague effect prior mean (0)")
        p.add_argument("--prior-sd", type=float, default=None, help="vague effect prior sd (2)")
        p.add_argument("--tau-scale", type=float, default=None, help="half-normal tau prior scale (0.5)")
        p.add_argument("--model-priors", default=None, help="p(M1),p(M2),p(M3),p(M4) (0.5,0,0,0.5)")
        p.add_argument("--level", type=float, default=None, help="credible level (0.95)")

    p = sub.add_parser("escalc", help="log odds ratios and Wald intervals")
    analysis_opts(p, with_groups=False)
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_escalc)

    p = sub.add_parser("analyze", help="model-averaged analysis of the target group")
    analysis_opts(p)
    p.add_argument("--json", help="write the JSON report here ('-' for stdout)")
    p.set_defaults(func=cmd_analyze_cli)

    p = sub.add_parser("sweep-prior", help="vary the prior probability p(M1)")
    analysis_opts(p)
    p.add_argument("--grid", help="start:stop:step or comma list (default 0:1:0.01)")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--svg", help="SVG plot path")
    p.set_defaults(func=cmd_sweep_prior)

    p = sub.add_parser("sweep-sd", help="vary the vague effect prior sd")
    analysis_opts(p)
    p.add_argument("--grid", help="start:stop:step or comma list (default 25 log-spaced in [0.5, 8])")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--svg", help="SVG plot path")
    p.set_defaults(func=cmd_sweep_sd)

    p = sub.add_parser("presets", help="compare prior model-probability presets")
    analysis_opts(p)
    p.add_argument("--presets", help="comma list of preset names (default all)")
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_presets)

    def sim_opts(p):
        p.add_argument("--config", help="key = value file providing option defaults")
        p.add_argument("--k-source", type=int, default=None)
        p.add_argument("--k-target", type=int, default=None)
        p.add_argument("--n-reps", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: $MIXMETA_WORKERS or 1)")
        p.add_argument("--prior-mean", type=float, default=None)
        p.add_argument("--prior-sd", type=float, default=None)
        p.add_argument("--tau-scale", type=float, default=None)
        p.add_argument("--model-priors", default=None)
        p.add_argument("--level", type=float, default=None)
        p.add_argument("--out", help="CSV output path")

    p = sub.add_parser("simulate", help="coverage simulation for fixed scenarios")
    sim_opts(p)
    p.add_argument("--scenario", default="S1,S2,S3,S4")
    p.add_argument("--presets", default="I,IV,V,VI,VII,VIII,IX,X,XI,XII,XIII")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="coverage with parameters drawn from the prior")
    sim_opts(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("forest", help="forest plot (text, optional SVG)")
    analysis_opts(p)
    p.add_argument("--svg", help="SVG output path")
    p.add_argument("--no-combined", action="store_true", help="omit the combined estimate row")
    p.set_defaults(func=cmd_forest_cli)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _settle(args)
        args.func(args)
    except MixmetaError as exc:
        msg = " ".join(str(exc).split())
        print(f"mixmeta: error[{exc.code}]: {msg}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mixmeta: error[{InputError.code}]: {exc.strerror or exc}: {exc.filename}", file=sys.stderr)
        return InputError.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())

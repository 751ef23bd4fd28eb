"""Static forest and sweep plots (text and SVG)."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from .effect_size import Dataset, wald_ci  # noqa: E402

__all__ = ["ForestRow", "forest_rows", "forest_text", "forest_svg", "cmd_forest", "sweep_svg"]

# fixed id salt and no date stamp keep the SVG bytes reproducible
_SVG_RC = {"svg.hashsalt": "mixmeta", "svg.fonttype": "none"}


@dataclass(frozen=True)
class ForestRow:
    label: str
    group: str
    estimate: float  # OR scale
    ci_low: float
    ci_high: float
    combined: bool = False


def forest_rows(data: Dataset, report=None, level: float = 0.95) -> list[ForestRow]:
    rows = []
    for e in data.estimates:
        lo, hi = wald_ci(e, level)
        rows.append(ForestRow(e.study_label, e.group_label, math.exp(e.y), math.exp(lo), math.exp(hi)))
    if report is not None:
        c = report.content if hasattr(report, "content") else report
        o = c["target_effect"]["or"]
        rows.append(ForestRow(f"combined ({c['input']['target_group']})", c["input"]["target_group"],
                              o["median"], o["ci_low"], o["ci_high"], combined=True))
    return rows


def forest_text(rows: list[ForestRow]) -> str:
    width = max(len(r.label) for r in rows)
    gwidth = max(len(r.group) for r in rows)
    out = [f"{'study':<{width}}  {'group':<{gwidth}}  {'OR':>8}  {'95% interval':>20}"]
    for r in rows:
        ci = f"[{r.ci_low:.3f}, {r.ci_high:.3f}]"
        line = f"{r.label:<{width}}  {r.group:<{gwidth}}  {r.estimate:>8.3f}  {ci:>20}"
        if r.combined:
            out.append("-" * len(line))
        out.append(line)
    return "\n".join(out) + "\n"


def _save_svg(fig, path=None) -> str:
    with matplotlib.rc_context(_SVG_RC):
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def forest_svg(rows: list[ForestRow], path=None) -> str:
    n = len(rows)
    fig = Figure(figsize=(7.5, 0.28 * n + 1.2))
    ax = fig.add_axes([0.38, 0.8 / (0.28 * n + 1.2), 0.58, 1 - 1.0 / (0.28 * n + 1.2)])
    for i, r in enumerate(rows):
        ypos = n - 1 - i
        if r.combined:
            xs = [r.ci_low, r.estimate, r.ci_high, r.estimate]
            ax.fill(xs, [ypos, ypos + 0.3, ypos, ypos - 0.3], color="tab:blue")
        else:
            ax.plot([r.ci_low, r.ci_high], [ypos, ypos], color="black", lw=1)
            ax.plot([r.estimate], [ypos], marker="s", color="black", ms=4)
    ax.axvline(1.0, color="grey", lw=0.8, ls="--")
    ax.set_xscale("log")
    ax.set_yticks(range(n))
    ax.set_yticklabels([r.label for r in reversed(rows)], fontsize=8)
    ax.set_ylim(-0.8, n - 0.2)
    ax.set_xlabel("odds ratio")
    return _save_svg(fig, path)


def cmd_forest(data: Dataset, report=None, svg_path=None) -> tuple[str, str]:
    """Forest plot, one row per study plus the combined estimate when a
    report is given.  Returns ``(text, svg)``."""
    rows = forest_rows(data, report)
    return forest_text(rows), forest_svg(rows, svg_path)


def sweep_svg(result, path=None, xlabel="setting", logx=False) -> str:
    x = [r.setting for r in result.rows]
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(111)
    ax.fill_between(x, [r.ci_low for r in result.rows], [r.ci_high for r in result.rows],
                    color="tab:blue", alpha=0.25, lw=0)
    ax.plot(x, [r.median for r in result.rows], color="tab:blue")
    ax.axhline(0.0, color="grey", lw=0.8, ls="--")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("log odds ratio")
    return _save_svg(fig, path)

"""Log odds ratios from 2x2 count tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import InputError

__all__ = [
    "TwoByTwoTable",
    "EffectEstimate",
    "Dataset",
    "log_odds_ratio",
    "wald_ci",
    "escalc_dataset",
]


@dataclass(frozen=True)
class TwoByTwoTable:
    study_label: str
    group_label: str
    treat_events: int
    treat_total: int
    ctrl_events: int
    ctrl_total: int

    def __post_init__(self):
        for name in ("treat_events", "treat_total", "ctrl_events", "ctrl_total"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise InputError(f"{name} must be an integer count, got {value!r}")
        if self.treat_total <= 0 or self.ctrl_total <= 0:
            raise InputError("arm totals must be positive")
        if not 0 <= self.treat_events <= self.treat_total:
            raise InputError("treat_events must lie in [0, treat_total]")
        if not 0 <= self.ctrl_events <= self.ctrl_total:
            raise InputError("ctrl_events must lie in [0, ctrl_total]")


@dataclass(frozen=True)
class EffectEstimate:
    """A study's log odds ratio ``y`` with standard error ``se``."""

    study_label: str
    group_label: str
    y: float
    se: float

    def __post_init__(self):
        if not np.isfinite(self.y):
            raise InputError(f"non-finite estimate for {self.study_label!r}")
        if not (np.isfinite(self.se) and self.se > 0):
            raise InputError(f"standard error must be finite and positive for {self.study_label!r}")


@dataclass(frozen=True)
class Dataset:
    """An ordered, non-empty collection of effect estimates."""

    estimates: tuple[EffectEstimate, ...]

    def __post_init__(self):
        object.__setattr__(self, "estimates", tuple(self.estimates))
        if not self.estimates:
            raise InputError("a dataset needs at least one estimate")

    @classmethod
    def from_arrays(cls, y, se, group_label="", labels=None) -> "Dataset":
        y = np.atleast_1d(np.asarray(y, dtype=float))
        se = np.atleast_1d(np.asarray(se, dtype=float))
        if y.shape != se.shape:
            raise InputError("y and se must have the same length")
        if labels is None:
            labels = [f"study {i + 1}" for i in range(len(y))]
        return cls(tuple(
            EffectEstimate(str(lab), group_label, float(a), float(b))
            for lab, a, b in zip(labels, y, se)
        ))

    @property
    def k(self) -> int:
        return len(self.estimates)

    @property
    def y(self) -> np.ndarray:
        return np.array([e.y for e in self.estimates])

    @property
    def se(self) -> np.ndarray:
        return np.array([e.se for e in self.estimates])

    @property
    def groups(self) -> list[str]:
        return list(dict.fromkeys(e.group_label for e in self.estimates))

    def subset(self, group_label: str) -> "Dataset":
        chosen = tuple(e for e in self.estimates if e.group_label == group_label)
        if not chosen:
            raise InputError(f"no studies labelled {group_label!r}")
        return Dataset(chosen)

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(self.estimates + other.estimates)

    def __len__(self):
        return self.k


def log_odds_ratio(table: TwoByTwoTable) -> EffectEstimate:
    """Log odds ratio (treatment vs control) and its Woolf standard error.

    When any cell is zero, 0.5 is added to all four cells of this table.
    """
    a = float(table.treat_events)
    b = float(table.treat_total - table.treat_events)
    c = float(table.ctrl_events)
    d = float(table.ctrl_total - table.ctrl_events)
    if min(a, b, c, d) == 0:
        a, b, c, d = a + 0.5, b + 0.5, c + 0.5, d + 0.5
    y = np.log(a) + np.log(d) - np.log(b) - np.log(c)
    se = np.sqrt(1 / a + 1 / b + 1 / c + 1 / d)
    return EffectEstimate(table.study_label, table.group_label, float(y), float(se))


def wald_ci(e: EffectEstimate, level: float = 0.95) -> tuple[float, float]:
    """Symmetric Wald interval ``y -/+ z * se`` on the log-OR scale."""
    if not 0 < level < 1:
        raise InputError(f"level must lie in (0, 1), got {level}")
    z = float(ndtri(0.5 + level / 2))
    return e.y - z * e.se, e.y + z * e.se


def escalc_dataset(tables: Sequence[TwoByTwoTable] | Iterable[TwoByTwoTable]) -> Dataset:
    tables = list(tables)
    if not tables:
        raise InputError("no tables given")
    estimates = []
    for i, table in enumerate(tables):
        try:
            estimates.append(log_odds_ratio(table))
        except InputError as exc:
            raise InputError(f"row {i}: {exc}") from exc
    return Dataset(tuple(estimates))

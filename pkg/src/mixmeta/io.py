"""CSV ingestion/export and the bundled example datasets."""

from __future__ import annotations

import csv
import io
import math
from importlib import resources
from pathlib import Path
from typing import Sequence

from .effect_size import Dataset, EffectEstimate, TwoByTwoTable
from .errors import InputError

__all__ = [
    "COUNTS_COLUMNS",
    "PRECOMPUTED_COLUMNS",
    "BUNDLED",
    "load_csv",
    "write_counts_csv",
    "bundled_path",
    "resolve_data",
]

COUNTS_COLUMNS = ("study", "patients", "treat_events", "treat_total", "ctrl_events", "ctrl_total")
PRECOMPUTED_COLUMNS = ("study", "patients", "y", "se")

# bundled dataset -> (source group, target group)
BUNDLED = {
    "migraine": ("adolescents", "children"),
    "transplant": ("adults", "children"),
}


def bundled_path(name: str):
    if name not in BUNDLED:
        raise InputError(f"unknown bundled dataset {name!r}")
    return resources.files("mixmeta").joinpath("data", f"{name}.csv")


def _read_rows(path):
    try:
        source = path if hasattr(path, "read_text") else Path(path)
        text = source.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    return reader.fieldnames or [], list(reader)


def _int_cell(row, col, line):
    raw = (row.get(col) or "").strip()
    try:
        value = float(raw)
    except ValueError:
        raise InputError(f"row {line}, column {col!r}: non-numeric value {raw!r}") from None
    if not value.is_integer():
        raise InputError(f"row {line}, column {col!r}: expected an integer count, got {raw!r}")
    return int(value)


def _float_cell(row, col, line):
    raw = (row.get(col) or "").strip()
    try:
        value = float(raw)
    except ValueError:
        raise InputError(f"row {line}, column {col!r}: non-numeric value {raw!r}") from None
    if not math.isfinite(value):
        raise InputError(f"row {line}, column {col!r}: non-finite value {raw!r}")
    return value


def load_csv(path, schema: str = "counts"):
    """Read a counts CSV (-> list of TwoByTwoTable) or a precomputed
    ``y, se`` CSV (-> Dataset).

    Rows are numbered from 1 (first data line) in error messages.
    """
    if schema not in ("counts", "precomputed"):
        raise InputError(f"unknown schema {schema!r}")
    required = COUNTS_COLUMNS if schema == "counts" else PRECOMPUTED_COLUMNS
    fields, rows = _read_rows(path)
    missing = [c for c in required if c not in fields]
    if missing:
        raise InputError(f"missing column(s): {', '.join(missing)}")
    if not rows:
        raise InputError("no data rows")
    out = []
    for line, row in enumerate(rows, start=1):
        study = (row.get("study") or "").strip()
        group = (row.get("patients") or "").strip()
        if schema == "counts":
            counts = [_int_cell(row, c, line) for c in COUNTS_COLUMNS[2:]]
            try:
                out.append(TwoByTwoTable(study, group, *counts))
            except InputError as exc:
                col = "treat_events" if counts[0] > counts[1] or counts[0] < 0 else (
                    "ctrl_events" if counts[2] > counts[3] or counts[2] < 0 else "totals")
                raise InputError(f"row {line}, column {col!r}: {exc}") from None
        else:
            y = _float_cell(row, "y", line)
            se = _float_cell(row, "se", line)
            if se <= 0:
                raise InputError(f"row {line}, column 'se': standard error must be positive")
            out.append(EffectEstimate(study, group, y, se))
    return out if schema == "counts" else Dataset(tuple(out))


def write_counts_csv(tables: Sequence[TwoByTwoTable], path_or_file) -> None:
    if not hasattr(path_or_file, "write"):
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            return write_counts_csv(tables, fh)
    writer = csv.writer(path_or_file, lineterminator="\n")
    writer.writerow(COUNTS_COLUMNS)
    for t in tables:
        writer.writerow([t.study_label, t.group_label, t.treat_events, t.treat_total,
                         t.ctrl_events, t.ctrl_total])


def resolve_data(spec: str, schema: str = "counts"):
    """Load a bundled dataset by name or a CSV file by path.

    Returns ``(tables_or_None, dataset, default_groups_or_None)``.
    """
    from .effect_size import escalc_dataset

    if spec in BUNDLED:
        tables = load_csv(bundled_path(spec), "counts")
        return tables, escalc_dataset(tables), BUNDLED[spec]
    loaded = load_csv(spec, schema)
    if schema == "counts":
        return loaded, escalc_dataset(loaded), None
    return None, loaded, None

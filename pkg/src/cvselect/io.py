"""CSV ingestion, JSON report serialization and plot-ready CSV tables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import ConfigError, DataError

SCHEMA_VERSION = 1
NA = "NA"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response vector, predictor matrix and predictor column names."""

    response: np.ndarray
    predictors: np.ndarray
    columns: tuple[str, ...]
    response_name: str

    @property
    def n(self) -> int:
        return self.response.shape[0]


def load_csv(path, response: str) -> Dataset:
    """Read a header-first, comma-separated file of decimal reals.

    The ``response`` column becomes y; every other column, in header
    order, becomes a predictor.  Row numbers in error messages count the
    header as line 1.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        if response not in header:
            raise DataError(f"{path}: response column {response!r} not found in header {header}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {line_no} has {len(row)} fields, header has {len(header)}"
                )
            values = []
            for col, cell in zip(header, row):
                text = cell.strip()
                if text == "" or text.lower() in ("na", "nan"):
                    raise DataError(f"{path}: missing value at line {line_no}, column {col!r}")
                try:
                    v = float(text)
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse {text!r} as a real at line {line_no}, column {col!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}: non-finite value {text!r} at line {line_no}, column {col!r}"
                    )
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    j = header.index(response)
    keep = [i for i in range(len(header)) if i != j]
    return Dataset(
        data[:, j].copy(), data[:, keep].copy(), tuple(header[i] for i in keep), response
    )


def load_vector_csv(path, column: str | None = None) -> np.ndarray:
    """Read one numeric column (the first, unless named) from a header-first CSV."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    header = text.splitlines()[0].split(",") if text.strip() else []
    if not header:
        raise DataError(f"{path}: empty file, expected a header row")
    name = column or header[0].strip()
    return load_csv(path, name).response


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_report(payload: dict) -> str:
    """Serialize a report with ``schema_version`` first and non-finite numbers as null.

    Floats use Python's shortest round-trip repr, so values survive a
    load/dump cycle exactly.
    """
    body = {"schema_version": SCHEMA_VERSION}
    body.update(_jsonable(payload))
    return json.dumps(body, indent=2, allow_nan=False) + "\n"


def write_report(path, payload: dict) -> None:
    Path(path).write_text(dumps_report(payload), encoding="utf-8")


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object", "<root>")
    return data


def _cell(v) -> str:
    if v is None:
        return NA
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else NA
    return str(v)


def write_table(path, rows: Iterable[dict], columns: list[str]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])


RUNS_COLUMNS = ["n", "rep", "ratio", "selected", "oracle", "correct_selected"]
SUMMARY_COLUMNS = [
    "n",
    "train_size",
    "r",
    "replications",
    "failures",
    "ratio_q10",
    "ratio_median",
    "ratio_q90",
    "correct_selection_frequency",
]

"""Flat-file formats: CSV sample tables and JSON results.

CSV files carry a header row and comma-separated values; discrete
samples are small nonnegative integers, linear samples are decimal
reals.  JSON is written with full round-trip float precision (shortest
representation recovering the exact double, up to 17 significant
digits), so written files read back bit-exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ValidationError


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def dump_json(obj: Any, path: str | Path | None) -> str:
    """Serialize to JSON; write to ``path`` when given, return the text."""
    text = json.dumps(_to_jsonable(obj), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def load_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {path}: {exc}") from exc


def read_samples_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Header and float data matrix from a sample CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path} is empty") from None
        rows = list(reader)
    width = len(header)
    if width == 0:
        raise ValidationError(f"{path} has an empty header")
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValidationError(
                f"{path} row {i + 2}: expected {width} fields, got {len(row)}"
            )
        try:
            data[i] = [float(v) for v in row]
        except ValueError as exc:
            raise ValidationError(f"{path} row {i + 2}: {exc}") from exc
    return [h.strip() for h in header], data


def integer_samples(header: list[str], data: np.ndarray, path: str | Path) -> np.ndarray:
    """Cast a float sample matrix to ints, rejecting non-integral values."""
    rounded = np.rint(data)
    if data.size and (np.abs(data - rounded) > 1e-9).any():
        raise ValidationError(f"{path}: discrete samples must be integers")
    if data.size and rounded.min() < 0:
        raise ValidationError(f"{path}: discrete samples must be nonnegative")
    return rounded.astype(int)


def write_samples_csv(
    path: str | Path, header: list[str], data: np.ndarray, *, integer: bool = False
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.asarray(data):
            if integer:
                writer.writerow([int(v) for v in row])
            else:
                writer.writerow([repr(float(v)) for v in row])

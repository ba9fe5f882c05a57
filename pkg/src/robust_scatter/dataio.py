"""CSV ingestion and JSON serialization of results."""

from __future__ import annotations

import csv
import json
import sys
import warnings

import numpy as np

from .objective import WeightedSample
from .solver import FitResult

__all__ = ["CsvFormatError", "SCHEMA_VERSION", "dump_json", "load_csv",
           "result_payload"]

SCHEMA_VERSION = 1


class CsvFormatError(ValueError):
    """Malformed CSV input; the message carries line/column positions."""


def load_csv(path, header: bool = False, weights_col: str | None = None,
             delimiter: str = ",") -> WeightedSample:
    """Read a numeric CSV into a weighted sample.

    Weights default to uniform 1/n.  ``weights_col`` names a column of the
    header to use as weights instead (requires ``header=True``); weights
    off from unit sum by more than 1e-9 are renormalized with a warning.
    """
    if weights_col is not None and not header:
        raise CsvFormatError("a named weight column requires a header row")
    rows: list[list[float]] = []
    weights: list[float] = []
    w_idx: int | None = None
    width: int | None = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for ln, record in enumerate(reader, start=1):
            if not record:
                continue
            if ln == 1 and header:
                if weights_col is not None:
                    names = [c.strip() for c in record]
                    if weights_col not in names:
                        raise CsvFormatError(
                            f"weight column {weights_col!r} not in header"
                        )
                    w_idx = names.index(weights_col)
                width = len(record)
                continue
            if width is None:
                width = len(record)
            if len(record) != width:
                raise CsvFormatError(
                    f"line {ln}: expected {width} fields, found {len(record)}"
                )
            values = []
            for col, cell in enumerate(record, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"line {ln}, column {col}: could not parse "
                        f"{cell.strip()!r} as a number"
                    ) from None
            if w_idx is not None:
                weights.append(values.pop(w_idx))
            rows.append(values)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    X = np.asarray(rows, dtype=float)
    if w_idx is None:
        w = np.full(X.shape[0], 1.0 / X.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        if np.any(w <= 0):
            bad = int(np.flatnonzero(w <= 0)[0])
            raise CsvFormatError(
                f"weight {w[bad]!r} in data row {bad + 1} is not positive"
            )
        if abs(w.sum() - 1.0) > 1e-9:
            warnings.warn(
                f"weights sum to {w.sum():.6g}; renormalizing to 1",
                stacklevel=2,
            )
            w = w / w.sum()
    return WeightedSample(X, w)


def result_payload(result: FitResult, config_echo: dict) -> dict:
    """JSON-ready document for one estimate: {schema_version, config_echo, result}."""
    return {
        "schema_version": SCHEMA_VERSION,
        "config_echo": config_echo,
        "result": {
            "sigma": result.sigma.tolist(),
            "mu": None if result.mu is None else result.mu.tolist(),
            "iterations": result.iterations,
            "converged": result.converged,
            "residual": result.final_residual,
            "step_log_summary": result.step_counts(),
        },
    }


def dump_json(payload: dict, out: str | None = None) -> None:
    """Write the payload to a file, or stdout when no path is given."""
    text = json.dumps(payload, indent=2)
    if out is None:
        sys.stdout.write(text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")

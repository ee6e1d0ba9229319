"""Forecast error estimators and the evaluation protocol.

Three percentage-error metrics over pooled (actual, predicted) points:

- smape: (200/N) * sum |y - yhat| / (|y| + |yhat|); a both-zero term
  contributes 0. Reported on the 0-200 scale, with a 0-2 companion
  (``smape_fraction``) for comparability with tables that use it.
- mape: (1/N') * sum |y - yhat| / y over nonzero actuals only; the
  number of excluded zero-actual terms is reported alongside. All-zero
  actuals make the metric undefined (NaN).
- wape: sum |y - yhat| / sum |y|; undefined (NaN) when sum |y| is 0.

Metrics are computed in original units (seconds of daily usage), after
inverse scaling, so they do not depend on the fitted scaler.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionError
from .model import Model
from .prep import WindowSample, invert_usage


def _check_pair(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if y.shape != p.shape:
        raise DimensionError(f"length mismatch: {y.shape} vs {p.shape}")
    if y.size == 0:
        raise DataError("empty input")
    return y, p


def smape(actual, predicted) -> float:
    """Symmetric mean absolute percentage error on the 0-200 scale."""
    y, p = _check_pair(actual, predicted)
    denom = np.abs(y) + np.abs(p)
    terms = np.zeros_like(y)
    nz = denom > 0
    terms[nz] = np.abs(y[nz] - p[nz]) / denom[nz]
    return float(200.0 / y.size * terms.sum())


def mape(actual, predicted) -> tuple[float, int]:
    """Mean absolute percentage error over nonzero actuals.

    Returns (value, number of zero-actual terms excluded); the value is
    NaN when every actual is zero.
    """
    y, p = _check_pair(actual, predicted)
    nz = y != 0
    excluded = int((~nz).sum())
    if not nz.any():
        return math.nan, excluded
    value = float(np.mean(np.abs(y[nz] - p[nz]) / np.abs(y[nz])))
    return value, excluded


def wape(actual, predicted) -> float:
    """Weighted absolute percentage error; NaN when sum |actual| is 0."""
    y, p = _check_pair(actual, predicted)
    denom = float(np.abs(y).sum())
    if denom == 0:
        return math.nan
    return float(np.abs(y - p).sum() / denom)


@dataclass(slots=True)
class EvalResult:
    """Pooled metrics for one model over one evaluation scope."""

    scope: str  # "global" or "personalized"
    participant_id: int | None
    model_kind: str
    smape: float
    mape: float
    wape: float
    n_points: int
    n_zero_actuals_excluded_from_mape: int

    @property
    def smape_fraction(self) -> float:
        return self.smape / 100.0

    def row(self) -> list:
        scope = (
            f"personalized:{self.participant_id}"
            if self.scope == "personalized"
            else "global"
        )
        return [
            scope,
            self.model_kind,
            f"{self.smape:.6f}",
            f"{self.smape_fraction:.6f}",
            f"{self.mape:.6f}" if not math.isnan(self.mape) else "nan",
            f"{self.wape:.6f}" if not math.isnan(self.wape) else "nan",
            self.n_points,
            self.n_zero_actuals_excluded_from_mape,
        ]


METRICS_CSV_HEADER = [
    "scope",
    "model",
    "smape",
    "smape_fraction",
    "mape",
    "wape",
    "n_points",
    "excluded",
]


def evaluate(
    model: Model,
    test_samples: Sequence[WindowSample],
    participant_id: int | None = None,
    chunk: int = 2048,
) -> EvalResult:
    """Pool every horizon point in scope (original units) and compute all
    three metrics over the pooled set, not per-sample averages.

    ``participant_id`` restricts the scope to that participant
    (personalized); None evaluates globally.
    """
    samples = list(test_samples)
    if participant_id is not None:
        samples = [s for s in samples if s.participant_id == participant_id]
    if not samples:
        raise DataError(
            "no samples in scope"
            + (f" for participant {participant_id}" if participant_id is not None else "")
        )
    if model.scaler is None:
        raise DataError("model has no scaler; evaluation needs original units")

    actual_parts = []
    pred_parts = []
    for start in range(0, len(samples), chunk):
        block = samples[start : start + chunk]
        x = np.stack([s.inputs for s in block])
        y_scaled = np.stack([s.target for s in block])
        pred_parts.append(model.predict(x).ravel())
        actual_parts.append(invert_usage(y_scaled, model.scaler).ravel())
    actual = np.concatenate(actual_parts)
    predicted = np.concatenate(pred_parts)

    mape_value, excluded = mape(actual, predicted)
    return EvalResult(
        scope="personalized" if participant_id is not None else "global",
        participant_id=participant_id,
        model_kind=model.kind,
        smape=smape(actual, predicted),
        mape=mape_value,
        wape=wape(actual, predicted),
        n_points=actual.size,
        n_zero_actuals_excluded_from_mape=excluded,
    )


def write_metrics_csv(
    results: Sequence[EvalResult], path: str | Path, extra_columns: dict[str, object] | None = None
) -> None:
    """Emit the benchmark comparison table (one row per scope and model)."""
    extra = extra_columns or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*extra.keys(), *METRICS_CSV_HEADER])
        for res in results:
            writer.writerow([*extra.values(), *res.row()])


def append_metrics_csv(
    results: Sequence[EvalResult], path: str | Path, extra_columns: dict[str, object]
) -> None:
    """Append rows (with leading extra columns) to an existing metrics CSV,
    writing the header when the file does not exist yet."""
    path = Path(path)
    new_file = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow([*extra_columns.keys(), *METRICS_CSV_HEADER])
        for res in results:
            writer.writerow([*extra_columns.values(), *res.row()])

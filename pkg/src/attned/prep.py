"""Preprocessing: minute logs to scaled, windowed daily feature series.

Pipeline stages, in order: usage-interval segmentation, daily aggregation
with ordinal/one-hot encoding, trajectory-mean imputation, train-only
scaling (z-score then min-max to [0, 1]), z-score outlier removal,
a multicollinearity (VIF) report, chronological per-participant splits,
and sliding-window sample extraction.

Prepared datasets serialize to a directory: ``daily.csv``,
``scaler.json``, ``vif.json``, ``split_manifest.csv``, and
``windows.bin``. The binary layout of ``windows.bin`` (little-endian):

    magic b"ATNW" | u32 version=1 | u32 L | u32 H | u32 F | u64 count
    then per sample:
    i64 participant_id | i64 start_date (proleptic ordinal) | u8 split
    | L*F f64 inputs (row-major) | H f64 targets

Split codes: 0=train, 1=val, 2=test.
"""

from __future__ import annotations

import csv
import json
import struct
import warnings
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, ImputationError, OrderingError
from .ingest import HPROG_VALUES, SOUND_CLASS_VALUES, MinuteLog

FEATURE_NAMES = (
    "Usage",
    "hVol",
    "PTA4",
    "Age",
    "Sex_1",
    "Sex_2",
    "hProg",
    "LatRel",
    "LonRel",
    "SoundClass",
)
USAGE_INDEX = 0

HPROG_ORDINAL = {label: float(i) for i, label in enumerate(HPROG_VALUES)}
SOUND_ORDINAL = {label: float(i) for i, label in enumerate(SOUND_CLASS_VALUES)}

SECONDS_PER_DAY = 86400.0

DEFAULT_D_MAX_S = 600.0
DEFAULT_Z_THRESHOLD = 3.0
DEFAULT_VIF_THRESHOLD = 10.0
DEFAULT_WINDOW_LEN = 14
DEFAULT_HORIZON = 14

SPLIT_TRAIN = "train"
SPLIT_VAL = "val"
SPLIT_TEST = "test"
_SPLIT_CODES = {SPLIT_TRAIN: 0, SPLIT_VAL: 1, SPLIT_TEST: 2}
_SPLIT_FROM_CODE = {v: k for k, v in _SPLIT_CODES.items()}

MIN_DAYS_PER_PARTICIPANT = 5


@dataclass(slots=True)
class UsageInterval:
    """Maximal run of timestamps whose adjacent gaps stay within d_max."""

    participant_id: int
    t_start: datetime
    t_end: datetime

    @property
    def duration_s(self) -> float:
        return (self.t_end - self.t_start).total_seconds()


def segment_intervals(
    timestamps: Sequence[datetime], d_max_s: float, *, participant_id: int = 0
) -> list[UsageInterval]:
    """Group sorted timestamps into usage intervals.

    Consecutive timestamps at most ``d_max_s`` seconds apart share an
    interval; a larger gap starts a new one. Raises OrderingError if the
    input is not sorted ascending.
    """
    if d_max_s <= 0:
        raise ConfigError("d_max_s must be positive")
    if not timestamps:
        return []
    intervals: list[UsageInterval] = []
    run_start = timestamps[0]
    prev = timestamps[0]
    for ts in timestamps[1:]:
        gap = (ts - prev).total_seconds()
        if gap < 0:
            raise OrderingError("timestamps must be sorted ascending")
        if gap > d_max_s:
            intervals.append(UsageInterval(participant_id, run_start, prev))
            run_start = ts
        prev = ts
    intervals.append(UsageInterval(participant_id, run_start, prev))
    return intervals


def split_at_midnight(intervals: Iterable[UsageInterval]) -> list[UsageInterval]:
    """Split intervals at UTC midnight so no piece spans two days."""
    out: list[UsageInterval] = []
    for iv in intervals:
        start = iv.t_start.astimezone(timezone.utc)
        end = iv.t_end.astimezone(timezone.utc)
        while start.date() < end.date():
            midnight = datetime.combine(
                start.date() + timedelta(days=1), time.min, tzinfo=timezone.utc
            )
            out.append(UsageInterval(iv.participant_id, start, midnight))
            start = midnight
        out.append(UsageInterval(iv.participant_id, start, end))
    return out


def daily_usage(intervals: Sequence[UsageInterval]) -> dict[date, float]:
    """Sum interval durations per start day, for one participant.

    Every day between the first and last interval is present, with zero
    usage on days that have no intervals. Intervals are attributed to the
    UTC day they start on; run split_at_midnight first if intervals may
    cross midnight and per-day totals must stay within 86,400 s.
    """
    if not intervals:
        return {}
    totals: dict[date, float] = {}
    for iv in intervals:
        day = iv.t_start.astimezone(timezone.utc).date()
        totals[day] = totals.get(day, 0.0) + iv.duration_s
    first = min(totals)
    last = max(totals)
    day = first
    while day <= last:
        totals.setdefault(day, 0.0)
        day += timedelta(days=1)
    return dict(sorted(totals.items()))


@dataclass(slots=True)
class DailyRecord:
    """Per-participant per-day aggregate; feature fields may be absent."""

    participant_id: int
    day: date
    usage_s: float
    age: float | None = None
    sex_1: float | None = None
    sex_2: float | None = None
    h_prog_ord: float | None = None
    h_vol_mean: float | None = None
    lat_rel_mean: float | None = None
    lon_rel_mean: float | None = None
    pta4_mean: float | None = None
    sound_class_ord: float | None = None

    def feature_row(self) -> list[float]:
        """Values in FEATURE_NAMES order; NaN marks an absent field."""
        values = (
            self.usage_s,
            self.h_vol_mean,
            self.pta4_mean,
            self.age,
            self.sex_1,
            self.sex_2,
            self.h_prog_ord,
            self.lat_rel_mean,
            self.lon_rel_mean,
            self.sound_class_ord,
        )
        return [float("nan") if v is None else float(v) for v in values]


def _mean_or_none(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def aggregate_daily(
    records: Sequence[MinuteLog], *, d_max_s: float = DEFAULT_D_MAX_S
) -> list[DailyRecord]:
    """Aggregate minute logs into one record per participant per day.

    Usage comes from interval segmentation (midnight-split); the other
    variables are daily means, with hProg and SoundClass ordinal-encoded
    before averaging and Sex one-hot encoded (majority label of the day).
    """
    by_pid: dict[int, list[MinuteLog]] = {}
    for rec in records:
        by_pid.setdefault(rec.participant_id, []).append(rec)

    out: list[DailyRecord] = []
    for pid in sorted(by_pid):
        recs = sorted(by_pid[pid], key=lambda r: r.timestamp)
        intervals = segment_intervals([r.timestamp for r in recs], d_max_s, participant_id=pid)
        usage = daily_usage(split_at_midnight(intervals))

        by_day: dict[date, list[MinuteLog]] = {}
        for rec in recs:
            by_day.setdefault(rec.timestamp.astimezone(timezone.utc).date(), []).append(rec)

        for day in sorted(usage):
            day_recs = by_day.get(day, [])
            sexes = [r.sex for r in day_recs if r.sex is not None]
            if sexes:
                n_female = sum(1 for s in sexes if s == "female")
                is_female = n_female * 2 >= len(sexes)
                sex_1, sex_2 = (1.0, 0.0) if is_female else (0.0, 1.0)
            else:
                sex_1 = sex_2 = None
            out.append(
                DailyRecord(
                    participant_id=pid,
                    day=day,
                    usage_s=usage[day],
                    age=_mean_or_none([float(r.age) for r in day_recs if r.age is not None]),
                    sex_1=sex_1,
                    sex_2=sex_2,
                    h_prog_ord=_mean_or_none(
                        [HPROG_ORDINAL[r.h_prog] for r in day_recs if r.h_prog is not None]
                    ),
                    h_vol_mean=_mean_or_none(
                        [float(r.h_vol) for r in day_recs if r.h_vol is not None]
                    ),
                    lat_rel_mean=_mean_or_none(
                        [r.lat_rel for r in day_recs if r.lat_rel is not None]
                    ),
                    lon_rel_mean=_mean_or_none(
                        [r.lon_rel for r in day_recs if r.lon_rel is not None]
                    ),
                    pta4_mean=_mean_or_none([r.pta4 for r in day_recs if r.pta4 is not None]),
                    sound_class_ord=_mean_or_none(
                        [SOUND_ORDINAL[r.sound_class] for r in day_recs if r.sound_class is not None]
                    ),
                )
            )
    return out


def impute_trajectory_mean(series: Sequence[float | None]) -> list[float]:
    """Fill absent values with the mean of the observed ones.

    Observed values pass through untouched. Raises ImputationError when
    nothing is observed. None and NaN both count as absent.
    """
    observed = [float(v) for v in series if v is not None and not np.isnan(v)]
    if not observed:
        raise ImputationError("no observed values to impute from")
    mean = sum(observed) / len(observed)
    return [
        mean if (v is None or np.isnan(v)) else float(v)
        for v in series
    ]


def impute_table(matrix: np.ndarray, participant_ids: np.ndarray) -> np.ndarray:
    """Trajectory-mean imputation of a (rows, features) table with NaNs.

    Each participant's NaNs in a column are replaced by that participant's
    observed column mean. Raises ImputationError naming the participant
    and feature when a column is entirely absent for a participant.
    """
    out = matrix.astype(float).copy()
    for pid in np.unique(participant_ids):
        rows = participant_ids == pid
        block = out[rows]
        for j in range(block.shape[1]):
            col = block[:, j]
            mask = np.isnan(col)
            if not mask.any():
                continue
            if mask.all():
                raise ImputationError(
                    f"participant {int(pid)}: feature {FEATURE_NAMES[j]} has no observed values"
                )
            col[mask] = col[~mask].mean()
        out[rows] = block
    return out


@dataclass(slots=True)
class ScalerParams:
    """Train-fitted two-stage scaler: z-score, then min-max to [0, 1].

    Constant features are flagged (scaled_flags False) and pass through
    unchanged in both directions.
    """

    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    zmin: np.ndarray
    zmax: np.ndarray
    scaled_flags: np.ndarray
    fitted_on_train_only: bool = True

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "zmin": self.zmin.tolist(),
            "zmax": self.zmax.tolist(),
            "scaled_flags": [bool(v) for v in self.scaled_flags],
            "fitted_on_train_only": self.fitted_on_train_only,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScalerParams":
        return cls(
            feature_names=tuple(d["feature_names"]),
            mean=np.asarray(d["mean"], dtype=float),
            std=np.asarray(d["std"], dtype=float),
            zmin=np.asarray(d["zmin"], dtype=float),
            zmax=np.asarray(d["zmax"], dtype=float),
            scaled_flags=np.asarray(d["scaled_flags"], dtype=bool),
            fitted_on_train_only=bool(d["fitted_on_train_only"]),
        )


def fit_scaler(
    train_rows: np.ndarray, feature_names: Sequence[str] = FEATURE_NAMES
) -> ScalerParams:
    """Fit the two-stage scaler on training rows only."""
    x = np.asarray(train_rows, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise DataError("fit_scaler needs a non-empty (rows, features) matrix")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    scaled = std > 0
    safe_std = np.where(scaled, std, 1.0)
    z = (x - mean) / safe_std
    zmin = z.min(axis=0)
    zmax = z.max(axis=0)
    # a feature with std > 0 always has zmax > zmin on the fitting rows
    return ScalerParams(
        feature_names=tuple(feature_names),
        mean=mean,
        std=safe_std,
        zmin=np.where(scaled, zmin, 0.0),
        zmax=np.where(scaled, zmax, 1.0),
        scaled_flags=scaled,
    )


def apply_scaler(rows: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    """Standardize then min-max normalize; flagged features pass through."""
    x = np.asarray(rows, dtype=float)
    z = (x - scaler.mean) / scaler.std
    span = np.where(scaler.scaled_flags, scaler.zmax - scaler.zmin, 1.0)
    scaled = (z - scaler.zmin) / span
    return np.where(scaler.scaled_flags, scaled, x)


def invert_scaler(scaled_rows: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    """Exact inverse of apply_scaler."""
    s = np.asarray(scaled_rows, dtype=float)
    z = s * (scaler.zmax - scaler.zmin) + scaler.zmin
    x = z * scaler.std + scaler.mean
    return np.where(scaler.scaled_flags, x, s)


def scale_usage(values: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    """Scale raw usage seconds with the Usage feature's parameters."""
    return _scale_single(values, scaler, forward=True)


def invert_usage(values: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    """Map scaled usage back to seconds."""
    return _scale_single(values, scaler, forward=False)


def _scale_single(values: np.ndarray, scaler: ScalerParams, *, forward: bool) -> np.ndarray:
    j = scaler.feature_names.index("Usage")
    v = np.asarray(values, dtype=float)
    if not scaler.scaled_flags[j]:
        return v.copy()
    if forward:
        z = (v - scaler.mean[j]) / scaler.std[j]
        return (z - scaler.zmin[j]) / (scaler.zmax[j] - scaler.zmin[j])
    z = v * (scaler.zmax[j] - scaler.zmin[j]) + scaler.zmin[j]
    return z * scaler.std[j] + scaler.mean[j]


def flag_outliers_zscore(rows: np.ndarray, threshold: float = DEFAULT_Z_THRESHOLD) -> np.ndarray:
    """Boolean mask of rows where any feature sits more than ``threshold``
    standard deviations from that feature's mean over the given rows.

    Intended for rows that were standardized and normalized first. With
    fewer than 2 rows nothing can be flagged (warns and returns all-False).
    """
    x = np.asarray(rows, dtype=float)
    if x.ndim != 2:
        raise DataError("expected a (rows, features) matrix")
    if x.shape[0] < 2:
        warnings.warn("fewer than 2 rows: outlier flagging skipped", stacklevel=2)
        return np.zeros(x.shape[0], dtype=bool)
    if not np.isfinite(threshold):
        return np.zeros(x.shape[0], dtype=bool)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    z = np.where(std > 0, (x - mean) / np.where(std > 0, std, 1.0), 0.0)
    return (np.abs(z) > threshold).any(axis=1)


@dataclass(slots=True)
class VifReport:
    """Variance inflation factors with inclusion flags (VIF < threshold)."""

    feature_names: tuple[str, ...]
    vif: np.ndarray
    threshold: float

    @property
    def included(self) -> np.ndarray:
        return self.vif < self.threshold

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "features": [
                {
                    "name": name,
                    "vif": None if np.isinf(v) else float(v),
                    "exact_collinear": bool(np.isinf(v)),
                    "included": bool(v < self.threshold),
                }
                for name, v in zip(self.feature_names, self.vif)
            ],
        }


def compute_vif(
    matrix: np.ndarray,
    feature_names: Sequence[str] = FEATURE_NAMES,
    threshold: float = DEFAULT_VIF_THRESHOLD,
) -> VifReport:
    """VIF_j = 1 / (1 - R^2) from regressing feature j on all the others.

    Auxiliary regressions include an intercept. Exactly collinear (or
    constant) features get an infinite sentinel and are excluded.
    """
    x = np.asarray(matrix, dtype=float)
    n, f = x.shape
    if n < f + 1:
        raise DataError(f"need at least {f + 1} rows to compute VIF over {f} features")
    vif = np.empty(f)
    for j in range(f):
        y = x[:, j]
        others = np.delete(x, j, axis=1)
        design = np.hstack([np.ones((n, 1)), others])
        coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        sst = float(((y - y.mean()) ** 2).sum())
        ssr = float((resid**2).sum())
        if sst <= 0:
            vif[j] = np.inf
            continue
        r2 = 1.0 - ssr / sst
        vif[j] = np.inf if r2 >= 1.0 - 1e-12 else 1.0 / (1.0 - r2)
    return VifReport(tuple(feature_names), vif, threshold)


def split_days(n_days: int) -> list[str]:
    """Chronological split labels for one participant's day sequence.

    The final 20% of days (floor) are test; of the remainder, the final
    20% (floor) are validation; the rest train. Each split keeps at least
    one day. Raises for sequences shorter than MIN_DAYS_PER_PARTICIPANT.
    """
    if n_days < MIN_DAYS_PER_PARTICIPANT:
        raise DataError(f"need at least {MIN_DAYS_PER_PARTICIPANT} days, got {n_days}")
    n_test = max(1, int(n_days * 0.2))
    rest = n_days - n_test
    n_val = max(1, int(rest * 0.2))
    n_train = rest - n_val
    return [SPLIT_TRAIN] * n_train + [SPLIT_VAL] * n_val + [SPLIT_TEST] * n_test


def split_per_participant(participant_ids: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Assign split labels day-by-day for each participant.

    Rows must be ordered chronologically within each participant.
    Participants with fewer than MIN_DAYS_PER_PARTICIPANT days are
    excluded (empty label) with a warning; their ids are returned.
    """
    labels = np.empty(len(participant_ids), dtype=object)
    excluded: list[int] = []
    for pid in np.unique(participant_ids):
        rows = np.flatnonzero(participant_ids == pid)
        if len(rows) < MIN_DAYS_PER_PARTICIPANT:
            warnings.warn(
                f"participant {int(pid)} has only {len(rows)} day(s); excluded from splits",
                stacklevel=2,
            )
            excluded.append(int(pid))
            labels[rows] = ""
            continue
        labels[rows] = split_days(len(rows))
    return labels, excluded


@dataclass(slots=True)
class WindowSample:
    """One training sample: an L-day input window and an H-day target."""

    participant_id: int
    start_date: date
    split: str
    inputs: np.ndarray  # (L, F) scaled
    target: np.ndarray  # (H,) scaled usage


@dataclass(slots=True)
class PreparedDataset:
    """Windowed samples plus everything needed to undo the scaling."""

    samples: list[WindowSample]
    scaler: ScalerParams
    feature_names: tuple[str, ...]
    window_len: int
    horizon: int

    def split_samples(self, split: str) -> list[WindowSample]:
        return [s for s in self.samples if s.split == split]

    def arrays(self, split: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Stack (inputs, targets) over samples, optionally one split."""
        subset = self.samples if split is None else self.split_samples(split)
        if not subset:
            f = len(self.feature_names)
            return (
                np.zeros((0, self.window_len, f)),
                np.zeros((0, self.horizon)),
            )
        x = np.stack([s.inputs for s in subset])
        y = np.stack([s.target for s in subset])
        return x, y


def make_windows(
    participant_ids: np.ndarray,
    days: Sequence[date],
    scaled: np.ndarray,
    labels: np.ndarray,
    window_len: int = DEFAULT_WINDOW_LEN,
    horizon: int = DEFAULT_HORIZON,
) -> list[WindowSample]:
    """Slide stride-1 windows over runs of consecutive retained days.

    A sample keeps the split label its target days share; windows whose
    target days straddle a split boundary are dropped. Input days may
    reach back into an earlier split. Participants whose whole series is
    shorter than L + H yield no samples (with a warning).
    """
    if window_len < 1 or horizon < 1:
        raise ConfigError("window_len and horizon must be >= 1")
    samples: list[WindowSample] = []
    span = window_len + horizon
    for pid in np.unique(participant_ids):
        rows = np.flatnonzero(participant_ids == pid)
        if len(rows) < span:
            warnings.warn(
                f"participant {int(pid)}: series of {len(rows)} day(s) is shorter "
                f"than L+H={span}; no samples",
                stacklevel=2,
            )
            continue
        # break into maximal runs of consecutive calendar days
        run_start = 0
        runs: list[np.ndarray] = []
        for k in range(1, len(rows) + 1):
            if k == len(rows) or (days[rows[k]] - days[rows[k - 1]]).days != 1:
                runs.append(rows[run_start:k])
                run_start = k
        for run in runs:
            for i in range(0, len(run) - span + 1):
                target_rows = run[i + window_len : i + span]
                target_labels = {labels[r] for r in target_rows}
                if len(target_labels) != 1:
                    continue
                (label,) = target_labels
                input_rows = run[i : i + window_len]
                samples.append(
                    WindowSample(
                        participant_id=int(pid),
                        start_date=days[run[i]],
                        split=label,
                        inputs=scaled[input_rows].copy(),
                        target=scaled[target_rows, USAGE_INDEX].copy(),
                    )
                )
    return samples


@dataclass(slots=True)
class PrepResult:
    """Everything cmd_prep persists."""

    dataset: PreparedDataset
    daily: list[DailyRecord]
    imputed: np.ndarray
    participant_ids: np.ndarray
    days: list[date]
    labels: np.ndarray
    outlier_mask: np.ndarray
    vif: VifReport
    excluded_participants: list[int]


def prepare(
    records: Sequence[MinuteLog],
    *,
    d_max_s: float = DEFAULT_D_MAX_S,
    z_threshold: float = DEFAULT_Z_THRESHOLD,
    vif_threshold: float = DEFAULT_VIF_THRESHOLD,
    window_len: int = DEFAULT_WINDOW_LEN,
    horizon: int = DEFAULT_HORIZON,
) -> PrepResult:
    """Run the full preprocessing pipeline over raw minute logs.

    Outlier flags come from a provisional train-only scaling pass; the
    retained days are then re-split and re-scaled so the shipped scaler
    reflects the final training split. Flagged days break the day series,
    so windows never span a removed day.
    """
    daily = aggregate_daily(records, d_max_s=d_max_s)
    if not daily:
        raise DataError("no daily records produced; is the input empty?")

    pids_all = np.array([r.participant_id for r in daily])
    days_all = [r.day for r in daily]
    raw = np.array([r.feature_row() for r in daily], dtype=float)

    labels0, excluded = split_per_participant(pids_all)
    kept0 = labels0 != ""
    imputed = np.full_like(raw, np.nan)
    imputed[kept0] = impute_table(raw[kept0], pids_all[kept0])

    train0 = kept0 & (labels0 == SPLIT_TRAIN)
    scaler0 = fit_scaler(imputed[train0])
    scaled0 = np.full_like(raw, np.nan)
    scaled0[kept0] = apply_scaler(imputed[kept0], scaler0)

    outlier_mask = np.zeros(len(daily), dtype=bool)
    outlier_mask[kept0] = flag_outliers_zscore(scaled0[kept0], z_threshold)

    retained = kept0 & ~outlier_mask
    labels1, excluded2 = split_per_participant(pids_all[retained])
    final_keep = labels1 != ""

    retained_rows = np.flatnonzero(retained)[final_keep]
    pids = pids_all[retained_rows]
    days = [days_all[i] for i in retained_rows]
    labels = labels1[final_keep]

    final_labels_all = np.full(len(daily), "", dtype=object)
    final_labels_all[retained_rows] = labels

    scaler = fit_scaler(imputed[retained_rows][labels == SPLIT_TRAIN])
    scaled = apply_scaler(imputed[retained_rows], scaler)

    vif = compute_vif(scaled[labels == SPLIT_TRAIN], FEATURE_NAMES, vif_threshold)

    samples = make_windows(pids, days, scaled, labels, window_len, horizon)
    dataset = PreparedDataset(samples, scaler, FEATURE_NAMES, window_len, horizon)
    return PrepResult(
        dataset=dataset,
        daily=daily,
        imputed=imputed,
        participant_ids=pids_all,
        days=days_all,
        labels=final_labels_all,
        outlier_mask=outlier_mask,
        vif=vif,
        excluded_participants=sorted(set(excluded) | set(excluded2)),
    )


_WINDOWS_MAGIC = b"ATNW"
_WINDOWS_VERSION = 1


def save_windows(dataset: PreparedDataset, path: str | Path) -> None:
    f = len(dataset.feature_names)
    with open(path, "wb") as fh:
        fh.write(_WINDOWS_MAGIC)
        fh.write(
            struct.pack(
                "<IIIIQ",
                _WINDOWS_VERSION,
                dataset.window_len,
                dataset.horizon,
                f,
                len(dataset.samples),
            )
        )
        for s in dataset.samples:
            fh.write(
                struct.pack(
                    "<qqB",
                    s.participant_id,
                    s.start_date.toordinal(),
                    _SPLIT_CODES[s.split],
                )
            )
            fh.write(np.ascontiguousarray(s.inputs, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(s.target, dtype="<f8").tobytes())


def load_windows(path: str | Path, scaler: ScalerParams) -> PreparedDataset:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _WINDOWS_MAGIC:
            raise DataError(f"{path}: not a windows file")
        version, window_len, horizon, f, count = struct.unpack("<IIIIQ", fh.read(24))
        if version != _WINDOWS_VERSION:
            raise DataError(f"{path}: unsupported windows version {version}")
        samples: list[WindowSample] = []
        rec_head = struct.Struct("<qqB")
        for _ in range(count):
            head = fh.read(rec_head.size)
            if len(head) < rec_head.size:
                raise DataError(f"{path}: truncated windows file")
            pid, ordinal, split_code = rec_head.unpack(head)
            body = fh.read(8 * (window_len * f + horizon))
            if len(body) < 8 * (window_len * f + horizon):
                raise DataError(f"{path}: truncated windows file")
            arr = np.frombuffer(body, dtype="<f8")
            samples.append(
                WindowSample(
                    participant_id=int(pid),
                    start_date=date.fromordinal(int(ordinal)),
                    split=_SPLIT_FROM_CODE[int(split_code)],
                    inputs=arr[: window_len * f].reshape(window_len, f).copy(),
                    target=arr[window_len * f :].copy(),
                )
            )
    return PreparedDataset(samples, scaler, tuple(scaler.feature_names), window_len, horizon)


def save_prepared_dir(result: PrepResult, out_dir: str | Path) -> dict[str, Path]:
    """Write daily.csv, scaler.json, vif.json, split_manifest.csv, windows.bin."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    daily_path = out / "daily.csv"
    with open(daily_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ID", "Date", *FEATURE_NAMES])
        for rec, row in zip(result.daily, result.imputed):
            cells = ["" if np.isnan(v) else repr(float(v)) for v in row]
            writer.writerow([rec.participant_id, rec.day.isoformat(), *cells])
    paths["daily"] = daily_path

    scaler_path = out / "scaler.json"
    scaler_path.write_text(
        json.dumps(result.dataset.scaler.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    paths["scaler"] = scaler_path

    vif_path = out / "vif.json"
    vif_path.write_text(json.dumps(result.vif.to_dict(), indent=2, sort_keys=True) + "\n")
    paths["vif"] = vif_path

    manifest_path = out / "split_manifest.csv"
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ID", "Date", "split", "outlier"])
        for i, rec in enumerate(result.daily):
            if result.outlier_mask[i]:
                label = "outlier"
            else:
                label = result.labels[i] if result.labels[i] else "excluded"
            writer.writerow(
                [
                    rec.participant_id,
                    rec.day.isoformat(),
                    label,
                    int(result.outlier_mask[i]),
                ]
            )
    paths["split_manifest"] = manifest_path

    windows_path = out / "windows.bin"
    save_windows(result.dataset, windows_path)
    paths["windows"] = windows_path
    return paths


def load_prepared_dir(prep_dir: str | Path) -> PreparedDataset:
    prep_dir = Path(prep_dir)
    scaler_file = prep_dir / "scaler.json"
    windows_file = prep_dir / "windows.bin"
    if not scaler_file.exists() or not windows_file.exists():
        raise DataError(
            f"{prep_dir}: not a prepared-dataset directory (need scaler.json and windows.bin); "
            "run the prep command first"
        )
    scaler = ScalerParams.from_dict(json.loads(scaler_file.read_text()))
    return load_windows(windows_file, scaler)

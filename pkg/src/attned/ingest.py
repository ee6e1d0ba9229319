"""Minute-level hearing-aid log ingestion.

Handles the raw per-minute device records: parsing and writing the CSV
interchange format, schema validation, and a seeded synthetic generator
that stands in for real device exports.

CSV format: header row with columns
``ID, Age, Sex, hProg, hVol, LatRel, LonRel, PTA4, SoundClass, Timestamp``,
UTF-8, RFC 4180 quoting, timestamps ISO 8601 with a zone designator.
Missing values are empty cells and surface as ``None`` on the records.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, RowError, SchemaError

CSV_COLUMNS = (
    "ID",
    "Age",
    "Sex",
    "hProg",
    "hVol",
    "LatRel",
    "LonRel",
    "PTA4",
    "SoundClass",
    "Timestamp",
)

SEX_VALUES = ("female", "male")
HPROG_VALUES = ("low", "medium", "high", "high_plus")
SOUND_CLASS_VALUES = ("quiet", "speech", "speech_in_noise", "noise")

# Labels accepted on input (case-insensitive) beyond the canonical ones.
_HPROG_ALIASES = {"high+": "high_plus", "high plus": "high_plus"}
_SOUND_ALIASES = {"speech in noise": "speech_in_noise"}

DEFAULT_HVOL_RANGE = (0, 10)


@dataclass(slots=True)
class MinuteLog:
    """One raw per-minute device record. Optional fields may be None."""

    participant_id: int
    timestamp: datetime
    age: int | None = None
    sex: str | None = None
    h_prog: str | None = None
    h_vol: int | None = None
    lat_rel: float | None = None
    lon_rel: float | None = None
    pta4: float | None = None
    sound_class: str | None = None


@dataclass(slots=True)
class ValidationReport:
    """Report-only summary of a record batch; never raises."""

    n_records: int = 0
    null_counts: dict[str, int] = field(default_factory=dict)
    out_of_range_counts: dict[str, int] = field(default_factory=dict)
    duplicate_pairs: int = 0
    records_per_participant: dict[int, int] = field(default_factory=dict)

    @property
    def total_issues(self) -> int:
        return (
            sum(self.null_counts.values())
            + sum(self.out_of_range_counts.values())
            + self.duplicate_pairs
        )


def _parse_timestamp(text: str) -> datetime:
    # datetime.fromisoformat on 3.10 rejects a trailing 'Z'
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError("timestamp missing zone designator")
    return ts.astimezone(timezone.utc)


def _decode_enum(raw: str, canonical: tuple[str, ...], aliases: dict[str, str]) -> str:
    label = raw.strip().lower()
    label = aliases.get(label, label)
    if label not in canonical:
        raise ValueError(f"unknown label {raw!r} (expected one of {', '.join(canonical)})")
    return label


def _cell(raw: str | None) -> str | None:
    if raw is None:
        return None
    raw = raw.strip()
    return raw if raw else None


def parse_log_rows(rows: Iterable[Sequence[str]], *, first_line: int = 1) -> list[MinuteLog]:
    """Parse CSV rows (header first) into records.

    Raises SchemaError on a bad header and RowError (with line number) on a
    bad cell. Enum labels are decoded case-insensitively.
    """
    it = iter(rows)
    try:
        header = [h.strip() for h in next(it)]
    except StopIteration:
        raise SchemaError("empty file: missing header row") from None
    expected = list(CSV_COLUMNS)
    missing = [c for c in expected if c not in header]
    unknown = [c for c in header if c not in expected]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    if unknown:
        raise SchemaError(f"unknown column(s): {', '.join(unknown)}")
    idx = {name: header.index(name) for name in expected}

    records: list[MinuteLog] = []
    for line_no, row in enumerate(it, start=first_line + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise RowError(line_no, f"expected {len(header)} cells, got {len(row)}")

        def get(name: str) -> str | None:
            return _cell(row[idx[name]])

        try:
            pid_raw = get("ID")
            ts_raw = get("Timestamp")
            if pid_raw is None:
                raise ValueError("ID is required")
            if ts_raw is None:
                raise ValueError("Timestamp is required")
            sex = get("Sex")
            h_prog = get("hProg")
            sound = get("SoundClass")
            rec = MinuteLog(
                participant_id=int(pid_raw),
                timestamp=_parse_timestamp(ts_raw),
                age=int(get("Age")) if get("Age") is not None else None,
                sex=_decode_enum(sex, SEX_VALUES, {}) if sex is not None else None,
                h_prog=_decode_enum(h_prog, HPROG_VALUES, _HPROG_ALIASES)
                if h_prog is not None
                else None,
                h_vol=int(get("hVol")) if get("hVol") is not None else None,
                lat_rel=float(get("LatRel")) if get("LatRel") is not None else None,
                lon_rel=float(get("LonRel")) if get("LonRel") is not None else None,
                pta4=float(get("PTA4")) if get("PTA4") is not None else None,
                sound_class=_decode_enum(sound, SOUND_CLASS_VALUES, _SOUND_ALIASES)
                if sound is not None
                else None,
            )
        except ValueError as exc:
            raise RowError(line_no, str(exc)) from None
        records.append(rec)
    return records


def parse_log_csv(path: str | Path) -> list[MinuteLog]:
    """Read a minute-log CSV file into records, in file order."""
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_log_rows(csv.reader(fh))


def _format_value(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, datetime):
        return value.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")
    return str(value)


def _record_row(r: MinuteLog) -> list[str]:
    return [
        _format_value(v)
        for v in (
            r.participant_id,
            r.age,
            r.sex,
            r.h_prog,
            r.h_vol,
            r.lat_rel,
            r.lon_rel,
            r.pta4,
            r.sound_class,
            r.timestamp,
        )
    ]


def write_log_csv(records: Iterable[MinuteLog], path: str | Path) -> None:
    """Write records as a canonical CSV; round-trips through parse_log_csv."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(_record_row(r))


def validate_schema(
    records: Sequence[MinuteLog], *, h_vol_range: tuple[int, int] = DEFAULT_HVOL_RANGE
) -> ValidationReport:
    """Count nulls, out-of-range values, and duplicate (ID, Timestamp) pairs."""
    optional_fields = [f.name for f in fields(MinuteLog) if f.name not in ("participant_id", "timestamp")]
    report = ValidationReport(
        n_records=len(records),
        null_counts={name: 0 for name in optional_fields},
        out_of_range_counts={"age": 0, "h_vol": 0},
    )
    seen: set[tuple[int, datetime]] = set()
    for rec in records:
        for name in optional_fields:
            if getattr(rec, name) is None:
                report.null_counts[name] += 1
        if rec.age is not None and rec.age < 0:
            report.out_of_range_counts["age"] += 1
        if rec.h_vol is not None and not (h_vol_range[0] <= rec.h_vol <= h_vol_range[1]):
            report.out_of_range_counts["h_vol"] += 1
        key = (rec.participant_id, rec.timestamp)
        if key in seen:
            report.duplicate_pairs += 1
        else:
            seen.add(key)
        report.records_per_participant[rec.participant_id] = (
            report.records_per_participant.get(rec.participant_id, 0) + 1
        )
    return report


@dataclass(slots=True)
class SynthConfig:
    """Regime parameters for the synthetic minute-log generator.

    Daily wear time follows a per-participant AR(1) process (coefficient
    ``usage_autocorr``, stationary sd ``usage_daily_sd_minutes`` around
    a per-participant base level), optionally modulated by a
    participant-specific zero-mean weekly profile (``weekly_sd_minutes``),
    and carved into wear sessions separated by gaps long enough to start
    new usage intervals downstream.
    """

    n_participants: int = 53
    days: int = 200
    seed: int = 7
    start_date: str = "2019-03-01"
    base_usage_minutes_mean: float = 120.0
    base_usage_minutes_sd: float = 40.0
    usage_daily_sd_minutes: float = 35.0
    usage_autocorr: float = 0.8
    usage_drift_sd_minutes: float = 0.0
    usage_drift_autocorr: float = 0.97
    weekly_sd_minutes: float = 0.0
    session_minutes_mean: float = 35.0
    session_minutes_sd: float = 15.0
    gap_minutes_mean: float = 60.0
    missing_prob: float = 0.02
    h_vol_range: tuple[int, int] = DEFAULT_HVOL_RANGE

    def validate(self) -> None:
        if self.n_participants < 1:
            raise ConfigError("n_participants must be >= 1")
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        if not 0.0 <= self.missing_prob <= 1.0:
            raise ConfigError("missing_prob must be in [0, 1]")
        if not -1.0 < self.usage_autocorr < 1.0:
            raise ConfigError("usage_autocorr must be in (-1, 1)")
        if not -1.0 < self.usage_drift_autocorr < 1.0:
            raise ConfigError("usage_drift_autocorr must be in (-1, 1)")
        for name in (
            "base_usage_minutes_mean",
            "session_minutes_mean",
            "gap_minutes_mean",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in (
            "base_usage_minutes_sd",
            "usage_daily_sd_minutes",
            "usage_drift_sd_minutes",
            "session_minutes_sd",
            "weekly_sd_minutes",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.h_vol_range[0] > self.h_vol_range[1]:
            raise ConfigError("h_vol_range must be (lo, hi) with lo <= hi")
        try:
            date.fromisoformat(self.start_date)
        except ValueError as exc:
            raise ConfigError(f"start_date: {exc}") from None


# Gaps between sessions must exceed the downstream interval-splitting
# threshold (600 s) so each session becomes its own usage interval.
_MIN_GAP_MINUTES = 11

_MAX_DAILY_MINUTES = 1380  # leave headroom before midnight


def _draw_positive(rng: np.random.Generator, mean: float, sd: float, lo: float, hi: float) -> float:
    if sd == 0:
        return float(np.clip(mean, lo, hi))
    return float(np.clip(rng.normal(mean, sd), lo, hi))


def generate_synthetic(config: SynthConfig) -> list[MinuteLog]:
    """Generate per-minute wear records; deterministic for a given seed.

    Age, sex, and PTA4 are constant per participant. Daily usage has
    positive day-to-day autocorrelation so that past usage is predictive
    of future usage. Optional fields are blanked independently with
    probability ``missing_prob``.
    """
    config.validate()
    start = date.fromisoformat(config.start_date)
    records: list[MinuteLog] = []

    for pid in range(1, config.n_participants + 1):
        rng = np.random.default_rng([config.seed, pid])
        age = int(rng.integers(45, 86))
        sex = SEX_VALUES[int(rng.integers(0, 2))]
        pta4 = float(np.round(rng.uniform(25.0, 70.0), 1))
        base = _draw_positive(
            rng, config.base_usage_minutes_mean, config.base_usage_minutes_sd, 15.0, 900.0
        )
        hvol_pref = int(rng.integers(config.h_vol_range[0], config.h_vol_range[1] + 1))
        hprog_weights = rng.dirichlet(np.ones(len(HPROG_VALUES)))
        sound_weights = rng.dirichlet(np.ones(len(SOUND_CLASS_VALUES)))
        lat0 = float(rng.normal(0.0, 0.5))
        lon0 = float(rng.normal(0.0, 0.5))
        if config.weekly_sd_minutes > 0:
            week_profile = rng.normal(0.0, config.weekly_sd_minutes, 7)
            week_profile -= week_profile.mean()
        else:
            week_profile = np.zeros(7)

        rho = config.usage_autocorr
        innov_sd = config.usage_daily_sd_minutes * math.sqrt(max(0.0, 1.0 - rho * rho))
        rho_drift = config.usage_drift_autocorr
        drift_innov_sd = config.usage_drift_sd_minutes * math.sqrt(
            max(0.0, 1.0 - rho_drift * rho_drift)
        )
        ar_state = 0.0
        drift_state = (
            float(rng.normal(0.0, config.usage_drift_sd_minutes))
            if config.usage_drift_sd_minutes > 0
            else 0.0
        )

        for day_index in range(config.days):
            day = start + timedelta(days=day_index)
            if config.usage_daily_sd_minutes > 0:
                ar_state = rho * ar_state + rng.normal(0.0, innov_sd)
            if config.usage_drift_sd_minutes > 0:
                drift_state = rho_drift * drift_state + rng.normal(0.0, drift_innov_sd)
            level = base + drift_state + week_profile[day.weekday()] + ar_state
            minutes_today = int(round(np.clip(level, 1.0, _MAX_DAILY_MINUTES)))

            session_lengths: list[int] = []
            remaining = minutes_today
            while remaining > 0:
                m = _draw_positive(
                    rng, config.session_minutes_mean, config.session_minutes_sd, 1.0, remaining
                )
                m = max(1, min(int(round(m)), remaining))
                session_lengths.append(m)
                remaining -= m

            start_minute = _draw_positive(rng, 8 * 60, 60.0, 4 * 60, 12 * 60)
            cursor = datetime.combine(day, time.min, tzinfo=timezone.utc) + timedelta(
                minutes=int(round(start_minute))
            )
            day_end = datetime.combine(day + timedelta(days=1), time.min, tzinfo=timezone.utc)

            for m in session_lengths:
                minutes_left = int((day_end - cursor).total_seconds() // 60)
                m = min(m, minutes_left)
                if m <= 0:
                    break
                h_prog = str(rng.choice(HPROG_VALUES, p=hprog_weights))
                h_vol = int(
                    np.clip(
                        hvol_pref + int(rng.integers(-1, 2)),
                        config.h_vol_range[0],
                        config.h_vol_range[1],
                    )
                )
                lat = float(np.round(lat0 + rng.normal(0.0, 0.05), 4))
                lon = float(np.round(lon0 + rng.normal(0.0, 0.05), 4))
                sounds = rng.choice(SOUND_CLASS_VALUES, size=m, p=sound_weights)
                if config.missing_prob > 0:
                    blanks = rng.random((m, 8)) < config.missing_prob
                else:
                    blanks = np.zeros((m, 8), dtype=bool)
                for i in range(m):
                    rec = MinuteLog(
                        participant_id=pid,
                        timestamp=cursor + timedelta(minutes=i),
                        age=None if blanks[i, 0] else age,
                        sex=None if blanks[i, 1] else sex,
                        h_prog=None if blanks[i, 2] else h_prog,
                        h_vol=None if blanks[i, 3] else h_vol,
                        lat_rel=None if blanks[i, 4] else lat,
                        lon_rel=None if blanks[i, 5] else lon,
                        pta4=None if blanks[i, 6] else pta4,
                        sound_class=None if blanks[i, 7] else str(sounds[i]),
                    )
                    records.append(rec)
                gap = max(
                    _MIN_GAP_MINUTES,
                    int(round(rng.exponential(config.gap_minutes_mean))),
                )
                cursor += timedelta(minutes=m + gap)
    return records


def write_log_csv_string(records: Iterable[MinuteLog]) -> str:
    """Serialize records to a CSV string (used for byte-identity checks)."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(_record_row(r))
    return buf.getvalue()

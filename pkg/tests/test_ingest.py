"""Tests for minute-log parsing, validation, and the synthetic generator."""

import numpy as np
import pytest

from attned import ingest
from attned.errors import ConfigError, RowError, SchemaError

HEADER = "ID,Age,Sex,hProg,hVol,LatRel,LonRel,PTA4,SoundClass,Timestamp"


def rows(*lines):
    return [line.split(",") for line in (HEADER, *lines)]


class TestParse:
    def test_single_row_maps_fields(self):
        recs = ingest.parse_log_rows(
            rows("17,68,female,medium,5,0.12,-0.30,42.5,speech,2019-03-01T09:15:00Z")
        )
        assert len(recs) == 1
        r = recs[0]
        assert r.participant_id == 17
        assert r.age == 68
        assert r.sex == "female"
        assert r.h_prog == "medium"
        assert r.h_vol == 5
        assert r.lat_rel == pytest.approx(0.12)
        assert r.lon_rel == pytest.approx(-0.30)
        assert r.pta4 == pytest.approx(42.5)
        assert r.sound_class == "speech"
        assert r.timestamp.isoformat() == "2019-03-01T09:15:00+00:00"

    def test_header_only_gives_empty_sequence(self):
        assert ingest.parse_log_rows(rows()) == []

    def test_unknown_sound_class_is_row_error(self):
        with pytest.raises(RowError) as err:
            ingest.parse_log_rows(
                rows("1,60,male,low,3,0,0,30,music,2019-03-01T09:15:00Z")
            )
        assert err.value.line == 2
        assert "music" in str(err.value)

    def test_missing_column_is_schema_error(self):
        bad = [HEADER.replace(",PTA4", "").split(",")]
        with pytest.raises(SchemaError) as err:
            ingest.parse_log_rows(bad)
        assert "PTA4" in str(err.value)

    def test_unknown_column_is_schema_error(self):
        with pytest.raises(SchemaError) as err:
            ingest.parse_log_rows([(HEADER + ",Extra").split(",")])
        assert "Extra" in str(err.value)

    def test_bad_timestamp_reports_line_number(self):
        with pytest.raises(RowError) as err:
            ingest.parse_log_rows(
                rows(
                    "1,60,male,low,3,0,0,30,quiet,2019-03-01T09:15:00Z",
                    "1,60,male,low,3,0,0,30,quiet,not-a-time",
                )
            )
        assert err.value.line == 3

    def test_naive_timestamp_rejected(self):
        with pytest.raises(RowError):
            ingest.parse_log_rows(rows("1,60,male,low,3,0,0,30,quiet,2019-03-01T09:15:00"))

    def test_enum_aliases_and_case(self):
        recs = ingest.parse_log_rows(
            rows("1,60,MALE,High+,3,0,0,30,Speech In Noise,2019-03-01T00:00:00+00:00")
        )
        assert recs[0].h_prog == "high_plus"
        assert recs[0].sound_class == "speech_in_noise"

    def test_empty_cells_become_none(self):
        recs = ingest.parse_log_rows(rows("1,,,,,,,,,2019-03-01T09:15:00Z"))
        r = recs[0]
        assert r.age is None and r.sex is None and r.pta4 is None


def test_write_parse_round_trip(tmp_path):
    config = ingest.SynthConfig(n_participants=2, days=3, seed=5, missing_prob=0.2)
    records = ingest.generate_synthetic(config)
    path = tmp_path / "logs.csv"
    ingest.write_log_csv(records, path)
    back = ingest.parse_log_csv(path)
    assert back == records


class TestValidate:
    def test_duplicate_pair_counted(self):
        recs = ingest.parse_log_rows(
            rows(
                "1,60,male,low,3,0,0,30,quiet,2019-03-01T09:15:00Z",
                "1,60,male,low,3,0,0,30,quiet,2019-03-01T09:15:00Z",
            )
        )
        report = ingest.validate_schema(recs)
        assert report.duplicate_pairs == 1

    def test_empty_input_all_zero(self):
        report = ingest.validate_schema([])
        assert report.n_records == 0
        assert report.duplicate_pairs == 0
        assert all(v == 0 for v in report.null_counts.values())

    def test_null_counts(self):
        lines = ["1,60,male,low,3,0,0,30,quiet,2019-03-01T09:%02d:00Z" % m for m in range(8)]
        lines[3] = lines[3].replace(",30,", ",,")
        lines[5] = lines[5].replace(",30,", ",,")
        report = ingest.validate_schema(ingest.parse_log_rows(rows(*lines)))
        assert report.null_counts["pta4"] == 2
        assert report.records_per_participant == {1: 8}

    def test_out_of_range_h_vol(self):
        recs = ingest.parse_log_rows(
            rows("1,60,male,low,99,0,0,30,quiet,2019-03-01T09:15:00Z")
        )
        report = ingest.validate_schema(recs, h_vol_range=(0, 10))
        assert report.out_of_range_counts["h_vol"] == 1


class TestSynthetic:
    def test_same_seed_byte_identical(self):
        config = ingest.SynthConfig(n_participants=3, days=4, seed=11)
        a = ingest.write_log_csv_string(ingest.generate_synthetic(config))
        b = ingest.write_log_csv_string(ingest.generate_synthetic(config))
        assert a == b

    def test_different_seed_differs(self):
        base = ingest.SynthConfig(n_participants=2, days=3, seed=1)
        other = ingest.SynthConfig(n_participants=2, days=3, seed=2)
        assert ingest.write_log_csv_string(
            ingest.generate_synthetic(base)
        ) != ingest.write_log_csv_string(ingest.generate_synthetic(other))

    def test_single_session_exact_minutes(self):
        config = ingest.SynthConfig(
            n_participants=1,
            days=1,
            seed=0,
            base_usage_minutes_mean=30,
            base_usage_minutes_sd=0,
            usage_daily_sd_minutes=0,
            session_minutes_mean=30,
            session_minutes_sd=0,
            missing_prob=0.0,
        )
        records = ingest.generate_synthetic(config)
        assert len(records) == 30
        deltas = {
            (b.timestamp - a.timestamp).total_seconds()
            for a, b in zip(records, records[1:])
        }
        assert deltas == {60.0}

    def test_lag1_autocorrelation_near_config(self):
        from attned import prep

        config = ingest.SynthConfig(
            n_participants=1, days=200, seed=21, usage_autocorr=0.8, missing_prob=0.0
        )
        records = ingest.generate_synthetic(config)
        daily = prep.aggregate_daily(records)
        usage = np.array([r.usage_s for r in daily])
        r1 = np.corrcoef(usage[:-1], usage[1:])[0, 1]
        assert 0.6 <= r1 <= 0.95

    def test_generated_data_is_clean(self):
        config = ingest.SynthConfig(n_participants=3, days=5, seed=2, missing_prob=0.0)
        records = ingest.generate_synthetic(config)
        report = ingest.validate_schema(records, h_vol_range=config.h_vol_range)
        assert report.total_issues == 0

    def test_timestamps_non_decreasing_per_participant(self):
        config = ingest.SynthConfig(n_participants=3, days=4, seed=9)
        records = ingest.generate_synthetic(config)
        per = {}
        for r in records:
            per.setdefault(r.participant_id, []).append(r.timestamp)
        for stamps in per.values():
            assert all(a <= b for a, b in zip(stamps, stamps[1:]))

    def test_constant_participant_traits(self):
        config = ingest.SynthConfig(n_participants=2, days=3, seed=4, missing_prob=0.0)
        per = {}
        for r in ingest.generate_synthetic(config):
            per.setdefault(r.participant_id, set()).add((r.age, r.sex, r.pta4))
        assert all(len(traits) == 1 for traits in per.values())

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_participants": 0},
            {"days": 0},
            {"missing_prob": 1.5},
            {"usage_autocorr": 1.0},
            {"session_minutes_mean": 0},
            {"h_vol_range": (5, 2)},
            {"start_date": "not-a-date"},
        ],
    )
    def test_invalid_config_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            ingest.generate_synthetic(ingest.SynthConfig(**kwargs))

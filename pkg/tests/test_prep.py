"""Tests for the preprocessing pipeline against independent oracles."""

import warnings
from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest

from attned import ingest, prep
from attned.errors import DataError, ImputationError, OrderingError


def ts(seconds: float) -> datetime:
    return datetime(2019, 3, 1, tzinfo=timezone.utc) + timedelta(seconds=seconds)


def brute_force_intervals(seconds, d_max):
    """Independent oracle: scan every adjacent gap."""
    if not seconds:
        return []
    intervals = []
    start = prev = seconds[0]
    for t in seconds[1:]:
        if t - prev > d_max:
            intervals.append((start, prev))
            start = t
        prev = t
    intervals.append((start, prev))
    return intervals


class TestSegmentIntervals:
    def test_reference_fixture(self):
        ivs = prep.segment_intervals([ts(0), ts(300), ts(900), ts(1600)], 600)
        assert [(iv.t_start, iv.t_end) for iv in ivs] == [(ts(0), ts(900)), (ts(1600), ts(1600))]
        assert [iv.duration_s for iv in ivs] == [900.0, 0.0]

    def test_single_timestamp(self):
        (iv,) = prep.segment_intervals([ts(42)], 600)
        assert iv.duration_s == 0.0

    def test_empty(self):
        assert prep.segment_intervals([], 600) == []

    def test_unsorted_rejected(self):
        with pytest.raises(OrderingError):
            prep.segment_intervals([ts(100), ts(50)], 600)

    def test_gap_equal_to_limit_stays_joined(self):
        ivs = prep.segment_intervals([ts(0), ts(600)], 600)
        assert len(ivs) == 1

    def test_matches_brute_force_on_random_sequences(self):
        rng = np.random.default_rng(123)
        for _ in range(300):
            n = int(rng.integers(1, 60))
            seconds = np.sort(rng.integers(0, 50_000, size=n)).tolist()
            d_max = float(rng.integers(30, 2000))
            got = prep.segment_intervals([ts(s) for s in seconds], d_max)
            want = brute_force_intervals(seconds, d_max)
            assert [(iv.t_start, iv.t_end) for iv in got] == [(ts(a), ts(b)) for a, b in want]


class TestDailyUsage:
    def test_sums_durations_per_day(self):
        ivs = [
            prep.UsageInterval(1, ts(3600), ts(7200)),
            prep.UsageInterval(1, ts(10_000), ts(11_800)),
        ]
        usage = prep.daily_usage(ivs)
        assert usage == {date(2019, 3, 1): 5400.0}

    def test_zero_usage_day_present_in_range(self):
        ivs = [
            prep.UsageInterval(1, ts(0), ts(100)),
            prep.UsageInterval(1, ts(2 * 86_400), ts(2 * 86_400 + 50)),
        ]
        usage = prep.daily_usage(ivs)
        assert usage[date(2019, 3, 2)] == 0.0
        assert len(usage) == 3

    def test_midnight_crosser_attributed_to_start_day(self):
        iv = prep.UsageInterval(1, ts(86_400 - 10_800), ts(86_400 + 10_800))
        usage = prep.daily_usage([iv])
        assert usage[date(2019, 3, 1)] == 21_600.0
        # total conserved regardless of attribution
        assert sum(usage.values()) == iv.duration_s

    def test_split_at_midnight_conserves_and_bounds(self):
        rng = np.random.default_rng(7)
        ivs = []
        cursor = 0
        for _ in range(40):
            cursor += int(rng.integers(700, 90_000))
            length = int(rng.integers(0, 200_000))
            ivs.append(prep.UsageInterval(1, ts(cursor), ts(cursor + length)))
            cursor += length
        split = prep.split_at_midnight(ivs)
        assert sum(s.duration_s for s in split) == sum(iv.duration_s for iv in ivs)
        usage = prep.daily_usage(split)
        assert all(0 <= v <= 86_400 for v in usage.values())
        assert sum(usage.values()) == sum(iv.duration_s for iv in ivs)


def minute_record(pid, second, **kwargs):
    defaults = dict(age=60, sex="female", h_prog="low", h_vol=3,
                    lat_rel=0.0, lon_rel=0.0, pta4=30.0, sound_class="quiet")
    defaults.update(kwargs)
    return ingest.MinuteLog(participant_id=pid, timestamp=ts(second), **defaults)


class TestAggregateDaily:
    def test_h_vol_daily_mean(self):
        recs = [minute_record(1, 0, h_vol=2), minute_record(1, 60, h_vol=4)]
        (day,) = prep.aggregate_daily(recs)
        assert day.h_vol_mean == pytest.approx(3.0)

    def test_h_prog_ordinal_mean(self):
        recs = [minute_record(1, 0, h_prog="low"), minute_record(1, 60, h_prog="high")]
        (day,) = prep.aggregate_daily(recs)
        assert day.h_prog_ord == pytest.approx(1.0)

    def test_female_one_hot(self):
        (day,) = prep.aggregate_daily([minute_record(1, 0, sex="female")])
        assert (day.sex_1, day.sex_2) == (1.0, 0.0)

    def test_male_one_hot(self):
        (day,) = prep.aggregate_daily([minute_record(1, 0, sex="male")])
        assert (day.sex_1, day.sex_2) == (0.0, 1.0)

    def test_absent_fields_stay_absent(self):
        (day,) = prep.aggregate_daily([minute_record(1, 0, pta4=None, sex=None)])
        assert day.pta4_mean is None and day.sex_1 is None

    def test_usage_matches_interval_total(self):
        recs = [minute_record(1, 60 * i) for i in range(30)]
        (day,) = prep.aggregate_daily(recs)
        assert day.usage_s == pytest.approx(29 * 60.0)


class TestImpute:
    def test_fills_gap_with_observed_mean(self):
        assert prep.impute_trajectory_mean([2.0, None, 4.0]) == [2.0, 3.0, 4.0]

    def test_identity_when_complete(self):
        assert prep.impute_trajectory_mean([1.0, 2.0]) == [1.0, 2.0]

    def test_single_observed_value_broadcast(self):
        assert prep.impute_trajectory_mean([None, None, 5.0]) == [5.0, 5.0, 5.0]

    def test_all_absent_is_error(self):
        with pytest.raises(ImputationError):
            prep.impute_trajectory_mean([None, None])

    def test_idempotent(self):
        once = prep.impute_trajectory_mean([1.0, None, 4.0, None])
        assert prep.impute_trajectory_mean(once) == once

    def test_table_impute_names_participant_and_feature(self):
        matrix = np.array([[1.0, np.nan], [2.0, np.nan]])
        with pytest.raises(ImputationError) as err:
            prep.impute_table(matrix, np.array([7, 7]))
        assert "participant 7" in str(err.value)
        assert "hVol" in str(err.value)


class TestScaler:
    def test_two_stage_hand_computation(self):
        scaler = prep.fit_scaler(np.array([[0.0], [10.0]]), ["Usage"])
        out = prep.apply_scaler(np.array([[10.0]]), scaler)
        assert out[0, 0] == pytest.approx(1.0)
        assert prep.apply_scaler(np.array([[0.0]]), scaler)[0, 0] == pytest.approx(0.0)

    def test_mean_of_symmetric_pair_maps_to_half(self):
        scaler = prep.fit_scaler(np.array([[2.0], [8.0]]), ["Usage"])
        assert prep.apply_scaler(np.array([[5.0]]), scaler)[0, 0] == pytest.approx(0.5)

    def test_round_trip_identity(self):
        rng = np.random.default_rng(5)
        train = rng.normal(50, 10, size=(40, 4))
        scaler = prep.fit_scaler(train, ["a", "b", "c", "d"])
        x = rng.normal(50, 10, size=(10, 4))
        back = prep.invert_scaler(prep.apply_scaler(x, scaler), scaler)
        np.testing.assert_allclose(back, x, atol=1e-12)

    def test_constant_feature_passes_through(self):
        train = np.array([[1.0, 7.0], [2.0, 7.0]])
        scaler = prep.fit_scaler(train, ["a", "b"])
        assert not scaler.scaled_flags[1]
        out = prep.apply_scaler(train, scaler)
        np.testing.assert_allclose(out[:, 1], [7.0, 7.0])

    def test_usage_helpers_match_matrix_path(self):
        rng = np.random.default_rng(6)
        train = rng.uniform(0, 86400, size=(30, len(prep.FEATURE_NAMES)))
        scaler = prep.fit_scaler(train)
        values = rng.uniform(0, 86400, size=8)
        direct = prep.scale_usage(values, scaler)
        matrix = np.zeros((8, len(prep.FEATURE_NAMES)))
        matrix[:, prep.USAGE_INDEX] = values
        np.testing.assert_allclose(direct, prep.apply_scaler(matrix, scaler)[:, 0])
        np.testing.assert_allclose(prep.invert_usage(direct, scaler), values, atol=1e-9)


class TestOutliers:
    def test_single_extreme_point_flagged(self):
        rows = np.zeros((100, 1))
        rows[37] = 100.0
        flags = prep.flag_outliers_zscore(rows, 3.0)
        assert flags.sum() == 1 and flags[37]

    def test_all_equal_nothing_flagged(self):
        assert not prep.flag_outliers_zscore(np.ones((50, 2)), 3.0).any()

    def test_infinite_threshold_nothing_flagged(self):
        rng = np.random.default_rng(0)
        assert not prep.flag_outliers_zscore(rng.normal(size=(50, 3)), np.inf).any()

    def test_fewer_than_two_rows_warns(self):
        with pytest.warns(UserWarning):
            flags = prep.flag_outliers_zscore(np.array([[1.0, 2.0]]), 3.0)
        assert not flags.any()


class TestVif:
    def test_orthogonal_columns_vif_one(self):
        x = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
        report = prep.compute_vif(x, ["a", "b"], 10.0)
        np.testing.assert_allclose(report.vif, [1.0, 1.0], atol=1e-9)
        assert report.included.all()

    def test_duplicated_column_infinite(self):
        rng = np.random.default_rng(1)
        col = rng.normal(size=50)
        x = np.column_stack([col, col, rng.normal(size=50)])
        report = prep.compute_vif(x, ["a", "b", "c"], 10.0)
        assert np.isinf(report.vif[0]) and np.isinf(report.vif[1])
        assert not report.included[0] and not report.included[1]

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(42)
        x = rng.normal(size=(200, 5))
        x[:, 3] += 0.6 * x[:, 0]  # induce some correlation
        report = prep.compute_vif(x, list("abcde"), 10.0)
        for j in range(5):
            y = x[:, j]
            design = np.hstack([np.ones((200, 1)), np.delete(x, j, axis=1)])
            beta = np.linalg.solve(design.T @ design, design.T @ y)
            resid = y - design @ beta
            r2 = 1 - (resid @ resid) / ((y - y.mean()) @ (y - y.mean()))
            assert report.vif[j] == pytest.approx(1.0 / (1.0 - r2), rel=1e-6)

    def test_too_few_rows_rejected(self):
        with pytest.raises(DataError):
            prep.compute_vif(np.ones((3, 5)), list("abcde"), 10.0)


class TestSplits:
    def test_hundred_days(self):
        labels = prep.split_days(100)
        assert labels.count("train") == 64
        assert labels.count("val") == 16
        assert labels.count("test") == 20

    def test_five_days_minimum_splits(self):
        assert prep.split_days(5) == ["train", "train", "train", "val", "test"]

    def test_chronology(self):
        labels = prep.split_days(37)
        order = {"train": 0, "val": 1, "test": 2}
        ranks = [order[v] for v in labels]
        assert ranks == sorted(ranks)

    def test_short_participant_excluded_with_warning(self):
        pids = np.array([1] * 3 + [2] * 10)
        with pytest.warns(UserWarning):
            labels, excluded = prep.split_per_participant(pids)
        assert excluded == [1]
        assert all(label == "" for label in labels[:3])
        assert all(label != "" for label in labels[3:])

    def test_fractions_within_one_day(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(5, 400))
            labels = prep.split_days(n)
            assert abs(labels.count("test") - 0.2 * n) <= 1
            assert abs(labels.count("val") - 0.16 * n) <= 1
            assert abs(labels.count("train") - 0.64 * n) <= 2


def build_window_inputs(n_days, pid=1, start=date(2019, 3, 1), label="train"):
    days = [start + timedelta(days=i) for i in range(n_days)]
    pids = np.full(n_days, pid)
    scaled = np.arange(n_days, dtype=float)[:, None] * np.ones((1, 3))
    labels = np.array([label] * n_days, dtype=object)
    return pids, days, scaled, labels


class TestWindows:
    def test_count_formula(self):
        pids, days, scaled, labels = build_window_inputs(30)
        samples = prep.make_windows(pids, days, scaled, labels, 14, 14)
        assert len(samples) == 3

    def test_exact_length_single_sample(self):
        pids, days, scaled, labels = build_window_inputs(28)
        samples = prep.make_windows(pids, days, scaled, labels, 14, 14)
        assert len(samples) == 1

    def test_unit_window_enumeration(self):
        pids, days, scaled, labels = build_window_inputs(3)
        samples = prep.make_windows(pids, days, scaled, labels, 1, 1)
        assert len(samples) == 2
        np.testing.assert_allclose(samples[0].inputs, scaled[:1])
        np.testing.assert_allclose(samples[0].target, scaled[1, :1])
        np.testing.assert_allclose(samples[1].inputs, scaled[1:2])

    def test_boundary_straddling_targets_dropped(self):
        pids, days, scaled, labels = build_window_inputs(10)
        labels[:5] = "train"
        labels[5:] = "val"
        samples = prep.make_windows(pids, days, scaled, labels, 2, 3)
        for s in samples:
            i0 = days.index(s.start_date)
            target_labels = set(labels[i0 + 2 : i0 + 5])
            assert len(target_labels) == 1
            assert s.split == target_labels.pop()
        starts = {days.index(s.start_date) for s in samples}
        assert 1 not in starts and 2 not in starts  # targets would straddle day 5

    def test_short_series_warns_no_samples(self):
        pids, days, scaled, labels = build_window_inputs(5)
        with pytest.warns(UserWarning):
            samples = prep.make_windows(pids, days, scaled, labels, 4, 4)
        assert samples == []

    def test_gap_in_days_breaks_runs(self):
        pids, days, scaled, labels = build_window_inputs(12)
        days = days[:6] + [d + timedelta(days=5) for d in days[6:]]
        samples = prep.make_windows(pids, days, scaled, labels, 3, 3)
        for s in samples:
            i0 = days.index(s.start_date)
            window_days = days[i0 : i0 + 6]
            assert all(
                (b - a).days == 1 for a, b in zip(window_days, window_days[1:])
            )


@pytest.fixture(scope="module")
def pipeline_result():
    config = ingest.SynthConfig(n_participants=5, days=60, seed=13)
    records = ingest.generate_synthetic(config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return records, prep.prepare(records, window_len=7, horizon=5)


class TestPipeline:
    def test_no_train_target_postdates_test_day(self, pipeline_result):
        _, result = pipeline_result
        dataset = result.dataset
        for pid in {s.participant_id for s in dataset.samples}:
            test_days = [
                s.start_date for s in dataset.samples
                if s.participant_id == pid and s.split == "test"
            ]
            if not test_days:
                continue
            first_test = min(test_days)
            for s in dataset.samples:
                if s.participant_id == pid and s.split == "train":
                    last_target = s.start_date + timedelta(days=7 + 5 - 1)
                    assert last_target <= first_test + timedelta(days=7)

    def test_usage_conservation(self, pipeline_result):
        records, result = pipeline_result
        by_pid = {}
        for r in records:
            by_pid.setdefault(r.participant_id, []).append(r.timestamp)
        for pid, stamps in by_pid.items():
            ivs = prep.segment_intervals(sorted(stamps), 600.0, participant_id=pid)
            total = sum(iv.duration_s for iv in ivs)
            daily_total = sum(
                rec.usage_s for rec in result.daily if rec.participant_id == pid
            )
            assert daily_total == pytest.approx(total)

    def test_scaler_fitted_on_train_only_flag(self, pipeline_result):
        _, result = pipeline_result
        assert result.dataset.scaler.fitted_on_train_only

    def test_windows_respect_feature_count(self, pipeline_result):
        _, result = pipeline_result
        for s in result.dataset.samples[:20]:
            assert s.inputs.shape == (7, len(prep.FEATURE_NAMES))
            assert s.target.shape == (5,)

    def test_split_fractions_on_retained_days(self, pipeline_result):
        _, result = pipeline_result
        labels = result.labels
        for pid in np.unique(result.participant_ids):
            mask = (result.participant_ids == pid) & (labels != "")
            n = mask.sum()
            if n == 0:
                continue
            n_test = (labels[mask] == "test").sum()
            n_val = (labels[mask] == "val").sum()
            assert abs(n_test - 0.2 * n) <= 1
            assert abs(n_val - 0.16 * n) <= 1


def test_windows_bin_round_trip(tmp_path, pipeline_result):
    _, result = pipeline_result
    paths = prep.save_prepared_dir(result, tmp_path)
    loaded = prep.load_prepared_dir(tmp_path)
    assert len(loaded.samples) == len(result.dataset.samples)
    assert loaded.window_len == result.dataset.window_len
    for a, b in zip(loaded.samples, result.dataset.samples):
        assert a.participant_id == b.participant_id
        assert a.start_date == b.start_date
        assert a.split == b.split
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.target, b.target)
    np.testing.assert_array_equal(loaded.scaler.mean, result.dataset.scaler.mean)
    assert paths["windows"].exists()


def test_load_prepared_dir_missing_files(tmp_path):
    with pytest.raises(DataError):
        prep.load_prepared_dir(tmp_path)


def test_truncated_windows_file(tmp_path, pipeline_result):
    _, result = pipeline_result
    prep.save_prepared_dir(result, tmp_path)
    path = tmp_path / "windows.bin"
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 17])
    with pytest.raises(DataError):
        prep.load_prepared_dir(tmp_path)

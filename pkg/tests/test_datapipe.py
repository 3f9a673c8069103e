import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlforecast.datapipe import (SplitSpec, TimeSeries, fill_missing, load_csv, make_windows,
                                 postprocess, postprocess_series, preprocess, write_csv,
                                 write_forecasts_csv)
from rlforecast.errors import ConfigurationError, DataError, UsageError


def ts(values, sid="a"):
    return TimeSeries(sid, np.asarray(values, dtype=float))


class TestLoadCsv:
    def test_two_ids_three_days(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("series_id,date,value\n"
                        "a,2020-01-01,1\na,2020-01-02,2\na,2020-01-03,3\n"
                        "b,2020-01-01,4\nb,2020-01-02,5\nb,2020-01-03,6\n")
        series = load_csv(path)
        assert [s.series_id for s in series] == ["a", "b"]
        assert [len(s) for s in series] == [3, 3]
        np.testing.assert_array_equal(series[1].values, [4, 5, 6])

    def test_gap_day_marked_missing_then_zero_filled(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("series_id,date,value\na,2020-01-01,1\na,2020-01-03,3\na,2020-01-04,\n")
        (s,) = load_csv(path)
        assert len(s) == 4 and math.isnan(s.values[1]) and math.isnan(s.values[3])
        np.testing.assert_array_equal(fill_missing(s).values, [1, 0, 3, 0])

    def test_rows_out_of_date_order(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("series_id,date,value\na,2020-01-02,2\na,2020-01-01,1\n")
        np.testing.assert_array_equal(load_csv(path)[0].values, [1, 2])

    def test_malformed_value_names_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("series_id,date,value\na,2020-01-01,1\na,2020-01-02,abc\n")
        with pytest.raises(DataError, match=":3:"):
            load_csv(path)

    @pytest.mark.parametrize("body", ["", "series_id,date,value\n"])
    def test_empty_file(self, tmp_path, body):
        path = tmp_path / "d.csv"
        path.write_text(body)
        with pytest.raises(DataError):
            load_csv(path)

    def test_bad_date_and_negative(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("series_id,date,value\na,2020-13-01,1\n")
        with pytest.raises(DataError, match=":2:"):
            load_csv(path)
        path.write_text("series_id,date,value\na,2020-01-01,-1\n")
        with pytest.raises(DataError):
            load_csv(path)

    def test_write_then_load_roundtrip(self, tmp_path):
        original = [ts([1, np.nan, 3], "x"), ts([0, 5], "y")]
        loaded = load_csv(write_csv(original, tmp_path / "out.csv"))
        np.testing.assert_array_equal(loaded[0].values, [1, np.nan, 3])
        np.testing.assert_array_equal(loaded[1].values, [0, 5])

    def test_forecast_csv_schema(self, tmp_path):
        path = write_forecasts_csv({"a": np.array([1, 2])}, tmp_path / "f.csv")
        assert path.read_text().splitlines() == ["series_id,step,value", "a,1,1", "a,2,2"]


class TestFillMissing:
    def test_gap(self):
        np.testing.assert_array_equal(fill_missing(ts([1, np.nan, 3])).values, [1, 0, 3])

    def test_no_missing_identity(self):
        s = ts([1, 2])
        assert fill_missing(s) is s

    def test_all_missing(self):
        np.testing.assert_array_equal(fill_missing(ts([np.nan] * 3)).values, [0, 0, 0])


class TestPreprocess:
    def test_positive_series_uses_plain_log(self):
        p = preprocess(ts([2, 4, 6]))
        assert p.mean_scale == 4 and p.zero_adjusted is False
        np.testing.assert_allclose(p.transformed, np.log([0.5, 1.0, 1.5]))

    def test_all_zero_falls_back_to_unit_scale(self):
        p = preprocess(ts([0, 0, 0]))
        assert p.mean_scale == 1.0 and p.zero_adjusted is True
        np.testing.assert_array_equal(p.transformed, [0, 0, 0])

    def test_zero_branch_maps_zero_to_zero(self):
        p = preprocess(ts([0, math.e - 1]))
        assert p.zero_adjusted is True and p.transformed[0] == 0.0

    def test_missing_rejected(self):
        with pytest.raises(UsageError):
            preprocess(ts([1, np.nan]))

    def test_second_call_is_noop(self):
        p = preprocess(ts([2, 4, 6]))
        q = preprocess(p)
        assert q is p and q.mean_scale == 4


class TestPostprocess:
    def test_zero_adjusted_chain(self):
        assert postprocess(0.0, 3.0, True) == 0

    def test_plain_chain(self):
        assert postprocess(math.log(0.5), 4.0, False) == 2

    def test_negative_clipped(self):
        assert postprocess(-5.0, 10.0, True) == 0

    def test_half_rounds_away_from_zero(self):
        assert postprocess(math.log(2.5), 1.0, False) == 3
        assert postprocess(math.log(2.4), 1.0, False) == 2
        assert postprocess(math.log(2.1), 1.0, False, rounding="ceil") == 3

    def test_unknown_rounding(self):
        with pytest.raises(ConfigurationError):
            postprocess(0.0, 1.0, False, rounding="floor")

    def test_requires_metadata(self):
        with pytest.raises(UsageError):
            postprocess_series([0.0], ts([1]))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 10**6), min_size=1, max_size=60))
    def test_round_trip_exact(self, values):
        p = preprocess(ts(values))
        np.testing.assert_array_equal(postprocess_series(p.transformed, p), values)


class TestSplits:
    def test_default_split(self):
        split = SplitSpec.for_length(300)
        assert (split.train_end, split.val_end, split.end) == (244, 272, 300)

    @pytest.mark.parametrize("args", [(10, 10, 38, 28), (0, 5, 33, 28), (5, 10, 20, 28)])
    def test_invalid(self, args):
        with pytest.raises(ConfigurationError):
            SplitSpec(*args)


class TestWindows:
    def series(self, n):
        return preprocess(ts(np.arange(1, n + 1)))

    def test_forty_value_train_region(self):
        s = self.series(40 + 2 * 28)
        w = make_windows(s, SplitSpec.for_length(len(s)), "train")
        assert len(w) == 5 and w.inputs.shape == (5, 35)

    def test_thirty_five_value_region_warns(self):
        s = self.series(35 + 2 * 28)
        with pytest.warns(UserWarning):
            assert len(make_windows(s, SplitSpec.for_length(len(s)), "train")) == 0

    def test_last_train_target_is_last_train_index(self):
        s = self.series(100)
        split = SplitSpec.for_length(100)
        w = make_windows(s, split, "train")
        assert w.target_index[-1] == split.train_end - 1
        assert (w.target_index < split.train_end).all()

    def test_sample_contents(self):
        s = self.series(100)
        split = SplitSpec.for_length(100)
        w = make_windows(s, split, "validation")
        assert len(w) == 28
        sample = w[0]
        np.testing.assert_array_equal(sample.inputs, s.transformed[split.train_end - 35:split.train_end])
        assert sample.target == s.transformed[split.train_end]

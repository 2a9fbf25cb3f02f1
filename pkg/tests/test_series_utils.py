import numpy as np
import pytest

from utils.series_utils import TimeSeries, format_series, parse_series, parse_series_text
from utils.utils import InsufficientDataError, SeriesFormatError, TrawlDomainError


def test_time_series_is_read_only_and_validated():
    series = TimeSeries(0.5, [1, 2, 3])
    assert series.n == 3
    np.testing.assert_allclose(series.times, [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        series.values[0] = 10.0
    with pytest.raises(TrawlDomainError):
        TimeSeries(0.0, [1, 2])
    with pytest.raises(InsufficientDataError):
        TimeSeries(1.0, [1])
    with pytest.raises(SeriesFormatError):
        TimeSeries(1.0, [1.0, np.nan])


@pytest.mark.parametrize("delta", [np.int64(1), np.float32(1.0), np.float64(1.0), 1])
def test_numpy_scalar_delta_is_coerced(delta):
    series = TimeSeries(delta, [1.0, 2.0])
    assert type(series.delta) is float and series.delta == 1.0


@pytest.mark.parametrize("delta", [True, "0.1", np.int64(-1), float("inf")])
def test_non_real_or_nonpositive_delta_is_rejected(delta):
    with pytest.raises(TrawlDomainError):
        TimeSeries(delta, [1.0, 2.0])


def test_window_head_and_shift(toy_series):
    np.testing.assert_array_equal(toy_series.head(2).values, [1.0, 2.0])
    np.testing.assert_array_equal(toy_series.window(3, 2).values, [0.0, 1.0])
    np.testing.assert_array_equal(toy_series.shifted(1.0).values, [0.0, 1.0, -1.0, 0.0])


def test_parse_infers_delta_from_times():
    series = parse_series_text("time,value\n0,1\n0.1,2\n0.2,0\n")
    assert series.delta == pytest.approx(0.1)
    np.testing.assert_array_equal(series.values, [1.0, 2.0, 0.0])


def test_header_delta_wins_and_grid_is_checked():
    text = "# delta=0.25\ntime,value\n0,1\n0.25,2\n0.5,3\n"
    assert parse_series_text(text).delta == 0.25
    with pytest.raises(SeriesFormatError, match="row 3"):
        parse_series_text("time,value\n0,1\n1,2\n2.5,3\n")
    with pytest.raises(SeriesFormatError, match="off the grid"):
        parse_series_text("# delta=0.5\ntime,value\n0,1\n1,2\n")


@pytest.mark.parametrize("text", [
    "t,x\n0,1\n1,2\n",
    "time,value\n0,1\n1,abc\n",
    "time,value\n0,1\n1,\n",
    "time,value\n1,1\n0,2\n",
])
def test_malformed_files_raise_format_error(text):
    with pytest.raises(SeriesFormatError):
        parse_series_text(text)


def test_too_few_rows():
    with pytest.raises(InsufficientDataError):
        parse_series_text("time,value\n0,1\n")


def test_file_round_trip_is_exact(series_file):
    rng = np.random.default_rng(3)
    original = TimeSeries(0.1, rng.gamma(0.5, 2.0, size=50))
    loaded = parse_series(series_file(original))
    assert loaded.delta == original.delta
    np.testing.assert_array_equal(loaded.values, original.values)
    assert format_series(loaded).startswith("# delta=0.1\ntime,value\n")


def test_missing_file(tmp_path):
    with pytest.raises(SeriesFormatError):
        parse_series(tmp_path / "nope.csv")

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gevforest.data import (
    Dataset,
    build_weather_features,
    make_blocks,
    read_csv,
    write_csv,
)

from conftest import toy_dataset


class TestDataset:
    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(np.array([[1.0], [np.nan]]), np.array([1.0, 2.0]), ("a",))
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(np.array([[1.0], [2.0]]), np.array([1.0, np.inf]), ("a",))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError, match="differ"):
            Dataset(np.ones((3, 2)), np.ones(2), ("a", "b"))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Dataset(np.ones((0, 2)), np.ones(0), ("a", "b"))

    def test_immutable_arrays(self):
        ds = toy_dataset([1.0, 2.0])
        with pytest.raises(ValueError):
            ds.response[0] = 9.0


class TestMakeBlocks:
    def test_basic_maxima_and_rows(self):
        ds = toy_dataset([1, 3, 2, 5, 4, 0])
        bm = make_blocks(ds, 3)
        assert bm.maxima.tolist() == [3.0, 5.0]
        assert bm.source_rows.tolist() == [1, 3]
        assert np.array_equal(bm.features, ds.features[[1, 3]])

    def test_block_size_one_is_identity(self):
        ds = toy_dataset([4.0, 1.0, 7.0])
        bm = make_blocks(ds, 1)
        assert np.array_equal(bm.maxima, ds.response)
        assert np.array_equal(bm.features, ds.features)

    def test_remainder_rows_discarded(self):
        ds = toy_dataset(np.arange(7.0))
        bm = make_blocks(ds, 3)
        assert bm.n_blocks == 2
        assert 6 not in bm.source_rows  # trailing row dropped

    def test_argmax_tie_goes_to_earliest_row(self):
        ds = toy_dataset([2.0, 2.0, 1.0])
        bm = make_blocks(ds, 3)
        assert bm.source_rows.tolist() == [0]

    def test_errors(self):
        ds = toy_dataset([1.0, 2.0])
        with pytest.raises(ValueError, match="exceeds sample size"):
            make_blocks(ds, 3)
        with pytest.raises(ValueError, match="positive"):
            make_blocks(ds, 0)

    @given(
        n=st.integers(min_value=1, max_value=60),
        m=st.integers(min_value=1, max_value=12),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    @settings(max_examples=60, deadline=None)
    def test_block_invariants(self, n, m, seed):
        if m > n:
            return
        resp = np.random.default_rng(seed).standard_normal(n)
        ds = toy_dataset(resp, seed=seed)
        bm = make_blocks(ds, m)
        assert bm.n_blocks == n // m
        for k in range(bm.n_blocks):
            block = ds.response[k * m : (k + 1) * m]
            assert bm.maxima[k] >= block.max() - 0.0
            assert bm.maxima[k] == ds.response[bm.source_rows[k]]
        again = make_blocks(ds, m)
        assert np.array_equal(bm.maxima, again.maxima)
        assert np.array_equal(bm.source_rows, again.source_rows)


class TestCsv:
    def test_read_basic(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,y\n1,2,3\n4,5,6\n7,8,9\n")
        ds = read_csv(path, "y")
        assert ds.n_rows == 3 and ds.n_features == 2
        assert ds.feature_names == ("a", "b")
        assert ds.response.tolist() == [3.0, 6.0, 9.0]

    def test_read_selected_columns(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,y\n1,2,3\n")
        ds = read_csv(path, "y", ["b"])
        assert ds.feature_names == ("b",)
        assert ds.features.tolist() == [[2.0]]

    def test_header_only_is_empty_dataset(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,y\n")
        with pytest.raises(ValueError, match="empty dataset"):
            read_csv(path, "y")

    def test_unparseable_cell_names_row_and_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,y\n1,2\nNA,4\n")
        with pytest.raises(ValueError, match=r"row 2.*'a'"):
            read_csv(path, "y")

    def test_missing_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,y\n1,2\n")
        with pytest.raises(ValueError, match="missing column"):
            read_csv(path, "z")
        with pytest.raises(ValueError, match="missing column"):
            read_csv(path, "y", ["q"])

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        vals = np.concatenate(
            [rng.standard_normal(50) * 10.0**rng.integers(-20, 20, 50), [0.0, -0.0]]
        )
        other = rng.standard_normal(vals.size)
        path = tmp_path / "d.csv"
        write_csv({"v": vals, "y": other}, path)
        ds = read_csv(path, "y")
        assert np.array_equal(ds.features[:, 0], vals)
        assert np.array_equal(ds.response, other)

    def test_write_empty_table(self, tmp_path):
        path = tmp_path / "d.csv"
        write_csv({"a": [], "b": []}, path)
        assert path.read_text().strip() == "a,b"

    def test_write_ragged_errors(self, tmp_path):
        with pytest.raises(ValueError, match="ragged"):
            write_csv({"a": [1.0], "b": [1.0, 2.0]}, tmp_path / "d.csv")


class TestWeatherFeatures:
    def _columns(self):
        return {
            "date": ["1900-01-14", "1900-01-15", "1900-04-02", "1900-07-09", "1900-10-20"],
            "prcp": ["0.0", "0.1", "0.0", "0.3", "0.2"],
            "tmax": ["70", "65", "55", "90", "60"],
        }

    def test_season_and_lag(self):
        ds = build_weather_features(self._columns(), "date", "tmax")
        assert ds.feature_names == ("prcp", "season", "tmax_lag1")
        seasons = ds.features[:, 1].tolist()
        assert seasons == [1.0, 2.0, 3.0, 4.0]  # Jan, Apr, Jul, Oct
        lags = ds.features[:, 2].tolist()
        assert lags == [70.0, 65.0, 55.0, 90.0]
        assert ds.response.tolist() == [65.0, 55.0, 90.0, 60.0]

    def test_missing_values_dropped(self):
        cols = self._columns()
        cols["prcp"][2] = "NA"
        ds = build_weather_features(cols, "date", "tmax")
        # row 3 dropped for its own missing value; later rows survive
        assert ds.n_rows == 3
        assert ds.response.tolist() == [65.0, 90.0, 60.0]

    def test_missing_lag_drops_next_row(self):
        cols = self._columns()
        cols["tmax"][1] = ""
        ds = build_weather_features(cols, "date", "tmax")
        # row 2 has no response, row 3 has no lag
        assert ds.response.tolist() == [90.0, 60.0]

    def test_single_row_errors(self):
        with pytest.raises(ValueError, match="two rows"):
            build_weather_features(
                {"date": ["1900-01-01"], "tmax": ["70"]}, "date", "tmax"
            )

    def test_unordered_dates_error(self):
        cols = self._columns()
        cols["date"][2] = "1900-01-10"
        with pytest.raises(ValueError, match="chronological"):
            build_weather_features(cols, "date", "tmax")

    def test_winter_wraps_december(self):
        cols = {
            "date": ["1900-11-30", "1900-12-01", "1901-02-28", "1901-03-01"],
            "tmax": ["50", "40", "45", "55"],
        }
        ds = build_weather_features(cols, "date", "tmax")
        assert ds.features[:, 0].tolist() == [1.0, 1.0, 2.0]  # Dec, Feb winter; Mar spring

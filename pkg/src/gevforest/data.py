"""Dataset containers, CSV input/output, block-maxima construction and
weather-style feature derivation."""

from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Dataset",
    "BlockMaxSample",
    "make_blocks",
    "read_csv",
    "write_csv",
    "build_weather_features",
]

_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


def _frozen(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Covariate matrix plus response vector with column labels.

    Rows are observations; all values must be finite reals.
    """

    features: np.ndarray
    response: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        resp = np.array(self.response, dtype=float)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if resp.ndim != 1:
            raise ValueError("response must be a 1-d vector")
        n, p = feats.shape
        if n < 1 or p < 1:
            raise ValueError("dataset needs at least one row and one feature")
        if resp.shape[0] != n:
            raise ValueError(
                f"feature rows ({n}) and response length ({resp.shape[0]}) differ"
            )
        names = tuple(str(c) for c in self.feature_names)
        if len(names) != p:
            raise ValueError(f"expected {p} feature names, got {len(names)}")
        if not np.isfinite(feats).all():
            raise ValueError("features contain non-finite values")
        if not np.isfinite(resp).all():
            raise ValueError("response contains non-finite values")
        feats.setflags(write=False)
        resp.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "response", resp)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class BlockMaxSample:
    """Per-block maxima with the covariate row of each block's argmax."""

    features: np.ndarray
    maxima: np.ndarray
    block_size: int
    source_rows: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        maxima = np.array(self.maxima, dtype=float)
        rows = np.array(self.source_rows, dtype=np.int64)
        if feats.ndim != 2 or maxima.ndim != 1 or rows.ndim != 1:
            raise ValueError("malformed block-max sample arrays")
        n = feats.shape[0]
        if maxima.shape[0] != n or rows.shape[0] != n:
            raise ValueError("block-max sample arrays disagree on length")
        if n < 1:
            raise ValueError("block-max sample is empty")
        if int(self.block_size) < 1:
            raise ValueError("block size must be a positive integer")
        if not (np.isfinite(feats).all() and np.isfinite(maxima).all()):
            raise ValueError("block-max sample contains non-finite values")
        names = tuple(str(c) for c in self.feature_names)
        if len(names) != feats.shape[1]:
            raise ValueError("feature name count does not match feature columns")
        for arr in (feats, maxima, rows):
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "maxima", maxima)
        object.__setattr__(self, "block_size", int(self.block_size))
        object.__setattr__(self, "source_rows", rows)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_blocks(self) -> int:
        return self.maxima.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "BlockMaxSample":
        """Sub-sample of blocks (used for fold/train-test splitting)."""
        idx = np.asarray(indices, dtype=np.int64)
        return BlockMaxSample(
            features=self.features[idx],
            maxima=self.maxima[idx],
            block_size=self.block_size,
            source_rows=self.source_rows[idx],
            feature_names=self.feature_names,
        )


def make_blocks(ds: Dataset, m: int) -> BlockMaxSample:
    """Split a dataset into consecutive blocks of ``m`` rows and keep each
    block's maximum response together with the covariates of its argmax row.

    Trailing rows that do not fill a complete block are discarded.  Ties
    within a block go to the earliest row.
    """
    m = int(m)
    if m < 1:
        raise ValueError("block size must be a positive integer")
    if m > ds.n_rows:
        raise ValueError("block size exceeds sample size")
    n = ds.n_rows // m
    resp = ds.response[: n * m].reshape(n, m)
    offset = np.argmax(resp, axis=1)  # np.argmax keeps the first max: earliest row
    rows = np.arange(n, dtype=np.int64) * m + offset
    return BlockMaxSample(
        features=ds.features[rows],
        maxima=ds.response[rows],
        block_size=m,
        source_rows=rows,
        feature_names=ds.feature_names,
    )


def read_csv(path, response_column: str, feature_columns=None) -> Dataset:
    """Load a Dataset from a headed CSV file.

    ``feature_columns`` defaults to every column except the response, in file
    order.  Any cell that does not parse as a finite real is an error naming
    the offending row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        raw_rows = [row for row in reader if row]
    if not raw_rows:
        raise ValueError(f"{path}: empty dataset (header only)")

    col_pos = {name: j for j, name in enumerate(header)}
    if response_column not in col_pos:
        raise ValueError(f"{path}: missing column {response_column!r}")
    if feature_columns is None:
        feature_columns = [c for c in header if c != response_column]
    else:
        feature_columns = list(feature_columns)
        missing = [c for c in feature_columns if c not in col_pos]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    if not feature_columns:
        raise ValueError(f"{path}: empty feature selection")

    wanted = feature_columns + [response_column]
    pos = [col_pos[c] for c in wanted]
    for i, row in enumerate(raw_rows):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 1} has {len(row)} cells, expected {len(header)}")
    cells = [[row[j] for j in pos] for row in raw_rows]
    try:
        values = np.array(cells, dtype=float)
    except ValueError:
        values = _parse_cells_reporting(path, cells, wanted)
    if not np.isfinite(values).all():
        bad = np.argwhere(~np.isfinite(values))[0]
        raise ValueError(
            f"{path}: non-finite value in row {bad[0] + 1}, column {wanted[bad[1]]!r}"
        )
    return Dataset(
        features=values[:, :-1],
        response=values[:, -1],
        feature_names=tuple(feature_columns),
    )


def _parse_cells_reporting(path, cells, names) -> np.ndarray:
    """Slow path: locate the first unparseable cell for a precise error."""
    out = np.empty((len(cells), len(names)))
    for i, row in enumerate(cells):
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: cannot parse cell {cell!r} in row {i + 1}, "
                    f"column {names[j]!r}"
                ) from None
    return out


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(table: Mapping[str, Sequence], path) -> None:
    """Write named columns as an RFC-4180-style CSV with a header row.

    Floats are written with 17 significant digits so a write/read round trip
    is bit exact.
    """
    names = list(table)
    lengths = {len(table[c]) for c in names}
    if len(lengths) > 1:
        raise ValueError("ragged columns: all columns must have the same length")
    n = lengths.pop() if lengths else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(n):
            writer.writerow([_format_cell(table[c][i]) for c in names])


def _parse_date(token: str, row: int) -> datetime.date:
    try:
        return datetime.date.fromisoformat(str(token).strip())
    except ValueError:
        raise ValueError(f"row {row + 1}: cannot parse date {token!r}") from None


def _parse_optional_float(token) -> float | None:
    if token is None:
        return None
    if isinstance(token, (int, float, np.floating, np.integer)):
        val = float(token)
        return val if np.isfinite(val) else None
    text = str(token).strip()
    if text.lower() in _MISSING_TOKENS:
        return None
    val = float(text)
    return val if np.isfinite(val) else None


_SEASON_BY_MONTH = {
    12: 1, 1: 1, 2: 1,   # winter
    3: 2, 4: 2, 5: 2,    # spring
    6: 3, 7: 3, 8: 3,    # summer
    9: 4, 10: 4, 11: 4,  # fall
}


def build_weather_features(
    columns: Mapping[str, Sequence],
    date_column: str,
    response_column: str,
    feature_columns=None,
) -> Dataset:
    """Derive model features from daily weather-style records.

    Appends a meteorological season code (1 winter .. 4 fall, by month) and
    the previous day's response, then drops the first row (no lag value) and
    every row with a missing value.  Dates must be ISO calendar dates in
    strictly increasing order.
    """
    for required in (date_column, response_column):
        if required not in columns:
            raise ValueError(f"missing column {required!r}")
    n = len(columns[date_column])
    if n < 2:
        raise ValueError("need at least two rows to build a lagged response")
    if feature_columns is None:
        feature_columns = [
            c for c in columns if c not in (date_column, response_column)
        ]
    else:
        feature_columns = list(feature_columns)
        missing = [c for c in feature_columns if c not in columns]
        if missing:
            raise ValueError(f"missing column(s) {', '.join(missing)}")

    dates = [_parse_date(v, i) for i, v in enumerate(columns[date_column])]
    for i in range(1, n):
        if dates[i] <= dates[i - 1]:
            raise ValueError(
                f"dates are not in chronological order at row {i + 1}"
            )

    response = [_parse_optional_float(v) for v in columns[response_column]]
    feats = {c: [_parse_optional_float(v) for v in columns[c]] for c in feature_columns}

    rows = []
    resp_out = []
    for i in range(1, n):
        lag = response[i - 1]
        current = response[i]
        values = [feats[c][i] for c in feature_columns]
        if current is None or lag is None or any(v is None for v in values):
            continue
        season = _SEASON_BY_MONTH[dates[i].month]
        rows.append(values + [float(season), lag])
        resp_out.append(current)
    if not rows:
        raise ValueError("no complete rows left after dropping missing values")

    names = tuple(feature_columns) + ("season", f"{response_column}_lag1")
    return Dataset(features=np.array(rows), response=np.array(resp_out), feature_names=names)

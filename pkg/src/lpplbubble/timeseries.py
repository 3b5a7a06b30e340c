"""Daily log-price series, CSV ingestion and window extraction.

Time is measured in trading days: observation ``i`` sits at index ``i``
regardless of weekends and holidays between calendar dates.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path

import numpy as np

__all__ = [
    "IngestError",
    "PriceSeries",
    "Window",
    "ingest_csv",
    "write_csv",
    "slice_series",
    "synthetic_dates",
]


class IngestError(ValueError):
    """Raised for malformed input files or invalid series."""


@dataclass(frozen=True)
class PriceSeries:
    """Immutable (date, log-price) observations indexed 0..n-1.

    ``dates`` is a ``datetime64[D]`` array, ``log_price`` a float array of
    the same length. Both arrays are made read-only on construction.
    """

    dates: np.ndarray
    log_price: np.ndarray
    price_column: str = "close"

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]").copy()
        lp = np.asarray(self.log_price, dtype=float).copy()
        if dates.ndim != 1 or lp.ndim != 1 or len(dates) != len(lp):
            raise IngestError("dates and log_price must be 1-d arrays of equal length")
        if len(lp) < 2:
            raise IngestError("a series needs at least 2 observations")
        if not np.all(np.isfinite(lp)):
            raise IngestError("log_price contains non-finite values")
        steps = np.diff(dates).astype(np.int64)
        if np.any(steps <= 0):
            k = int(np.flatnonzero(steps <= 0)[0]) + 1
            raise IngestError(f"dates must be strictly increasing (duplicate or out of order at {dates[k]})")
        dates.flags.writeable = False
        lp.flags.writeable = False
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "log_price", lp)

    def __len__(self):
        return len(self.log_price)

    @property
    def index(self) -> np.ndarray:
        return np.arange(len(self), dtype=float)

    @property
    def last_index(self) -> int:
        return len(self) - 1

    @classmethod
    def from_log_prices(cls, log_price, start="2000-01-03", price_column="close"):
        """Wrap a bare log-price array, stamping it with consecutive business days."""
        lp = np.asarray(log_price, dtype=float)
        return cls(synthetic_dates(len(lp), start), lp, price_column)

    def fingerprint(self) -> str:
        """SHA-256 over the dates and the exact bytes of the log prices."""
        h = hashlib.sha256()
        h.update(self.dates.astype(np.int64).tobytes())
        h.update(np.ascontiguousarray(self.log_price, dtype="<f8").tobytes())
        return h.hexdigest()

    def index_of(self, date) -> int:
        """Index of the last observation on or before ``date``."""
        d = np.datetime64(date, "D")
        k = int(np.searchsorted(self.dates, d, side="right")) - 1
        if k < 0:
            raise IngestError(f"{date} precedes the first observation {self.dates[0]}")
        return k

    def between(self, start=None, end=None) -> "PriceSeries":
        """Sub-series with dates in the closed interval [start, end]."""
        lo = 0 if start is None else int(np.searchsorted(self.dates, np.datetime64(start, "D"), side="left"))
        hi = len(self) if end is None else int(np.searchsorted(self.dates, np.datetime64(end, "D"), side="right"))
        return slice_series(self, Window(lo, hi - lo))

    def date_after(self, trading_days: float) -> np.datetime64:
        """Calendar date ``trading_days`` business days after the last observation."""
        return np.busday_offset(self.dates[-1], int(math.ceil(trading_days)), roll="forward")


@dataclass(frozen=True)
class Window:
    start_index: int
    length: int

    def __post_init__(self):
        if self.start_index < 0:
            raise IngestError(f"window start must be >= 0, got {self.start_index}")
        if self.length < 2:
            raise IngestError(f"window length must be >= 2, got {self.length}")

    @property
    def end_index(self) -> int:
        """Inclusive index of the last observation in the window."""
        return self.start_index + self.length - 1


def synthetic_dates(n: int, start="2000-01-03") -> np.ndarray:
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n))


def slice_series(series: PriceSeries, window: Window) -> PriceSeries:
    if window.start_index + window.length > len(series):
        raise IngestError(
            f"window ({window.start_index}, {window.length}) exceeds series length {len(series)}"
        )
    sl = slice(window.start_index, window.start_index + window.length)
    return PriceSeries(series.dates[sl], series.log_price[sl], series.price_column)


def ingest_csv(path, price_column: str = "close", transform: str = "log",
               date_column: str = "date") -> PriceSeries:
    """Read a ``date,<price_column>`` CSV into a :class:`PriceSeries`.

    Args:
        path: CSV file with one header row and ISO-8601 dates.
        price_column: Name of the value column.
        transform: ``"log"`` takes the natural log of positive prices,
            ``"as-is"`` stores the column unchanged (already a log price).
        date_column: Name of the date column.

    Rows are sorted by date after parsing. Errors carry the 1-based file
    line number of the offending row.
    """
    if transform not in ("log", "as-is"):
        raise IngestError(f"unknown transform {transform!r}")
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"no such file: {path}")
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: empty file")
        for col in (date_column, price_column):
            if col not in reader.fieldnames:
                raise IngestError(f"{path}: missing column {col!r} (have {reader.fieldnames})")
        for lineno, rec in enumerate(reader, start=2):
            raw_date = (rec.get(date_column) or "").strip()
            raw_val = (rec.get(price_column) or "").strip()
            try:
                parsed = date.fromisoformat(raw_date) if len(raw_date) <= 10 else datetime.fromisoformat(raw_date).date()
                d = np.datetime64(parsed, "D")
                v = float(raw_val)
            except ValueError:
                raise IngestError(f"{path}: malformed row {lineno}: {raw_date!r}, {raw_val!r}") from None
            if not math.isfinite(v):
                raise IngestError(f"{path}: non-finite value in row {lineno}")
            if transform == "log":
                if v <= 0:
                    raise IngestError(f"{path}: non-positive price {v} in row {lineno}")
                v = math.log(v)
            rows.append((d, v, lineno))
    if len(rows) < 2:
        raise IngestError(f"{path}: need at least 2 rows, got {len(rows)}")
    rows.sort(key=lambda r: r[0])
    for a, b in zip(rows, rows[1:]):
        if a[0] == b[0]:
            raise IngestError(f"{path}: duplicate date {a[0]} (rows {a[2]} and {b[2]})")
    dates = np.array([r[0] for r in rows], dtype="datetime64[D]")
    values = np.array([r[1] for r in rows])
    return PriceSeries(dates, values, price_column)


def write_csv(series: PriceSeries, path, price_column: str = "close", transform: str = "log") -> None:
    """Write ``series`` as ``date,<price_column>``.

    With ``transform="log"`` the column holds ``exp(log_price)`` so the file
    reads back with the default ingestion. ``"as-is"`` writes log prices,
    which round-trips bit-for-bit.
    """
    if transform not in ("log", "as-is"):
        raise IngestError(f"unknown transform {transform!r}")
    values = np.exp(series.log_price) if transform == "log" else series.log_price
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", price_column])
        for d, v in zip(series.dates, values):
            w.writerow([str(d), repr(float(v))])

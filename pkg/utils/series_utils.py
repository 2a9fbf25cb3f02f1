"""
series_utils.py
Description: The equidistant TimeSeries type and its CSV form
(`# delta=<value>` comment line, then a `time,value` table).
"""

import io
import logging
import math
import numbers
import re
from dataclasses import dataclass

import numpy as np
import pandas as pd

from utils.utils import InsufficientDataError, SeriesFormatError, TrawlDomainError

logger = logging.getLogger(__name__)

GRID_RTOL = 1e-9
_DELTA_RE = re.compile(r'^\s*#\s*delta\s*=\s*(\S+)\s*$', re.IGNORECASE)


@dataclass(frozen=True)
class TimeSeries:
    """Observations x_0..x_{n-1} at times i*delta."""

    delta: float
    values: np.ndarray

    def __post_init__(self):
        if isinstance(self.delta, bool) or not isinstance(self.delta, numbers.Real) \
                or not (math.isfinite(self.delta) and self.delta > 0):
            raise TrawlDomainError(f"Grid width delta must be a positive number, got {self.delta!r}")
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size < 2:
            raise InsufficientDataError(f"A time series needs at least 2 observations, got {values.size}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise SeriesFormatError(f"Non-finite value at index {bad}")
        values.setflags(write=False)
        object.__setattr__(self, 'delta', float(self.delta))
        object.__setattr__(self, 'values', values)

    @property
    def n(self):
        return int(self.values.size)

    @property
    def times(self):
        return np.arange(self.n) * self.delta

    def head(self, n):
        """First n observations."""
        return TimeSeries(self.delta, self.values[:n])

    def window(self, end, length):
        """The `length` observations ending at index `end` (inclusive)."""
        return TimeSeries(self.delta, self.values[end - length + 1:end + 1])

    def shifted(self, offset):
        return TimeSeries(self.delta, self.values - offset)

    def to_frame(self):
        return pd.DataFrame({'time': self.times, 'value': self.values})


def _read_header_delta(lines):
    for line in lines:
        if not line.strip():
            continue
        if not line.lstrip().startswith('#'):
            break
        match = _DELTA_RE.match(line)
        if match:
            try:
                return float(match.group(1))
            except ValueError:
                raise SeriesFormatError(f"Unreadable delta in header line: {line.strip()!r}")
    return None


def parse_series_text(text, source='<input>'):
    """
    Parse CSV text into a TimeSeries.
    Args:
        text (str): File contents.
        source (str): Name used in error messages.
    Returns:
        TimeSeries
    """
    header_delta = _read_header_delta(text.splitlines())
    try:
        frame = pd.read_csv(io.StringIO(text), comment='#', skip_blank_lines=True)
    except Exception as e:
        raise SeriesFormatError(f"{source}: not a readable CSV table: {e}")
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    if list(frame.columns[:2]) != ['time', 'value']:
        raise SeriesFormatError(f"{source}: expected columns 'time,value', got {','.join(frame.columns)}")
    for column in ('time', 'value'):
        numeric = pd.to_numeric(frame[column], errors='coerce')
        missing = numeric.isna().to_numpy()
        if missing.any():
            row = int(np.flatnonzero(missing)[0]) + 1
            raise SeriesFormatError(f"{source}: missing or non-numeric {column} in row {row}")
        frame[column] = numeric
    times = frame['time'].to_numpy(dtype=float)
    values = frame['value'].to_numpy(dtype=float)
    if times.size < 2:
        if header_delta is None or times.size == 0:
            raise InsufficientDataError(f"{source}: need at least 2 rows, got {times.size}")
        return TimeSeries(header_delta, values)

    inferred = times[1] - times[0]
    if inferred <= 0:
        raise SeriesFormatError(f"{source}: times must be strictly increasing (row 2)")
    if header_delta is not None:
        if header_delta <= 0:
            raise SeriesFormatError(f"{source}: header delta must be positive, got {header_delta}")
        delta = header_delta
    else:
        delta = inferred

    expected = times[0] + np.arange(times.size) * delta
    tol = GRID_RTOL * np.maximum(1.0, np.abs(expected))
    off_grid = np.abs(times - expected) > tol
    if off_grid.any():
        row = int(np.flatnonzero(off_grid)[0]) + 1
        raise SeriesFormatError(
            f"{source}: row {row} at time {times[row - 1]!r} is off the grid with delta={delta!r}"
        )
    return TimeSeries(delta, values)


def parse_series(path):
    """Read a `time,value` CSV file with an optional `# delta=` header into a TimeSeries."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise SeriesFormatError(f"Cannot read series file {path}: {e}")
    series = parse_series_text(text, source=str(path))
    logger.debug(f"Parsed {series.n} observations from {path} (delta={series.delta})")
    return series


def format_series(series):
    """CSV text for a series; values at full precision so a parse round-trip is exact."""
    buf = io.StringIO()
    buf.write(f"# delta={series.delta!r}\n")
    series.to_frame().to_csv(buf, index=False, float_format='%.17g', lineterminator='\n')
    return buf.getvalue()


def write_series(series, path):
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(format_series(series))
    logger.info(f"Wrote {series.n} observations to {path}")

"""Salary data ingestion: annualized salaries, sample filters and CSV readers.

Readers accept the files this package writes, including the leading
'# format_version' comment line, and report malformed rows by their 1-based
line number in the file.
"""
import logging
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .binprob import BinGrid, BinnedDistribution
from .checks import (
    check_finite,
    check_not_empty,
    check_positive,
    ConfigException,
    EmptyInputException,
    InvalidGridException,
    MalformedRowException,
    ParamsOutOfRangeException,
)

logger = logging.getLogger(__name__)

FULL_TIME_HOURS = 209
MONTHS_PER_YEAR = 12

GROWTH_COLUMNS = ("growth",)
BINNED_COLUMNS = ("bin_mid", "prop", "count")
SALARY_COLUMNS = ("prev_salary", "new_salary")
EARNINGS_COLUMNS = ("prev_earnings", "prev_months", "new_earnings", "new_months")


def annualize(earnings, months):
    """Annual salary from total earnings over the months worked in the year."""
    check_finite("earnings", earnings)
    check_finite("months", months)
    months = np.asarray(months, dtype=float)
    if np.any((months <= 0) | (months > MONTHS_PER_YEAR)):
        raise ParamsOutOfRangeException("months worked must lie in (0, 12]")
    out = np.asarray(earnings, dtype=float) * MONTHS_PER_YEAR / months
    return float(out) if out.ndim == 0 else out


def full_time_minimum_wage(hourly_minimum, hours_per_month=FULL_TIME_HOURS):
    """Annual full-time minimum wage: hourly minimum x monthly hours x 12."""
    check_positive("hourly minimum wage", hourly_minimum)
    check_positive("hours per month", hours_per_month)
    return hourly_minimum * hours_per_month * MONTHS_PER_YEAR


def salary_growth(prev, new):
    """Log salary growth log(new) - log(prev) for positive salary levels."""
    check_not_empty("salaries", prev)
    prev = np.asarray(prev, dtype=float)
    new = np.asarray(new, dtype=float)
    check_finite("previous salaries", prev)
    check_finite("new salaries", new)
    if prev.shape != new.shape:
        raise ParamsOutOfRangeException(
            f"previous and new salaries differ in length: {prev.shape} vs {new.shape}")
    if np.any(prev <= 0) or np.any(new <= 0):
        raise ParamsOutOfRangeException("salaries must be positive to take logs")
    return np.log(new) - np.log(prev)


@dataclass(frozen=True)
class SampleFilter:
    """Keeps switchers whose annualized salaries lie strictly inside (min_salary, max_salary).

    Arguments:
        min_salary::float- exclusive lower bound, e.g. the full-time minimum wage
        max_salary::float- exclusive upper bound, None for no cap
        full_months_only::bool- drop rows flagged as partial months at hire or separation
    """
    min_salary: float = 0.0
    max_salary: Optional[float] = None
    full_months_only: bool = False

    def __post_init__(self):
        if self.max_salary is not None and self.max_salary <= self.min_salary:
            raise ParamsOutOfRangeException(
                f"max_salary {self.max_salary} must exceed min_salary {self.min_salary}")

    def mask(self, frame):
        keep = np.ones(len(frame), dtype=bool)
        for column in SALARY_COLUMNS:
            values = frame[column].to_numpy(dtype=float)
            keep &= values > self.min_salary
            if self.max_salary is not None:
                keep &= values < self.max_salary
        if self.full_months_only:
            for column in ("full_month_hire", "full_month_separation"):
                if column in frame:
                    keep &= frame[column].to_numpy(dtype=bool)
        return keep

    def apply(self, frame):
        keep = self.mask(frame)
        logger.info("sample filter kept %d of %d switchers", int(keep.sum()), len(frame))
        return frame.loc[keep].reset_index(drop=True)


def _comment_lines(path):
    # leading '#' lines, e.g. the format_version header
    count = 0
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            count += 1
    return count


def read_table(path, required):
    """Reads a CSV with a header row into numeric columns.

    Arguments:
        path::str- CSV file
        required::tuple- column names that must be present

    Returns:
        pd.DataFrame- float columns, in file order

    Raises:
        MalformedRowException- naming the first line that does not parse
    """
    try:
        skip = _comment_lines(path)
    except FileNotFoundError:
        raise ConfigException(f"input file {path} does not exist")
    try:
        frame = pd.read_csv(path, skiprows=skip, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise EmptyInputException(f"{path} holds no header row")
    except pd.errors.ParserError as err:
        found = re.search(r"line (\d+)", str(err))
        line = int(found.group(1)) + skip if found else None
        raise MalformedRowException(f"{path}: {err}", line=line)

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise MalformedRowException(
            f"{path}: missing column(s) {', '.join(missing)} in the header", line=skip + 1)
    if frame.empty:
        raise EmptyInputException(f"{path} holds no data rows")

    out = pd.DataFrame(index=frame.index)
    for column in frame.columns:
        values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
        bad = ~np.isfinite(values.to_numpy(dtype=float))
        if bad.any():
            row = int(np.argmax(bad))
            line = skip + 2 + row
            raise MalformedRowException(
                f"{path}: line {line}: column {column} holds {frame[column].iloc[row]!r}, "
                f"expected a finite number", line=line)
        out[column] = values.astype(float)
    return out


def read_header(path):
    """Column names of a CSV without reading its rows."""
    try:
        skip = _comment_lines(path)
        columns = pd.read_csv(path, skiprows=skip, nrows=0).columns
    except FileNotFoundError:
        raise ConfigException(f"input file {path} does not exist")
    except pd.errors.EmptyDataError:
        raise EmptyInputException(f"{path} holds no header row")
    return [str(c).strip() for c in columns]


def read_growth(path):
    """Raw salary growth values from a CSV with a 'growth' column."""
    return read_table(path, GROWTH_COLUMNS)["growth"].to_numpy()


def _grid_from_midpoints(mids, include_zero_bin=True):
    if mids.size < 2:
        raise InvalidGridException("binned input needs at least two bins")
    steps = np.diff(mids)
    width = float(np.median(steps))
    if width <= 0 or not np.allclose(steps, width, rtol=1e-6, atol=1e-12):
        raise InvalidGridException("bin midpoints must be increasing and equally spaced")
    k = np.round(mids / width)
    width = float(np.round(width, 12))
    return BinGrid(float(k[0] * width), float(k[-1] * width), width, include_zero_bin)


def read_binned(path, include_zero_bin=True):
    """Binned salary growth from a CSV with columns bin_mid, prop, count.

    Shares are taken as given; the total number of observations is recovered
    from a bin with positive share as count / prop.
    """
    frame = read_table(path, BINNED_COLUMNS).sort_values("bin_mid")
    grid = _grid_from_midpoints(frame["bin_mid"].to_numpy(), include_zero_bin)
    props = frame["prop"].to_numpy()
    counts = np.rint(frame["count"].to_numpy()).astype(np.int64)
    if np.any(counts < 0):
        raise MalformedRowException(f"{path}: negative bin count")
    positive = np.flatnonzero(props > 0)
    if positive.size == 0:
        raise EmptyInputException(f"{path}: every bin share is zero")
    n_total = int(np.rint(counts[positive[0]] / props[positive[0]]))
    return BinnedDistribution(grid, props, n_obs=max(n_total, int(counts.sum())), counts=counts)


def read_salaries(path, sample_filter=None):
    """Previous and new salaries per switcher.

    Files either carry prev_salary and new_salary directly or the raw
    earnings and months worked, which are annualized here.

    Returns:
        pd.DataFrame- prev_salary, new_salary (and any flag columns) after filtering
    """
    header = read_header(path)
    if all(c in header for c in SALARY_COLUMNS):
        frame = read_table(path, SALARY_COLUMNS)
    elif all(c in header for c in EARNINGS_COLUMNS):
        frame = read_table(path, EARNINGS_COLUMNS)
        frame["prev_salary"] = annualize(frame["prev_earnings"], frame["prev_months"])
        frame["new_salary"] = annualize(frame["new_earnings"], frame["new_months"])
    else:
        raise MalformedRowException(
            f"{path}: expected columns {', '.join(SALARY_COLUMNS)} or "
            f"{', '.join(EARNINGS_COLUMNS)}", line=_comment_lines(path) + 1)
    if sample_filter is not None:
        frame = sample_filter.apply(frame)
    if frame.empty:
        raise EmptyInputException(f"{path}: no switchers left after filtering")
    return frame


def read_distribution(path, grid=None, include_zero_bin=True):
    """Binned growth from either a binned CSV or a raw growth CSV.

    Arguments:
        path::str- CSV file
        grid::BinGrid- bins for raw growth values
        include_zero_bin::bool- zero-bin flag for binned input

    Returns:
        (BinnedDistribution, np.ndarray or None)- the bins and the raw values when given
    """
    header = read_header(path)
    if "growth" in header:
        if grid is None:
            raise InvalidGridException("raw growth input needs a bin grid")
        values = read_growth(path)
        return BinnedDistribution.from_values(values, grid), values
    if all(c in header for c in BINNED_COLUMNS):
        return read_binned(path, include_zero_bin), None
    raise MalformedRowException(
        f"{path}: expected a 'growth' column or columns {', '.join(BINNED_COLUMNS)}",
        line=_comment_lines(path) + 1)

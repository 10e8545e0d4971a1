"""Predicted shares of accepted offers in salary-growth bins.

Accepted offers are censored: an offer r is realized only with probability
p(r). Bin shares are therefore normalized by the total accepted mass A, and
each bin share is computed from productivity differences along the offer
schedule, with p held at the bin midpoint.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .checks import (
    BinMismatchException,
    check_finite,
    check_not_empty,
    check_positive,
    EmptyInputException,
    InvalidGridException,
)
from .dist import cdf, expect, pdf, shaped_like
from .model import (
    acceptance_rate,
    implied_phi_slope,
    optimal_offer,
    phi_gain,
    phi_loss,
    salary_match_wedge,
)

logger = logging.getLogger(__name__)

# midpoints and edges must sit on the width lattice up to this relative slack
_GRID_SLACK = 1e-9
# predicted shares carry midpoint and quadrature error
_SUM_SLACK = 1e-5


class GrowthSide(str, Enum):
    CUTS = "cuts"
    RAISES = "raises"


@dataclass(frozen=True)
class BinGrid:
    """Equal-width bins centered on multiples of width, one of them on zero.

    Arguments:
        lo::float- midpoint of the lowest bin (<= 0, a multiple of width)
        hi::float- midpoint of the highest bin (>= 0, a multiple of width)
        width::float- bin width in log points
        include_zero_bin::bool- whether the zero bin enters fits and criteria
    """
    lo: float
    hi: float
    width: float
    include_zero_bin: bool = True

    def __post_init__(self):
        check_positive("width", self.width)
        check_finite("lo", self.lo)
        check_finite("hi", self.hi)
        if not self.lo <= 0 <= self.hi:
            raise InvalidGridException(
                f"grid must contain the zero bin, got lo={self.lo}, hi={self.hi}")
        for name, value in (("lo", self.lo), ("hi", self.hi)):
            k = value / self.width
            if abs(k - round(k)) > _GRID_SLACK * max(1.0, abs(k)):
                raise InvalidGridException(
                    f"{name}={value} is not a multiple of the bin width {self.width}")

    @property
    def k_lo(self):
        return int(round(self.lo / self.width))

    @property
    def k_hi(self):
        return int(round(self.hi / self.width))

    @property
    def n_bins(self):
        return self.k_hi - self.k_lo + 1

    @property
    def ks(self):
        return np.arange(self.k_lo, self.k_hi + 1)

    @property
    def midpoints(self):
        return self.ks * self.width

    @property
    def lower_edges(self):
        return (self.ks - 0.5) * self.width

    @property
    def upper_edges(self):
        return (self.ks + 0.5) * self.width

    @property
    def zero_index(self):
        return -self.k_lo

    @property
    def fit_mask(self):
        """Bins that enter fits: all of them, or all but zero."""
        mask = np.ones(self.n_bins, dtype=bool)
        if not self.include_zero_bin:
            mask[self.zero_index] = False
        return mask

    def side_mask(self, side):
        if GrowthSide(side) is GrowthSide.CUTS:
            return self.ks < 0
        return self.ks > 0

    def index_of(self, x):
        """Bin index of each value, -1 for values outside the grid.

        Bins are half-open [lower, upper) except the topmost, which is closed.
        """
        x = np.asarray(x, dtype=float)
        k = np.floor(x / self.width + 0.5).astype(np.int64)
        top = np.isclose(x, (self.k_hi + 0.5) * self.width, rtol=0.0, atol=1e-15)
        k = np.where(top, self.k_hi, k)
        idx = k - self.k_lo
        return np.where((idx >= 0) & (idx < self.n_bins), idx, -1)

    def with_zero_bin(self, include):
        return replace(self, include_zero_bin=bool(include))

    def same_bins(self, other):
        return (self.k_lo, self.k_hi) == (other.k_lo, other.k_hi) and np.isclose(
            self.width, other.width, rtol=1e-12, atol=0.0)


@dataclass(frozen=True)
class BinnedDistribution:
    """Per-bin shares of salary growth on a BinGrid.

    Shares are relative to all observations (or all accepted offers), so they
    sum to less than one when the grid does not cover the whole support.

    Arguments:
        grid::BinGrid- bins
        props::np.ndarray- share per bin
        n_obs::int- number of observations behind the shares, None for predictions
        counts::np.ndarray- raw counts per bin when known
    """
    grid: BinGrid
    props: np.ndarray
    n_obs: Optional[int] = None
    counts: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        props = np.asarray(self.props, dtype=float)
        if props.shape != (self.grid.n_bins,):
            raise BinMismatchException(
                f"expected {self.grid.n_bins} proportions, got {props.shape}")
        check_finite("props", props)
        if np.any(props < 0):
            raise InvalidGridException("bin proportions must be non-negative")
        if props.sum() > 1.0 + _SUM_SLACK:
            raise InvalidGridException(f"bin proportions sum to {props.sum()} > 1")
        object.__setattr__(self, "props", props)
        if self.counts is not None:
            object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))

    @classmethod
    def from_values(cls, values, grid):
        """Bins raw growth values; shares are relative to all values given."""
        check_not_empty("growth values", values)
        values = np.asarray(values, dtype=float)
        check_finite("growth values", values)
        idx = grid.index_of(values)
        counts = np.bincount(idx[idx >= 0], minlength=grid.n_bins)
        return cls(grid, counts / values.size, n_obs=int(values.size), counts=counts)

    @classmethod
    def from_counts(cls, grid, counts, n_total=None):
        """Shares from bin counts; n_total also counts observations outside the grid."""
        counts = np.asarray(counts, dtype=np.int64)
        n_total = int(counts.sum()) if n_total is None else int(n_total)
        if n_total <= 0:
            raise EmptyInputException("binned input holds no observations")
        if n_total < counts.sum():
            raise BinMismatchException(
                f"total count {n_total} is below the sum of bin counts {counts.sum()}")
        return cls(grid, counts / n_total, n_obs=n_total, counts=counts)

    @property
    def zero_prop(self):
        return float(self.props[self.grid.zero_index])

    @property
    def fit_props(self):
        return self.props[self.grid.fit_mask]

    def bin_counts(self):
        """Counts per bin plus the count outside the grid."""
        if self.n_obs is None:
            raise EmptyInputException("predicted distributions carry no counts")
        counts = self.counts
        if counts is None:
            counts = np.rint(self.props * self.n_obs).astype(np.int64)
        return counts, max(int(self.n_obs - counts.sum()), 0)

    def side(self, side):
        """(midpoints, props) of the bins strictly on one side of zero."""
        mask = self.grid.side_mask(side)
        return self.grid.midpoints[mask], self.props[mask]

    def with_grid(self, grid):
        if not self.grid.same_bins(grid):
            raise BinMismatchException("grids differ in bins")
        return replace(self, grid=grid)

    def restrict(self, lo, hi):
        """Sub-distribution on the bins with midpoints in [lo, hi]."""
        sub = BinGrid(lo, hi, self.grid.width, self.grid.include_zero_bin)
        if sub.k_lo < self.grid.k_lo or sub.k_hi > self.grid.k_hi:
            raise BinMismatchException(
                f"range [{lo}, {hi}] exceeds the binned range [{self.grid.lo}, {self.grid.hi}]")
        start = sub.k_lo - self.grid.k_lo
        stop = start + sub.n_bins
        counts = None if self.counts is None else self.counts[start:stop]
        return BinnedDistribution(sub, self.props[start:stop], self.n_obs, counts)


def accepted_mass(p):
    """Total probability A that an offer is accepted.

    Integrates f_phi(phi) * p(r*(phi)) over productivities off the wedge and
    adds p(0) times the wedge probability.

    Arguments:
        p::ModelParams- model parameters

    Returns:
        float- A in (0, 1]
    """
    wedge = salary_match_wedge(p)

    def accepted(phi):
        return acceptance_rate(p, optimal_offer(p, phi))

    cuts = expect(p.phi, accepted, hi=wedge.lo)
    raises = expect(p.phi, accepted, lo=wedge.hi)
    matches = acceptance_rate(p, 0.0) * (cdf(p.phi, wedge.hi) - cdf(p.phi, wedge.lo))
    mass = cuts + matches + raises
    logger.debug("accepted mass %.12g (cuts %.6g, matches %.6g, raises %.6g)",
                 mass, cuts, matches, raises)
    return float(min(mass, 1.0))


def _sliver(p, branch, lo, hi, mid):
    # share of offers landing in [lo, hi] on one branch of the schedule
    return acceptance_rate(p, mid) * (cdf(p.phi, branch(p, hi)) - cdf(p.phi, branch(p, lo)))


def predicted_props(p, grid, mass=None):
    """Predicted share of accepted offers per bin.

    Bins below zero use the pay-cut schedule, bins above zero the pay-raise
    schedule. The zero bin holds the salary matches plus the two half-bin
    slivers of small cuts and raises around them.

    Arguments:
        p::ModelParams- model parameters
        grid::BinGrid- salary-growth bins
        mass::float- accepted mass A when already known

    Returns:
        BinnedDistribution- predicted shares, n_obs None
    """
    mass = accepted_mass(p) if mass is None else mass
    mids, lower, upper = grid.midpoints, grid.lower_edges, grid.upper_edges
    props = np.zeros(grid.n_bins)

    cut = grid.ks < 0
    rise = grid.ks > 0
    if np.any(cut):
        props[cut] = _sliver(p, phi_loss, lower[cut], upper[cut], mids[cut])
    if np.any(rise):
        props[rise] = _sliver(p, phi_gain, lower[rise], upper[rise], mids[rise])

    half = 0.5 * grid.width
    wedge = salary_match_wedge(p)
    matches = acceptance_rate(p, 0.0) * (cdf(p.phi, wedge.hi) - cdf(p.phi, wedge.lo))
    small_cuts = acceptance_rate(p, -0.5 * half) * (cdf(p.phi, wedge.lo) - cdf(p.phi, phi_loss(p, -half)))
    small_raises = acceptance_rate(p, 0.5 * half) * (cdf(p.phi, phi_gain(p, half)) - cdf(p.phi, wedge.hi))
    props[grid.zero_index] = matches + small_cuts + small_raises

    return BinnedDistribution(grid, np.clip(props / mass, 0.0, None))


def match_share(p, mass=None):
    """Share of accepted offers that are exact salary matches."""
    mass = accepted_mass(p) if mass is None else mass
    wedge = salary_match_wedge(p)
    return acceptance_rate(p, 0.0) * (cdf(p.phi, wedge.hi) - cdf(p.phi, wedge.lo)) / mass


def accepted_density(p, r, mass=None):
    """Continuous density of realized salary growth, excluding the match atom.

    p(r) f_phi(phi(r)) phi'(r) / A; at r = 0 the raise-side limit is returned.
    """
    check_finite("r", r)
    mass = accepted_mass(p) if mass is None else mass
    r = np.asarray(r, dtype=float)
    phis = np.where(r < 0, phi_loss(p, r), phi_gain(p, r))
    out = np.asarray(acceptance_rate(p, r)) * pdf(p.phi, phis) * implied_phi_slope(p, r) / mass
    return shaped_like(r, out)


def predicted_anomalies(p, grid, mass=None, spec=None):
    """Anomaly statistics implied by the model on the given bins.

    Without spec, the smooth one-sided levels at zero are the raise-side and
    cut-side bin formulas continued over the zero bin, and the levels one bin
    away are the predicted props of the bins at +width and -width. With a
    KernelSpec, the predicted props go through the same local polynomial
    smoothing as data, which is the scale a kernel estimate converges to.

    Arguments:
        p::ModelParams- model parameters
        grid::BinGrid- bins, at least two per side of zero
        mass::float- accepted mass A when already known
        spec::KernelSpec- smoothing to apply to the predicted props, optional

    Returns:
        AnomalyReport- levels as shares
    """
    from .anomaly import anomalies, AnomalyReport

    if grid.k_lo > -2 or grid.k_hi < 2:
        raise InvalidGridException("anomalies need at least two bins on each side of zero")
    mass = accepted_mass(p) if mass is None else mass
    dist = predicted_props(p, grid, mass=mass)
    if spec is not None:
        return anomalies(dist, spec)
    half = 0.5 * grid.width
    z = grid.zero_index

    a0 = _sliver(p, phi_gain, -half, half, 0.0) / mass
    b0 = _sliver(p, phi_loss, -half, half, 0.0) / mass
    return AnomalyReport.from_shares(
        p0=dist.props[z], a0=a0, a2=dist.props[z + 1], b0=b0, b2=dist.props[z - 1])

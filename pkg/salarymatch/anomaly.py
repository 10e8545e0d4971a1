"""Bunching, discontinuity and curvature break at zero salary growth.

Bin proportions on each side of zero are smoothed with a local polynomial
regression (Epanechnikov weights) fit only to non-zero bins, and the smooth
curves are evaluated at the zero boundary. Every local fit is linear in the
proportions, so each side is represented by a smoother matrix and bootstrap
draws reduce to matrix products.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
import pandas as pd

from .binprob import BinnedDistribution, GrowthSide
from .checks import (
    BandwidthException,
    check_at_least,
    check_positive,
    EmptyInputException,
    InvalidGridException,
    ParamsOutOfRangeException,
)
from .streams import chunk_sizes, map_chunks

logger = logging.getLogger(__name__)

ROT = "rot"
DEFAULT_BANDWIDTH = 0.020
DEFAULT_RANGE = 0.2
DEFAULT_ITERATIONS = 10_000

STAT_FIELDS = (
    "p0_hat", "a0_hat", "a2_hat", "b0_hat", "b2_hat",
    "bunching_pp", "bunching_ratio",
    "discontinuity_pp", "discontinuity_pct",
    "curvature_break_pp", "curvature_ratio",
)


@dataclass(frozen=True)
class KernelSpec:
    """Local polynomial smoothing settings.

    Arguments:
        degree::int- 1 (local linear) or 2 (local quadratic)
        bandwidth::float or 'rot'- Epanechnikov bandwidth in log points, or the rule of thumb
        fit_range::float- bins with |midpoint| <= fit_range enter the fits
    """
    degree: int = 1
    bandwidth: Union[float, str] = DEFAULT_BANDWIDTH
    fit_range: float = DEFAULT_RANGE

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ParamsOutOfRangeException(f"degree must be 1 or 2, got {self.degree}")
        if isinstance(self.bandwidth, str):
            if self.bandwidth.lower() != ROT:
                raise ParamsOutOfRangeException(
                    f"bandwidth must be a number or '{ROT}', got {self.bandwidth!r}")
            object.__setattr__(self, "bandwidth", ROT)
        else:
            check_positive("bandwidth", self.bandwidth)
        check_positive("fit_range", self.fit_range)

    @property
    def rule_of_thumb(self):
        return self.bandwidth == ROT


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.full(np.broadcast(num, den).shape, np.nan)
    np.divide(num, den, out=out, where=den != 0)
    return out


def anomaly_statistics(p0, a0, a2, b0, b2):
    """Anomaly statistics from the zero-bin share and smoothed levels (arrays allowed).

    Levels are shares of observations and pass through unchanged; the _pp
    differences are in percentage points. Ratios are NaN when their
    denominator is zero.
    """
    p0, a0, a2, b0, b2 = (np.asarray(v, dtype=float) for v in (p0, a0, a2, b0, b2))
    cut_slope = b0 - b2
    raise_slope = a2 - a0
    return {
        "p0_hat": p0,
        "a0_hat": a0,
        "a2_hat": a2,
        "b0_hat": b0,
        "b2_hat": b2,
        "bunching_pp": 100.0 * (p0 - a0),
        "bunching_ratio": _ratio(p0 - a0, a0),
        "discontinuity_pp": 100.0 * (a0 - b0),
        "discontinuity_pct": 100.0 * _ratio(a0 - b0, b0),
        "curvature_break_pp": 100.0 * (cut_slope - raise_slope),
        "curvature_ratio": _ratio(cut_slope, raise_slope),
    }


@dataclass(frozen=True)
class AnomalyReport:
    """Anomalies at zero growth.

    p0_hat through b2_hat are shares of observations, the _pp statistics
    percentage points.

    bunching_ratio is the excess zero-bin mass relative to the smooth level,
    discontinuity_pct the jump at zero relative to the level just below it.
    """
    p0_hat: float
    a0_hat: float
    a2_hat: float
    b0_hat: float
    b2_hat: float
    bunching_pp: float
    bunching_ratio: float
    discontinuity_pp: float
    discontinuity_pct: float
    curvature_break_pp: float
    curvature_ratio: float
    bandwidths: Optional[dict] = None
    ses: Optional[dict] = None

    @classmethod
    def from_shares(cls, p0, a0, a2, b0, b2, bandwidths=None):
        stats = anomaly_statistics(p0, a0, a2, b0, b2)
        return cls(**{k: float(v) for k, v in stats.items()}, bandwidths=bandwidths)

    def with_ses(self, ses):
        return replace(self, ses=dict(ses))

    def to_dict(self):
        out = {k: getattr(self, k) for k in STAT_FIELDS}
        out["bandwidths"] = self.bandwidths
        out["ses"] = self.ses
        return out


@dataclass(frozen=True)
class SideFit:
    """Smoothed proportions on one side of zero.

    x_eval runs outward from zero, so fitted[0] is the boundary value and
    fitted[1] the value one bin away.
    """
    side: GrowthSide
    bandwidth: float
    x_fit: np.ndarray
    x_eval: np.ndarray
    fitted: np.ndarray
    smoother: np.ndarray = field(repr=False)

    @property
    def at_zero(self):
        return float(self.fitted[0])

    @property
    def one_bin_out(self):
        return float(self.fitted[1])


def epanechnikov(u):
    """Epanechnikov kernel 0.75 (1 - u^2) on |u| < 1."""
    u = np.asarray(u, dtype=float)
    return 0.75 * np.maximum(0.0, 1.0 - u * u)


def smoother_matrix(x_fit, x_eval, bandwidth, degree):
    """Rows map fit-sample values to local polynomial fits at each evaluation point.

    Arguments:
        x_fit::np.ndarray- fit-sample bin midpoints
        x_eval::np.ndarray- evaluation points
        bandwidth::float- kernel bandwidth
        degree::int- local polynomial degree

    Returns:
        np.ndarray- (len(x_eval), len(x_fit)) matrix S with fitted = S @ y

    Raises:
        BandwidthException- when fewer than degree + 1 fit points carry weight
    """
    x_fit = np.asarray(x_fit, dtype=float)
    smoother = np.empty((len(x_eval), len(x_fit)))
    for j, x0 in enumerate(np.asarray(x_eval, dtype=float)):
        dx = x_fit - x0
        w = epanechnikov(dx / bandwidth)
        if np.count_nonzero(w) < degree + 1:
            raise BandwidthException(
                f"fewer than {degree + 1} bins within bandwidth {bandwidth} of {x0}", point=float(x0))
        design = np.vander(dx, degree + 1, increasing=True)
        xtw = design.T * w
        try:
            smoother[j] = np.linalg.solve(xtw @ design, xtw)[0]
        except np.linalg.LinAlgError:
            raise BandwidthException(
                f"local fit at {x0} is singular with bandwidth {bandwidth}", point=float(x0))
    return smoother


def _side_sample(props, side, fit_range, degree):
    x, y = props.side(side)
    keep = np.abs(x) <= fit_range + 1e-12
    x, y = x[keep], y[keep]
    if x.size < degree + 2:
        raise InvalidGridException(
            f"{GrowthSide(side).value} side has {x.size} bins in range, need {degree + 2}")
    return x, y


def _outward(x, side):
    # evaluation points 0, +-w, +-2w, ... ordered away from zero
    return np.concatenate([[0.0], x[::-1] if GrowthSide(side) is GrowthSide.CUTS else x])


def rot_bandwidth(props, degree, side, fit_range=DEFAULT_RANGE):
    """Rule-of-thumb bandwidth minimizing a weighted leave-one-out squared error.

    Candidates are multiples of the bin width up to the fit range. Each
    candidate is scored by sum_i K(x_i / R) (y_i - yhat_{-i})^2 with
    Epanechnikov weights over the fit range R, so bins near zero count most.

    Arguments:
        props::BinnedDistribution- binned proportions
        degree::int- local polynomial degree
        side::GrowthSide- cuts or raises
        fit_range::float- half-width of the fit sample

    Returns:
        float- chosen bandwidth
    """
    x, y = _side_sample(props, side, fit_range, degree)
    if not np.any(y > 0):
        raise EmptyInputException(f"all {GrowthSide(side).value} proportions are zero")

    width = props.grid.width
    weights = epanechnikov(x / (fit_range + width))
    best, best_score = None, np.inf
    for j in range(degree + 2, x.size + 1):
        h = j * width
        try:
            smoother = smoother_matrix(x, x, h, degree)
        except BandwidthException:
            continue
        leverage = np.diag(smoother)
        if np.any(leverage >= 1.0 - 1e-12):
            continue
        loo = (y - smoother @ y) / (1.0 - leverage)
        score = float(np.sum(weights * loo * loo))
        if score < best_score:
            best, best_score = h, score
    if best is None:
        raise BandwidthException(f"no admissible bandwidth on the {GrowthSide(side).value} side")
    logger.info("rule-of-thumb bandwidth %s degree %d: %.4f", GrowthSide(side).value, degree, best)
    return best


def _bandwidth(props, spec, side):
    if spec.rule_of_thumb:
        return rot_bandwidth(props, spec.degree, side, spec.fit_range)
    return float(spec.bandwidth)


def kernel_density(props, spec, side, bandwidth=None):
    """Local polynomial smooth of one side, evaluated at zero and at every fit bin.

    Arguments:
        props::BinnedDistribution- binned proportions including the zero bin
        spec::KernelSpec- smoothing settings
        side::GrowthSide- cuts or raises
        bandwidth::float- overrides the spec bandwidth when given

    Returns:
        SideFit- smoothed proportions ordered outward from zero
    """
    side = GrowthSide(side)
    x, y = _side_sample(props, side, spec.fit_range, spec.degree)
    h = _bandwidth(props, spec, side) if bandwidth is None else bandwidth
    x_eval = _outward(x, side)
    smoother = smoother_matrix(x, x_eval, h, spec.degree)
    return SideFit(side, h, x, x_eval, smoother @ y, smoother)


def _check_anomaly_grid(props):
    grid = props.grid
    if grid.k_lo > -2 or grid.k_hi < 2:
        raise InvalidGridException("anomalies need the zero bin and at least two bins per side")


def fit_sides(props, spec):
    """Cut-side and raise-side fits."""
    _check_anomaly_grid(props)
    return (kernel_density(props, spec, GrowthSide.CUTS),
            kernel_density(props, spec, GrowthSide.RAISES))


def anomalies(props, spec):
    """Anomaly report (without standard errors) for binned proportions.

    Arguments:
        props::BinnedDistribution- proportions with the zero bin
        spec::KernelSpec- smoothing settings

    Returns:
        AnomalyReport- levels as shares, chosen bandwidths per side
    """
    cuts, raises = fit_sides(props, spec)
    return AnomalyReport.from_shares(
        p0=props.zero_prop,
        a0=raises.at_zero, a2=raises.one_bin_out,
        b0=cuts.at_zero, b2=cuts.one_bin_out,
        bandwidths={"cuts": cuts.bandwidth, "raises": raises.bandwidth},
    )


def smoothed_table(props, spec):
    """Per-bin raw and smoothed proportions for plotting."""
    cuts, raises = fit_sides(props, spec)
    table = pd.DataFrame({"bin_mid": props.grid.midpoints, "raw_prop": props.props})
    table["smoothed_cut"] = np.nan
    table["smoothed_raise"] = np.nan
    for fit, column in ((cuts, "smoothed_cut"), (raises, "smoothed_raise")):
        rows = props.grid.index_of(fit.x_eval)
        table.loc[rows, column] = fit.fitted
    return table


def _boundary_rows(fit):
    # smoother rows for the zero boundary and the bin next to it
    return fit.smoother[:2]


def bootstrap_ses(data, spec, iterations=DEFAULT_ITERATIONS, seed=0, grid=None,
                  resample="bins", threads=None):
    """Bootstrap standard errors of every anomaly statistic.

    Bin counts (plus the count outside the grid) are redrawn from a
    multinomial, or raw observations are redrawn with replacement when
    resample='observations'. Bandwidths stay at the values chosen on the
    original data. Standard errors are across-draw standard deviations over
    the draws where a statistic is defined, and 0 when it never is.

    Arguments:
        data::BinnedDistribution or np.ndarray- binned counts, or raw growth values with grid
        spec::KernelSpec- smoothing settings
        iterations::int- bootstrap draws, at least 100
        seed::int- run seed
        grid::BinGrid- bins for raw growth values
        resample::str- 'bins' or 'observations'
        threads::int- worker cap

    Returns:
        AnomalyReport- point estimates with ses filled in
    """
    check_at_least("iterations", iterations, 100)
    if resample not in ("bins", "observations"):
        raise ParamsOutOfRangeException(f"resample must be 'bins' or 'observations', got {resample!r}")

    raw = None
    if isinstance(data, BinnedDistribution):
        props = data
    else:
        if grid is None:
            raise InvalidGridException("raw growth values need a bin grid")
        raw = np.asarray(data, dtype=float)
        props = BinnedDistribution.from_values(raw, grid)
    if resample == "observations" and raw is None:
        raise ParamsOutOfRangeException("observation resampling needs raw growth values")

    counts, outside = props.bin_counts()
    n = int(props.n_obs)
    cuts, raises = fit_sides(props, spec)
    report = anomalies(props, spec)
    cut_cols = np.flatnonzero(np.isin(props.grid.midpoints, cuts.x_fit))
    raise_cols = np.flatnonzero(np.isin(props.grid.midpoints, raises.x_fit))
    cut_rows, raise_rows = _boundary_rows(cuts), _boundary_rows(raises)
    zero = props.grid.zero_index
    probs = np.append(counts, outside) / n

    def draw(rng, size, k):
        if resample == "bins":
            shares = rng.multinomial(n, probs, size=size)[:, :-1] / n
        else:
            shares = np.empty((size, props.grid.n_bins))
            for i in range(size):
                idx = props.grid.index_of(raw[rng.integers(0, n, size=n)])
                shares[i] = np.bincount(idx[idx >= 0], minlength=props.grid.n_bins) / n
        b = shares[:, cut_cols] @ cut_rows.T
        a = shares[:, raise_cols] @ raise_rows.T
        return anomaly_statistics(shares[:, zero], a[:, 0], a[:, 1], b[:, 0], b[:, 1])

    parts = map_chunks(draw, chunk_sizes(iterations), seed, threads, label="anomaly bootstrap")
    ses = {}
    for name in STAT_FIELDS:
        values = np.concatenate([part[name] for part in parts])
        defined = values[np.isfinite(values)]
        if defined.size < values.size:
            logger.warning("%s is undefined in %d of %d draws", name, values.size - defined.size,
                           values.size)
        ses[name] = float(np.std(defined, ddof=1)) if defined.size > 1 else 0.0
    return report.with_ses(ses)

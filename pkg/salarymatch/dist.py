"""Location-scale heterogeneity families shared by all model math.

Both families are parameterized by (location, scale): the logistic by its
scale s (variance s^2 * pi^2 / 3), the normal by its standard deviation. Every
function accepts a scalar or a numpy array and returns the same shape.
"""
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import integrate, special

from .checks import (
    check_finite,
    check_positive,
    MillsRatioException,
    ParamsOutOfRangeException,
    QuadratureException,
)

# beyond this many scales the CDF is clamped to exactly 0 or 1
TAIL_SCALES = 40.0

# absolute error above which a density expectation is rejected
QUAD_TOL = 1e-8

_SQRT_2PI = np.sqrt(2.0 * np.pi)
_SQRT_HALF_PI = np.sqrt(0.5 * np.pi)


class Kind(str, Enum):
    LOGISTIC = "logistic"
    NORMAL = "normal"


@dataclass(frozen=True)
class HetFamily:
    """A two-parameter heterogeneity distribution.

    Arguments:
        kind::Kind- logistic or normal
        location::float- location in log-wage units
        scale::float- logistic scale or normal standard deviation (> 0)
    """
    kind: Kind
    location: float
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        check_finite("location", self.location)
        check_positive("scale", self.scale)
        object.__setattr__(self, "location", float(self.location))
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def logistic(cls, location=0.0, scale=1.0):
        return cls(Kind.LOGISTIC, location, scale)

    @classmethod
    def normal(cls, location=0.0, scale=1.0):
        return cls(Kind.NORMAL, location, scale)

    @property
    def variance(self):
        if self.kind is Kind.LOGISTIC:
            return self.scale ** 2 * np.pi ** 2 / 3.0
        return self.scale ** 2

    def shifted(self, delta):
        """Returns the same family with its location moved by delta."""
        return replace(self, location=self.location + delta)

    def standardize(self, x):
        return (np.asarray(x, dtype=float) - self.location) / self.scale


def shaped_like(x, result):
    # scalar in, float out
    if np.ndim(x) == 0:
        return float(result)
    return result


def pdf(f, x):
    """Density of the family at x."""
    check_finite("x", x)
    z = f.standardize(x)
    if f.kind is Kind.LOGISTIC:
        out = special.expit(z) * special.expit(-z) / f.scale
    else:
        out = np.exp(-0.5 * z * z) / (_SQRT_2PI * f.scale)
    return shaped_like(x, out)


def cdf(f, x):
    """Cumulative distribution at x, clamped to 0/1 beyond TAIL_SCALES."""
    check_finite("x", x)
    z = f.standardize(x)
    if f.kind is Kind.LOGISTIC:
        out = special.expit(z)
    else:
        out = special.ndtr(z)
    out = np.where(z > TAIL_SCALES, 1.0, np.where(z < -TAIL_SCALES, 0.0, out))
    return shaped_like(x, out)


def sf(f, x):
    """Survival function 1 - cdf, computed without cancellation."""
    check_finite("x", x)
    z = f.standardize(x)
    if f.kind is Kind.LOGISTIC:
        out = special.expit(-z)
    else:
        out = special.ndtr(-z)
    out = np.where(z > TAIL_SCALES, 0.0, np.where(z < -TAIL_SCALES, 1.0, out))
    return shaped_like(x, out)


def quantile(f, q):
    """Inverse CDF for levels in (0, 1). Logistic is closed form; the normal uses scipy's ndtri."""
    check_finite("q", q)
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ParamsOutOfRangeException("quantile levels must lie strictly between 0 and 1")
    if f.kind is Kind.LOGISTIC:
        z = special.logit(q)
    else:
        z = special.ndtri(q)
    return shaped_like(q, f.location + f.scale * z)


def mills_unchecked(f, x):
    """Inverse Mills ratio (1 - F(x)) / f(x) without tail guards.

    Used inside the offer solvers where the closed forms stay finite on the
    relevant range.
    """
    z = f.standardize(x)
    if f.kind is Kind.LOGISTIC:
        with np.errstate(over="ignore"):
            return f.scale * (1.0 + np.exp(-z))
    return f.scale * _SQRT_HALF_PI * special.erfcx(z / np.sqrt(2.0))


def mills(f, x):
    """Inverse Mills ratio (1 - F(x)) / f(x).

    Arguments:
        f::HetFamily- heterogeneity family
        x::float or np.ndarray- evaluation point(s)

    Returns:
        float or np.ndarray- strictly positive and strictly decreasing in x,
        so mills(-r) increases with the offer r

    Raises:
        MillsRatioException- when x lies beyond TAIL_SCALES scales or the
        density underflows there.
    """
    check_finite("x", x)
    z = f.standardize(x)
    density = np.asarray(pdf(f, x))
    bad = (np.abs(z) > TAIL_SCALES) | (density <= np.finfo(float).tiny)
    if np.any(bad):
        offending = np.asarray(x, dtype=float)[bad] if np.ndim(x) else float(x)
        first = float(np.ravel(offending)[0])
        raise MillsRatioException(
            f"inverse Mills ratio undefined in the far tail at x={first}", x=first)
    return shaped_like(x, mills_unchecked(f, x))


def mills_slope(f, x):
    """Derivative of the inverse Mills ratio with respect to x (always negative)."""
    z = f.standardize(x)
    if f.kind is Kind.LOGISTIC:
        with np.errstate(over="ignore"):
            out = -np.exp(-z)
    else:
        out = -1.0 + z * mills_unchecked(f, x) / f.scale
    return shaped_like(x, out)


def expect(f, func, lo=None, hi=None, points=()):
    """Integral of func(x) * pdf(x) over [lo, hi] by adaptive quadrature.

    Limits default to (and are clipped at) TAIL_SCALES scales around the
    location. Breakpoints are placed every scale near the location plus any
    caller-supplied kinks in func.

    Arguments:
        f::HetFamily- density to integrate against
        func::callable- scalar integrand factor
        lo::float- lower limit, optional
        hi::float- upper limit, optional
        points::sequence- known kinks or jumps of func

    Returns:
        float- the integral

    Raises:
        QuadratureException- when the achieved absolute error exceeds QUAD_TOL
    """
    a = f.location - TAIL_SCALES * f.scale
    b = f.location + TAIL_SCALES * f.scale
    if lo is not None:
        a = max(a, lo)
    if hi is not None:
        b = min(b, hi)
    if b <= a:
        return 0.0

    grid = f.location + f.scale * np.arange(-8.0, 9.0)
    breaks = sorted({float(x) for x in np.concatenate([grid, np.asarray(points, dtype=float)])
                     if a < x < b})
    value, abserr = integrate.quad(
        lambda x: func(x) * pdf(f, x), a, b,
        points=breaks or None, limit=500, epsabs=1e-12, epsrel=1e-10,
    )
    if abserr > QUAD_TOL:
        raise QuadratureException(
            f"quadrature reached abserr={abserr:.3g} on [{a}, {b}]", abserr=abserr)
    return value

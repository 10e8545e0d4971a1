"""Static job-search model with loss aversion around the current wage.

Offers are log wage changes r = w - w0. Job seekers value an offer at
lambda * r + eps below the reference point and r + eps above it; firms with
productivity phi pick r to maximize p(r) * (phi - r).
"""
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import special

from .checks import (
    check_at_least,
    check_finite,
    ParamsOutOfRangeException,
    RootNotFoundException,
    UndefinedDerivativeException,
)
from .dist import HetFamily, Kind, shaped_like, mills, mills_slope, mills_unchecked, pdf, sf

# calibrated amenity parameters
MU_EPS = 0.0
SIGMA_EPS = 0.611

# synthetic-recovery parameter set used as the toolkit default
DEFAULT_LAMBDA = 1.123
DEFAULT_MU_PHI = 1.25
DEFAULT_SIGMA_PHI = 0.1

ROOT_TOL = 1e-12
_MAX_BISECTIONS = 200
_MAX_EXPANSIONS = 60


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class ModelParams:
    """Structural parameters of the model.

    Arguments:
        lam::float- loss aversion, >= 1 (1 is the standard model)
        phi::HetFamily- productivity distribution (mu_phi, sigma_phi)
        eps::HetFamily- amenity distribution (mu_eps, sigma_eps)
    """
    lam: float
    phi: HetFamily
    eps: HetFamily

    def __post_init__(self):
        check_at_least("lambda", self.lam, 1.0)
        object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def from_values(cls, lam, mu_phi, sigma_phi, mu_eps=MU_EPS, sigma_eps=SIGMA_EPS,
                    family=Kind.LOGISTIC):
        family = Kind(family)
        return cls(lam, HetFamily(family, mu_phi, sigma_phi), HetFamily(family, mu_eps, sigma_eps))

    @classmethod
    def default(cls, family=Kind.LOGISTIC):
        return cls.from_values(DEFAULT_LAMBDA, DEFAULT_MU_PHI, DEFAULT_SIGMA_PHI, family=family)

    @property
    def kind(self):
        return self.phi.kind

    def with_lambda(self, lam):
        return replace(self, lam=lam)

    def standard(self):
        """The same model without loss aversion."""
        return self.with_lambda(1.0)

    def as_dict(self):
        return {
            "lambda": self.lam,
            "mu_phi": self.phi.location,
            "sigma_phi": self.phi.scale,
            "mu_eps": self.eps.location,
            "sigma_eps": self.eps.scale,
            "family": self.kind.value,
        }


@dataclass(frozen=True)
class Wedge:
    """Productivity interval [lo, hi] over which firms offer exactly r = 0."""
    lo: float
    hi: float

    @property
    def width(self):
        return self.hi - self.lo

    def contains(self, phi):
        return (np.asarray(phi) >= self.lo) & (np.asarray(phi) <= self.hi)


def _loss_weight(p, r):
    return np.where(np.asarray(r) < 0, p.lam, 1.0)


def utility(p, r, eps_draw):
    """Job seeker value of an offer r given amenity draw eps."""
    check_finite("r", r)
    check_finite("eps_draw", eps_draw)
    r = np.asarray(r, dtype=float)
    out = _loss_weight(p, r) * r + eps_draw
    return shaped_like(out, out)


def acceptance_rate(p, r):
    """Probability an offer r is accepted, 1 - F_eps(-lambda^L(r) * r)."""
    check_finite("r", r)
    r = np.asarray(r, dtype=float)
    return shaped_like(r, sf(p.eps, -_loss_weight(p, r) * r))


def acceptance_slope(p, r, side=None):
    """Derivative p'(r). At r = 0 the caller must pick the one-sided slope.

    Arguments:
        p::ModelParams- model parameters
        r::float or np.ndarray- offers
        side::Side- LEFT uses lambda * f_eps(0), RIGHT uses f_eps(0); needed only at r = 0

    Returns:
        float or np.ndarray- acceptance slope
    """
    check_finite("r", r)
    r = np.asarray(r, dtype=float)
    at_kink = r == 0
    if np.any(at_kink) and side is None:
        raise UndefinedDerivativeException(
            "acceptance slope is one-sided at r=0, pass side='left' or side='right'")
    weight = _loss_weight(p, r)
    if side is not None and Side(side) is Side.LEFT:
        weight = np.where(at_kink, p.lam, weight)
    return shaped_like(r, weight * pdf(p.eps, -weight * r))


def expected_profit(p, phi, r):
    check_finite("phi", phi)
    out = np.asarray(acceptance_rate(p, r)) * (np.asarray(phi, dtype=float) - np.asarray(r, dtype=float))
    return shaped_like(out, out)


def marginal_profit(p, phi, r, side=None):
    """-p(r) + p'(r) * (phi - r), one-sided at r = 0."""
    check_finite("phi", phi)
    out = -np.asarray(acceptance_rate(p, r)) + np.asarray(acceptance_slope(p, r, side)) * (
        np.asarray(phi, dtype=float) - np.asarray(r, dtype=float))
    return shaped_like(out, out)


def salary_match_wedge(p):
    """Wedge [mills_eps(0) / lambda, mills_eps(0)] of productivities offered r = 0."""
    hi = mills(p.eps, 0.0)
    return Wedge(lo=hi / p.lam, hi=hi)


def _foc_value(eps, r):
    # r + mills(-r), increasing in r
    return r + mills_unchecked(eps, -r)


def _raise_root(eps, target):
    """Solves target = r + mills_eps(-r) for r, elementwise.

    The logistic case is closed form through the Wright omega function; the
    normal case is a vectorized bisection on an expanding bracket.
    """
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if eps.kind is Kind.LOGISTIC:
        s, mu = eps.scale, eps.location
        c = (target + mu - s) / s
        return s * (c - special.wrightomega(c)) - mu

    # h(r) >= r, so the target itself is a valid upper end
    hi = target.copy()
    step = 20.0 * eps.scale
    lo = target - step
    with np.errstate(over="ignore"):
        for _ in range(_MAX_EXPANSIONS):
            short = _foc_value(eps, lo) >= target
            if not np.any(short):
                break
            step *= 2.0
            lo = np.where(short, target - step, lo)
        else:
            i = int(np.argmax(short))
            raise RootNotFoundException(
                f"could not bracket the offer condition for phi={target[i]}",
                phi=float(target[i]), bracket=(float(lo[i]), float(hi[i])))

        for _ in range(_MAX_BISECTIONS):
            mid = 0.5 * (lo + hi)
            below = _foc_value(eps, mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= ROOT_TOL * np.maximum(1.0, np.abs(mid))):
                break
        else:
            i = int(np.argmax(hi - lo))
            raise RootNotFoundException(
                f"bisection did not converge for phi={target[i]}",
                phi=float(target[i]), bracket=(float(lo[i]), float(hi[i])))
    return 0.5 * (lo + hi)


def optimal_offer(p, phi):
    """Profit-maximizing offer r* for productivity phi.

    Pay cuts solve phi = r + mills_eps(-lambda r) / lambda, pay raises solve
    phi = r + mills_eps(-r), and every phi inside the wedge is offered exactly 0.

    Arguments:
        p::ModelParams- model parameters
        phi::float or np.ndarray- productivity draw(s)

    Returns:
        float or np.ndarray- optimal offer(s), nondecreasing in phi
    """
    check_finite("phi", phi)
    phis = np.atleast_1d(np.asarray(phi, dtype=float))
    wedge = salary_match_wedge(p)
    out = np.zeros_like(phis)

    cut = phis < wedge.lo
    rise = phis > wedge.hi
    if np.any(cut):
        out[cut] = _raise_root(p.eps, p.lam * phis[cut]) / p.lam
    if np.any(rise):
        out[rise] = _raise_root(p.eps, phis[rise])
    # roots can land a rounding error on the wrong side of zero
    out[cut] = np.minimum(out[cut], 0.0)
    out[rise] = np.maximum(out[rise], 0.0)
    if np.ndim(phi) == 0:
        return float(out[0])
    return out.reshape(np.shape(phi))


def optimal_profit(p, phi):
    """Expected profit at the optimal offer."""
    return expected_profit(p, phi, optimal_offer(p, phi))


def implied_phi(p, r):
    """Productivity implied by an accepted offer r != 0.

    phi_L(r) = r + mills_eps(-lambda r) / lambda for cuts and
    phi_G(r) = r + mills_eps(-r) for raises. At r = 0 the implied productivity
    is the whole salary_match_wedge.
    """
    check_finite("r", r)
    r = np.asarray(r, dtype=float)
    if np.any(r == 0):
        raise ParamsOutOfRangeException(
            "implied productivity at r=0 is an interval, use salary_match_wedge")
    weight = _loss_weight(p, r)
    return shaped_like(r, r + np.asarray(mills(p.eps, -weight * r)) / weight)


# the two branches of the offer schedule, continued across r = 0
def phi_loss(p, r):
    r = np.asarray(r, dtype=float)
    return shaped_like(r, r + np.asarray(mills(p.eps, -p.lam * r)) / p.lam)


def phi_gain(p, r):
    r = np.asarray(r, dtype=float)
    return shaped_like(r, r + np.asarray(mills(p.eps, -r)))


def implied_phi_slope(p, r):
    """d phi / d r along the offer schedule, 1 - mills'(-lambda^L(r) r)."""
    r = np.asarray(r, dtype=float)
    weight = _loss_weight(p, r)
    return shaped_like(r, 1.0 - mills_slope(p.eps, -weight * r))


def offer_density(p, r):
    """Density of offers made (before acceptance) at r != 0.

    The change of variables from productivity gives f_phi(phi(r)) * phi'(r);
    the mass at r = 0 is the wedge probability instead.
    """
    return shaped_like(np.asarray(r), pdf(p.phi, implied_phi(p, r)) * implied_phi_slope(p, r))


def with_option_value(p, omega):
    """Acceptance with an outside option value omega.

    Accepting requires lambda^L(r) * r + eps > omega, which is the static
    model with the amenity location moved down by omega.
    """
    check_finite("omega", omega)
    return replace(p, eps=p.eps.shifted(-omega))

"""Counterfactuals: offer composition, hiring-subsidy pass-through,
salary-history bans and vacancy creation.

A hiring subsidy delta raises the value of a hire from phi to phi + delta, so
its effect on offers is the offer schedule read delta further along the
productivity axis. Pass-through is the offer change divided by delta.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd

from .binprob import BinGrid, BinnedDistribution, predicted_props
from .checks import (
    check_at_least,
    check_finite,
    check_not_empty,
    check_positive,
    ParamsOutOfRangeException,
)
from .dist import cdf, expect, HetFamily, quantile
from .model import (
    acceptance_rate,
    ModelParams,
    optimal_offer,
    optimal_profit,
    salary_match_wedge,
    utility,
)
from .streams import chunk_sizes, default_threads, map_chunks

logger = logging.getLogger(__name__)

DEFAULT_DELTA_SD = 0.6
CURVE_POINTS = 2001
CURVE_SPAN = 6.0
BAN_CHUNK = 100_000
GROWTH_GRID = BinGrid(-0.2, 0.2, 0.002)


class Weighting(str, Enum):
    # total pass-through averaged over accepted offers, or over all offers made
    ACCEPTED = "accepted"
    OFFERS = "offers"


@dataclass(frozen=True)
class SubsidyScenario:
    """A hiring subsidy of delta log points paid to the hiring firm."""
    params: ModelParams
    delta: float

    def __post_init__(self):
        check_at_least("delta", self.delta, 0.0)
        object.__setattr__(self, "delta", float(self.delta))

    @classmethod
    def from_sd(cls, params, delta_sd=DEFAULT_DELTA_SD):
        """Subsidy expressed in multiples of sigma_phi."""
        return cls(params, delta_sd * params.phi.scale)


@dataclass(frozen=True)
class BanScenario:
    """Salary-history ban: firms see the current wage with noise eta.

    Arguments:
        params::ModelParams- model parameters
        eta::HetFamily- perception noise centered at 0; None means no noise
    """
    params: ModelParams
    eta: Optional[HetFamily] = None

    def __post_init__(self):
        if self.eta is not None and self.eta.location != 0:
            raise ParamsOutOfRangeException(
                f"perception noise must be centered at 0, got location {self.eta.location}")


@dataclass(frozen=True)
class OfferMix:
    share_cuts: float
    share_matches: float
    share_raises: float
    avg_offer: float
    avg_cut: float
    avg_raise: float

    @property
    def shares(self):
        return (self.share_cuts, self.share_matches, self.share_raises)


@dataclass(frozen=True)
class PolicyOutcome:
    """Pass-through ratios (NaN without a subsidy) and the offer mix after the policy."""
    passthrough_total: float
    passthrough_marginal: float
    passthrough_inframarginal: float
    mix: OfferMix

    @property
    def offer_mix(self):
        return self.mix.shares

    @property
    def avg_offer(self):
        return self.mix.avg_offer

    @property
    def avg_cut(self):
        return self.mix.avg_cut

    @property
    def avg_raise(self):
        return self.mix.avg_raise

    def to_dict(self):
        out = {
            "passthrough_total": self.passthrough_total,
            "passthrough_marginal": self.passthrough_marginal,
            "passthrough_inframarginal": self.passthrough_inframarginal,
        }
        out.update(asdict(self.mix))
        return out


@dataclass(frozen=True)
class BanOutcome:
    """Ban outcome plus the realized growth of accepted offers after the policy."""
    outcome: PolicyOutcome
    growth: BinnedDistribution
    n_draws: int = 0


def _safe_div(num, den):
    return num / den if den > 0 else float("nan")


def offer_mix(p):
    """Shares of pay cuts, matches and raises among offers made, with average offers.

    Arguments:
        p::ModelParams- model parameters

    Returns:
        OfferMix- shares from the wedge boundaries, averages by quadrature
    """
    wedge = salary_match_wedge(p)
    share_cuts = float(cdf(p.phi, wedge.lo))
    share_raises = 1.0 - float(cdf(p.phi, wedge.hi))
    share_matches = 1.0 - share_cuts - share_raises

    def offer(phi):
        return optimal_offer(p, phi)

    cut_total = expect(p.phi, offer, hi=wedge.lo)
    raise_total = expect(p.phi, offer, lo=wedge.hi)
    return OfferMix(
        share_cuts=share_cuts,
        share_matches=share_matches,
        share_raises=share_raises,
        avg_offer=cut_total + raise_total,
        avg_cut=_safe_div(cut_total, share_cuts),
        avg_raise=_safe_div(raise_total, share_raises),
    )


def offer_change(p, phi, delta):
    """r*(phi + delta) - r*(phi), elementwise."""
    check_finite("phi", phi)
    phi = np.asarray(phi, dtype=float)
    return optimal_offer(p, phi + delta) - optimal_offer(p, phi)


def _shifted(p, delta):
    return replace(p, phi=p.phi.shifted(delta))


def passthrough(s, weighting=Weighting.ACCEPTED):
    """Population pass-through of a hiring subsidy with its decomposition.

    Job seekers who accept the old offer r0 also accept the new one r1 >= r0,
    so with acceptance probabilities p0 = p(r0), p1 = p(r1):
        inframarginal = E[p0 (r1 - r0)] / (delta E[p0])
        marginal      = E[(p1 - p0) (r1 - r0)] / (delta E[p1 - p0])
        total         = E[p1 (r1 - r0)] / (delta E[p1])
    or E[r1 - r0] / delta when weighting is 'offers'.

    Arguments:
        s::SubsidyScenario- parameters and subsidy
        weighting::Weighting- 'accepted' (default) or 'offers'

    Returns:
        PolicyOutcome- ratios (NaN when delta = 0) and the post-subsidy offer mix
    """
    weighting = Weighting(weighting)
    p, delta = s.params, s.delta
    mix = offer_mix(_shifted(p, delta))
    if delta == 0:
        nan = float("nan")
        return PolicyOutcome(nan, nan, nan, mix)

    wedge = salary_match_wedge(p)
    kinks = (wedge.lo, wedge.hi, wedge.lo - delta, wedge.hi - delta)

    def old_new(phi):
        r0 = optimal_offer(p, phi)
        r1 = optimal_offer(p, phi + delta)
        return r0, r1, acceptance_rate(p, r0), acceptance_rate(p, r1)

    def moment(fn):
        return expect(p.phi, lambda phi: fn(*old_new(phi)), points=kinks)

    change_old = moment(lambda r0, r1, p0, p1: p0 * (r1 - r0))
    change_new = moment(lambda r0, r1, p0, p1: p1 * (r1 - r0))
    accepted_old = moment(lambda r0, r1, p0, p1: p0)
    accepted_new = moment(lambda r0, r1, p0, p1: p1)

    inframarginal = _safe_div(change_old, delta * accepted_old)
    marginal = _safe_div(change_new - change_old, delta * (accepted_new - accepted_old))
    if weighting is Weighting.ACCEPTED:
        total = _safe_div(change_new, delta * accepted_new)
    else:
        total = moment(lambda r0, r1, p0, p1: r1 - r0) / delta
    logger.info("pass-through at lambda=%.4f delta=%.4f: total %.6f marginal %.6f inframarginal %.6f",
                p.lam, delta, total, marginal, inframarginal)
    return PolicyOutcome(float(total), float(marginal), float(inframarginal), mix)


def curve_grid(p, points=CURVE_POINTS, span=CURVE_SPAN):
    """Productivity grid mu_phi +- span * sigma_phi for mechanism curves."""
    return np.linspace(p.phi.location - span * p.phi.scale,
                       p.phi.location + span * p.phi.scale, points)


def passthrough_curve(p, delta, phis=None):
    """Per-productivity offers with and without the subsidy.

    Returns:
        pd.DataFrame- columns phi, offer_nosub, offer_sub, passthrough
    """
    check_positive("delta", delta)
    phis = curve_grid(p) if phis is None else np.asarray(phis, dtype=float)
    offer_nosub = optimal_offer(p, phis)
    offer_sub = optimal_offer(p, phis + delta)
    return pd.DataFrame({
        "phi": phis,
        "offer_nosub": offer_nosub,
        "offer_sub": offer_sub,
        "passthrough": (offer_sub - offer_nosub) / delta,
    })


def lambda_sweep(p, lambdas, delta, weighting=Weighting.ACCEPTED, threads=None):
    """Pass-through over a grid of loss-aversion values, in grid order.

    Returns:
        pd.DataFrame- columns lambda, delta, passthrough_total,
        passthrough_marginal, passthrough_inframarginal
    """
    check_not_empty("lambda grid", lambdas)
    lambdas = [float(lam) for lam in np.atleast_1d(lambdas)]
    threads = default_threads() if threads is None else threads

    def run(lam):
        return passthrough(SubsidyScenario(p.with_lambda(lam), delta), weighting)

    if threads > 1 and len(lambdas) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, lambdas))
    else:
        outcomes = [run(lam) for lam in lambdas]
    return pd.DataFrame({
        "lambda": lambdas,
        "delta": [float(delta)] * len(lambdas),
        "passthrough_total": [o.passthrough_total for o in outcomes],
        "passthrough_marginal": [o.passthrough_marginal for o in outcomes],
        "passthrough_inframarginal": [o.passthrough_inframarginal for o in outcomes],
    })


def noisy_offers(p, phi, eta_draw, delta=0.0):
    """Realized offers when firms see the current wage with error eta.

    The firm offers r*(phi - eta + delta) relative to the wage it perceives,
    which is that offer plus eta relative to the true current wage.
    """
    perceived = np.asarray(phi, dtype=float) - np.asarray(eta_draw, dtype=float)
    return optimal_offer(p, perceived + delta) + eta_draw


def _uniforms(rng, size):
    return np.clip(rng.random(size), np.finfo(float).tiny, 1.0 - np.finfo(float).eps)


def passthrough_ban(s, delta, n_draws=1_000_000, seed=0, grid=GROWTH_GRID,
                    weighting=Weighting.ACCEPTED, threads=None):
    """Pass-through and realized growth under a salary-history ban.

    Productivity and noise are drawn by Monte Carlo; acceptance enters through
    the analytic acceptance probability for the pass-through moments and
    through amenity draws for the realized growth distribution. Without noise
    the exact no-ban results are returned.

    Arguments:
        s::BanScenario- parameters and perception noise
        delta::float- hiring subsidy (0 for the ban alone)
        n_draws::int- Monte Carlo draws
        seed::int- run seed
        grid::BinGrid- bins for realized growth
        weighting::Weighting- total pass-through weighting
        threads::int- worker cap

    Returns:
        BanOutcome- outcome, accepted-growth distribution, number of draws
    """
    check_at_least("delta", delta, 0.0)
    weighting = Weighting(weighting)
    p = s.params
    if s.eta is None:
        outcome = passthrough(SubsidyScenario(p, delta), weighting)
        return BanOutcome(outcome, predicted_props(_shifted(p, delta), grid), 0)

    check_at_least("n_draws", n_draws, 1)
    eta_family = s.eta

    def draw(rng, size, k):
        phi = quantile(p.phi, _uniforms(rng, size))
        eta = quantile(eta_family, _uniforms(rng, size))
        eps = quantile(p.eps, _uniforms(rng, size))
        perceived = phi - eta
        new_perceived = optimal_offer(p, perceived + delta)
        change = new_perceived - optimal_offer(p, perceived)
        r1 = new_perceived + eta
        r0 = r1 - change
        p0 = acceptance_rate(p, r0)
        p1 = acceptance_rate(p, r1)
        sums = np.array([
            np.sum(p0 * change), np.sum(p1 * change), np.sum(p0), np.sum(p1), np.sum(change),
            np.count_nonzero(r1 < 0), np.count_nonzero(r1 > 0),
            np.sum(r1[r1 < 0]), np.sum(r1[r1 > 0]),
        ], dtype=float)
        return sums, r1[utility(p, r1, eps) > 0]

    parts = map_chunks(draw, chunk_sizes(n_draws, BAN_CHUNK), seed, threads, label="ban draws")
    sums = sum(part[0] for part in parts)
    accepted = np.concatenate([part[1] for part in parts])
    change_old, change_new, accepted_old, accepted_new, change, n_cut, n_raise, cut_total, \
        raise_total = sums

    n = float(n_draws)
    mix = OfferMix(
        share_cuts=n_cut / n,
        share_matches=(n - n_cut - n_raise) / n,
        share_raises=n_raise / n,
        avg_offer=(cut_total + raise_total) / n,
        avg_cut=_safe_div(cut_total, n_cut),
        avg_raise=_safe_div(raise_total, n_raise),
    )
    if delta == 0:
        nan = float("nan")
        outcome = PolicyOutcome(nan, nan, nan, mix)
    else:
        if weighting is Weighting.ACCEPTED:
            total = _safe_div(change_new, delta * accepted_new)
        else:
            total = change / (delta * n)
        outcome = PolicyOutcome(
            passthrough_total=float(total),
            passthrough_marginal=float(_safe_div(change_new - change_old,
                                                 delta * (accepted_new - accepted_old))),
            passthrough_inframarginal=float(_safe_div(change_old, delta * accepted_old)),
            mix=mix,
        )
    logger.info("ban simulation: %d draws, %d accepted", n_draws, accepted.size)
    return BanOutcome(outcome, BinnedDistribution.from_values(accepted, grid), int(n_draws))


def optimal_vacancies(pbar, c):
    """Profit-maximizing number of vacancies pbar / (2c) with quadratic posting cost c J^2."""
    check_positive("vacancy cost", c)
    check_at_least("expected vacancy profit", pbar, 0.0)
    return pbar / (2.0 * c)


def expected_vacancy_profit(p, psi, current_wage_dist):
    """Expected profit of a vacancy with match value psi, averaged over current wages.

    A job seeker with log current wage w gets the offer for productivity
    psi - w, and the vacancy earns its optimal expected profit.

    Arguments:
        p::ModelParams- model parameters (phi is ignored)
        psi::float- log match value of the vacancy
        current_wage_dist::HetFamily, BinnedDistribution or sequence- log current
            wages: a parametric family, bin shares at their midpoints, or draws

    Returns:
        float- pbar(psi)
    """
    check_finite("psi", psi)
    if isinstance(current_wage_dist, HetFamily):
        wedge = salary_match_wedge(p)
        return expect(current_wage_dist, lambda w: optimal_profit(p, psi - w),
                      points=(psi - wedge.hi, psi - wedge.lo))
    if isinstance(current_wage_dist, BinnedDistribution):
        wages = current_wage_dist.grid.midpoints
        weights = current_wage_dist.props
    else:
        check_not_empty("current wages", current_wage_dist)
        wages = np.atleast_1d(np.asarray(current_wage_dist, dtype=float))
        weights = np.ones(wages.size)
    total = weights.sum()
    if total <= 0:
        raise ParamsOutOfRangeException("current-wage distribution carries no mass")
    return float(np.sum(weights * optimal_profit(p, psi - wages)) / total)

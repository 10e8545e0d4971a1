"""Synthetic job-search data and rounded-salary placebo simulations."""
import logging
from dataclasses import dataclass

import numpy as np

from .binprob import accepted_density, accepted_mass, BinGrid, BinnedDistribution
from .checks import (
    check_at_least,
    check_finite,
    check_not_empty,
    ParamsOutOfRangeException,
    PlaceboWeightsException,
)
from .dist import quantile
from .model import expected_profit, ModelParams, optimal_offer, utility
from .streams import chunk_sizes, map_chunks

logger = logging.getLogger(__name__)

SIM_CHUNK = 100_000
PLACEBO_GRID = BinGrid(-1.0, 1.0, 0.002)

_U_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Arguments:
        params::ModelParams- data-generating parameters
        n_jobseekers::int- number of offers drawn (one per job seeker)
        seed::int- run seed
        record_rejected::bool- keep rejected offers in the output
        chunk_size::int- offers per random stream; output depends on it, not on threads
    """
    params: ModelParams
    n_jobseekers: int
    seed: int = 0
    record_rejected: bool = True
    chunk_size: int = SIM_CHUNK

    def __post_init__(self):
        check_at_least("n_jobseekers", self.n_jobseekers, 1)
        check_at_least("chunk_size", self.chunk_size, 1)


@dataclass(frozen=True)
class SimOutput:
    """Simulated offers in job-seeker order.

    When rejected offers are not recorded, the arrays hold accepted offers
    only and accepted is all True.
    """
    phi: np.ndarray
    eps: np.ndarray
    offer: np.ndarray
    accepted: np.ndarray
    n_offers: int
    n_accepted: int
    n_negative_profit: int

    @property
    def realized(self):
        """Realized salary growth: the accepted offers."""
        return self.offer[self.accepted]

    @property
    def acceptance_share(self):
        return self.n_accepted / self.n_offers


def _uniforms(rng, size):
    return np.clip(rng.random(size), _U_FLOOR, 1.0 - np.finfo(float).eps)


def simulate(cfg, threads=None):
    """Draws productivity and amenities, makes optimal offers and applies acceptance.

    Arguments:
        cfg::SimConfig- simulation settings
        threads::int- worker cap; output does not depend on it

    Returns:
        SimOutput- offers in canonical job-seeker order
    """
    p = cfg.params

    def draw(rng, size, k):
        phi = quantile(p.phi, _uniforms(rng, size))
        eps = quantile(p.eps, _uniforms(rng, size))
        offer = optimal_offer(p, phi)
        accepted = utility(p, offer, eps) > 0
        negative = int(np.count_nonzero(expected_profit(p, phi, offer) < 0))
        if not cfg.record_rejected:
            phi, eps, offer = phi[accepted], eps[accepted], offer[accepted]
            accepted = accepted[accepted]
        return phi, eps, offer, accepted, negative

    parts = map_chunks(draw, chunk_sizes(cfg.n_jobseekers, cfg.chunk_size), cfg.seed, threads,
                       label="simulate")
    phi, eps, offer, accepted = (np.concatenate([part[i] for part in parts]) for i in range(4))
    negative = sum(part[4] for part in parts)
    n_accepted = int(np.count_nonzero(accepted))
    if negative:
        logger.warning("%d offers carry negative expected profit at the optimum", negative)
    logger.info("simulated %d offers, %d accepted", cfg.n_jobseekers, n_accepted)
    return SimOutput(phi, eps, offer, accepted, cfg.n_jobseekers, n_accepted, negative)


def _log_salaries(name, values):
    check_not_empty(name, values)
    values = np.asarray(values, dtype=float)
    check_finite(name, values)
    if np.any(values <= 0):
        raise ParamsOutOfRangeException(f"{name} must be positive salary levels")
    return np.log(values)


def placebo_independent(prev_salaries, new_salaries, n, seed=0, grid=PLACEBO_GRID, threads=None):
    """Growth between independently resampled previous and new salaries.

    Arguments:
        prev_salaries::sequence- previous salary levels
        new_salaries::sequence- new salary levels
        n::int- number of resampled pairs
        seed::int- run seed
        grid::BinGrid- growth bins

    Returns:
        BinnedDistribution- binned log(new) - log(prev)
    """
    check_at_least("n", n, 1)
    log_prev = _log_salaries("previous salaries", prev_salaries)
    log_new = _log_salaries("new salaries", new_salaries)

    def draw(rng, size, k):
        i = rng.integers(0, log_prev.size, size=size)
        j = rng.integers(0, log_new.size, size=size)
        return log_new[j] - log_prev[i]

    growth = np.concatenate(map_chunks(draw, chunk_sizes(n, SIM_CHUNK), seed, threads,
                                       label="independent placebo"))
    return BinnedDistribution.from_values(growth, grid)


def default_growth_density(params=None):
    """Smooth growth density of the standard (lambda = 1) model, the placebo default."""
    p = (params or ModelParams.default()).standard()
    mass = accepted_mass(p)
    return lambda x: accepted_density(p, x, mass=mass)


def _new_salary_weights(density, log_support, freq, log_w0):
    weights = np.broadcast_to(np.asarray(density(log_support - log_w0), dtype=float),
                              log_support.shape)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise PlaceboWeightsException(
            f"growth density must be finite and non-negative (previous salary {np.exp(log_w0)})",
            w0=float(np.exp(log_w0)))
    weights = freq * weights
    total = weights.sum()
    if total <= 0:
        raise PlaceboWeightsException(
            f"all new-salary weights vanish for previous salary {np.exp(log_w0)}",
            w0=float(np.exp(log_w0)))
    return weights / total


def placebo_conditional(prev_salaries, new_salaries, smooth_growth_density=None, n=1_000_000,
                        seed=0, grid=PLACEBO_GRID, threads=None):
    """Placebo where new salaries are reweighted around each previous salary.

    For every resampled previous salary w0, the new salary is drawn from the
    empirical new-salary support with weights proportional to its empirical
    frequency times smooth_growth_density(log v - log w0).

    Arguments:
        prev_salaries::sequence- previous salary levels
        new_salaries::sequence- new salary levels
        smooth_growth_density::callable- vectorized growth density, defaults
            to default_growth_density()
        n::int- number of resampled pairs
        seed::int- run seed
        grid::BinGrid- growth bins

    Returns:
        BinnedDistribution- binned log(new) - log(prev)
    """
    check_at_least("n", n, 1)
    log_prev = _log_salaries("previous salaries", prev_salaries)
    log_new = _log_salaries("new salaries", new_salaries)
    density = default_growth_density() if smooth_growth_density is None else smooth_growth_density

    support, counts = np.unique(log_new, return_counts=True)
    freq = counts / counts.sum()
    cache = {}

    def weights_for(log_w0):
        if log_w0 not in cache:
            cache[log_w0] = _new_salary_weights(density, support, freq, log_w0)
        return cache[log_w0]

    # every previous salary is checked before any draw
    prev_support = np.unique(log_prev)
    for log_w0 in prev_support:
        weights_for(log_w0)

    def draw(rng, size, k):
        prev = log_prev[rng.integers(0, log_prev.size, size=size)]
        growth = np.empty(size)
        for log_w0 in np.unique(prev):
            rows = np.flatnonzero(prev == log_w0)
            picks = rng.choice(support.size, size=rows.size, p=weights_for(log_w0))
            growth[rows] = support[picks] - log_w0
        return growth

    growth = np.concatenate(map_chunks(draw, chunk_sizes(n, SIM_CHUNK), seed, threads,
                                       label="conditional placebo"))
    return BinnedDistribution.from_values(growth, grid)

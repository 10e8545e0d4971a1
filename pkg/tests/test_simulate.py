import numpy as np
import pytest

from salarymatch.binprob import accepted_mass, BinGrid, BinnedDistribution, predicted_props
from salarymatch.checks import ParamsOutOfRangeException, PlaceboWeightsException
from salarymatch.model import optimal_offer, utility
from salarymatch.simulate import (
    placebo_conditional,
    placebo_independent,
    SimConfig,
    simulate,
)


@pytest.fixture
def sim(params):
    return simulate(SimConfig(params, 250_000, seed=42, chunk_size=50_000), threads=4)


def test_same_seed_same_offers_for_any_thread_count(params, sim):
    again = simulate(SimConfig(params, 250_000, seed=42, chunk_size=50_000), threads=1)
    np.testing.assert_array_equal(sim.offer, again.offer)
    np.testing.assert_array_equal(sim.accepted, again.accepted)
    other = simulate(SimConfig(params, 250_000, seed=43, chunk_size=50_000), threads=4)
    assert not np.array_equal(sim.phi, other.phi)


def test_offers_follow_the_model(params, sim):
    np.testing.assert_array_equal(sim.offer, optimal_offer(params, sim.phi))
    np.testing.assert_array_equal(sim.accepted, utility(params, sim.offer, sim.eps) > 0)
    assert sim.n_offers == 250_000
    assert sim.n_negative_profit == 0


def test_acceptance_share_matches_accepted_mass(params, sim):
    mass = accepted_mass(params)
    se = np.sqrt(mass * (1 - mass) / sim.n_offers)
    assert abs(sim.acceptance_share - mass) < 4 * se


def test_bin_shares_match_prediction(params, sim, grid):
    empirical = BinnedDistribution.from_values(sim.realized, grid)
    predicted = predicted_props(params, grid).props
    se = np.sqrt(predicted * (1 - predicted) / sim.n_accepted)
    within = np.abs(empirical.props - predicted) <= 4 * se + 1e-5
    assert within.mean() >= 0.99
    assert abs(empirical.zero_prop - predicted[grid.zero_index]) <= 4 * se[grid.zero_index]


def test_accepted_only_output(params, sim):
    out = simulate(SimConfig(params, 250_000, seed=42, chunk_size=50_000,
                             record_rejected=False), threads=2)
    assert out.accepted.all()
    assert out.n_offers == 250_000
    assert out.n_accepted == sim.n_accepted
    np.testing.assert_array_equal(out.offer, sim.realized)


def test_config_validation(params):
    with pytest.raises(ParamsOutOfRangeException):
        SimConfig(params, 0)
    with pytest.raises(ParamsOutOfRangeException):
        SimConfig(params, 10, chunk_size=0)


@pytest.mark.slow
def test_large_simulation_matches_prediction(params, grid):
    out = simulate(SimConfig(params, 10_000_000, seed=1))
    empirical = BinnedDistribution.from_values(out.realized, grid)
    predicted = predicted_props(params, grid).props
    se = np.sqrt(predicted * (1 - predicted) / out.n_accepted)
    assert (np.abs(empirical.props - predicted) <= 4 * se + 1e-6).mean() >= 0.99


def test_identical_salaries_only_match():
    salaries = np.full(50, 3000.0)
    assert placebo_independent(salaries, salaries, n=1000).zero_prop == 1.0
    assert placebo_conditional(salaries, salaries, n=1000).zero_prop == 1.0


def test_independent_placebo_is_reproducible():
    rng = np.random.default_rng(0)
    prev = np.round(rng.lognormal(8.0, 0.3, 500), -2)
    new = np.round(rng.lognormal(8.05, 0.3, 500), -2)
    one = placebo_independent(prev, new, n=20_000, seed=3, threads=1)
    two = placebo_independent(prev, new, n=20_000, seed=3, threads=4)
    np.testing.assert_array_equal(one.props, two.props)
    assert one.n_obs == 20_000


def test_conditional_placebo_concentrates_near_zero():
    rng = np.random.default_rng(1)
    prev = np.round(rng.lognormal(8.0, 0.3, 400), -2)
    new = np.round(rng.lognormal(8.0, 0.3, 400), -2)
    grid = BinGrid(-1.0, 1.0, 0.002)
    independent = placebo_independent(prev, new, n=20_000, seed=2, grid=grid)
    conditional = placebo_conditional(prev, new, n=20_000, seed=2, grid=grid)
    near = np.abs(grid.midpoints) <= 0.1
    assert conditional.props[near].sum() > independent.props[near].sum()


def test_vanishing_density_names_the_salary():
    with pytest.raises(PlaceboWeightsException) as info:
        placebo_conditional([100.0], [200.0, 300.0], lambda x: np.zeros_like(x), n=10)
    assert info.value.w0 == pytest.approx(100.0)


def test_placebo_rejects_nonpositive_salaries():
    with pytest.raises(ParamsOutOfRangeException):
        placebo_independent([100.0, 0.0], [200.0], n=10)


PREV = [3000.0, 3000.0, 3000.0, 3500.0]
NEW = [3000.0, 3500.0, 3500.0, 3500.0]


def test_independent_placebo_collision_share():
    placebo = placebo_independent(PREV, NEW, n=200_000, seed=4)
    # salaries collide with probability sum_v P(prev = v) P(new = v)
    assert placebo.zero_prop == pytest.approx(0.75 * 0.25 + 0.25 * 0.75, abs=5e-3)
    rise = placebo.grid.index_of(np.log(3500.0 / 3000.0))
    assert placebo.props[rise] == pytest.approx(0.75 * 0.75, abs=5e-3)


def test_flat_density_makes_conditional_placebo_independent():
    flat = placebo_conditional(PREV, NEW, lambda x: np.ones_like(x), n=200_000, seed=4)
    independent = placebo_independent(PREV, NEW, n=200_000, seed=5)
    assert flat.zero_prop == pytest.approx(0.375, abs=5e-3)
    np.testing.assert_allclose(flat.props, independent.props, atol=1e-2)

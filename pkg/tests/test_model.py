import numpy as np
import pytest

from salarymatch.checks import ParamsOutOfRangeException, UndefinedDerivativeException
from salarymatch.dist import cdf, pdf, sf
from salarymatch.model import (
    acceptance_rate,
    acceptance_slope,
    expected_profit,
    implied_phi,
    marginal_profit,
    ModelParams,
    offer_density,
    optimal_offer,
    optimal_profit,
    phi_gain,
    salary_match_wedge,
    utility,
    with_option_value,
)

R_GRID = np.arange(-60000, 60001) * 1e-5


def test_params_validation():
    with pytest.raises(ParamsOutOfRangeException):
        ModelParams.from_values(0.9, 1.25, 0.1)
    with pytest.raises(ParamsOutOfRangeException):
        ModelParams.from_values(1.1, 1.25, -0.1)
    p = ModelParams.default()
    assert p.standard().lam == 1.0
    assert p.as_dict()["sigma_eps"] == 0.611


def test_logistic_wedge(params):
    wedge = salary_match_wedge(params)
    assert wedge.hi == pytest.approx(2 * 0.611, rel=1e-12)
    assert wedge.lo == pytest.approx(2 * 0.611 / 1.123, rel=1e-12)
    assert wedge.lo == pytest.approx(1.0881, abs=1e-3)
    assert wedge.hi == pytest.approx(1.2220, abs=1e-3)
    assert salary_match_wedge(params.standard()).width == 0.0


def test_offers_are_zero_inside_the_wedge(params):
    wedge = salary_match_wedge(params)
    inside = np.linspace(wedge.lo, wedge.hi, 11)
    np.testing.assert_array_equal(optimal_offer(params, inside), 0.0)
    assert optimal_offer(params, wedge.lo - 1e-3) < 0
    assert optimal_offer(params, wedge.hi + 1e-3) > 0


def test_detected_flat_region_matches_wedge(params):
    wedge = salary_match_wedge(params)
    phis = np.arange(0.9, 1.4, 1e-5)
    flat = phis[optimal_offer(params, phis) == 0.0]
    assert flat.min() == pytest.approx(wedge.lo, abs=1e-4)
    assert flat.max() == pytest.approx(wedge.hi, abs=1e-4)


@pytest.mark.parametrize("family", ["logistic", "normal"])
def test_offer_solves_first_order_condition(family):
    p = ModelParams.default(family=family)
    for phi in (0.7, 0.95, 1.4, 1.8):
        r = optimal_offer(p, phi)
        if r != 0.0:
            assert implied_phi(p, r) == pytest.approx(phi, abs=1e-9)
            assert marginal_profit(p, phi, r) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("family", ["logistic", "normal"])
def test_offer_matches_brute_force(family):
    rng = np.random.default_rng(7)
    for _ in range(200):
        lam = rng.uniform(1.0, 2.0)
        phi = rng.uniform(0.6, 1.9)
        p = ModelParams.from_values(lam, 1.25, 0.1, family=family)
        best = R_GRID[np.argmax(expected_profit(p, phi, R_GRID))]
        assert abs(optimal_offer(p, phi) - best) < 2e-5


def test_offers_nondecreasing_in_productivity(params, normal_params):
    phis = np.linspace(0.0, 2.5, 2001)
    for p in (params, normal_params, params.with_lambda(2.0)):
        assert np.all(np.diff(optimal_offer(p, phis)) >= 0)


def test_raise_branch_does_not_depend_on_lambda(params):
    phis = np.linspace(1.25, 2.0, 50)
    np.testing.assert_array_equal(optimal_offer(params, phis),
                                  optimal_offer(params.with_lambda(1.8), phis))


def test_acceptance_and_slope(params):
    assert acceptance_rate(params, 0.0) == pytest.approx(0.5)
    assert acceptance_rate(params, -0.1) == pytest.approx(sf(params.eps, 0.1123))
    with pytest.raises(UndefinedDerivativeException):
        acceptance_slope(params, 0.0)
    f0 = pdf(params.eps, 0.0)
    assert acceptance_slope(params, 0.0, side="left") == pytest.approx(1.123 * f0)
    assert acceptance_slope(params, 0.0, side="right") == pytest.approx(f0)
    h = 1e-6
    numeric = (acceptance_rate(params, 0.2 + h) - acceptance_rate(params, 0.2 - h)) / (2 * h)
    assert acceptance_slope(params, 0.2) == pytest.approx(numeric, rel=1e-6)


def test_utility_is_kinked_at_zero(params):
    assert utility(params, -0.1, 0.0) == pytest.approx(-0.1123)
    assert utility(params, 0.1, 0.0) == pytest.approx(0.1)
    np.testing.assert_allclose(utility(params, np.array([-0.2, 0.2]), 0.5), [0.2754, 0.7])


def test_optimal_profit_is_positive(params):
    phis = np.linspace(-1.0, 3.0, 101)
    assert np.all(optimal_profit(params, phis) > 0)


def test_implied_phi_rejects_zero(params):
    with pytest.raises(ParamsOutOfRangeException):
        implied_phi(params, 0.0)


def test_offer_density_is_change_of_variables(params):
    h = 1e-6
    for r in (-0.15, -0.02, 0.03, 0.2):
        branch = implied_phi(params, np.array([r - h, r + h]))
        numeric = (cdf(params.phi, branch[1]) - cdf(params.phi, branch[0])) / (2 * h)
        assert offer_density(params, r) == pytest.approx(numeric, rel=1e-5)


def test_option_value_moves_acceptance_threshold(params):
    shifted = with_option_value(params, 0.3)
    r = np.array([-0.2, 0.1, 0.4])
    expected = sf(params.eps, 0.3 - np.where(r < 0, 1.123, 1.0) * r)
    np.testing.assert_allclose(acceptance_rate(shifted, r), expected, rtol=1e-12)
    assert salary_match_wedge(shifted).hi != salary_match_wedge(params).hi
    assert phi_gain(params, 0.0) == pytest.approx(salary_match_wedge(params).hi)


@pytest.mark.parametrize("family", ["logistic", "normal"])
def test_implied_phi_inverts_the_offer(family):
    p = ModelParams.default(family=family)
    wedge = salary_match_wedge(p)
    phis = np.concatenate([np.linspace(0.5, wedge.lo - 1e-3, 25),
                           np.linspace(wedge.hi + 1e-3, 2.0, 25)])
    np.testing.assert_allclose(implied_phi(p, optimal_offer(p, phis)), phis, atol=1e-9)
    offers = np.array([-0.3, -0.05, -0.004, 0.004, 0.05, 0.3])
    np.testing.assert_allclose(optimal_offer(p, implied_phi(p, offers)), offers, atol=1e-9)


@pytest.mark.parametrize("lam", [1.123, 1.5, 2.0])
def test_cut_offer_is_a_rescaled_standard_offer(params, lam):
    p = params.with_lambda(lam)
    phis = np.linspace(0.5, salary_match_wedge(p).lo - 1e-3, 20)
    scaled = optimal_offer(params.standard(), lam * phis) / lam
    np.testing.assert_allclose(optimal_offer(p, phis), scaled, rtol=1e-12, atol=1e-15)


def test_marginal_profit_is_the_profit_slope(params):
    h = 1e-7
    for phi, r in ((1.0, -0.05), (1.1, -0.01), (1.3, 0.02), (1.6, 0.3)):
        numeric = (expected_profit(params, phi, r + h) - expected_profit(params, phi, r - h)) / (2 * h)
        assert marginal_profit(params, phi, r) == pytest.approx(numeric, rel=1e-5, abs=1e-9)
    left = (expected_profit(params, 1.15, 0.0) - expected_profit(params, 1.15, -h)) / h
    right = (expected_profit(params, 1.15, h) - expected_profit(params, 1.15, 0.0)) / h
    assert marginal_profit(params, 1.15, 0.0, side="left") == pytest.approx(left, abs=1e-5)
    assert marginal_profit(params, 1.15, 0.0, side="right") == pytest.approx(right, abs=1e-5)
    assert right < 0 < left

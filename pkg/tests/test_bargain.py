import numpy as np
import pytest

from salarymatch.bargain import (
    BargainInput,
    bargain_region,
    dcut_dlambda,
    joint_payoff,
    nash_wage,
    Region,
    Status,
)
from salarymatch.checks import ParamsOutOfRangeException, UndefinedDerivativeException

R_GRID = np.arange(-10000, 10001) * 1e-4


def test_input_validation():
    with pytest.raises(ParamsOutOfRangeException):
        BargainInput(beta=1.0, lam=2.0, eps=0.1, phi=0.1)
    with pytest.raises(ParamsOutOfRangeException):
        BargainInput(beta=0.5, lam=0.5, eps=0.1, phi=0.1)


def test_regions():
    assert bargain_region(BargainInput(0.5, 2.0, -0.1, 0.2)) is Region.A_PLUS
    assert bargain_region(BargainInput(0.5, 2.0, -0.1, 0.05)) is Region.OUTSIDE
    assert bargain_region(BargainInput(0.5, 2.0, 0.2, 0.3)) is Region.A_PLUS_MINUS
    assert bargain_region(BargainInput(0.5, 2.0, 0.2, -0.05)) is Region.A_MINUS
    # phi exactly at -eps / lambda
    assert bargain_region(BargainInput(0.5, 2.0, 0.2, -0.1)) is Region.OUTSIDE
    assert nash_wage(BargainInput(0.5, 2.0, 0.2, -0.1)).status is Status.NO_BARGAIN


def test_match_interval_and_boundaries():
    inp = BargainInput(0.5, 2.0, 0.2, 0.15)
    assert inp.match_interval == pytest.approx((0.1, 0.2))
    assert nash_wage(inp) == nash_wage(BargainInput(0.5, 2.0, 0.2, 0.1))
    for phi in (0.1, 0.15, 0.2):
        out = nash_wage(BargainInput(0.5, 2.0, 0.2, phi))
        assert out.status is Status.SALARY_MATCH
        assert out.r == 0.0


def test_cut_and_raise():
    cut = nash_wage(BargainInput(0.5, 2.0, 0.2, 0.05))
    assert cut.status is Status.PAY_CUT
    assert cut.r == pytest.approx(-0.025)
    rise = nash_wage(BargainInput(0.5, 2.0, 0.2, 0.4))
    assert rise.status is Status.PAY_RAISE
    assert rise.r == pytest.approx(0.1)


def test_cut_derivative_in_lambda():
    inp = BargainInput(0.5, 2.0, 0.2, 0.05)
    assert dcut_dlambda(inp) == pytest.approx(0.025)
    h = 1e-5
    up = nash_wage(BargainInput(0.5, 2.0 + h, 0.2, 0.05)).r
    down = nash_wage(BargainInput(0.5, 2.0 - h, 0.2, 0.05)).r
    assert dcut_dlambda(inp) == pytest.approx((up - down) / (2 * h), abs=1e-6)
    assert dcut_dlambda(BargainInput(0.5, 2.0, 0.2, 0.4)) == 0.0
    with pytest.raises(UndefinedDerivativeException):
        dcut_dlambda(BargainInput(0.5, 2.0, 0.2, 0.15))


def test_minus_region_shrinks_with_lambda():
    assert bargain_region(BargainInput(0.5, 2.0, 0.2, -0.08)) is Region.A_MINUS
    assert bargain_region(BargainInput(0.5, 3.0, 0.2, -0.08)) is Region.OUTSIDE


def test_closed_form_maximizes_nash_product():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(500):
        inp = BargainInput(beta=rng.uniform(0.2, 0.8), lam=rng.uniform(1.0, 2.5),
                           eps=rng.uniform(-0.3, 0.3), phi=rng.uniform(-0.3, 0.6))
        values = joint_payoff(inp, R_GRID)
        out = nash_wage(inp)
        if out.status is Status.NO_BARGAIN:
            assert np.all(np.isneginf(values))
            continue
        if not np.isfinite(values.max()):
            continue
        assert abs(out.r - R_GRID[np.argmax(values)]) < 2e-4
        worker = (inp.lam if out.r < 0 else 1.0) * out.r + inp.eps
        assert worker > 0
        assert inp.phi - out.r > 0
        checked += 1
    assert checked > 200

"""Nash wage bargaining when the worker is loss averse around the current wage."""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .checks import (
    check_at_least,
    check_finite,
    check_probability,
    UndefinedDerivativeException,
)


class Region(str, Enum):
    A_PLUS = "A+"
    A_MINUS = "A-"
    A_PLUS_MINUS = "A+-"
    OUTSIDE = "outside"


class Status(str, Enum):
    NO_BARGAIN = "no_bargain"
    PAY_CUT = "pay_cut"
    SALARY_MATCH = "salary_match"
    PAY_RAISE = "pay_raise"


@dataclass(frozen=True)
class BargainInput:
    """One worker-firm pair.

    Arguments:
        beta::float- worker bargaining power in (0, 1)
        lam::float- loss aversion, >= 1
        eps::float- amenity value of the new job
        phi::float- match productivity relative to the current wage
    """
    beta: float
    lam: float
    eps: float
    phi: float

    def __post_init__(self):
        check_probability("beta", self.beta)
        check_at_least("lambda", self.lam, 1.0)
        check_finite("eps", self.eps)
        check_finite("phi", self.phi)

    @property
    def match_interval(self):
        """Productivities (lo, hi) at which the bargained wage is the current wage."""
        base = (1.0 - self.beta) / self.beta * self.eps
        return base / self.lam, base


@dataclass(frozen=True)
class BargainOutcome:
    status: Status
    r: Optional[float] = None


def bargain_region(inp):
    """Classifies (eps, phi) into the sets where both sides gain from a bargain."""
    eps, phi = inp.eps, inp.phi
    if eps <= 0:
        if phi > 0 and phi > -eps:
            return Region.A_PLUS
        return Region.OUTSIDE
    if phi > 0:
        return Region.A_PLUS_MINUS
    # the boundary phi == -eps / lambda counts as no bargain
    if phi > -eps / inp.lam:
        return Region.A_MINUS
    return Region.OUTSIDE


def joint_payoff(inp, r):
    """Nash product (lambda^L(r) r + eps)^beta (phi - r)^(1 - beta).

    Returns -inf wherever either party's payoff is not positive.
    """
    r = np.asarray(r, dtype=float)
    worker = np.where(r < 0, inp.lam, 1.0) * r + inp.eps
    firm = inp.phi - r
    feasible = (worker > 0) & (firm > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.where(
            feasible,
            np.abs(worker) ** inp.beta * np.abs(firm) ** (1.0 - inp.beta),
            -np.inf,
        )
    if value.ndim == 0:
        return float(value)
    return value


def nash_wage(inp):
    """Closed-form Nash bargaining solution.

    Arguments:
        inp::BargainInput- bargaining pair

    Returns:
        BargainOutcome- pay cut below the match interval, exactly zero inside
        it (boundaries included) and pay raise above it.
    """
    if bargain_region(inp) is Region.OUTSIDE:
        return BargainOutcome(Status.NO_BARGAIN)

    lo, hi = inp.match_interval
    beta = inp.beta
    if inp.phi < lo:
        return BargainOutcome(Status.PAY_CUT, beta * inp.phi - (1.0 - beta) / inp.lam * inp.eps)
    if inp.phi > hi:
        return BargainOutcome(Status.PAY_RAISE, beta * inp.phi - (1.0 - beta) * inp.eps)
    return BargainOutcome(Status.SALARY_MATCH, 0.0)


def dcut_dlambda(inp):
    """Derivative of the bargained wage in lambda: (1 - beta) eps / lambda^2 for cuts, 0 for raises."""
    status = nash_wage(inp).status
    if status is Status.PAY_CUT:
        return (1.0 - inp.beta) / inp.lam ** 2 * inp.eps
    if status is Status.PAY_RAISE:
        return 0.0
    raise UndefinedDerivativeException(
        f"wage derivative in lambda is not defined for a {status.value} outcome")

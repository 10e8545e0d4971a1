"""Minimum-distance estimation of (lambda, mu_phi, sigma_phi) on salary-growth bins.

The amenity distribution (mu_eps, sigma_eps) is calibrated. Predicted bin
shares are matched to empirical shares with identity or optimal diagonal
weights; with a kernel source both sides go through the same smoother.
Inference uses the sandwich formula with a bootstrapped covariance of the
empirical shares, and the GoF test works on the unsmoothed residuals.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from scipy import optimize, stats

from .anomaly import KernelSpec, rot_bandwidth, smoother_matrix
from .binprob import BinGrid, BinnedDistribution, GrowthSide, predicted_props
from .checks import (
    BinMismatchException,
    check_at_least,
    check_positive,
    CriterionOrderingException,
    DegreesOfFreedomException,
    EstimationFailedException,
    NumericalException,
    UnderIdentifiedException,
    ValidationException,
)
from .dist import Kind
from .model import (
    DEFAULT_LAMBDA,
    DEFAULT_MU_PHI,
    DEFAULT_SIGMA_PHI,
    ModelParams,
    MU_EPS,
    SIGMA_EPS,
)
from .streams import chunk_sizes, default_threads, map_chunks

logger = logging.getLogger(__name__)

DEFAULT_GRID = BinGrid(-0.2, 0.2, 0.002, include_zero_bin=False)
PARAM_NAMES = ("lambda", "mu_phi", "sigma_phi")
ALPHA = 0.05

# soft floor keeping log(lambda - 1 + XI) finite at lambda = 1
XI = 1e-8
N_STARTS = 5
NM_OPTIONS = {"xatol": 1e-8, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000}


class Weights(str, Enum):
    IDENTITY = "identity"
    OPTIMAL = "optimal"


class EmpiricalSource(str, Enum):
    KERNEL = "kernel"
    RAW = "raw"


@dataclass(frozen=True)
class EstimationSpec:
    """Estimation settings, one field per sensitivity toggle.

    Arguments:
        grid::BinGrid- bins in the criterion (zero bin excluded by default)
        weights::Weights- identity or optimal diagonal weights
        het_family::Kind- logistic or normal heterogeneity
        empirical_source::EmpiricalSource- kernel-smoothed or raw proportions
        mu_eps::float- calibrated amenity location
        sigma_eps::float- calibrated amenity scale
        restrict_lambda_to_one::bool- fit the standard model
        kernel::KernelSpec- smoothing for the kernel source; predictions go through the same smoother
    """
    grid: BinGrid = DEFAULT_GRID
    weights: Weights = Weights.IDENTITY
    het_family: Kind = Kind.LOGISTIC
    empirical_source: EmpiricalSource = EmpiricalSource.KERNEL
    mu_eps: float = MU_EPS
    sigma_eps: float = SIGMA_EPS
    restrict_lambda_to_one: bool = False
    kernel: KernelSpec = KernelSpec()

    def __post_init__(self):
        object.__setattr__(self, "weights", Weights(self.weights))
        object.__setattr__(self, "het_family", Kind(self.het_family))
        object.__setattr__(self, "empirical_source", EmpiricalSource(self.empirical_source))
        check_positive("sigma_eps", self.sigma_eps)

    def params(self, lam, mu_phi, sigma_phi):
        return ModelParams.from_values(lam, mu_phi, sigma_phi, self.mu_eps, self.sigma_eps,
                                       self.het_family)

    def restricted(self):
        return replace(self, restrict_lambda_to_one=True)

    @property
    def free(self):
        """Indices of the estimated parameters in (lambda, mu_phi, sigma_phi)."""
        return (1, 2) if self.restrict_lambda_to_one else (0, 1, 2)


@dataclass(frozen=True)
class FitContext:
    """Everything inference needs from a fit.

    moments, predicted and jacobian live on the fitted (possibly smoothed)
    scale; raw_predicted and raw_jacobian are the unsmoothed model shares on
    every bin.
    """
    spec: EstimationSpec
    data: BinnedDistribution
    theta: np.ndarray
    moments: np.ndarray
    predicted: np.ndarray
    weights: np.ndarray
    jacobian: np.ndarray
    smoother: np.ndarray
    raw_predicted: np.ndarray
    raw_jacobian: np.ndarray
    covariance: Optional[np.ndarray] = None
    iterations: Optional[int] = None

    def props_covariance(self, props_cov=None):
        props_cov = self.covariance if props_cov is None else np.asarray(props_cov, dtype=float)
        if props_cov is None:
            raise ValidationException("inference needs a bootstrapped covariance of bin shares")
        n = self.data.grid.n_bins
        if props_cov.shape != (n, n):
            raise BinMismatchException(f"covariance must be {n}x{n}, got {props_cov.shape}")
        return props_cov

    def moment_covariance(self, props_cov=None):
        """Covariance of the fitted moments from a covariance of bin shares."""
        props_cov = self.props_covariance(props_cov)
        mask = self.spec.grid.fit_mask
        full = self.smoother @ props_cov @ self.smoother.T
        return full[np.ix_(mask, mask)]

    def influence(self):
        """H with theta_hat - theta ~ H (shares - model shares)."""
        weight = _weight_matrix(self.weights)
        loading = self.smoother[self.spec.grid.fit_mask, :]
        return _bread(self.jacobian, weight) @ self.jacobian.T @ weight @ loading


@dataclass(frozen=True)
class EstimationResult:
    lambda_hat: float
    mu_phi_hat: float
    sigma_phi_hat: float
    criterion: float
    converged: bool
    n_evals: int
    restricted: bool = False
    ses: Optional[tuple] = None
    gof_chi2: Optional[float] = None
    gof_critical: Optional[float] = None
    gof_dof: Optional[int] = None
    qlr_chi2: Optional[float] = None
    qlr_critical: Optional[float] = None
    at_boundary: bool = False
    context: Optional[FitContext] = field(default=None, repr=False, compare=False)

    @property
    def theta(self):
        return np.array([self.lambda_hat, self.mu_phi_hat, self.sigma_phi_hat])

    @property
    def params(self):
        return self.context.spec.params(*self.theta)

    def to_dict(self):
        out = {name: getattr(self, name) for name in (
            "lambda_hat", "mu_phi_hat", "sigma_phi_hat", "criterion", "converged", "n_evals",
            "restricted", "gof_chi2", "gof_critical", "gof_dof", "qlr_chi2", "qlr_critical",
            "at_boundary")}
        out["ses"] = None if self.ses is None else dict(zip(PARAM_NAMES, self.ses))
        return out


def align(empirical, grid):
    """Empirical shares on exactly the bins of grid.

    A wider empirical grid with the same width is cut down; its observations
    outside the range count as outside the grid.
    """
    if empirical.grid.same_bins(grid):
        return empirical.with_grid(grid)
    if not np.isclose(empirical.grid.width, grid.width, rtol=1e-12, atol=0.0):
        raise BinMismatchException(
            f"empirical bin width {empirical.grid.width} differs from {grid.width}")
    return empirical.restrict(grid.lo, grid.hi).with_grid(grid)


def smoothing_operator(data, spec):
    """Matrix M with smoothed shares = M @ shares.

    Raw sources give the identity. Kernel sources replace every non-zero bin
    with its local polynomial fit from the bins on the same side; the zero bin
    stays raw.
    """
    n = data.grid.n_bins
    operator = np.eye(n)
    if spec.empirical_source is EmpiricalSource.RAW:
        return operator
    fit_range = max(abs(data.grid.lo), abs(data.grid.hi))
    kernel = replace(spec.kernel, fit_range=fit_range)
    for side in GrowthSide:
        cols = np.flatnonzero(data.grid.side_mask(side))
        x = data.grid.midpoints[cols]
        if kernel.rule_of_thumb:
            h = rot_bandwidth(data, kernel.degree, side, fit_range)
        else:
            h = float(kernel.bandwidth)
        operator[np.ix_(cols, cols)] = smoother_matrix(x, x, h, kernel.degree)
    return operator


def optimal_weights(moments, n_obs):
    """Inverse binomial variances n / (p (1 - p)), with p kept off 0 and 1."""
    if n_obs is None:
        raise ValidationException("optimal weights need the number of observations")
    floor = 0.5 / n_obs
    p = np.clip(moments, floor, 1.0 - floor)
    return n_obs / (p * (1.0 - p))


class MinimumDistance:
    """Criterion, moments and Jacobian for one empirical distribution and spec.

    Model shares pass through the same smoothing operator as the empirical
    shares, so kernel smoothing bias appears on both sides of the distance.
    """

    def __init__(self, empirical, spec):
        self.spec = spec
        self.data = align(empirical, spec.grid)
        self.mask = spec.grid.fit_mask
        self.smoother = smoothing_operator(self.data, spec)
        self.moments = (self.smoother @ self.data.props)[self.mask]
        if spec.weights is Weights.OPTIMAL:
            self.weights = optimal_weights(self.moments, self.data.n_obs)
        else:
            self.weights = np.ones(self.moments.size)
        self.norm = max(float(np.sum(self.weights * self.moments ** 2)), np.finfo(float).tiny)

    def raw_predicted(self, theta):
        return predicted_props(self.spec.params(*theta), self.spec.grid).props

    def predicted(self, theta):
        return (self.smoother @ self.raw_predicted(theta))[self.mask]

    def criterion(self, theta):
        d = self.predicted(theta) - self.moments
        return float(np.sum(self.weights * d * d))

    def structural(self, x):
        if self.spec.restrict_lambda_to_one:
            return np.array([1.0, x[0], np.exp(x[1])])
        return np.array([1.0 + np.exp(x[0]), x[1], np.exp(x[2])])

    def unconstrained(self, theta):
        lam, mu, sigma = theta
        if self.spec.restrict_lambda_to_one:
            return np.array([mu, np.log(sigma)])
        return np.array([np.log(lam - 1.0 + XI), mu, np.log(sigma)])

    def objective(self, x):
        try:
            return self.criterion(self.structural(x)) / self.norm
        except (NumericalException, ValidationException) as err:
            logger.debug("criterion failed at %s: %s", x, err)
            return np.inf

    def raw_jacobian(self, theta):
        """Central-difference Jacobian of the unsmoothed shares on every bin.

        Steps are max(1e-5, 1e-5 |theta_j|); lambda switches to a forward
        difference when the backward step would cross 1.
        """
        free = self.spec.free
        jac = np.empty((self.spec.grid.n_bins, len(free)))
        for col, j in enumerate(free):
            step = max(1e-5, 1e-5 * abs(theta[j]))
            up = theta.copy()
            up[j] += step
            down = theta.copy()
            if j == 0 and theta[0] - step < 1.0:
                jac[:, col] = (self.raw_predicted(up) - self.raw_predicted(theta)) / step
                continue
            down[j] -= step
            jac[:, col] = (self.raw_predicted(up) - self.raw_predicted(down)) / (2.0 * step)
        return jac

    def jacobian(self, theta, raw=None):
        """Jacobian of the fitted moments in the free parameters."""
        raw = self.raw_jacobian(theta) if raw is None else raw
        return (self.smoother @ raw)[self.mask]


def criterion(p, empirical, spec):
    """Weighted sum of squared distances between predicted and empirical shares.

    Arguments:
        p::ModelParams- parameters to evaluate
        empirical::BinnedDistribution- empirical shares on spec.grid's bins
        spec::EstimationSpec- estimation settings

    Returns:
        float- sum_b w_b (predicted_b - empirical_b)^2
    """
    if not empirical.grid.same_bins(spec.grid):
        raise BinMismatchException("empirical bins do not match the estimation grid")
    problem = MinimumDistance(empirical, spec)
    theta = np.array([p.lam, p.phi.location, p.phi.scale])
    return problem.criterion(theta)


def start_lattice(start, restricted):
    """Deterministic multi-start points spread around start."""
    lam, mu, sigma = start.lam, start.phi.location, start.phi.scale
    d = max(lam - 1.0, 0.05)
    points = [
        (lam, mu, sigma),
        (1.0 + 2.0 * d, mu + 0.5 * sigma, 1.25 * sigma),
        (1.0 + 0.5 * d, mu - 0.5 * sigma, 0.8 * sigma),
        (1.0 + 2.0 * d, mu - 0.5 * sigma, 0.8 * sigma),
        (1.0 + 0.5 * d, mu + 0.5 * sigma, 1.25 * sigma),
    ]
    if restricted:
        points = [(1.0, m, s) for _, m, s in points]
    return [np.array(point) for point in points]


def fit(empirical, spec=EstimationSpec(), start=None, covariance=None, threads=None,
        n_starts=N_STARTS, iterations=None):
    """Minimum-distance fit with deterministic multi-starts.

    Arguments:
        empirical::BinnedDistribution- empirical shares (grid may be wider than spec.grid)
        spec::EstimationSpec- estimation settings
        start::ModelParams- centre of the start lattice, defaults to the toolkit defaults
        covariance::np.ndarray- bootstrapped covariance of bin shares; enables SEs and GoF
        threads::int- worker cap for the multi-starts
        n_starts::int- how many lattice points to start from (1 to 5)
        iterations::int- bootstrap redraws behind covariance; corrects the GoF for its noise

    Returns:
        EstimationResult- best local minimum across starts
    """
    check_at_least("n_starts", n_starts, 1)
    problem = MinimumDistance(empirical, spec)
    if start is None:
        start = spec.params(DEFAULT_LAMBDA, DEFAULT_MU_PHI, DEFAULT_SIGMA_PHI)
    starts = start_lattice(start, spec.restrict_lambda_to_one)[:n_starts]
    logger.info("fitting %s model from %d starts on %d moments",
                "restricted" if spec.restrict_lambda_to_one else "behavioral",
                len(starts), problem.moments.size)

    def run(theta0):
        out = optimize.minimize(problem.objective, problem.unconstrained(theta0),
                                method="Nelder-Mead", options=NM_OPTIONS)
        logger.debug("start %s -> %s (criterion %.6g, success %s)",
                     theta0, problem.structural(out.x), out.fun, out.success)
        return out

    threads = default_threads() if threads is None else threads
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, starts))
    else:
        outcomes = [run(theta0) for theta0 in starts]

    finite = [out for out in outcomes if np.isfinite(out.fun)]
    if not finite:
        raise EstimationFailedException("every start failed to evaluate the criterion", best=None)
    best = min(finite, key=lambda out: out.fun)
    if not best.success:
        logger.warning("best start did not converge: %s", best.message)

    theta = problem.structural(best.x)
    raw_jacobian = problem.raw_jacobian(theta)
    context = FitContext(
        spec=spec,
        data=problem.data,
        theta=theta,
        moments=problem.moments,
        predicted=problem.predicted(theta),
        weights=problem.weights,
        jacobian=problem.jacobian(theta, raw_jacobian),
        smoother=problem.smoother,
        raw_predicted=problem.raw_predicted(theta),
        raw_jacobian=raw_jacobian,
        covariance=None if covariance is None else np.asarray(covariance, dtype=float),
        iterations=iterations,
    )
    result = EstimationResult(
        lambda_hat=float(theta[0]),
        mu_phi_hat=float(theta[1]),
        sigma_phi_hat=float(theta[2]),
        criterion=problem.criterion(theta),
        converged=bool(best.success),
        n_evals=int(sum(out.nfev for out in outcomes)),
        restricted=spec.restrict_lambda_to_one,
        context=context,
    )
    logger.info("fit done: lambda=%.6f mu_phi=%.6f sigma_phi=%.6f criterion=%.6g evals=%d",
                result.lambda_hat, result.mu_phi_hat, result.sigma_phi_hat, result.criterion,
                result.n_evals)
    if covariance is not None:
        result = with_inference(result)
    return result


def _weight_matrix(weights):
    weights = np.asarray(weights, dtype=float)
    return np.diag(weights) if weights.ndim == 1 else weights


def _bread(jacobian, weight):
    bread = jacobian.T @ weight @ jacobian
    if np.linalg.matrix_rank(bread) < bread.shape[0]:
        raise UnderIdentifiedException("G'WG is singular, parameters are not identified")
    return np.linalg.inv(bread)


def sandwich_covariance(jacobian, weights, sigma):
    """(G'WG)^-1 G'W Sigma W G (G'WG)^-1 for weights given as a vector or matrix."""
    weight = _weight_matrix(weights)
    inv = _bread(jacobian, weight)
    gw = jacobian.T @ weight
    return inv @ (gw @ sigma @ gw.T) @ inv


def sandwich_ses(result, covariance=None):
    """Standard errors for (lambda, mu_phi, sigma_phi); lambda gets 0 when fixed at 1.

    Arguments:
        result::EstimationResult- fitted result
        covariance::np.ndarray- covariance of bin shares, defaults to the one stored at fit time

    Returns:
        tuple- three standard errors
    """
    ctx = result.context
    sigma = ctx.moment_covariance(covariance)
    cov = sandwich_covariance(ctx.jacobian, ctx.weights, sigma)
    ses = np.zeros(3)
    ses[list(ctx.spec.free)] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return tuple(float(s) for s in ses)


def bootstrap_cov(data, grid=None, iterations=10_000, seed=0, threads=None):
    """Bootstrapped covariance of bin shares from multinomial redraws of the counts.

    Arguments:
        data::BinnedDistribution or np.ndarray- binned counts, or raw growth values with grid
        grid::BinGrid- bins for raw growth values
        iterations::int- redraws, at least 100
        seed::int- run seed
        threads::int- worker cap

    Returns:
        np.ndarray- (n_bins, n_bins) symmetric positive semidefinite matrix
    """
    check_at_least("iterations", iterations, 100)
    if not isinstance(data, BinnedDistribution):
        if grid is None:
            raise ValidationException("raw growth values need a bin grid")
        data = BinnedDistribution.from_values(data, grid)
    counts, outside = data.bin_counts()
    n = int(data.n_obs)
    probs = np.append(counts, outside) / n
    centre = data.props

    def draw(rng, size, k):
        dev = rng.multinomial(n, probs, size=size)[:, :-1] / n - centre
        return dev.sum(axis=0), dev.T @ dev

    parts = map_chunks(draw, chunk_sizes(iterations), seed, threads, label="covariance bootstrap")
    total = sum(part[0] for part in parts)
    cross = sum(part[1] for part in parts)
    mean = total / iterations
    cov = (cross - iterations * np.outer(mean, mean)) / (iterations - 1)
    return 0.5 * (cov + cov.T)


def gof_test(result, covariance=None):
    """Overidentification statistic on the unsmoothed share residuals.

    The residuals e = shares - model shares at theta_hat move with the data as
    A (shares - truth), where A = E - J H: E picks the fitted bins, J is the
    raw Jacobian on those bins and H the influence of the shares on theta_hat.
    The statistic is e' V^+ e with V = A Sigma A', whose rank is k - q, so the
    pseudo-inverse keeps the top k - q eigenvalues. When the stored covariance
    came from B bootstrap redraws, the statistic is scaled by
    (B - dof - 2) / (B - 1) to undo the bias of inverting a sample covariance.

    Arguments:
        result::EstimationResult- fitted result with a context
        covariance::np.ndarray- covariance of bin shares, defaults to the stored one

    Returns:
        tuple- (chi2, critical value at 5%, degrees of freedom)
    """
    ctx = result.context
    sigma = ctx.props_covariance(covariance)
    k, q = ctx.jacobian.shape
    dof = k - q
    if dof <= 0:
        raise DegreesOfFreedomException(f"{k} moments cannot test {q} parameters")
    mask = ctx.spec.grid.fit_mask
    select = np.eye(mask.size)[mask]
    a = select - ctx.raw_jacobian[mask] @ ctx.influence()
    v = a @ sigma @ a.T
    vals, vecs = np.linalg.eigh(0.5 * (v + v.T))
    top = np.argsort(vals)[::-1][:dof]
    if np.any(vals[top] <= 0):
        raise UnderIdentifiedException("moment covariance has fewer than k - q positive directions")
    resid = (ctx.data.props - ctx.raw_predicted)[mask]
    z = vecs[:, top].T @ resid
    chi2 = float(np.sum(z * z / vals[top]))
    if covariance is None and ctx.iterations is not None:
        redraws = int(ctx.iterations)
        if redraws <= dof + 2:
            raise DegreesOfFreedomException(
                f"{redraws} bootstrap redraws cannot support a GoF test with {dof} degrees of freedom")
        chi2 *= (redraws - dof - 2) / (redraws - 1)
    return chi2, float(stats.chi2.ppf(1.0 - ALPHA, dof)), dof


def qlr_test(unrestricted, restricted, covariance=None):
    """Distance test of lambda = 1 from the criterion difference of two nested fits.

    The difference is normalized by e'(G'WG)^-1 e / Var(lambda_hat), which
    makes it chi-squared with one degree of freedom under non-optimal weights.
    lambda = 1 sits on the edge of the parameter space, so under the null the
    statistic is an even mix of zero and chi-squared(1) and the 5% critical
    value of chi-squared(1) rejects about 2.5% of the time.

    Returns:
        tuple- (chi2, critical value at 5%)
    """
    if unrestricted.restricted or not restricted.restricted:
        raise ValidationException("qlr_test takes the free-lambda fit first and the lambda=1 fit second")
    gap = restricted.criterion - unrestricted.criterion
    if gap < -1e-8 * max(unrestricted.criterion, np.finfo(float).tiny):
        raise CriterionOrderingException(
            f"restricted criterion {restricted.criterion} is below the unrestricted "
            f"{unrestricted.criterion}; the unrestricted fit did not find the minimum")
    gap = max(gap, 0.0)

    ctx = unrestricted.context
    weight = _weight_matrix(ctx.weights)
    sigma = ctx.moment_covariance(covariance)
    inv = _bread(ctx.jacobian, weight)
    var_lambda = sandwich_covariance(ctx.jacobian, weight, sigma)[0, 0]
    if var_lambda <= 0:
        raise UnderIdentifiedException("sandwich variance of lambda is not positive")
    chi2 = gap * inv[0, 0] / var_lambda
    return float(chi2), float(stats.chi2.ppf(1.0 - ALPHA, 1))


def with_inference(result, covariance=None, iterations=None):
    """Fills standard errors, GoF and the boundary flag from a share covariance.

    iterations is the number of bootstrap redraws behind covariance, None when unknown.
    """
    ctx = result.context
    if covariance is not None:
        ctx = replace(ctx, covariance=np.asarray(covariance, dtype=float), iterations=iterations)
        result = replace(result, context=ctx)
    ses = sandwich_ses(result)
    chi2, critical, dof = gof_test(result)
    at_boundary = (not result.restricted) and (result.lambda_hat - 1.0 < 2.0 * ses[0])
    if at_boundary:
        logger.warning("lambda_hat=%.6f lies within two standard errors of 1", result.lambda_hat)
    return replace(result, ses=ses, gof_chi2=chi2, gof_critical=critical, gof_dof=dof,
                   at_boundary=at_boundary)


def fit_both(empirical, spec=EstimationSpec(), start=None, iterations=10_000, seed=0,
             threads=None, n_starts=N_STARTS):
    """Bootstrap covariance, behavioral and standard fits, GoF for both and the QLR test.

    Returns:
        tuple- (unrestricted, restricted) EstimationResults; the first carries the QLR fields
    """
    data = align(empirical, spec.grid)
    covariance = bootstrap_cov(data, iterations=iterations, seed=seed, threads=threads)
    unrestricted = fit(data, replace(spec, restrict_lambda_to_one=False), start, covariance,
                       threads, n_starts, iterations)
    restricted = fit(data, spec.restricted(), start, covariance, threads, n_starts, iterations)
    chi2, critical = qlr_test(unrestricted, restricted)
    unrestricted = replace(unrestricted, qlr_chi2=chi2, qlr_critical=critical)
    return unrestricted, restricted


def fit_table(unrestricted=None, restricted=None):
    """Per-bin empirical and predicted shares of one or both fits for plotting.

    Returns:
        pd.DataFrame- columns bin_mid, empirical, predicted_behavioral, predicted_standard
    """
    fits = [r for r in (unrestricted, restricted) if r is not None]
    if not fits:
        raise ValidationException("fit_table needs at least one estimation result")
    ctx = fits[0].context
    mask = ctx.spec.grid.fit_mask
    table = pd.DataFrame({"bin_mid": ctx.spec.grid.midpoints[mask], "empirical": ctx.moments})
    nan = np.full(ctx.moments.size, np.nan)
    table["predicted_behavioral"] = nan if unrestricted is None else unrestricted.context.predicted
    table["predicted_standard"] = nan if restricted is None else restricted.context.predicted
    return table

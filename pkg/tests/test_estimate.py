import numpy as np
import pytest

from salarymatch.anomaly import KernelSpec
from salarymatch.binprob import BinGrid, BinnedDistribution, predicted_props
from salarymatch.checks import (
    BinMismatchException,
    CriterionOrderingException,
    DegreesOfFreedomException,
    UnderIdentifiedException,
    ValidationException,
)
from salarymatch.estimate import (
    align,
    bootstrap_cov,
    criterion,
    DEFAULT_GRID,
    EstimationResult,
    EstimationSpec,
    fit,
    fit_both,
    fit_table,
    FitContext,
    gof_test,
    MinimumDistance,
    optimal_weights,
    qlr_test,
    sandwich_covariance,
    sandwich_ses,
    smoothing_operator,
    with_inference,
)
from salarymatch.simulate import SimConfig, simulate

FIVE_BINS = BinGrid(-0.004, 0.004, 0.002)
SMALL_WINDOW = BinGrid(-0.1, 0.1, 0.002)
TRUTH = (1.123, 1.25, 0.1)


def synthetic_result(jacobian, resid, sigma2, restricted=False, crit=1.0, iterations=None):
    """Result whose context has identity weights and smoother and Sigma = sigma2 * I."""
    spec = EstimationSpec(grid=FIVE_BINS, empirical_source="raw")
    moments = np.full(FIVE_BINS.n_bins, 0.1)
    ctx = FitContext(
        spec=spec if not restricted else spec.restricted(),
        data=BinnedDistribution(FIVE_BINS, moments, n_obs=1000),
        theta=np.array([1.2, 1.0, 0.1]),
        moments=moments,
        predicted=moments + resid,
        weights=np.ones(FIVE_BINS.n_bins),
        jacobian=jacobian,
        smoother=np.eye(FIVE_BINS.n_bins),
        raw_predicted=moments + resid,
        raw_jacobian=jacobian,
        covariance=sigma2 * np.eye(FIVE_BINS.n_bins),
        iterations=iterations,
    )
    return EstimationResult(1.2, 1.0, 0.1, crit, True, 1, restricted=restricted, context=ctx)


def multinomial_bins(p, grid, n, rng):
    props = predicted_props(p, grid).props
    counts = rng.multinomial(n, np.append(props, max(1.0 - props.sum(), 0.0)))[:-1]
    return BinnedDistribution.from_counts(grid, counts, n_total=n)


@pytest.fixture
def orthogonal():
    rng = np.random.default_rng(4)
    jac = rng.normal(size=(5, 3))
    proj = np.eye(5) - jac @ np.linalg.solve(jac.T @ jac, jac.T)
    resid = proj @ rng.normal(size=5) * 1e-3
    return jac, resid


def test_criterion_vanishes_at_truth(params):
    spec = EstimationSpec(empirical_source="raw")
    data = predicted_props(params, DEFAULT_GRID)
    assert criterion(params, data, spec) == 0.0
    assert criterion(params.with_lambda(1.3), data, spec) > 0
    with pytest.raises(BinMismatchException):
        criterion(params, predicted_props(params, FIVE_BINS), spec)


def test_noise_free_fit_recovers_parameters(params):
    grid = BinGrid(-0.2, 0.2, 0.002)
    spec = EstimationSpec(grid=grid, empirical_source="raw")
    data = predicted_props(params, grid)
    result = fit(data, spec, start=spec.params(1.3, 1.2, 0.12), threads=1, n_starts=2)
    assert result.lambda_hat == pytest.approx(1.123, abs=5e-3)
    assert result.mu_phi_hat == pytest.approx(1.25, abs=2e-3)
    assert result.sigma_phi_hat == pytest.approx(0.1, abs=2e-3)
    assert result.ses is None
    table = fit_table(unrestricted=result)
    assert list(table.columns) == ["bin_mid", "empirical", "predicted_behavioral",
                                   "predicted_standard"]
    assert table.predicted_standard.isna().all()
    assert len(table) == grid.n_bins


def test_sandwich_reduces_to_inverse_information():
    rng = np.random.default_rng(2)
    jac = rng.normal(size=(6, 3))
    np.testing.assert_allclose(sandwich_covariance(jac, np.ones(6), np.eye(6)),
                               np.linalg.inv(jac.T @ jac), rtol=1e-10)
    with pytest.raises(UnderIdentifiedException):
        sandwich_covariance(np.column_stack([jac[:, 0], jac[:, 0], jac[:, 1]]),
                            np.ones(6), np.eye(6))


def test_gof_of_orthogonal_residual(orthogonal):
    jac, resid = orthogonal
    sigma2 = 4e-6
    result = synthetic_result(jac, resid, sigma2)
    chi2, critical, dof = gof_test(result)
    assert dof == 2
    assert chi2 == pytest.approx(resid @ resid / sigma2, rel=1e-8)
    assert critical == pytest.approx(5.991, abs=1e-3)
    corrected = synthetic_result(jac, resid, sigma2, iterations=100)
    assert gof_test(corrected)[0] == pytest.approx(chi2 * 96 / 99, rel=1e-8)
    assert gof_test(corrected, sigma2 * np.eye(5))[0] == pytest.approx(chi2, rel=1e-8)
    with pytest.raises(DegreesOfFreedomException):
        gof_test(synthetic_result(jac, resid, sigma2, iterations=4))


def test_sandwich_ses_from_context(orthogonal):
    jac, resid = orthogonal
    result = synthetic_result(jac, resid, 4e-6)
    expected = np.sqrt(np.diag(4e-6 * np.linalg.inv(jac.T @ jac)))
    np.testing.assert_allclose(sandwich_ses(result), expected, rtol=1e-8)


def test_qlr_is_normalized_criterion_gap(orthogonal):
    jac, resid = orthogonal
    sigma2 = 4e-6
    free = synthetic_result(jac, resid, sigma2, crit=1e-5)
    fixed = synthetic_result(jac[:, 1:], resid, sigma2, restricted=True, crit=3e-5)
    chi2, critical = qlr_test(free, fixed)
    assert chi2 == pytest.approx(2e-5 / sigma2, rel=1e-8)
    assert critical == pytest.approx(3.841, abs=1e-3)
    with pytest.raises(ValidationException):
        qlr_test(fixed, free)
    with pytest.raises(CriterionOrderingException):
        qlr_test(synthetic_result(jac, resid, sigma2, crit=1.0), fixed)


def test_too_few_moments():
    grid = BinGrid(-0.002, 0.002, 0.002, include_zero_bin=False)
    spec = EstimationSpec(grid=grid, empirical_source="raw")
    props = np.array([0.2, 0.3, 0.2])
    ctx = FitContext(spec, BinnedDistribution(grid, props, n_obs=100), np.array([1.2, 1.0, 0.1]),
                     props[[0, 2]], props[[0, 2]], np.ones(2), np.ones((2, 3)), np.eye(3),
                     props, np.ones((3, 3)), np.eye(3))
    result = EstimationResult(1.2, 1.0, 0.1, 0.0, True, 1, context=ctx)
    with pytest.raises(DegreesOfFreedomException):
        gof_test(result)


def test_moment_covariance_needs_matching_shape(orthogonal):
    jac, resid = orthogonal
    result = synthetic_result(jac, resid, 1.0)
    with pytest.raises(BinMismatchException):
        result.context.moment_covariance(np.eye(3))


def test_optimal_weights():
    with pytest.raises(ValidationException):
        optimal_weights(np.array([0.1, 0.2]), None)
    w = optimal_weights(np.array([0.5, 0.0]), 100)
    assert w[0] == pytest.approx(400.0)
    assert np.isfinite(w[1])


def test_bootstrap_covariance():
    counts = np.array([100, 200, 400, 200, 100])
    data = BinnedDistribution.from_counts(FIVE_BINS, counts, n_total=1200)
    cov = bootstrap_cov(data, iterations=5000, seed=8, threads=1)
    np.testing.assert_array_equal(cov, cov.T)
    p = counts / 1200
    ratio = np.diag(cov) / (p * (1 - p) / 1200)
    assert ratio.mean() == pytest.approx(1.0, abs=0.06)
    assert np.all(np.linalg.eigvalsh(cov) > -1e-12)
    np.testing.assert_array_equal(cov, bootstrap_cov(data, iterations=5000, seed=8, threads=4))


def test_align(params):
    wide = predicted_props(params, BinGrid(-0.4, 0.4, 0.002))
    narrow = align(wide, DEFAULT_GRID)
    assert narrow.grid == DEFAULT_GRID
    np.testing.assert_array_equal(narrow.props, wide.props[100:301])
    with pytest.raises(BinMismatchException):
        align(predicted_props(params, BinGrid(-0.2, 0.2, 0.004)), DEFAULT_GRID)


def test_smoothing_operator(params):
    data = predicted_props(params, DEFAULT_GRID)
    raw = smoothing_operator(data, EstimationSpec(empirical_source="raw"))
    np.testing.assert_array_equal(raw, np.eye(DEFAULT_GRID.n_bins))
    smooth = smoothing_operator(data, EstimationSpec(kernel=KernelSpec(bandwidth=0.02)))
    np.testing.assert_allclose(smooth.sum(axis=1), 1.0, atol=1e-10)
    z = DEFAULT_GRID.zero_index
    assert smooth[z, z] == 1.0
    assert np.all(smooth[:z, z + 1:] == 0)


def test_kernel_criterion_vanishes_at_truth(params):
    spec = EstimationSpec(kernel=KernelSpec(bandwidth=0.02))
    data = predicted_props(params, DEFAULT_GRID.with_zero_bin(True))
    assert criterion(params, data, spec) == pytest.approx(0.0, abs=1e-24)
    assert criterion(params.with_lambda(1.2), data, spec) > 0


def test_jacobian_matches_directional_difference(params):
    data = predicted_props(params, SMALL_WINDOW)
    problem = MinimumDistance(data, EstimationSpec(grid=SMALL_WINDOW.with_zero_bin(False),
                                                   kernel=KernelSpec(bandwidth=0.02)))
    theta = np.array(TRUTH)
    direction = np.array([0.6, -0.3, 0.05])
    eps = 1e-4
    numeric = (problem.predicted(theta + eps * direction)
               - problem.predicted(theta - eps * direction)) / (2 * eps)
    analytic = problem.jacobian(theta) @ direction
    np.testing.assert_allclose(analytic, numeric, atol=1e-4 * np.abs(numeric).max())
    raw = problem.raw_jacobian(theta)
    np.testing.assert_allclose(problem.jacobian(theta, raw),
                               (problem.smoother @ raw)[problem.mask], rtol=1e-12)


def test_jacobian_stays_above_lambda_one(params):
    problem = MinimumDistance(predicted_props(params.standard(), SMALL_WINDOW),
                              EstimationSpec(grid=SMALL_WINDOW, empirical_source="raw"))
    jac = problem.jacobian(np.array([1.0, 1.25, 0.1]))
    assert jac.shape == (SMALL_WINDOW.n_bins, 3)
    assert np.all(np.isfinite(jac))


@pytest.mark.parametrize("include_zero", [True, False])
def test_zero_bin_toggle(params, include_zero):
    grid = SMALL_WINDOW.with_zero_bin(include_zero)
    spec = EstimationSpec(grid=grid, empirical_source="raw")
    result = fit(predicted_props(params, SMALL_WINDOW), spec, start=spec.params(1.15, 1.24, 0.11),
                 threads=1, n_starts=1)
    assert result.context.moments.size == SMALL_WINDOW.n_bins - (0 if include_zero else 1)
    assert len(fit_table(unrestricted=result)) == result.context.moments.size
    assert result.lambda_hat == pytest.approx(1.123, abs=5e-3)


def test_with_inference_records_iterations(params):
    spec = EstimationSpec(grid=SMALL_WINDOW.with_zero_bin(False), empirical_source="raw")
    data = multinomial_bins(params, SMALL_WINDOW, 200_000, np.random.default_rng(9))
    result = fit(data, spec, start=spec.params(*TRUTH), threads=1, n_starts=1)
    covariance = bootstrap_cov(data, iterations=1000, seed=1, threads=1)
    raw = with_inference(result, covariance)
    corrected = with_inference(result, covariance, iterations=1000)
    assert corrected.context.iterations == 1000
    assert corrected.gof_dof == SMALL_WINDOW.n_bins - 1 - 3
    assert corrected.gof_chi2 == pytest.approx(
        raw.gof_chi2 * (1000 - corrected.gof_dof - 2) / 999, rel=1e-10)
    assert corrected.ses == raw.ses


SENSITIVITY_ROWS = [
    {},
    {"weights": "optimal"},
    {"het_family": "normal"},
    {"empirical_source": "raw"},
    {"kernel": KernelSpec(bandwidth="rot")},
    {"kernel": KernelSpec(degree=2, bandwidth=0.04)},
]


@pytest.mark.slow
@pytest.mark.parametrize("row", SENSITIVITY_ROWS)
def test_each_sensitivity_row_recovers_truth(row):
    spec = EstimationSpec(**row)
    truth = spec.params(*TRUTH)
    data = BinnedDistribution(DEFAULT_GRID.with_zero_bin(True),
                              predicted_props(truth, DEFAULT_GRID).props, n_obs=10_000_000)
    result = fit(data, spec, start=spec.params(1.3, 1.2, 0.12), threads=1, n_starts=2)
    np.testing.assert_allclose(result.theta, TRUTH, atol=2e-3)
    restricted = fit(BinnedDistribution(data.grid, predicted_props(truth.standard(), DEFAULT_GRID).props,
                                        n_obs=10_000_000),
                     spec.restricted(), start=spec.params(1.0, 1.2, 0.12), threads=1, n_starts=2)
    np.testing.assert_allclose(restricted.theta, (1.0, 1.25, 0.1), atol=2e-3)


@pytest.mark.slow
def test_fit_both_recovers_loss_aversion(params):
    out = simulate(SimConfig(params, 2_000_000, seed=5, record_rejected=False))
    data = BinnedDistribution.from_values(out.realized, BinGrid(-0.2, 0.2, 0.002))
    unrestricted, restricted = fit_both(data, EstimationSpec(), iterations=2000, seed=5)
    assert unrestricted.lambda_hat == pytest.approx(1.123, abs=0.01)
    z = np.abs(unrestricted.theta - np.array(TRUTH)) / np.array(unrestricted.ses)
    assert np.all(z < 3), z
    assert unrestricted.gof_chi2 < unrestricted.gof_critical
    assert unrestricted.gof_dof == 197
    assert restricted.lambda_hat == 1.0
    assert restricted.ses[0] == 0.0
    assert unrestricted.qlr_chi2 > unrestricted.qlr_critical
    assert restricted.criterion >= unrestricted.criterion


def replicate_fit_both(truth, reps, n, seed):
    spec = EstimationSpec(grid=SMALL_WINDOW.with_zero_bin(False))
    rng = np.random.default_rng(seed)
    for rep in range(reps):
        data = multinomial_bins(truth, SMALL_WINDOW, n, rng)
        yield fit_both(data, spec, start=truth.with_lambda(max(truth.lam, 1.05)),
                       iterations=1000, seed=rep, threads=1, n_starts=2)


@pytest.mark.slow
def test_qlr_and_gof_size_under_the_standard_model(params):
    fits = list(replicate_fit_both(params.standard(), 50, 200_000, seed=21))
    qlr_rejections = sum(free.qlr_chi2 > free.qlr_critical for free, _ in fits)
    gof_rejections = sum(fixed.gof_chi2 > fixed.gof_critical for _, fixed in fits)
    assert qlr_rejections <= 5
    assert gof_rejections <= 6


@pytest.mark.slow
def test_qlr_power_against_loss_aversion(params):
    fits = list(replicate_fit_both(params.with_lambda(1.2), 20, 200_000, seed=22))
    assert sum(free.qlr_chi2 > free.qlr_critical for free, _ in fits) >= 18
    assert sum(free.gof_chi2 > free.gof_critical for free, _ in fits) <= 4

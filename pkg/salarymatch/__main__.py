import logging
import os
import sys
from dataclasses import asdict

import fire
import numpy as np
import pandas as pd

from .anomaly import anomalies, bootstrap_ses, KernelSpec, smoothed_table
from .bargain import bargain_region, BargainInput, dcut_dlambda, nash_wage
from .binprob import BinGrid, BinnedDistribution
from .checks import NumericalException, UndefinedDerivativeException, ValidationException
from .config import generate_template, RunConfig, symmetric_grid
from .dist import HetFamily, Kind
from .estimate import align, bootstrap_cov, fit, fit_both, fit_table
from .ingest import read_distribution, read_salaries, SampleFilter
from .output import ensure_dir, write_csv, write_json
from .policy import (
    expected_vacancy_profit,
    lambda_sweep,
    offer_mix,
    optimal_vacancies,
    passthrough,
    passthrough_ban,
    passthrough_curve,
)
from .simulate import placebo_conditional, placebo_independent, PLACEBO_GRID, simulate

logger = logging.getLogger("salarymatch")

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _drop_none(**values):
    return {k: v for k, v in values.items() if v is not None}


def _overrides(seed=None, threads=None, output_dir=None, **sections):
    out = _drop_none(seed=seed, threads=threads, output_dir=output_dir)
    for name, section in sections.items():
        section = {k: v for k, v in section.items() if v is not None}
        if section:
            out[name] = section
    return out


def _range_grid(value, width, include_zero_bin=True):
    # '--range 0.2' or '--range -0.2,0.2' (fire hands the latter over as a tuple)
    if isinstance(value, str):
        value = tuple(float(v) for v in value.split(","))
    if isinstance(value, (tuple, list)):
        lo, hi = (float(v) for v in value)
        k_lo = int(np.ceil(lo / width - 1e-9))
        k_hi = int(np.floor(hi / width + 1e-9))
        return BinGrid(k_lo * width, k_hi * width, width, include_zero_bin), max(-lo, hi)
    return symmetric_grid(float(value), width, include_zero_bin), float(value)


def _path(directory, name):
    return os.path.join(ensure_dir(directory), name)


class Policy(object):
    """Counterfactual commands: mix, subsidy, ban and vacancies."""

    def mix(self, config=None, lam=None, output_dir=None):
        """Shares of pay cuts, salary matches and pay raises among offers made.

        Arguments:
            config::str- JSON run configuration
            lam::float- loss aversion override
            output_dir::str- directory for mix.json

        Returns:
            dict- written file paths
        """
        cfg = RunConfig.load(config, _overrides(output_dir=output_dir, params={"lambda": lam}))
        p = cfg.model_params()
        body = {"params": p.as_dict()}
        body.update(asdict(offer_mix(p)))
        return {"mix": write_json("offer_mix", body, _path(cfg.output_dir, "mix.json"))}

    def subsidy(self, config=None, delta_sd=None, lambda_grid=None, weighting=None, lam=None,
                output_dir=None, threads=None):
        """Hiring-subsidy pass-through at the configured lambda and over a lambda grid.

        Arguments:
            config::str- JSON run configuration
            delta_sd::float- subsidy in multiples of sigma_phi
            lambda_grid::str- 'lo:hi:step' grid for the sweep
            weighting::str- 'accepted' or 'offers'
            lam::float- loss aversion for the single-scenario outputs
            output_dir::str- output directory
            threads::int- worker cap

        Returns:
            dict- written file paths
        """
        policy = {"delta_sd": delta_sd, "weighting": weighting,
                  "lambda_grid": None if lambda_grid is None else str(lambda_grid)}
        cfg = RunConfig.load(config, _overrides(threads=threads, output_dir=output_dir,
                                                params={"lambda": lam}, policy=policy))
        scenario = cfg.subsidy()
        outcome = passthrough(scenario, cfg.weighting())
        sweep = lambda_sweep(scenario.params, cfg.lambda_grid(), scenario.delta, cfg.weighting(),
                             cfg.threads)
        curve = passthrough_curve(scenario.params, scenario.delta)
        body = {"params": scenario.params.as_dict(), "delta": scenario.delta}
        body.update(outcome.to_dict())
        return {
            "outcome": write_json("policy_outcome", body, _path(cfg.output_dir, "subsidy.json")),
            "sweep": write_csv(sweep, _path(cfg.output_dir, "subsidy_sweep.csv")),
            "mechanism": write_csv(curve, _path(cfg.output_dir, "subsidy_mechanism.csv")),
        }

    def ban(self, config=None, eta_scale=None, eta_family=None, delta_sd=None, draws=None,
            weighting=None, lam=None, seed=None, output_dir=None, threads=None):
        """Salary-history ban: pass-through and realized growth with perception noise.

        Arguments:
            config::str- JSON run configuration
            eta_scale::float- perception noise scale, 0 for none
            eta_family::str- 'logistic' or 'normal'
            delta_sd::float- subsidy in multiples of sigma_phi
            draws::int- Monte Carlo draws
            weighting::str- 'accepted' or 'offers'
            lam::float- loss aversion override
            seed::int- run seed
            output_dir::str- output directory
            threads::int- worker cap

        Returns:
            dict- written file paths
        """
        policy = {"eta_scale": eta_scale, "eta_family": eta_family, "delta_sd": delta_sd,
                  "ban_draws": draws, "weighting": weighting}
        cfg = RunConfig.load(config, _overrides(seed=seed, threads=threads, output_dir=output_dir,
                                                params={"lambda": lam}, policy=policy))
        ban = cfg.ban()
        delta = cfg.subsidy().delta
        result = passthrough_ban(ban, delta, int(cfg["policy"]["ban_draws"]), cfg.seed,
                                 weighting=cfg.weighting(), threads=cfg.threads)
        body = {"params": ban.params.as_dict(), "delta": delta}
        body.update(result.outcome.to_dict())
        body["eta_scale"] = 0.0 if ban.eta is None else ban.eta.scale
        body["n_draws"] = result.n_draws
        growth = result.growth
        table = pd.DataFrame({"bin_mid": growth.grid.midpoints, "prop": growth.props})
        return {
            "outcome": write_json("ban_outcome", body, _path(cfg.output_dir, "ban.json")),
            "growth": write_csv(table, _path(cfg.output_dir, "ban_growth.csv")),
        }

    def vacancies(self, c=None, pbar=None, psi=None, wage_location=None, wage_scale=None,
                  config=None, lam=None):
        """Profit-maximizing vacancies pbar / (2c).

        Either pbar is given, or it is computed for match value psi over a
        logistic distribution of log current wages.

        Arguments:
            c::float- vacancy cost, defaults to the configured value
            pbar::float- expected profit per vacancy
            psi::float- log match value (when pbar is not given)
            wage_location::float- location of log current wages
            wage_scale::float- scale of log current wages
            config::str- JSON run configuration
            lam::float- loss aversion override

        Returns:
            float- optimal number of vacancies
        """
        cfg = RunConfig.load(config, _overrides(params={"lambda": lam},
                                                policy={"vacancy_cost": c}))
        cost = float(cfg["policy"]["vacancy_cost"])
        if pbar is None:
            if psi is None or wage_location is None or wage_scale is None:
                raise ValidationException(
                    "give --pbar, or --psi with --wage_location and --wage_scale")
            wages = HetFamily(Kind.LOGISTIC, wage_location, wage_scale)
            pbar = expected_vacancy_profit(cfg.model_params(), psi, wages)
        return optimal_vacancies(float(pbar), cost)


class SalaryMatch(object):
    """The CLI class. The class methods act as CLI commands.
    """

    def __init__(self):
        self.policy = Policy()

    def generate_config(self, path="salarymatch_config.json"):
        """Writes the default run configuration to path.

        Arguments:
            path::str- destination JSON file

        Returns:
            str- the path written
        """
        return generate_template(path)

    def simulate(self, config=None, n=None, lam=None, seed=None, record_rejected=None,
                 output_dir=None, threads=None):
        """Simulates offers and writes offers.csv, growth.csv and binned.csv.

        Arguments:
            config::str- JSON run configuration
            n::int- number of job seekers
            lam::float- loss aversion override
            seed::int- run seed
            record_rejected::bool- keep rejected offers in offers.csv
            output_dir::str- output directory
            threads::int- worker cap

        Returns:
            dict- written file paths
        """
        cfg = RunConfig.load(config, _overrides(
            seed=seed, threads=threads, output_dir=output_dir, params={"lambda": lam},
            simulate={"n_jobseekers": n, "record_rejected": record_rejected}))
        out = simulate(cfg.sim_config(), cfg.threads)
        offers = pd.DataFrame({"phi": out.phi, "eps": out.eps, "offer": out.offer,
                               "accepted": out.accepted.astype(int)})
        realized = out.realized
        binned = BinnedDistribution.from_values(realized, cfg.sim_grid())
        table = pd.DataFrame({"bin_mid": binned.grid.midpoints, "prop": binned.props,
                              "count": binned.counts})
        return {
            "offers": write_csv(offers, _path(cfg.output_dir, "offers.csv")),
            "growth": write_csv(pd.DataFrame({"growth": realized}),
                                _path(cfg.output_dir, "growth.csv")),
            "binned": write_csv(table, _path(cfg.output_dir, "binned.csv")),
        }

    def anomalies(self, input, config=None, degree=None, bandwidth=None, bootstrap=None,
                  range=None, width=None, resample=None, seed=None, output_dir=None, threads=None):
        """Bunching, discontinuity and curvature break with bootstrap standard errors.

        Arguments:
            input::str- CSV with a growth column or bin_mid,prop,count
            config::str- JSON run configuration
            degree::int- local polynomial degree (1 or 2)
            bandwidth::float or str- kernel bandwidth, or 'rot'
            bootstrap::int- bootstrap draws, 0 to skip standard errors
            range::float or str- fit range, symmetric or 'lo,hi'
            width::float- bin width for raw growth input
            resample::str- 'bins' or 'observations'
            seed::int- run seed
            output_dir::str- output directory
            threads::int- worker cap

        Returns:
            dict- written file paths and chosen bandwidths
        """
        kernel = {"degree": degree, "bandwidth": bandwidth, "bootstrap": bootstrap,
                  "width": width, "resample": resample}
        if range is not None and not isinstance(range, (tuple, list, str)):
            kernel["range"] = float(range)
        cfg = RunConfig.load(config, _overrides(seed=seed, threads=threads,
                                                output_dir=output_dir, kernel=kernel))
        section = cfg["kernel"]
        spec = cfg.kernel_spec()
        grid = cfg.kernel_grid()
        if range is not None:
            grid, fit_range = _range_grid(range, float(section["width"]))
            spec = KernelSpec(spec.degree, spec.bandwidth, fit_range)

        data, raw = read_distribution(input, grid)
        if raw is None and not data.grid.same_bins(grid) and range is not None:
            data = data.restrict(grid.lo, grid.hi)
        report = anomalies(data, spec)
        iterations = int(section["bootstrap"])
        if iterations > 0:
            source = data if raw is None else raw
            report = bootstrap_ses(source, spec, iterations, cfg.seed, grid=data.grid,
                                   resample=section["resample"], threads=cfg.threads)
        logger.info("bandwidths: %s", report.bandwidths)
        return {
            "report": write_json("anomaly_report", report.to_dict(),
                                 _path(cfg.output_dir, "anomalies.json")),
            "smoothed": write_csv(smoothed_table(data, spec),
                                  _path(cfg.output_dir, "anomalies_smoothed.csv")),
            "bandwidths": report.bandwidths,
        }

    def estimate(self, input, config=None, raw_props=False, family=None, optimal_weights=False,
                 range=None, width=None, include_zero_bin=False, restrict_lambda=False,
                 bootstrap=None, n_starts=None, seed=None, output_dir=None, threads=None):
        """Minimum-distance estimation of lambda, mu_phi and sigma_phi.

        The default fits both the behavioral and the lambda = 1 model and
        reports the QLR test; --restrict_lambda fits the standard model only.

        Arguments:
            input::str- CSV with a growth column or bin_mid,prop,count
            config::str- JSON run configuration
            raw_props::bool- match raw instead of kernel-smoothed proportions
            family::str- 'logistic' or 'normal'
            optimal_weights::bool- inverse-variance weights
            range::float- half-width of the estimation window
            width::float- bin width
            include_zero_bin::bool- keep the zero bin in the criterion
            restrict_lambda::bool- fit only the lambda = 1 model
            bootstrap::int- draws for the covariance of bin shares
            n_starts::int- number of multi-start points
            seed::int- run seed
            output_dir::str- output directory
            threads::int- worker cap

        Returns:
            dict- written file paths
        """
        estimate = {
            "empirical_source": "raw" if raw_props else None,
            "family": family,
            "weights": "optimal" if optimal_weights else None,
            "range": range,
            "width": width,
            "include_zero_bin": True if include_zero_bin else None,
            "restrict_lambda": True if restrict_lambda else None,
            "bootstrap": bootstrap,
            "n_starts": n_starts,
        }
        cfg = RunConfig.load(config, _overrides(seed=seed, threads=threads,
                                                output_dir=output_dir, estimate=estimate))
        spec = cfg.estimation_spec()
        section = cfg["estimate"]
        data, _ = read_distribution(input, spec.grid.with_zero_bin(True), spec.grid.include_zero_bin)
        data = align(data, spec.grid)
        iterations = int(section["bootstrap"])
        starts = int(section["n_starts"])
        start = cfg.model_params()

        if spec.restrict_lambda_to_one:
            covariance = bootstrap_cov(data, iterations=iterations, seed=cfg.seed,
                                       threads=cfg.threads)
            standard = fit(data, spec, start, covariance, cfg.threads, starts, iterations)
            behavioral = None
            body = {"standard": standard.to_dict()}
        else:
            behavioral, standard = fit_both(data, spec, start, iterations, cfg.seed, cfg.threads,
                                            starts)
            body = {
                "behavioral": behavioral.to_dict(),
                "standard": standard.to_dict(),
                "qlr": {"chi2": behavioral.qlr_chi2, "critical": behavioral.qlr_critical,
                        "reject": behavioral.qlr_chi2 > behavioral.qlr_critical},
            }
        body["spec"] = {
            "weights": spec.weights, "family": spec.het_family,
            "empirical_source": spec.empirical_source, "range": spec.grid.hi,
            "width": spec.grid.width, "include_zero_bin": spec.grid.include_zero_bin,
            "mu_eps": spec.mu_eps, "sigma_eps": spec.sigma_eps,
        }
        return {
            "result": write_json("estimation_result", body, _path(cfg.output_dir, "estimate.json")),
            "fit": write_csv(fit_table(behavioral, standard), _path(cfg.output_dir, "estimate_fit.csv")),
        }

    def placebo(self, input, mode="conditional", n=None, min_salary=None, max_salary=None,
                seed=None, output_dir=None, threads=None):
        """Rounded-salary placebo: growth between resampled previous and new salaries.

        Arguments:
            input::str- CSV with prev_salary,new_salary or raw earnings and months
            mode::str- 'independent' or 'conditional'
            n::int- resampled pairs, defaults to the number of switchers
            min_salary::float- exclusive lower salary bound
            max_salary::float- exclusive upper salary bound
            seed::int- run seed
            output_dir::str- output directory
            threads::int- worker cap

        Returns:
            dict- written file paths
        """
        cfg = RunConfig.load(None, _overrides(seed=seed, threads=threads, output_dir=output_dir))
        sample = SampleFilter(min_salary or 0.0, max_salary)
        frame = read_salaries(input, sample)
        prev, new = frame["prev_salary"].to_numpy(), frame["new_salary"].to_numpy()
        draws = len(frame) if n is None else int(n)
        if mode == "independent":
            dist = placebo_independent(prev, new, draws, cfg.seed, PLACEBO_GRID, cfg.threads)
        elif mode == "conditional":
            dist = placebo_conditional(prev, new, n=draws, seed=cfg.seed, grid=PLACEBO_GRID,
                                       threads=cfg.threads)
        else:
            raise ValidationException(f"mode must be 'independent' or 'conditional', got {mode!r}")
        table = pd.DataFrame({"bin_mid": dist.grid.midpoints, "prop": dist.props,
                              "count": dist.counts})
        return {"binned": write_csv(table, _path(cfg.output_dir, f"placebo_{mode}.csv"))}

    def bargain(self, beta, lam, eps, phi):
        """Nash-bargained wage change for one worker-firm pair.

        Arguments:
            beta::float- worker bargaining power in (0, 1)
            lam::float- loss aversion
            eps::float- amenity value
            phi::float- productivity relative to the current wage

        Returns:
            dict- region, status, wage change and d(cut)/d(lambda) where defined
        """
        inp = BargainInput(beta, lam, eps, phi)
        outcome = nash_wage(inp)
        try:
            slope = dcut_dlambda(inp)
        except UndefinedDerivativeException:
            slope = None
        lo, hi = inp.match_interval
        return {
            "region": bargain_region(inp).value,
            "status": outcome.status.value,
            "r": outcome.r,
            "match_interval": [lo, hi],
            "dcut_dlambda": slope,
        }


def _log_level(argv):
    level = logging.INFO
    rest = []
    for arg in argv:
        if arg in ("--verbose", "-v"):
            level = logging.DEBUG
        elif arg in ("--quiet", "-q"):
            level = logging.WARNING
        else:
            rest.append(arg)
    return level, rest


def main(argv=None):
    """Runs the CLI and returns the process exit code (2 invalid input, 3 numerical failure)."""
    level, argv = _log_level(sys.argv[1:] if argv is None else list(argv))
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        fire.Fire(SalaryMatch, command=argv)
    except ValidationException as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalException as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == '__main__':
    sys.exit(main())

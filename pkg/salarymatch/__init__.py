from .checks import NumericalException, SalaryMatchException, ValidationException
from .dist import HetFamily, Kind
from .model import ModelParams, optimal_offer, salary_match_wedge
from .bargain import BargainInput, nash_wage
from .binprob import BinGrid, BinnedDistribution, predicted_anomalies, predicted_props
from .simulate import SimConfig, simulate
from .anomaly import AnomalyReport, KernelSpec, anomalies, bootstrap_ses
from .estimate import EstimationSpec, fit, fit_both
from .policy import BanScenario, SubsidyScenario, offer_mix, passthrough, passthrough_ban
from .output import FORMAT_VERSION

__version__ = "0.1.0"
format_version = FORMAT_VERSION

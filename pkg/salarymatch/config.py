"""Run configuration: packaged defaults, a JSON file and command-line overrides.

Precedence is command line > file > packaged defaults. Every level is
checked against the packaged template, so a misspelled key is an error rather
than a silently ignored setting.
"""
import copy
import json
import logging
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .anomaly import KernelSpec
from .binprob import BinGrid
from .checks import check_positive, ConfigException, ValidationException
from .dist import HetFamily, Kind
from .estimate import EmpiricalSource, EstimationSpec, Weights
from .model import ModelParams, with_option_value
from .output import FORMAT_VERSION
from .policy import BanScenario, SubsidyScenario, Weighting
from .simulate import SimConfig

logger = logging.getLogger(__name__)

TEMPLATE = "config.json"


def template_text():
    """The packaged default configuration as text."""
    return resources.files("salarymatch").joinpath("template_files", TEMPLATE).read_text(
        encoding="utf-8")


def generate_template(path):
    """Writes the packaged default configuration to path.

    Arguments:
        path::str- destination file, must not exist yet

    Returns:
        str- the path written
    """
    if os.path.exists(path):
        raise ConfigException(f"'{path}' already exists, choose a different file name")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(template_text())
    return path


def _merge(base, update, where="config"):
    # recursive merge that rejects keys the template does not define
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigException(f"unknown key '{key}' in {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigException(f"'{key}' in {where} must be an object")
            out[key] = _merge(base[key], value, f"{where}.{key}")
        else:
            out[key] = value
    return out


def parse_grid(spec):
    """Loss-aversion grid from 'lo:hi:step' (both ends included) or a list of values."""
    if isinstance(spec, (list, tuple)):
        values = np.asarray(spec, dtype=float)
    else:
        try:
            lo, hi, step = (float(part) for part in str(spec).split(":"))
        except ValueError:
            raise ConfigException(f"grid must look like 'lo:hi:step', got {spec!r}")
        check_positive("grid step", step)
        if hi < lo:
            raise ConfigException(f"grid upper end {hi} is below its lower end {lo}")
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        values = lo + step * np.arange(n)
    if values.size == 0:
        raise ConfigException("grid is empty")
    return values


def symmetric_grid(fit_range, width, include_zero_bin=True):
    """BinGrid with midpoints from -fit_range to fit_range on the width lattice."""
    check_positive("width", width)
    check_positive("range", fit_range)
    k = int(np.floor(fit_range / width + 1e-9))
    return BinGrid(-k * width, k * width, width, include_zero_bin)


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one command run, with builders for the domain objects."""
    values: dict

    @classmethod
    def defaults(cls):
        return cls(json.loads(template_text()))

    @classmethod
    def load(cls, path=None, overrides=None):
        """Defaults, then the JSON file at path, then the overrides.

        Arguments:
            path::str- JSON configuration file, optional
            overrides::dict- nested {section: {key: value}} from the command line

        Returns:
            RunConfig- merged and validated configuration
        """
        values = json.loads(template_text())
        if path is not None:
            if not os.path.isfile(path):
                raise ConfigException(f"configuration file {path} does not exist")
            try:
                with open(path, "r", encoding="utf-8") as handle:
                    from_file = json.load(handle)
            except json.JSONDecodeError as err:
                raise ConfigException(f"{path} is not valid JSON: {err}")
            if not isinstance(from_file, dict):
                raise ConfigException(f"{path} must hold a JSON object")
            values = _merge(values, from_file, where=os.path.basename(path))
        if overrides:
            values = _merge(values, overrides, where="command line")
        config = cls(values)
        config.validate()
        return config

    def __getitem__(self, section):
        return self.values[section]

    @property
    def seed(self):
        return int(self.values["seed"])

    @property
    def threads(self):
        threads = self.values["threads"]
        return None if threads is None else int(threads)

    @property
    def output_dir(self):
        return self.values["output_dir"]

    def validate(self):
        """Builds every domain object once so bad values fail before any work starts."""
        if self.values["format_version"] != FORMAT_VERSION:
            raise ConfigException(
                f"format_version {self.values['format_version']} is not {FORMAT_VERSION}")
        source = self.values["input"]
        if source is not None and not os.path.isfile(source):
            raise ConfigException(f"input file {source} does not exist")
        try:
            self.sim_config()
            self.kernel_spec()
            self.estimation_spec()
            self.subsidy()
            self.ban()
            self.lambda_grid()
        except ValidationException:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigException(f"invalid configuration value: {err}")
        logger.debug("configuration validated")

    def model_params(self):
        section = self.values["params"]
        p = ModelParams.from_values(section["lambda"], section["mu_phi"], section["sigma_phi"],
                                    section["mu_eps"], section["sigma_eps"], Kind(section["family"]))
        if section["option_value"]:
            p = with_option_value(p, float(section["option_value"]))
        return p

    def sim_config(self):
        section = self.values["simulate"]
        return SimConfig(self.model_params(), int(section["n_jobseekers"]), self.seed,
                         bool(section["record_rejected"]), int(section["chunk_size"]))

    def sim_grid(self):
        section = self.values["simulate"]
        return symmetric_grid(section["range"], section["width"])

    def kernel_spec(self):
        section = self.values["kernel"]
        return KernelSpec(int(section["degree"]), section["bandwidth"], float(section["range"]))

    def kernel_grid(self):
        section = self.values["kernel"]
        return symmetric_grid(section["range"], section["width"])

    def estimation_spec(self):
        section = self.values["estimate"]
        return EstimationSpec(
            grid=symmetric_grid(section["range"], section["width"],
                                bool(section["include_zero_bin"])),
            weights=Weights(section["weights"]),
            het_family=Kind(section["family"]),
            empirical_source=EmpiricalSource(section["empirical_source"]),
            mu_eps=self.model_params().eps.location,
            sigma_eps=float(self.values["params"]["sigma_eps"]),
            restrict_lambda_to_one=bool(section["restrict_lambda"]),
            kernel=self.kernel_spec(),
        )

    def subsidy(self):
        return SubsidyScenario.from_sd(self.model_params(), float(self.values["policy"]["delta_sd"]))

    def ban(self):
        section = self.values["policy"]
        eta = None
        if float(section["eta_scale"]) > 0:
            eta = HetFamily(Kind(section["eta_family"]), 0.0, float(section["eta_scale"]))
        return BanScenario(self.model_params(), eta)

    def weighting(self):
        return Weighting(self.values["policy"]["weighting"])

    def lambda_grid(self):
        return parse_grid(self.values["policy"]["lambda_grid"])

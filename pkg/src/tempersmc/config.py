"""Run configuration: schema, validation, defaults, and target assembly.

A run config is a JSON object selecting exactly one forward model and
one mode, plus the prior set, likelihood terms, and sampler settings.
Omitted sampler fields fall back to the package defaults (2000
particles, increment floor 0.1, ESS threshold N/2, checkpoint spacing
7, 200 histogram bins, 1000 calibration sets at the 0.975 quantile,
update cap 100).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .likelihood import IndicatorTerm, TruncNormalTerm
from .forward_model import toy_generate_data
from .param_space import ParamSpace, load_preset, space_from_entries
from .smc import SMCSettings
from .targets import (
    FAILURE_ZERO_LIKELIHOOD,
    ExternalTarget,
    SyntheticTarget,
    ToyPosterior,
)

MODES = ("smc", "mcmc", "threshold_calibration")
MODELS = ("toy", "synthetic_multi_era", "external")

REQUIRED_FIELDS = ("mode", "model", "seed")

# hand-tuned to 20-40% acceptance on the simulated example posterior
TOY_MCMC_SCALES = (0.4, 0.25, 0.15, 0.045)

DEFAULT_TOY_DATA = {"n": 300, "theta_true": 1.7, "sigma2_eps": 0.5, "seed": 7}

# scalar records for the multi-era composite likelihood; observations sit
# mid-range for the synthetic stand-in, windows and sds are config fields
DEFAULT_TRUNC_NORMAL_TERMS = (
    {"name": "sle_plio", "obs": 14.0, "sd": 30.0, "half_width": 10.0},
    {"name": "sle_lig", "obs": 5.0, "sd": 10.0, "half_width": 2.0},
    {"name": "sle_lgm", "obs": -9.0, "sd": 20.0, "half_width": 5.0},
    {"name": "volume", "obs": 24.0e6, "sd": 4.0e7, "half_width": 2.5e15},
    {"name": "grounded_area", "obs": 11.0e6, "sd": 774596.6692414834, "half_width": 1.5e12},
)
DEFAULT_INDICATOR = {
    "obs_bits": [1] * 10,
    "location_ids": [f"s{i:02d}" for i in range(1, 11)],
}


@dataclass
class RunConfig:
    mode: str
    model: str
    seed: int
    priors: object = "toy"
    output_dir: str | None = None
    workers: int | None = None
    data: dict = field(default_factory=dict)
    likelihood: dict = field(default_factory=dict)
    smc: dict = field(default_factory=dict)
    mcmc: dict = field(default_factory=dict)
    external: dict = field(default_factory=dict)

    # -- assembly -------------------------------------------------------------

    def build_space(self) -> ParamSpace:
        if isinstance(self.priors, str):
            return load_preset(self.priors)
        return space_from_entries(self.priors)

    def toy_dataset(self):
        params = {**DEFAULT_TOY_DATA, **self.data}
        rng = np.random.default_rng(params["seed"])
        return toy_generate_data(
            params["n"], params["theta_true"], params["sigma2_eps"], rng
        )

    def likelihood_terms(self):
        entries = self.likelihood.get("trunc_normal_terms")
        if entries is None:
            entries = [dict(t) for t in DEFAULT_TRUNC_NORMAL_TERMS]
        terms = tuple(
            TruncNormalTerm(
                name=e["name"], obs=e["obs"], sd=e["sd"], half_width=e["half_width"]
            )
            for e in entries
        )
        ind = self.likelihood.get("indicator", DEFAULT_INDICATOR)
        indicator = (
            None
            if ind is None
            else IndicatorTerm(
                obs_bits=tuple(ind["obs_bits"]),
                location_ids=tuple(ind["location_ids"]),
            )
        )
        return terms, indicator

    def smc_settings(self) -> SMCSettings:
        params = dict(self.smc)
        metric = params.pop("metric", None)
        if metric is None:
            metric = 0 if self.model == "toy" else "sle_2100"
        kwargs = {
            "n_particles": params.pop("n_particles", 2000),
            "gamma_min": params.pop("gamma_min", 0.1),
            "ess_thresh": params.pop("ess_thresh", None),
            "k": params.pop("k", 7),
            "bins": params.pop("bins", 200),
            "threshold_samples": params.pop("threshold_samples", 1000),
            "threshold_quantile": params.pop("threshold_quantile", 0.975),
            "epsilon": params.pop("epsilon", None),
            "max_updates": params.pop("max_updates", 100),
        }
        if params:
            raise ConfigurationError(f"unknown smc fields: {sorted(params)}")
        try:
            return SMCSettings(
                metric=metric,
                workers=self.workers,
                max_failure_frac=self.external.get("max_failure_frac", 0.5),
                **kwargs,
            )
        except TypeError as exc:
            raise ConfigurationError(f"bad smc field type: {exc}") from None

    def mcmc_settings(self) -> dict:
        params = dict(self.mcmc)
        scales = params.pop("scales", None)
        if scales is None and self.model == "toy":
            scales = list(TOY_MCMC_SCALES)
        settings = {
            "iterations": params.pop("iterations", 100_000),
            "burn_in_frac": params.pop("burn_in_frac", 0.2),
            "scales": scales,
            "start": params.pop("start", None),
        }
        if params:
            raise ConfigurationError(f"unknown mcmc fields: {sorted(params)}")
        if settings["iterations"] < 0:
            raise ConfigurationError("mcmc.iterations must be >= 0")
        if not 0.0 <= settings["burn_in_frac"] < 1.0:
            raise ConfigurationError("mcmc.burn_in_frac must lie in [0, 1)")
        if settings["scales"] is None:
            raise ConfigurationError("mcmc.scales is required for this model")
        return settings

    def build_target(self, settings: SMCSettings | None = None):
        space = self.build_space()
        metric = settings.metric if settings is not None else self.smc_settings().metric
        if self.model == "toy":
            locations, observations = self.toy_dataset()
            return ToyPosterior(space, locations, observations, metric=metric)
        terms, indicator = self.likelihood_terms()
        if self.model == "synthetic_multi_era":
            return SyntheticTarget(space, terms, indicator, metric=metric)
        command = self.external.get("command")
        workdir_root = self.external.get("workdir_root")
        if workdir_root is None:
            workdir_root = (
                Path(self.output_dir) / "model_runs"
                if self.output_dir
                else Path("model_runs")
            )
        return ExternalTarget(
            space,
            terms,
            indicator,
            command=command,
            timeout=self.external.get("timeout", 600.0),
            workdir_root=workdir_root,
            failure_policy=self.external.get("failure_policy", FAILURE_ZERO_LIKELIHOOD),
            metric=metric,
        )


def _validate(raw: dict) -> list[str]:
    problems = []
    for name in REQUIRED_FIELDS:
        if name not in raw:
            problems.append(f"missing required field {name!r}")
    if problems:
        return problems
    if raw["mode"] not in MODES:
        problems.append(f"mode must be one of {MODES}, got {raw['mode']!r}")
    if raw["model"] not in MODELS:
        problems.append(f"model must be one of {MODELS}, got {raw['model']!r}")
    if not isinstance(raw["seed"], int) or raw["seed"] < 0:
        problems.append("seed must be a non-negative integer")
    workers = raw.get("workers")
    if workers is not None and (not isinstance(workers, int) or workers < 1):
        problems.append("workers must be a positive integer or null")
    smc = raw.get("smc", {})
    if not isinstance(smc, dict):
        problems.append("smc must be an object")
        smc = {}
    n = smc.get("n_particles", 2000)
    if not isinstance(n, int) or n < 2:
        problems.append("smc.n_particles must be an integer >= 2")
        n = 2000
    gamma_min = smc.get("gamma_min", 0.1)
    if not isinstance(gamma_min, (int, float)) or not 0.0 < gamma_min < 1.0:
        problems.append("smc.gamma_min must lie in (0, 1)")
    ess = smc.get("ess_thresh")
    if ess is not None and (
        not isinstance(ess, (int, float)) or not 1.0 < ess <= n
    ):
        problems.append("smc.ess_thresh must lie in (1, n_particles]")
    if raw["model"] == "external":
        command = raw.get("external", {}).get("command")
        if not command or not isinstance(command, list):
            problems.append("external.command must be a non-empty argument list")
    if raw["model"] == "toy":
        data = raw.get("data", {})
        if not isinstance(data, dict):
            problems.append("data must be an object")
        else:
            unknown = set(data) - set(DEFAULT_TOY_DATA)
            if unknown:
                problems.append(f"unknown data fields: {sorted(unknown)}")
    known = {
        "mode", "model", "seed", "priors", "output_dir", "workers",
        "data", "likelihood", "smc", "mcmc", "external",
    }
    unknown = set(raw) - known
    if unknown:
        problems.append(f"unknown top-level fields: {sorted(unknown)}")
    return problems


def config_from_dict(raw: dict) -> RunConfig:
    problems = _validate(raw)
    if problems:
        raise ConfigurationError("; ".join(problems))
    config = RunConfig(
        mode=raw["mode"],
        model=raw["model"],
        seed=raw["seed"],
        priors=raw.get("priors", "toy"),
        output_dir=raw.get("output_dir"),
        workers=raw.get("workers"),
        data=raw.get("data", {}),
        likelihood=raw.get("likelihood", {}),
        smc=raw.get("smc", {}),
        mcmc=raw.get("mcmc", {}),
        external=raw.get("external", {}),
    )
    # fail fast on anything the dataclasses would reject at run time
    config.build_space()
    config.smc_settings()
    if config.mode == "mcmc":
        config.mcmc_settings()
    if config.model in ("synthetic_multi_era", "external"):
        config.likelihood_terms()
    return config


def load_config(path) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no such config file: {path}")
    text = path.read_text()
    if not text.strip():
        raise ConfigurationError(
            f"{path} is empty; required fields: {', '.join(REQUIRED_FIELDS)}"
        )
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path} must contain a JSON object")
    return config_from_dict(raw)

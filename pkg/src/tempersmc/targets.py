"""Calibration targets: parameter space + forward model + likelihood.

A target bundles everything the samplers need per parameter vector: the
prior density, one log-likelihood evaluation (usually one forward-model
run), and the scalar stopping metric tracked across mutation
checkpoints. Targets count their model evaluations and failures behind
a lock so concurrent workers can share them.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, ContractError, ModelRunError
from .forward_model import external_model_eval, synthetic_multi_era_eval, toy_eval_many
from .likelihood import gp_marginal_loglik, log_likelihood_composite
from .param_space import ParamSpace

FAILURE_ZERO_LIKELIHOOD = "zero_likelihood"
FAILURE_ABORT = "abort"


class EvalContext(NamedTuple):
    """Identity of one evaluation, used for workdir isolation."""

    run_id: str
    cycle: int
    particle: int
    proposal_index: int = 0


@dataclass
class EvalResult:
    log_lik: float
    metric: float
    failed: bool = False


def _metric_from_output(metric, theta, output):
    if isinstance(metric, int):
        return float(theta[metric])
    if output is None:
        raise ContractError(f"metric {metric!r} needs a model output")
    if output.projections and metric in output.projections:
        return output.projections[metric]
    if metric in output.scalars:
        return output.scalars[metric]
    raise ContractError(f"model output has no projection or scalar named {metric!r}")


def _check_metric(metric, space: ParamSpace, allow_names: bool):
    if isinstance(metric, int):
        if not 0 <= metric < space.dim:
            raise ConfigurationError(
                f"metric parameter index {metric} out of range for dimension {space.dim}"
            )
    elif isinstance(metric, str):
        if not allow_names:
            raise ConfigurationError(
                f"this model has no named outputs; use a parameter index, got {metric!r}"
            )
    else:
        raise ConfigurationError(f"metric must be an index or output name, got {metric!r}")


class _CountingTarget:
    """Shared bookkeeping: prior evaluation and thread-safe counters."""

    def __init__(self, space: ParamSpace):
        self.space = space
        self._lock = threading.Lock()
        self._eval_count = 0
        self._failure_count = 0

    @property
    def eval_count(self) -> int:
        return self._eval_count

    @property
    def failure_count(self) -> int:
        return self._failure_count

    def _count(self, failed=False):
        with self._lock:
            self._eval_count += 1
            if failed:
                self._failure_count += 1

    def log_prior(self, theta) -> float:
        return self.space.log_prior_density(theta)


class FunctionTarget(_CountingTarget):
    """Adapter for unit-cost analytic targets: log-likelihood from a function.

    Useful for verification runs where the forward model is replaced by a
    closed form. The stopping metric is a parameter index.
    """

    def __init__(self, space, log_lik_fn, metric=0):
        super().__init__(space)
        _check_metric(metric, space, allow_names=False)
        self.log_lik_fn = log_lik_fn
        self.metric = metric

    def evaluate(self, theta, ctx: EvalContext) -> EvalResult:
        theta = np.asarray(theta, dtype=float)
        log_lik = float(self.log_lik_fn(theta))
        self._count()
        return EvalResult(log_lik=log_lik, metric=float(theta[self.metric]))


class ToyPosterior(_CountingTarget):
    """Spatial-response target: GP-discrepancy marginal likelihood.

    theta = (model parameter, discrepancy range, discrepancy variance,
    noise variance), all on the identity transform. The pairwise
    distance matrix of the observation locations is precomputed once.
    """

    def __init__(self, space, locations, observations, metric=0):
        super().__init__(space)
        if space.dim != 4:
            raise ConfigurationError("toy posterior requires a 4-parameter space")
        _check_metric(metric, space, allow_names=False)
        from scipy.spatial.distance import cdist

        self.locations = np.asarray(locations, dtype=float)
        self.observations = np.asarray(observations, dtype=float)
        if self.locations.shape[0] != self.observations.shape[0]:
            raise ContractError("locations and observations disagree in length")
        self._distances = cdist(self.locations, self.locations)
        self.metric = metric

    def evaluate(self, theta, ctx: EvalContext) -> EvalResult:
        theta = np.asarray(theta, dtype=float)
        residuals = self.observations - toy_eval_many(self.locations, theta[0])
        log_lik = gp_marginal_loglik(
            residuals, self._distances, theta[1], theta[2], theta[3]
        )
        self._count()
        return EvalResult(log_lik=log_lik, metric=float(theta[self.metric]))


class SyntheticTarget(_CountingTarget):
    """Composite likelihood over the deterministic multi-era stand-in."""

    def __init__(self, space, terms, indicator, metric="sle_2100"):
        super().__init__(space)
        _check_metric(metric, space, allow_names=True)
        self.terms = tuple(terms)
        self.indicator = indicator
        self.metric = metric

    def evaluate(self, theta, ctx: EvalContext) -> EvalResult:
        output = synthetic_multi_era_eval(self.space, theta)
        log_lik = log_likelihood_composite(self.terms, self.indicator, output)
        self._count()
        return EvalResult(
            log_lik=log_lik, metric=_metric_from_output(self.metric, theta, output)
        )


class ExternalTarget(_CountingTarget):
    """Composite likelihood over an external simulator run per evaluation.

    Each evaluation gets its own working directory named by
    (run id, cycle, particle, proposal index). Failed runs either count
    as zero likelihood (default) or abort the run, per `failure_policy`.
    """

    def __init__(
        self,
        space,
        terms,
        indicator,
        command,
        timeout,
        workdir_root,
        failure_policy=FAILURE_ZERO_LIKELIHOOD,
        metric=0,
    ):
        super().__init__(space)
        if failure_policy not in (FAILURE_ZERO_LIKELIHOOD, FAILURE_ABORT):
            raise ConfigurationError(f"unknown failure policy {failure_policy!r}")
        _check_metric(metric, space, allow_names=True)
        self.command = list(command)
        self.timeout = float(timeout)
        self.workdir_root = Path(workdir_root)
        self.failure_policy = failure_policy
        self.terms = tuple(terms)
        self.indicator = indicator
        self.metric = metric

    def _workdir(self, ctx: EvalContext) -> Path:
        return (
            self.workdir_root
            / str(ctx.run_id)
            / f"c{ctx.cycle:04d}_p{ctx.particle:05d}_q{ctx.proposal_index:05d}"
        )

    def evaluate(self, theta, ctx: EvalContext) -> EvalResult:
        params = dict(zip(self.space.names, self.space.to_natural(theta)))
        try:
            output = external_model_eval(
                self.command, params, self.timeout, self._workdir(ctx)
            )
        except ModelRunError:
            self._count(failed=True)
            if self.failure_policy == FAILURE_ABORT:
                raise
            return EvalResult(log_lik=-math.inf, metric=math.nan, failed=True)
        log_lik = log_likelihood_composite(self.terms, self.indicator, output)
        self._count()
        return EvalResult(
            log_lik=log_lik, metric=_metric_from_output(self.metric, theta, output)
        )

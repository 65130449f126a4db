"""Log-likelihood building blocks.

Two observation models are provided:

* a composite of independent truncated normals (one per scalar record,
  each centered on the model output with a model-output-centered
  truncation window) times indicator terms for binary spatial
  observations, and
* the marginal likelihood of residuals under a zero-mean Gaussian
  process discrepancy with exponential covariance plus iid noise.

Tempering raises a likelihood to an exponent in [0, 1]; by convention
``L ** 0 == 1`` even where ``L == 0``, so zero-likelihood particles
survive only at exponent zero (the prior stage).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotrs
from scipy.spatial.distance import cdist
from scipy.stats import norm

from .errors import ConfigurationError, ContractError, NumericalError
from .forward_model import ModelOutput

_LOG_2PI = math.log(2.0 * math.pi)

# one diagonal jitter retry on factorization failure; the exponential
# kernel plus noise is PD in exact arithmetic, so a second failure means
# bad parameters rather than bad luck
_JITTER_FRACTION = 1e-10


@dataclass(frozen=True)
class TruncNormalTerm:
    """One scalar record compared against a named model output.

    The truncation window is centered on the model output:
    support is [mu - half_width, mu + half_width] with mu = Y(theta).
    """

    name: str
    obs: float
    sd: float
    half_width: float

    def __post_init__(self):
        if self.sd <= 0:
            raise ConfigurationError(f"{self.name}: sd must be > 0")
        if self.half_width <= 0:
            raise ConfigurationError(f"{self.name}: half_width must be > 0")


@dataclass(frozen=True)
class IndicatorTerm:
    """Binary presence observations at a fixed set of locations."""

    obs_bits: tuple
    location_ids: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.obs_bits)
        ids = tuple(self.location_ids)
        if len(bits) != 10 or len(ids) != 10:
            raise ConfigurationError("indicator term requires exactly 10 locations")
        if any(b not in (0, 1) for b in bits):
            raise ConfigurationError("indicator bits must be 0 or 1")
        object.__setattr__(self, "obs_bits", bits)
        object.__setattr__(self, "location_ids", ids)


@dataclass(eq=False)
class GPDiscrepancySpec:
    """Zero-mean GP discrepancy with exponential covariance plus iid noise.

    covariance(i, j) = variance * exp(-|s_i - s_j| / range_) + noise * 1[i == j]
    """

    locations: np.ndarray
    range_: float
    variance: float
    noise: float
    _distances: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
        if self.locations.ndim != 2 or self.locations.shape[0] < 1:
            raise ConfigurationError("locations must be an (n, 2) array with n >= 1")
        if self.range_ <= 0 or self.variance <= 0 or self.noise <= 0:
            raise ConfigurationError("range, variance and noise must all be > 0")

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    def distances(self) -> np.ndarray:
        if self._distances is None:
            self._distances = cdist(self.locations, self.locations)
        return self._distances


def log_trunc_normal(z, mu, sd, lower, upper) -> float:
    """Log density of a normal(mu, sd^2) truncated to [lower, upper]."""
    if sd <= 0:
        raise ConfigurationError("sd must be > 0")
    if lower >= upper:
        raise ConfigurationError(f"truncation requires lower < upper, got ({lower}, {upper})")
    if z < lower or z > upper:
        return -math.inf
    mass = norm.cdf((upper - mu) / sd) - norm.cdf((lower - mu) / sd)
    u = (z - mu) / sd
    return -0.5 * (u * u + _LOG_2PI) - math.log(sd) - math.log(mass)


def log_likelihood_composite(terms, indicator, model_out: ModelOutput) -> float:
    """Truncated-normal records plus indicator matches against one model run.

    Each scalar term contributes a truncated-normal log density centered
    on the matching model output; the indicator term contributes 0 when
    every bit matches and -inf otherwise.
    """
    total = 0.0
    for term in terms:
        if term.name not in model_out.scalars:
            raise ContractError(f"model output is missing scalar {term.name!r}")
        mu = model_out.scalars[term.name]
        value = log_trunc_normal(
            term.obs, mu, term.sd, mu - term.half_width, mu + term.half_width
        )
        if value == -math.inf:
            return -math.inf
        total += value
    if indicator is not None:
        if model_out.bits is None:
            raise ContractError("model output is missing spatial bits")
        if len(model_out.bits) != len(indicator.obs_bits):
            raise ContractError(
                f"model output has {len(model_out.bits)} bits, "
                f"expected {len(indicator.obs_bits)}"
            )
        if any(int(y) != b for y, b in zip(model_out.bits, indicator.obs_bits)):
            return -math.inf
    return total


def gp_marginal_loglik(residuals, distances, range_, variance, noise) -> float:
    """Gaussian log density of residuals under the discrepancy-plus-noise model.

    `distances` is the precomputed pairwise distance matrix of the
    observation locations; callers evaluating many parameter settings on
    fixed locations should reuse it.
    """
    residuals = np.asarray(residuals, dtype=float)
    n = residuals.shape[0]
    if distances.shape != (n, n):
        raise ContractError(
            f"distance matrix shape {distances.shape} does not match {n} residuals"
        )
    if not np.all(np.isfinite(residuals)):
        return -math.inf

    def build_cov(extra: float) -> np.ndarray:
        cov = np.multiply(distances, -1.0 / range_)
        np.exp(cov, out=cov)
        cov *= variance
        cov.flat[:: n + 1] += noise + extra
        return cov

    # the transpose view is Fortran-ordered, so LAPACK factors in place
    # without a copy; symmetry makes the view equal to the matrix itself
    factor, info = dpotrf(build_cov(0.0).T, lower=1, overwrite_a=1, clean=0)
    if info != 0:
        factor, info = dpotrf(
            build_cov(_JITTER_FRACTION * variance).T, lower=1, overwrite_a=1, clean=0
        )
        if info != 0:
            raise NumericalError(
                "covariance not positive definite after jitter "
                f"(range={range_}, variance={variance}, noise={noise})"
            )
    solution, _ = dpotrs(factor, residuals, lower=1)
    logdet = 2.0 * np.sum(np.log(np.diag(factor)))
    return float(-0.5 * (n * _LOG_2PI + logdet + residuals @ solution))


def log_likelihood_gp(residuals, spec: GPDiscrepancySpec) -> float:
    """Marginal GP log-likelihood of residuals under `spec`."""
    residuals = np.asarray(residuals, dtype=float)
    if residuals.shape != (spec.n,):
        raise ContractError(
            f"{residuals.shape[0] if residuals.ndim == 1 else residuals.shape} residuals "
            f"for {spec.n} locations"
        )
    return gp_marginal_loglik(
        residuals, spec.distances(), spec.range_, spec.variance, spec.noise
    )


def tempered_log_weight(log_lik: float, gamma: float) -> float:
    """gamma * log_lik with the L**0 == 1 convention at gamma == 0."""
    if not 0.0 <= gamma <= 1.0:
        raise ContractError(f"tempering exponent must be in [0, 1], got {gamma}")
    if gamma == 0.0:
        return 0.0
    return gamma * log_lik

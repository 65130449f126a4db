"""Parameter spaces: priors, transforms, sampling and density evaluation.

Every parameter carries a prior (uniform, log-uniform, normal or
inverse-gamma) and a coordinate transform. All sampler machinery
operates in *transformed* space: a log-uniform prior with base ``b``
becomes a flat distribution over its exponent range, so proposals and
credible intervals behave uniformly across orders of magnitude.
Forward models consume *natural* values, obtained with
:meth:`ParamSpace.to_natural`.

Supported pairings: bounded-exponent priors use the matching
``log_base(b)`` transform; uniform, normal and inverse-gamma priors use
the identity transform.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.special import gammaln

from .errors import ConfigurationError, ContractError

UNIFORM = "uniform"
LOG_UNIFORM = "log_uniform"
NORMAL = "normal"
INVERSE_GAMMA = "inverse_gamma"

PRIOR_KINDS = (UNIFORM, LOG_UNIFORM, NORMAL, INVERSE_GAMMA)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ParamSpec:
    """One calibrated parameter: prior, bounds and coordinate transform.

    prior_params by kind:
      uniform        -> (lower, upper)
      log_uniform    -> (base, lower_exp, upper_exp)
      normal         -> (mean, variance)
      inverse_gamma  -> (shape, scale)

    transform_base is None for the identity transform or the base ``b``
    of a log transform (natural value = b ** transformed value).
    Log-uniform priors always carry their own base as the transform.
    """

    name: str
    prior_kind: str
    prior_params: tuple
    transform_base: float | None = None

    def __post_init__(self):
        if self.prior_kind not in PRIOR_KINDS:
            raise ConfigurationError(
                f"{self.name}: unknown prior kind {self.prior_kind!r}"
            )
        params = tuple(float(p) for p in self.prior_params)
        object.__setattr__(self, "prior_params", params)
        if self.prior_kind == UNIFORM:
            lower, upper = self._expect_params(2)
            if not lower < upper:
                raise ConfigurationError(
                    f"{self.name}: uniform prior requires lower < upper, "
                    f"got ({lower}, {upper})"
                )
            self._require_identity()
        elif self.prior_kind == LOG_UNIFORM:
            base, lower, upper = self._expect_params(3)
            if base <= 0 or base == 1.0:
                raise ConfigurationError(
                    f"{self.name}: log-uniform base must be positive and != 1, got {base}"
                )
            if not lower < upper:
                raise ConfigurationError(
                    f"{self.name}: log-uniform prior requires lower < upper exponents, "
                    f"got ({lower}, {upper})"
                )
            if self.transform_base is None:
                object.__setattr__(self, "transform_base", base)
            elif float(self.transform_base) != base:
                raise ConfigurationError(
                    f"{self.name}: log-uniform prior with base {base} cannot use "
                    f"transform base {self.transform_base}"
                )
        elif self.prior_kind == NORMAL:
            _, variance = self._expect_params(2)
            if variance <= 0:
                raise ConfigurationError(f"{self.name}: normal variance must be > 0")
            self._require_identity()
        elif self.prior_kind == INVERSE_GAMMA:
            shape, scale = self._expect_params(2)
            if shape <= 0 or scale <= 0:
                raise ConfigurationError(
                    f"{self.name}: inverse-gamma shape and scale must be > 0"
                )
            self._require_identity()

    def _expect_params(self, n):
        if len(self.prior_params) != n:
            raise ConfigurationError(
                f"{self.name}: prior kind {self.prior_kind} takes {n} parameters, "
                f"got {len(self.prior_params)}"
            )
        return self.prior_params

    def _require_identity(self):
        if self.transform_base is not None:
            raise ConfigurationError(
                f"{self.name}: {self.prior_kind} priors use the identity transform"
            )

    # -- transformed-space support -------------------------------------------

    def bounds(self) -> tuple[float, float]:
        """Support interval in transformed space (may be infinite)."""
        if self.prior_kind == UNIFORM:
            return self.prior_params
        if self.prior_kind == LOG_UNIFORM:
            return self.prior_params[1], self.prior_params[2]
        if self.prior_kind == NORMAL:
            return -math.inf, math.inf
        return 0.0, math.inf  # inverse-gamma: positive half line, open at 0

    def sample(self, rng: np.random.Generator) -> float:
        if self.prior_kind == UNIFORM:
            lower, upper = self.prior_params
            return float(rng.uniform(lower, upper))
        if self.prior_kind == LOG_UNIFORM:
            _, lower, upper = self.prior_params
            return float(rng.uniform(lower, upper))
        if self.prior_kind == NORMAL:
            mean, variance = self.prior_params
            return float(rng.normal(mean, math.sqrt(variance)))
        shape, scale = self.prior_params
        # reciprocal of a gamma draw: X ~ IG(a, b)  <=>  1/X ~ Gamma(a, rate=b)
        return float(1.0 / rng.gamma(shape, 1.0 / scale))

    def log_density(self, x: float) -> float:
        """Log prior density at transformed coordinate x; -inf outside support."""
        if not np.isfinite(x):
            return -math.inf
        if self.prior_kind == UNIFORM:
            lower, upper = self.prior_params
            return -math.log(upper - lower) if lower <= x <= upper else -math.inf
        if self.prior_kind == LOG_UNIFORM:
            _, lower, upper = self.prior_params
            return -math.log(upper - lower) if lower <= x <= upper else -math.inf
        if self.prior_kind == NORMAL:
            mean, variance = self.prior_params
            return -0.5 * ((x - mean) ** 2 / variance + math.log(variance) + _LOG_2PI)
        shape, scale = self.prior_params
        if x <= 0:
            return -math.inf
        return (
            shape * math.log(scale)
            - gammaln(shape)
            - (shape + 1.0) * math.log(x)
            - scale / x
        )

    def to_natural(self, x: float) -> float:
        if self.transform_base is None:
            return x
        return float(self.transform_base) ** x

    def from_natural(self, value: float) -> float:
        if self.transform_base is None:
            return value
        if value <= 0:
            raise ContractError(
                f"{self.name}: natural value must be positive for a log transform"
            )
        return math.log(value) / math.log(float(self.transform_base))


class ParamSpace:
    """An ordered collection of ParamSpecs defining the calibration domain."""

    def __init__(self, specs):
        specs = tuple(specs)
        if not specs:
            raise ConfigurationError("parameter space needs at least one parameter")
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate parameter names in {names}")
        self.specs = specs
        self.names = tuple(names)
        self.dim = len(specs)

    def __len__(self):
        return self.dim

    def validate_vector(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ContractError(
                f"parameter vector has shape {theta.shape}, expected ({self.dim},)"
            )
        return theta

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        """One prior draw in transformed space."""
        return np.array([spec.sample(rng) for spec in self.specs])

    def log_prior_density(self, theta) -> float:
        """Sum of per-dimension log densities in transformed space."""
        theta = self.validate_vector(theta)
        total = 0.0
        for spec, x in zip(self.specs, theta):
            value = spec.log_density(float(x))
            if value == -math.inf:
                return -math.inf
            total += value
        return total

    def to_natural(self, theta) -> np.ndarray:
        theta = self.validate_vector(theta)
        return np.array([s.to_natural(float(x)) for s, x in zip(self.specs, theta)])

    def from_natural(self, values) -> np.ndarray:
        values = self.validate_vector(values)
        return np.array([s.from_natural(float(v)) for s, v in zip(self.specs, values)])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-dimension transformed-space support bounds."""
        lo, hi = zip(*(s.bounds() for s in self.specs))
        return np.array(lo), np.array(hi)

    def finite_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounds, requiring every dimension to be a finite interval."""
        lo, hi = self.bounds()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            unbounded = [
                self.names[i]
                for i in range(self.dim)
                if not (np.isfinite(lo[i]) and np.isfinite(hi[i]))
            ]
            raise ConfigurationError(
                f"parameters without finite prior bounds: {unbounded}"
            )
        return lo, hi

    def in_support(self, theta) -> bool:
        return self.log_prior_density(theta) > -math.inf

    def central_point(self) -> np.ndarray:
        """A deterministic in-support point (per-dimension prior center)."""
        values = []
        for spec in self.specs:
            if spec.prior_kind == UNIFORM:
                lower, upper = spec.prior_params
                values.append(0.5 * (lower + upper))
            elif spec.prior_kind == LOG_UNIFORM:
                _, lower, upper = spec.prior_params
                values.append(0.5 * (lower + upper))
            elif spec.prior_kind == NORMAL:
                values.append(spec.prior_params[0])
            else:
                shape, scale = spec.prior_params
                values.append(scale / (shape - 1.0) if shape > 1.0 else scale)
        return np.array(values)


# -- preset spaces -------------------------------------------------------------


def _spec_from_dict(entry: dict) -> ParamSpec:
    try:
        name = entry["name"]
        kind = entry["prior_kind"]
    except KeyError as missing:
        raise ConfigurationError(f"prior entry missing field {missing}") from None
    try:
        if kind == UNIFORM:
            params = (entry["lower"], entry["upper"])
        elif kind == LOG_UNIFORM:
            params = (entry["base"], entry["lower"], entry["upper"])
        elif kind == NORMAL:
            params = (entry["mean"], entry["variance"])
        elif kind == INVERSE_GAMMA:
            params = (entry["shape"], entry["scale"])
        else:
            raise ConfigurationError(f"{name}: unknown prior kind {kind!r}")
    except KeyError as missing:
        raise ConfigurationError(f"prior {name!r} ({kind}) missing field {missing}") from None
    return ParamSpec(name=name, prior_kind=kind, prior_params=params)


def space_from_entries(entries) -> ParamSpace:
    """Build a ParamSpace from a list of prior dictionaries (config schema)."""
    return ParamSpace([_spec_from_dict(e) for e in entries])


def available_presets() -> tuple[str, ...]:
    files = resources.files(__package__).joinpath("presets")
    return tuple(
        sorted(p.name[: -len(".json")] for p in files.iterdir() if p.name.endswith(".json"))
    )


def load_preset(name: str) -> ParamSpace:
    """Load one of the packaged prior presets by name."""
    ref = resources.files(__package__).joinpath("presets", f"{name}.json")
    try:
        payload = json.loads(ref.read_text())
    except FileNotFoundError:
        raise ConfigurationError(
            f"unknown prior preset {name!r}; available: {available_presets()}"
        ) from None
    return space_from_entries(payload["params"])

"""Adaptive tempered sequential Monte Carlo for computer-model calibration.

The package couples a particle sampler with pluggable forward models:
prior draws are pushed toward the posterior through adaptively chosen
likelihood-tempering increments, multinomial resampling, and
Metropolis-Hastings mutation with a histogram-distance stopping rule.
A standalone random-walk MCMC kernel doubles as the verification
oracle.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    config,
    diagnostics,
    forward_model,
    likelihood,
    mcmc,
    param_space,
    parallel,
    smc,
    snapshots,
    targets,
)
from .errors import (  # noqa: F401
    ConfigurationError,
    ContractError,
    DegenerateSwarmError,
    ModelFailureStormError,
    NumericalError,
    TemperSMCError,
)

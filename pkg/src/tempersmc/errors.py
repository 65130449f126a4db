"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, a degenerate swarm with 3, a model-failure storm with 4.
"""


class TemperSMCError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TemperSMCError):
    """Invalid user-supplied configuration (bad prior bounds, bad config file)."""


class ContractError(TemperSMCError):
    """A caller violated a documented precondition (dimension mismatch, bad range)."""


class NumericalError(TemperSMCError):
    """A numerical routine failed irrecoverably (e.g. covariance not positive definite)."""


class DegenerateSwarmError(TemperSMCError):
    """The particle swarm carries no usable likelihood information."""


class ModelFailureStormError(TemperSMCError):
    """Too large a fraction of forward-model runs failed in one wave."""


class ModelRunError(TemperSMCError):
    """Base class for failures of a single external forward-model run."""


class ModelFailureError(ModelRunError):
    """The external model exited with a nonzero status."""

    def __init__(self, returncode, stderr_tail=""):
        self.returncode = returncode
        self.stderr_tail = stderr_tail
        super().__init__(f"model process exited with status {returncode}: {stderr_tail}")


class ModelTimeoutError(ModelRunError):
    """The external model exceeded its wall-clock budget."""


class ModelParseError(ModelRunError):
    """The external model produced missing or ill-formed output."""

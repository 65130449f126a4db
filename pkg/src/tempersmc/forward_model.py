"""Forward models behind a single evaluation interface.

Three models are supplied:

* ``toy_eval`` / ``toy_generate_data``: a closed-form spatial response
  surface with a known discrepancy, used for oracle verification.
* ``synthetic_multi_era_eval``: a deterministic stand-in with the output
  signature of a multi-era ice-sheet simulation (scalar records, 10
  presence bits, sea-level projections), so the full composite
  likelihood machinery can run without a physical simulator.
* ``external_model_eval``: a subprocess client for real simulators,
  exchanging ``params.txt`` / ``output.json`` files in an isolated
  working directory per evaluation.
"""

from __future__ import annotations

import json
import math
import os
import signal
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ContractError,
    ModelFailureError,
    ModelParseError,
    ModelTimeoutError,
    TemperSMCError,
)

PARAMS_FILENAME = "params.txt"
OUTPUT_FILENAME = "output.json"

SYNTHETIC_SCALARS = ("sle_plio", "sle_lig", "sle_lgm", "volume", "grounded_area")
SYNTHETIC_PROJECTIONS = ("sle_2100", "sle_2300", "sle_2500")

# a synthetic presence bit flips off once its parameter sits in the top
# tenth of its prior range
_BIT_THRESHOLD = 0.9
_N_BITS = 10


class DomainError(TemperSMCError):
    """Parameter vector outside the model's declared domain."""


@dataclass
class ModelOutput:
    """Named outputs of one forward-model run."""

    scalars: dict
    bits: tuple | None = None
    projections: dict | None = None
    field: np.ndarray | None = None

    def __post_init__(self):
        self.scalars = {str(k): float(v) for k, v in (self.scalars or {}).items()}
        if self.bits is not None:
            self.bits = tuple(int(b) for b in self.bits)
        self.projections = {
            str(k): float(v) for k, v in (self.projections or {}).items()
        }


# -- closed-form spatial model -------------------------------------------------


def toy_eval(s, theta: float) -> float:
    """Response surface 5 * exp(-theta * lat * lon) at one location."""
    lat, lon = float(s[0]), float(s[1])
    if not (0.0 <= lat <= 1.0 and 0.0 <= lon <= 1.0):
        raise ContractError(f"location {s} outside the unit square")
    return 5.0 * math.exp(-theta * lat * lon)


def toy_eval_many(locations, theta: float) -> np.ndarray:
    """Vectorized response surface over an (n, 2) array of locations."""
    locations = np.asarray(locations, dtype=float)
    prod = locations[:, 0] * locations[:, 1]
    with np.errstate(over="ignore"):
        return 5.0 * np.exp(-theta * prod)


def toy_discrepancy(locations) -> np.ndarray:
    """True systematic data-model discrepancy of the simulated example."""
    locations = np.asarray(locations, dtype=float)
    return -1.5 * locations[:, 0] * locations[:, 1]


def toy_generate_data(n, theta_true, sigma2_eps, rng):
    """Simulate `n` observations: response plus discrepancy plus iid noise.

    Returns (locations, observations); locations are uniform over the
    unit square. Reproducible given the generator state.
    """
    if n < 1:
        raise ContractError("n must be >= 1")
    locations = rng.random((n, 2))
    z = toy_eval_many(locations, theta_true) + toy_discrepancy(locations)
    if sigma2_eps > 0:
        z = z + rng.normal(0.0, math.sqrt(sigma2_eps), n)
    return locations, z


# -- synthetic multi-era model ---------------------------------------------------


def synthetic_multi_era_eval(space, theta) -> ModelOutput:
    """Deterministic multi-era stand-in over an 11-parameter bounded space.

    With u_j the normalized position of theta_j inside its transformed
    prior range and u_bar their mean: the scalar records move linearly in
    u_bar, the ten presence bits are 1 iff u_j < 0.9 (first ten
    parameters), and projections scale with u_bar. Continuous in theta
    except for the bits.
    """
    theta = space.validate_vector(theta)
    if not space.in_support(theta):
        raise DomainError("theta outside prior support")
    lo, hi = space.finite_bounds()
    u = (theta - lo) / (hi - lo)
    u_bar = float(np.mean(u))
    scalars = {
        "sle_plio": 5.0 + 20.0 * u_bar,
        "sle_lig": 3.5 + 4.0 * u_bar,
        "sle_lgm": -5.0 - 10.0 * u_bar,
        "volume": (26.0 - 4.0 * u_bar) * 1e6,
        "grounded_area": (12.0 - 2.0 * u_bar) * 1e6,
    }
    if space.dim < _N_BITS:
        raise ContractError(
            f"synthetic model needs at least {_N_BITS} parameters, got {space.dim}"
        )
    bits = tuple(int(u[j] < _BIT_THRESHOLD) for j in range(_N_BITS))
    projections = {
        "sle_2100": 2.0 * u_bar,
        "sle_2300": 10.0 * u_bar,
        "sle_2500": 16.0 * u_bar,
    }
    return ModelOutput(scalars=scalars, bits=bits, projections=projections)


# -- external-process client ----------------------------------------------------


def write_params_file(path: Path, params: dict) -> None:
    """Write name=value lines with full double precision."""
    lines = [f"{name}={value:.17g}" for name, value in params.items()]
    path.write_text("\n".join(lines) + "\n")


def _parse_output(path: Path) -> ModelOutput:
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise ModelParseError(f"model produced no {OUTPUT_FILENAME} in {path.parent}") from None
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"ill-formed {OUTPUT_FILENAME}: {exc}") from None
    if not isinstance(payload, dict) or "scalars" not in payload:
        raise ModelParseError(f"{OUTPUT_FILENAME} must be an object with a 'scalars' key")
    scalars = payload["scalars"]
    if not isinstance(scalars, dict):
        raise ModelParseError("'scalars' must map names to numbers")
    bits = payload.get("bits")
    if bits is not None:
        if not isinstance(bits, list) or len(bits) != _N_BITS or any(
            b not in (0, 1) for b in bits
        ):
            raise ModelParseError(f"'bits' must be an array of {_N_BITS} integers in {{0, 1}}")
    projections = payload.get("projections") or {}
    if not isinstance(projections, dict):
        raise ModelParseError("'projections' must map names to numbers")
    try:
        return ModelOutput(scalars=scalars, bits=bits, projections=projections)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"non-numeric model output: {exc}") from None


def external_model_eval(command, params: dict, timeout: float, workdir) -> ModelOutput:
    """Run one external simulation in `workdir` and parse its output.

    `command` is a sequence of argument strings; any ``{workdir}``
    placeholder is substituted, and the workdir is appended as a final
    argument when no placeholder appears. Parameters are written to
    ``params.txt`` (natural space, name=value lines) before launch; the
    process runs in its own session so a timeout can kill the whole
    process group, leaving no orphans.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    write_params_file(workdir / PARAMS_FILENAME, params)

    argv = [str(arg).replace("{workdir}", str(workdir)) for arg in command]
    if not any("{workdir}" in str(arg) for arg in command):
        argv.append(str(workdir))

    proc = subprocess.Popen(
        argv,
        cwd=workdir,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.PIPE,
        start_new_session=True,
    )
    try:
        _, stderr = proc.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass
        proc.wait()
        raise ModelTimeoutError(
            f"model run exceeded {timeout} s in {workdir}"
        ) from None
    if proc.returncode != 0:
        tail = (stderr or b"").decode(errors="replace")[-500:]
        raise ModelFailureError(proc.returncode, tail)
    return _parse_output(workdir / OUTPUT_FILENAME)

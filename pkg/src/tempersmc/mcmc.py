"""Random-walk Metropolis-Hastings kernel.

The same kernel serves two roles: it drives the mutation stage of the
particle sampler (short per-particle chains) and, run long on the full
posterior, it is the standalone gold-standard calibration oracle.

Proposals perturb every dimension at once with independent Gaussian
steps. Targets may return either a bare log density or a
``(log_density, aux)`` pair; the aux payload (for instance the raw
log-likelihood behind a tempered posterior) is cached on the chain state
of the accepted point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .errors import ContractError


@dataclass
class ChainState:
    theta: np.ndarray
    log_target: float
    aux: Any = None
    accept_count: int = 0
    step: int = 0


def _eval_target(log_target, theta):
    value = log_target(theta)
    if isinstance(value, tuple):
        return float(value[0]), value[1]
    return float(value), None


def init_state(theta0, log_target) -> ChainState:
    theta0 = np.asarray(theta0, dtype=float)
    value, aux = _eval_target(log_target, theta0)
    if value == -math.inf:
        raise ContractError("chain must start at a point of positive target density")
    return ChainState(theta=theta0, log_target=value, aux=aux)


def accept_move(log_ratio: float, rng: np.random.Generator) -> bool:
    """Metropolis acceptance: True with probability min(1, exp(log_ratio))."""
    if log_ratio == -math.inf:
        return False
    if log_ratio >= 0.0:
        # still consume one uniform so the draw pattern per step is fixed
        rng.random()
        return True
    return math.log(rng.random()) < log_ratio


def rw_step(state: ChainState, log_target, scales, rng) -> ChainState:
    """One all-at-once Gaussian random-walk update.

    Exactly one target evaluation per step, hence at most one
    forward-model run. Rejected steps return the previous point
    unchanged (bit-identical theta).
    """
    if state.log_target == -math.inf:
        raise ContractError("current state has zero target density")
    scales = np.asarray(scales, dtype=float)
    if np.any(scales < 0):
        raise ContractError("proposal scales must be >= 0")
    proposal = state.theta + scales * rng.standard_normal(state.theta.shape[0])
    value, aux = _eval_target(log_target, proposal)
    if value == -math.inf:
        accepted = False
    else:
        accepted = accept_move(value - state.log_target, rng)
    if accepted:
        return ChainState(
            theta=proposal,
            log_target=value,
            aux=aux,
            accept_count=state.accept_count + 1,
            step=state.step + 1,
        )
    return replace(state, step=state.step + 1)


@dataclass
class MCMCResult:
    chain: np.ndarray          # (iterations + 1, d), includes the start point
    log_targets: np.ndarray    # (iterations + 1,)
    aux: list                  # per-state aux payloads
    acceptance_rate: float
    n_target_evals: int


def run_mcmc(theta0, log_target, iterations, scales, rng) -> MCMCResult:
    """Run a single chain, recording every state."""
    if iterations < 0:
        raise ContractError("iterations must be >= 0")
    state = init_state(theta0, log_target)
    d = state.theta.shape[0]
    chain = np.empty((iterations + 1, d))
    log_targets = np.empty(iterations + 1)
    aux = [state.aux]
    chain[0] = state.theta
    log_targets[0] = state.log_target
    for i in range(1, iterations + 1):
        state = rw_step(state, log_target, scales, rng)
        chain[i] = state.theta
        log_targets[i] = state.log_target
        aux.append(state.aux)
    rate = state.accept_count / iterations if iterations else 0.0
    return MCMCResult(
        chain=chain,
        log_targets=log_targets,
        aux=aux,
        acceptance_rate=rate,
        n_target_evals=iterations,
    )

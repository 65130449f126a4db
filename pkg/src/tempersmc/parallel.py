"""Deterministic parallel execution with keyed random streams.

Every unit of stochastic work in a run is assigned a :class:`StreamKey`
naming the cycle, particle, pipeline stage and proposal it belongs to.
The key is hashed into an independent generator, so results are
reproducible bit-for-bit no matter how work is scheduled across workers.

Worker pools use threads: the heavy lifting (BLAS factorizations, large
ufuncs, subprocess waits) releases the GIL, and thread pools keep
closures usable without pickling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError

STAGES = ("init", "likelihood", "resample", "mutation", "threshold_calibration")

WORKERS_ENV_VAR = "SMC_WORKERS"


@dataclass(frozen=True)
class StreamKey:
    """Identity of one random stream within a run."""

    master_seed: int
    cycle: int
    particle: int
    stage: str
    proposal_index: int = 0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ContractError(f"unknown stage {self.stage!r}; expected one of {STAGES}")
        if self.master_seed < 0:
            raise ContractError("master_seed must be a non-negative integer")


def derive_stream(key: StreamKey) -> np.random.Generator:
    """Return the generator determined by `key`.

    The full key tuple is fed through a seed sequence, so distinct keys
    yield statistically independent streams and the same key always
    reproduces the same draws.
    """
    entropy = (
        key.master_seed,
        key.cycle,
        key.particle,
        STAGES.index(key.stage),
        key.proposal_index,
    )
    return np.random.default_rng(np.random.SeedSequence(entropy))


_BLAS_CONTROLLER = None


def limit_blas_threads(limit: int = 1) -> None:
    """Pin BLAS pools to `limit` threads for the life of the process.

    Particle-parallel workloads factor many small matrices concurrently;
    per-factorization BLAS threading only adds synchronization cost
    there. The CLI applies this at startup; library users opt in.
    """
    global _BLAS_CONTROLLER
    from threadpoolctl import threadpool_limits

    _BLAS_CONTROLLER = threadpool_limits(limits=limit, user_api="blas")


def default_workers() -> int:
    """Worker count: SMC_WORKERS environment override, else hardware parallelism."""
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError:
            value = 0
        if value < 1:
            raise ConfigurationError(
                f"{WORKERS_ENV_VAR} must be a positive integer, got {env!r}"
            )
        return value
    return os.cpu_count() or 1


class ParallelTaskError(Exception):
    """One or more items of a parallel map failed."""

    def __init__(self, index, cause, n_failures=1):
        self.index = index
        self.n_failures = n_failures
        extra = "" if n_failures == 1 else f" ({n_failures - 1} further item(s) also failed)"
        super().__init__(f"item {index} failed: {cause!r}{extra}")


def parallel_map(fn, items, keys=None, workers=None):
    """Apply ``fn(item, stream)`` to every item, preserving item order.

    Parameters
    ----------
    fn : callable
        Pure function of (item, stream). ``stream`` is derived from the
        matching entry of `keys`, or None when no keys are given.
    items : sequence
        Work units.
    keys : sequence of StreamKey, optional
        One key per item. Streams are derived inside the map so that the
        result is independent of scheduling.
    workers : int, optional
        Pool size; defaults to :func:`default_workers`. ``workers=1``
        runs serially (identical results by construction).

    Raises
    ------
    ParallelTaskError
        If any item raised. All remaining items still run to completion;
        the error carries the first failing index.
    """
    items = list(items)
    if keys is not None:
        keys = list(keys)
        if len(keys) != len(items):
            raise ContractError(f"{len(items)} items but {len(keys)} stream keys")
    if workers is None:
        workers = default_workers()
    if workers < 1:
        raise ContractError("workers must be >= 1")

    def call(i):
        stream = derive_stream(keys[i]) if keys is not None else None
        return fn(items[i], stream)

    results = [None] * len(items)
    errors = []
    if workers == 1 or len(items) <= 1:
        for i in range(len(items)):
            try:
                results[i] = call(i)
            except Exception as exc:  # noqa: BLE001 - contract: remaining items complete
                errors.append((i, exc))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(call, i): i for i in range(len(items))}
            for fut, i in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    errors.append((i, exc))
    if errors:
        errors.sort(key=lambda pair: pair[0])
        index, cause = errors[0]
        raise ParallelTaskError(index, cause, n_failures=len(errors)) from cause
    return results

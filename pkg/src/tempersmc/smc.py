"""Adaptive tempered sequential Monte Carlo for posterior calibration.

A swarm of N particles starts as prior draws (likelihood exponent 0)
and is pushed toward the full posterior through cycles of:

1. pick the next likelihood-incorporation increment adaptively, so that
   the effective sample size of the tempered weights lands on its
   target (clamped to a floor increment, and to whatever remains);
2. reweight each particle by ``likelihood ** increment`` and resample
   multinomially;
3. mutate every particle with an independent Metropolis-Hastings chain
   targeting the current tempered posterior, in batches of k updates,
   until the histogram distance between successive checkpoint
   distributions of a scalar metric drops below a calibrated threshold.

The run ends when the cumulative exponent reaches one exactly. All
randomness is drawn from keyed streams, so results are bit-identical
for any worker count and a run can resume from its last snapshot.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateSwarmError,
    ModelFailureStormError,
)
from .mcmc import ChainState, rw_step
from .parallel import StreamKey, derive_stream, parallel_map
from .targets import EvalContext
from . import snapshots

logger = logging.getLogger(__name__)

GAMMA_TOLERANCE = 1e-6       # bisection width for the increment search
_FINISH_SNAP = 1e-12         # absorb fp dust so the schedule sums to 1 exactly
PROPOSAL_SCALE_FACTOR = 2.38  # classic random-walk scaling, divided by sqrt(d)


# -- swarm state -----------------------------------------------------------------


@dataclass(frozen=True)
class TemperState:
    """Cumulative likelihood exponent and the history of its increments."""

    increments: tuple = ()
    cumulative: float = 0.0

    def advance(self, gamma: float) -> "TemperState":
        remaining = 1.0 - self.cumulative
        if gamma <= 0 or gamma > remaining + _FINISH_SNAP:
            raise ContractError(f"increment {gamma} outside (0, {remaining}]")
        if remaining - gamma < _FINISH_SNAP:
            return TemperState(self.increments + (gamma,), 1.0)
        return TemperState(self.increments + (gamma,), self.cumulative + gamma)

    @property
    def complete(self) -> bool:
        return self.cumulative >= 1.0


@dataclass(frozen=True)
class StoppingSpec:
    """Mutation stopping rule: checkpoint spacing and distance threshold."""

    k: int
    epsilon: float
    bins: int = 200
    metric: int | str = 0
    max_updates: int = 100

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.bins < 2:
            raise ConfigurationError("bin count must be >= 2")
        if not self.epsilon > 0:
            raise ConfigurationError("stopping threshold must be > 0")
        if self.max_updates < 2 * self.k:
            raise ConfigurationError("max_updates must be >= 2 * k")


@dataclass
class Swarm:
    """N particles with cached full-likelihood values and a temper state."""

    thetas: np.ndarray            # (N, d) in transformed space
    log_liks: np.ndarray          # (N,)
    weights: np.ndarray           # (N,), normalized
    cycle: int
    temper: TemperState
    metrics: np.ndarray | None = None   # (N,) stopping-metric cache

    @property
    def n(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]


@dataclass(frozen=True)
class SMCSettings:
    n_particles: int = 2000
    gamma_min: float = 0.1
    ess_thresh: float | None = None      # defaults to n_particles / 2
    k: int = 7
    bins: int = 200
    threshold_samples: int = 1000        # Monte-Carlo sets for threshold calibration
    threshold_quantile: float = 0.975
    epsilon: float | None = None         # stopping threshold; calibrated when None
    max_updates: int = 100
    metric: int | str = 0
    workers: int | None = None
    max_failure_frac: float = 0.5

    def __post_init__(self):
        if self.n_particles < 2:
            raise ConfigurationError("n_particles must be >= 2")
        if not 0.0 < self.gamma_min < 1.0:
            raise ConfigurationError("gamma_min must lie in (0, 1)")
        thresh = self.resolved_ess_thresh()
        if not 1.0 < thresh <= self.n_particles:
            raise ConfigurationError("ess_thresh must lie in (1, n_particles]")
        if not 0.0 <= self.threshold_quantile <= 1.0:
            raise ConfigurationError("threshold_quantile must lie in [0, 1]")
        if self.threshold_samples < 1:
            raise ConfigurationError("threshold_samples must be >= 1")
        if not 0.0 <= self.max_failure_frac <= 1.0:
            raise ConfigurationError("max_failure_frac must lie in [0, 1]")
        # delegate k / bins / epsilon / max_updates checks
        StoppingSpec(
            k=self.k,
            epsilon=self.epsilon if self.epsilon is not None else 1.0,
            bins=self.bins,
            metric=self.metric,
            max_updates=self.max_updates,
        )

    def resolved_ess_thresh(self) -> float:
        return self.n_particles / 2 if self.ess_thresh is None else float(self.ess_thresh)


# -- elementary operations ---------------------------------------------------------


def effective_sample_size(weights) -> float:
    """1 / sum of squared normalized weights; N for uniform, 1 for a point mass."""
    weights = np.asarray(weights, dtype=float)
    if weights.size == 0:
        raise ContractError("empty weight vector")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ContractError("weights must be finite and non-negative")
    total = weights.sum()
    if total <= 0:
        raise ContractError("weights sum to zero")
    if abs(total - 1.0) > 1e-8:
        raise ContractError(f"weights must be normalized (sum={total})")
    return float(1.0 / np.sum(weights * weights))


def _ess_at(finite_log_liks: np.ndarray, gamma: float) -> float:
    """ESS of weights proportional to exp(gamma * log L), zeros excluded."""
    x = gamma * finite_log_liks
    x = x - x.max()
    w = np.exp(x)
    s = w.sum()
    return float(s * s / (w @ w))


def select_increment(log_liks, temper: TemperState, gamma_min, ess_thresh) -> float:
    """Choose the next likelihood-incorporation increment.

    Finds the exponent whose tempered-weight ESS matches `ess_thresh`,
    exploiting that ESS is non-increasing in the exponent. Clamped to
    `gamma_min` from below and to the remaining budget 1 - cumulative
    from above; returns the full remainder when even that keeps the ESS
    at or above threshold (finishing the schedule).
    """
    if temper.cumulative >= 1.0:
        raise ContractError("schedule already complete")
    log_liks = np.asarray(log_liks, dtype=float)
    finite = log_liks[np.isfinite(log_liks)]
    if finite.size == 0:
        raise DegenerateSwarmError("no particle has a finite log-likelihood")
    remaining = 1.0 - temper.cumulative
    if remaining <= gamma_min:
        return remaining
    if _ess_at(finite, remaining) >= ess_thresh:
        return remaining
    if _ess_at(finite, gamma_min) < ess_thresh:
        return gamma_min
    lo, hi = gamma_min, remaining
    while hi - lo > GAMMA_TOLERANCE:
        mid = 0.5 * (lo + hi)
        if _ess_at(finite, mid) >= ess_thresh:
            lo = mid
        else:
            hi = mid
    gamma = 0.5 * (lo + hi)
    if remaining - gamma < _FINISH_SNAP:
        gamma = remaining
    return gamma


def importance_reweight(log_liks, gamma: float) -> np.ndarray:
    """Normalized weights proportional to exp(gamma * log L), stabilized.

    gamma == 0 returns uniform weights (L ** 0 == 1 even at L == 0).
    """
    log_liks = np.asarray(log_liks, dtype=float)
    n = log_liks.shape[0]
    if gamma == 0.0:
        return np.full(n, 1.0 / n)
    tempered = gamma * log_liks
    top = tempered.max()
    if not np.isfinite(top):
        raise DegenerateSwarmError("every particle has zero tempered likelihood")
    w = np.exp(tempered - top)
    total = w.sum()
    if total <= 0:
        raise DegenerateSwarmError("tempered weights underflowed to zero")
    return w / total


def multinomial_resample(swarm: Swarm, weights, rng) -> Swarm:
    """Draw N particles with replacement proportional to `weights`."""
    weights = np.asarray(weights, dtype=float)
    idx = rng.choice(swarm.n, size=swarm.n, p=weights)
    return Swarm(
        thetas=swarm.thetas[idx].copy(),
        log_liks=swarm.log_liks[idx].copy(),
        weights=np.full(swarm.n, 1.0 / swarm.n),
        cycle=swarm.cycle,
        temper=swarm.temper,
        metrics=None if swarm.metrics is None else swarm.metrics[idx].copy(),
    )


def bhattacharyya(a, b, bins: int) -> float:
    """Histogram Bhattacharyya distance over shared equal-width bins.

    Bins cover the range spanned by both samples jointly. Zero for
    identical samples; +inf when no bin holds mass from both.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ContractError("both sample sets must be non-empty")
    if bins < 2:
        raise ContractError("bin count must be >= 2")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        return 0.0
    p, _ = np.histogram(a, bins=bins, range=(lo, hi))
    q, _ = np.histogram(b, bins=bins, range=(lo, hi))
    if a.size == b.size and np.array_equal(p, q):
        return 0.0
    overlap = np.sqrt((p / a.size) * (q / b.size)).sum()
    if overlap <= 0.0:
        return math.inf
    return max(0.0, -math.log(min(overlap, 1.0)))


def calibrate_stop_threshold(survey, n_sets, set_size, bins, quantile, rng) -> float:
    """Monte-Carlo stopping threshold from a survey of the target metric.

    Fits a normal to the survey, draws one baseline set plus `n_sets`
    comparison sets of `set_size`, and returns the requested quantile of
    their Bhattacharyya distances to the baseline.
    """
    survey = np.asarray(survey, dtype=float)
    survey = survey[np.isfinite(survey)]
    if survey.size < 30:
        raise ContractError(
            f"survey of {survey.size} values is too small to estimate mean/variance"
        )
    if n_sets < 1:
        raise ConfigurationError("need at least one comparison set")
    mu = float(survey.mean())
    var = float(survey.var(ddof=1))
    if var == 0.0:
        raise ConfigurationError("survey metric has zero variance")
    sd = math.sqrt(var)
    baseline = rng.normal(mu, sd, set_size)
    distances = np.array(
        [bhattacharyya(rng.normal(mu, sd, set_size), baseline, bins) for _ in range(n_sets)]
    )
    return float(np.quantile(distances, quantile))


def weighted_std(thetas, weights) -> np.ndarray:
    """Per-dimension weighted standard deviation."""
    thetas = np.asarray(thetas, dtype=float)
    weights = np.asarray(weights, dtype=float)
    mean = weights @ thetas
    var = weights @ (thetas - mean) ** 2
    return np.sqrt(np.maximum(var, 0.0))


# -- mutation ----------------------------------------------------------------------


@dataclass
class MutationRecord:
    updates: int
    db_trace: list
    acceptance_rate: float
    hit_max: bool


def mutate(
    swarm: Swarm,
    stop: StoppingSpec,
    scales,
    target,
    master_seed: int,
    run_id: str = "run",
    workers: int | None = None,
) -> tuple[Swarm, MutationRecord]:
    """Diversify a freshly resampled swarm with per-particle MH chains.

    Chains target ``likelihood ** cumulative_exponent * prior`` and run
    in batches of k updates. After the second batch, and after every
    batch thereafter, the Bhattacharyya distance between the last two
    checkpoint snapshots of the stopping metric decides whether to stop.
    Hitting `max_updates` is recorded as a warning, not a failure.
    """
    gamma_cum = swarm.temper.cumulative
    if gamma_cum <= 0:
        raise ContractError("mutation requires a positive cumulative exponent")
    if swarm.metrics is None:
        raise ContractError("swarm is missing stopping-metric values")
    scales = np.asarray(scales, dtype=float)

    thetas = swarm.thetas.copy()
    log_liks = swarm.log_liks.copy()
    metrics = swarm.metrics.copy()
    log_priors = np.array([target.log_prior(t) for t in thetas])
    if np.any(log_priors == -math.inf):
        raise ContractError("resampled particle outside prior support")

    def run_batch(item, stream):
        i, theta, ll, met, lp, proposal_base = item
        counter = itertools.count(proposal_base)

        def log_target(candidate):
            proposal_index = next(counter)
            lp_cand = target.log_prior(candidate)
            if lp_cand == -math.inf:
                return -math.inf, None
            result = target.evaluate(
                candidate, EvalContext(run_id, swarm.cycle, i, proposal_index)
            )
            return gamma_cum * result.log_lik + lp_cand, (
                result.log_lik,
                result.metric,
                lp_cand,
            )

        state = ChainState(theta=theta, log_target=gamma_cum * ll + lp, aux=(ll, met, lp))
        for _ in range(stop.k):
            state = rw_step(state, log_target, scales, stream)
        new_ll, new_met, new_lp = state.aux
        return state.theta, new_ll, new_met, new_lp, state.accept_count

    updates = 0
    batch = 0
    accepts = 0
    proposals = 0
    db_trace: list[float] = []
    h_prev = None
    hit_max = False
    while True:
        batch += 1
        items = [
            (i, thetas[i], log_liks[i], metrics[i], log_priors[i], (batch - 1) * stop.k)
            for i in range(swarm.n)
        ]
        keys = [
            StreamKey(master_seed, swarm.cycle, i, "mutation", batch)
            for i in range(swarm.n)
        ]
        results = parallel_map(run_batch, items, keys=keys, workers=workers)
        for i, (theta, ll, met, lp, n_acc) in enumerate(results):
            thetas[i] = theta
            log_liks[i] = ll
            metrics[i] = met
            log_priors[i] = lp
            accepts += n_acc
        proposals += swarm.n * stop.k
        updates += stop.k
        h_curr = metrics.copy()
        if batch >= 2:
            distance = bhattacharyya(h_prev, h_curr, stop.bins)
            db_trace.append(distance)
            if distance < stop.epsilon:
                break
        if updates >= stop.max_updates:
            hit_max = True
            logger.warning(
                "cycle %d: mutation hit the %d-update cap (last D_B=%s)",
                swarm.cycle,
                stop.max_updates,
                db_trace[-1] if db_trace else "n/a",
            )
            break
        h_prev = h_curr

    mutated = Swarm(
        thetas=thetas,
        log_liks=log_liks,
        weights=np.full(swarm.n, 1.0 / swarm.n),
        cycle=swarm.cycle,
        temper=swarm.temper,
        metrics=metrics,
    )
    record = MutationRecord(
        updates=updates,
        db_trace=db_trace,
        acceptance_rate=accepts / proposals if proposals else 0.0,
        hit_max=hit_max,
    )
    return mutated, record


# -- full run ----------------------------------------------------------------------


@dataclass
class CycleRecord:
    cycle: int
    gamma: float
    gamma_cum: float
    ess: float
    updates: int
    db_trace: list
    acceptance_rate: float
    hit_max: bool
    wall_time: float = 0.0

    def semantic_fields(self) -> dict:
        return {
            "cycle": self.cycle,
            "gamma": self.gamma,
            "gamma_cum": self.gamma_cum,
            "ess": self.ess,
            "updates": self.updates,
            "db_trace": list(self.db_trace),
            "acceptance_rate": self.acceptance_rate,
            "hit_max": self.hit_max,
        }


@dataclass
class CalibrationResult:
    swarm: Swarm
    snapshots: list          # prior swarm plus one post-mutation swarm per cycle
    records: list            # CycleRecord per cycle
    epsilon: float
    master_seed: int
    run_id: str
    model_evaluations: int
    model_failures: int
    sequential_depth: int
    wall_times: dict = field(default_factory=dict)

    @property
    def schedule(self) -> list:
        return [r.gamma for r in self.records]

    @property
    def ess_trace(self) -> list:
        return [r.ess for r in self.records]

    @property
    def n_cycles(self) -> int:
        return len(self.records)

    def semantic_state(self) -> dict:
        """Everything that must be reproducible; excludes wall times and counters."""
        return {
            "thetas": self.swarm.thetas.tolist(),
            "log_liks": self.swarm.log_liks.tolist(),
            "epsilon": self.epsilon,
            "records": [r.semantic_fields() for r in self.records],
        }


def _evaluation_wave(target, thetas, cycle, master_seed, run_id, workers):
    """Evaluate the full likelihood (and metric) for a set of particles."""

    def evaluate(item, stream):
        i, theta = item
        return target.evaluate(theta, EvalContext(run_id, cycle, i, 0))

    items = list(enumerate(thetas))
    keys = [
        StreamKey(master_seed, cycle, i, "likelihood") for i in range(len(items))
    ]
    results = parallel_map(evaluate, items, keys=keys, workers=workers)
    log_liks = np.array([r.log_lik for r in results])
    metrics = np.array([r.metric for r in results])
    n_failed = sum(1 for r in results if r.failed)
    return log_liks, metrics, n_failed


def _check_wave_health(log_liks, n_failed, n_total, max_failure_frac):
    if n_total and n_failed / n_total > max_failure_frac:
        raise ModelFailureStormError(
            f"{n_failed}/{n_total} forward-model runs failed "
            f"(tolerated fraction {max_failure_frac})"
        )
    finite = log_liks[np.isfinite(log_liks)]
    if finite.size < 2:
        raise DegenerateSwarmError(
            f"swarm carries no likelihood information: {finite.size}/{n_total} finite "
            f"log-likelihoods ({n_failed} failed runs); need at least 2 live particles"
        )


def _sidecar(cycle, record: CycleRecord | None, temper, master_seed):
    payload = {
        "cycle": cycle,
        "gamma_t": None if record is None else record.gamma,
        "gamma_cum": temper.cumulative,
        "ess": None if record is None else record.ess,
        "db_trace": [] if record is None else list(record.db_trace),
        "updates": 0 if record is None else record.updates,
        "acceptance_rate": None if record is None else record.acceptance_rate,
        "hit_max": False if record is None else record.hit_max,
        "seed": master_seed,
    }
    return payload


def run_smc(
    target,
    settings: SMCSettings,
    master_seed: int,
    output_dir=None,
    resume: bool = False,
    run_id: str | None = None,
) -> CalibrationResult:
    """Run the full adaptive calibration loop.

    With `output_dir` set, the prior swarm and every completed cycle are
    snapshotted, so an interrupted run restarts from its last snapshot
    with ``resume=True`` and reproduces the uninterrupted result (the
    resume point's likelihoods and metrics are re-evaluated, which costs
    one extra wave of model runs).
    """
    n = settings.n_particles
    ess_thresh = settings.resolved_ess_thresh()
    workers = settings.workers
    run_id = run_id if run_id is not None else f"smc{master_seed:d}"
    wall = {"init": 0.0, "schedule": 0.0, "resample": 0.0, "mutate": 0.0,
            "threshold_calibration": 0.0, "snapshot": 0.0}
    evals_start = target.eval_count

    records: list[CycleRecord] = []
    swarm_snapshots: list[Swarm] = []
    epsilon = settings.epsilon

    if resume:
        if output_dir is None:
            raise ConfigurationError("resume requires an output directory")
        manifest = snapshots.read_manifest(output_dir)
        if manifest.get("master_seed") != master_seed:
            raise ConfigurationError(
                f"manifest seed {manifest.get('master_seed')} does not match {master_seed}"
            )
        epsilon = manifest["epsilon"]
        done = snapshots.completed_cycles(output_dir)
        if not done:
            raise ConfigurationError(f"no snapshots to resume from in {output_dir}")
        if done != list(range(len(done))):
            raise ConfigurationError(
                f"snapshot cycles {done} are not contiguous from 0; cannot resume"
            )
        increments = []
        for cycle in done:
            thetas_c, log_liks_c, weights_c, sidecar = snapshots.read_cycle_snapshot(
                output_dir, cycle, target.space
            )
            if sidecar["gamma_t"] is not None:
                increments.append(sidecar["gamma_t"])
                records.append(
                    CycleRecord(
                        cycle=cycle,
                        gamma=sidecar["gamma_t"],
                        gamma_cum=sidecar["gamma_cum"],
                        ess=sidecar["ess"],
                        updates=sidecar["updates"],
                        db_trace=list(sidecar["db_trace"]),
                        acceptance_rate=sidecar["acceptance_rate"],
                        hit_max=sidecar["hit_max"],
                    )
                )
            swarm_snapshots.append(
                Swarm(
                    thetas=thetas_c,
                    log_liks=log_liks_c,
                    weights=weights_c,
                    cycle=cycle,
                    temper=TemperState(tuple(increments), sidecar["gamma_cum"]),
                    metrics=None,
                )
            )
        swarm = swarm_snapshots[-1]
        if swarm.n != n:
            raise ConfigurationError(
                f"snapshot has {swarm.n} particles but settings expect {n}"
            )
        t_init = time.perf_counter()
        log_liks, metrics, n_failed = _evaluation_wave(
            target, swarm.thetas, swarm.cycle, master_seed, run_id, workers
        )
        wall["init"] += time.perf_counter() - t_init
        _check_wave_health(log_liks, n_failed, n, settings.max_failure_frac)
        swarm = replace(swarm, log_liks=log_liks, metrics=metrics)
        logger.info(
            "resuming %s from cycle %d (gamma_cum=%.6g)",
            run_id, swarm.cycle, swarm.temper.cumulative,
        )
    else:
        t_init = time.perf_counter()
        thetas = np.array(
            [
                target.space.sample_prior(
                    derive_stream(StreamKey(master_seed, 0, i, "init"))
                )
                for i in range(n)
            ]
        )
        log_liks, metrics, n_failed = _evaluation_wave(
            target, thetas, 0, master_seed, run_id, workers
        )
        wall["init"] += time.perf_counter() - t_init
        _check_wave_health(log_liks, n_failed, n, settings.max_failure_frac)
        swarm = Swarm(
            thetas=thetas,
            log_liks=log_liks,
            weights=np.full(n, 1.0 / n),
            cycle=0,
            temper=TemperState(),
            metrics=metrics,
        )

        if epsilon is None:
            t_cal = time.perf_counter()
            epsilon = calibrate_stop_threshold(
                metrics,
                n_sets=settings.threshold_samples,
                set_size=n,
                bins=settings.bins,
                quantile=settings.threshold_quantile,
                rng=derive_stream(
                    StreamKey(master_seed, 0, 0, "threshold_calibration")
                ),
            )
            wall["threshold_calibration"] += time.perf_counter() - t_cal
            logger.info("calibrated stopping threshold: %.6g", epsilon)

        swarm_snapshots.append(swarm)
        if output_dir is not None:
            t_snap = time.perf_counter()
            snapshots.write_manifest(
                output_dir,
                {
                    "run_id": run_id,
                    "master_seed": master_seed,
                    "epsilon": epsilon,
                    "n_particles": n,
                    "ess_thresh": ess_thresh,
                    "gamma_min": settings.gamma_min,
                    "k": settings.k,
                    "bins": settings.bins,
                    "max_updates": settings.max_updates,
                    "metric": settings.metric,
                },
            )
            snapshots.write_cycle_snapshot(
                output_dir, 0, target.space, swarm.thetas, swarm.log_liks,
                swarm.weights, _sidecar(0, None, swarm.temper, master_seed),
            )
            wall["snapshot"] += time.perf_counter() - t_snap

    stop = StoppingSpec(
        k=settings.k,
        epsilon=epsilon,
        bins=settings.bins,
        metric=settings.metric,
        max_updates=settings.max_updates,
    )

    while not swarm.temper.complete:
        cycle = swarm.cycle + 1
        t_cycle = time.perf_counter()

        t0 = time.perf_counter()
        gamma = select_increment(
            swarm.log_liks, swarm.temper, settings.gamma_min, ess_thresh
        )
        weights = importance_reweight(swarm.log_liks, gamma)
        ess = effective_sample_size(weights)
        scales = (PROPOSAL_SCALE_FACTOR / math.sqrt(swarm.dim)) * weighted_std(
            swarm.thetas, weights
        )
        wall["schedule"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        resampled = multinomial_resample(
            swarm, weights, derive_stream(StreamKey(master_seed, cycle, 0, "resample"))
        )
        resampled = replace(
            resampled, cycle=cycle, temper=swarm.temper.advance(gamma)
        )
        wall["resample"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        swarm, mutation = mutate(
            resampled, stop, scales, target, master_seed, run_id=run_id, workers=workers
        )
        wall["mutate"] += time.perf_counter() - t0

        record = CycleRecord(
            cycle=cycle,
            gamma=gamma,
            gamma_cum=swarm.temper.cumulative,
            ess=ess,
            updates=mutation.updates,
            db_trace=mutation.db_trace,
            acceptance_rate=mutation.acceptance_rate,
            hit_max=mutation.hit_max,
            wall_time=time.perf_counter() - t_cycle,
        )
        records.append(record)
        swarm_snapshots.append(swarm)
        logger.info(
            "cycle %d: gamma=%.4g cum=%.6g ESS=%.1f updates=%d acc=%.2f D_B=%s",
            cycle, gamma, swarm.temper.cumulative, ess, mutation.updates,
            mutation.acceptance_rate,
            f"{mutation.db_trace[-1]:.4g}" if mutation.db_trace else "n/a",
        )

        if output_dir is not None:
            t_snap = time.perf_counter()
            snapshots.write_cycle_snapshot(
                output_dir, cycle, target.space, swarm.thetas, swarm.log_liks,
                swarm.weights, _sidecar(cycle, record, swarm.temper, master_seed),
            )
            wall["snapshot"] += time.perf_counter() - t_snap

    result = CalibrationResult(
        swarm=swarm,
        snapshots=swarm_snapshots,
        records=records,
        epsilon=epsilon,
        master_seed=master_seed,
        run_id=run_id,
        model_evaluations=target.eval_count - evals_start,
        model_failures=target.failure_count,
        sequential_depth=1 + sum(r.updates for r in records),
        wall_times=wall,
    )
    if output_dir is not None:
        snapshots.write_result_summary(
            output_dir,
            {
                "run_id": run_id,
                "master_seed": master_seed,
                "epsilon": epsilon,
                "cycles": [r.semantic_fields() for r in records],
                "schedule": result.schedule,
                "ess_trace": result.ess_trace,
                "model_evaluations": result.model_evaluations,
                "model_failures": result.model_failures,
                "sequential_depth": result.sequential_depth,
                "wall_times": wall,
                "final_snapshot": f"{snapshots.snapshot_basename(swarm.cycle)}.csv",
            },
        )
    return result

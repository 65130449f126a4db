"""Posterior summaries and sample-set comparisons."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp

from .errors import ContractError
from .smc import bhattacharyya

SURVIVAL_GRID_POINTS = 100
DEFAULT_LEVELS = ((0.025, 0.975),)


@dataclass
class Summary:
    mean: float
    intervals: dict            # (lo_level, hi_level) -> (lo_value, hi_value)
    survival_grid: np.ndarray  # (SURVIVAL_GRID_POINTS,) evaluation points
    survival_values: np.ndarray
    n: int
    sorted_samples: np.ndarray

    def survival(self, x):
        """Fraction of samples strictly greater than x (vectorized)."""
        x = np.asarray(x, dtype=float)
        return 1.0 - np.searchsorted(self.sorted_samples, x, side="right") / self.n


def summarize(samples, levels=DEFAULT_LEVELS) -> Summary:
    """Mean, credible intervals and the empirical survival function.

    `levels` is a sequence of (lower, upper) quantile pairs; the default
    reports the central 95% interval. The survival function is evaluated
    on a 100-point grid spanning the sample range.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ContractError("cannot summarize an empty sample set")
    ordered = np.sort(samples)
    intervals = {}
    for lo, hi in levels:
        if not 0.0 <= lo < hi <= 1.0:
            raise ContractError(f"bad quantile pair ({lo}, {hi})")
        intervals[(lo, hi)] = (
            float(np.quantile(samples, lo)),
            float(np.quantile(samples, hi)),
        )
    grid = np.linspace(ordered[0], ordered[-1], SURVIVAL_GRID_POINTS)
    survival = 1.0 - np.searchsorted(ordered, grid, side="right") / samples.size
    return Summary(
        mean=float(samples.mean()),
        intervals=intervals,
        survival_grid=grid,
        survival_values=survival,
        n=samples.size,
        sorted_samples=ordered,
    )


@dataclass
class MarginalComparison:
    name: str
    ks_statistic: float
    mean_gap: float
    lower_gap: float           # gap between 2.5% endpoints
    upper_gap: float           # gap between 97.5% endpoints
    bhattacharyya: float


def compare_sample_sets(a, b, bins=200, names=None) -> list[MarginalComparison]:
    """Per-marginal agreement diagnostics between two sample sets.

    Both inputs are (n, d) arrays (1-D inputs are treated as a single
    marginal). Reports the two-sample KS statistic, the gap in means,
    the gaps between 95%-interval endpoints, and the histogram
    Bhattacharyya distance.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ContractError(
            f"sample sets have different dimensions: {a.shape[1]} vs {b.shape[1]}"
        )
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ContractError("both sample sets must be non-empty")
    d = a.shape[1]
    if names is None:
        names = [f"x{j}" for j in range(d)]
    out = []
    for j in range(d):
        col_a, col_b = a[:, j], b[:, j]
        out.append(
            MarginalComparison(
                name=names[j],
                ks_statistic=float(ks_2samp(col_a, col_b).statistic),
                mean_gap=float(abs(col_a.mean() - col_b.mean())),
                lower_gap=float(
                    abs(np.quantile(col_a, 0.025) - np.quantile(col_b, 0.025))
                ),
                upper_gap=float(
                    abs(np.quantile(col_a, 0.975) - np.quantile(col_b, 0.975))
                ),
                bhattacharyya=bhattacharyya(col_a, col_b, bins),
            )
        )
    return out

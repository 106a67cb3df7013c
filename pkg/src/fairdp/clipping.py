"""Per-sample gradient privatization strategies.

Three strategies bound what one example can contribute to a batch gradient
sum:

  * ``Uniform``: clip every row's L2 norm at one bound.
  * ``NaiveReweight``: clip at a base bound, then scale each group's rows
    inversely to the group's privately-noised batch size.
  * ``GroupAdaptive``: give each group its own bound, grown from the
    privately-noised fraction of that group's rows exceeding the base
    bound.

Every strategy yields a ``ClipOutcome`` with the rescaled rows, the
effective sensitivity (the largest L2 change a single present row can
induce in the clipped sum), and a per-group report for logging.

Count noising draws happen in a fixed order (all above-bound counts by
ascending group, then all at-or-below counts) so runs are reproducible.
Noised quantities are clamped before use: above-counts at zero, group
sizes at one, and if no clipping pressure survives anywhere, every bound
falls back to the base bound. Ties at exactly the base bound count as not
clipped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import PerSampleGrads


@dataclass(frozen=True)
class NonPrivate:
    """Plain SGD: no clipping, no noise, no ledger events."""


@dataclass(frozen=True)
class Uniform:
    """Clip every row at ``bound`` (math.inf acts as a no-clip sentinel)."""

    bound: float

    def __post_init__(self):
        if not self.bound > 0:
            raise ValueError("bound must be positive")


@dataclass(frozen=True)
class NaiveReweight:
    """Clip at ``base_bound``, then reweight groups by noised batch share."""

    base_bound: float
    count_noise_std: float = 0.0

    def __post_init__(self):
        if not (self.base_bound > 0 and np.isfinite(self.base_bound)):
            raise ValueError("base_bound must be positive and finite")
        if self.count_noise_std < 0:
            raise ValueError("count_noise_std must be non-negative")


@dataclass(frozen=True)
class GroupAdaptive:
    """Per-group clip bounds adapted from noised clipped-sample counts."""

    base_bound: float
    count_noise_std: float = 0.0

    def __post_init__(self):
        if not (self.base_bound > 0 and np.isfinite(self.base_bound)):
            raise ValueError("base_bound must be positive and finite")
        if self.count_noise_std < 0:
            raise ValueError("count_noise_std must be non-negative")


ClipStrategy = Uniform | NaiveReweight | GroupAdaptive


@dataclass(frozen=True)
class GroupCounts:
    """Exact per-group counts of rows above / at-or-below the base bound."""

    above: np.ndarray
    at_or_below: np.ndarray


@dataclass(frozen=True)
class NoisedGroupCounts:
    """Gaussian-noised counts plus their clamped derived quantities."""

    above: np.ndarray
    at_or_below: np.ndarray

    @property
    def above_clamped(self) -> np.ndarray:
        return np.maximum(self.above, 0.0)

    @property
    def sizes_clamped(self) -> np.ndarray:
        return np.maximum(self.above + self.at_or_below, 1.0)

    @property
    def total_above(self) -> float:
        return float(self.above_clamped.sum())


@dataclass
class GroupClipReport:
    """Per-group logging snapshot for one clipped batch.

    ``bounds`` holds the clip bound per group (uniform/adaptive) or the
    reweight factor (naive). ``clipped_fraction`` is NaN for groups absent
    from the batch. The noised fields are set only by strategies that noise
    counts or sizes.
    """

    bounds: np.ndarray
    clipped_fraction: np.ndarray
    above_noised: np.ndarray | None = None
    sizes_noised: np.ndarray | None = None


class ClipOutcome(NamedTuple):
    clipped: np.ndarray
    sensitivity: float
    report: GroupClipReport | None


def _rescale_rows(grads: np.ndarray, norms: np.ndarray, row_bounds: np.ndarray) -> np.ndarray:
    """Scale each row by min(1, bound/norm); zero-norm rows pass unchanged."""
    factors = np.ones_like(norms)
    over = norms > row_bounds
    factors[over] = row_bounds[over] / norms[over]
    return grads * factors[:, None]


def _clip_fraction(norms: np.ndarray, groups: np.ndarray, bounds: np.ndarray,
                   num_groups: int) -> np.ndarray:
    sizes = np.bincount(groups, minlength=num_groups).astype(np.float64)
    over = np.bincount(groups[norms > bounds[groups]], minlength=num_groups)
    out = np.full(num_groups, np.nan)
    present = sizes > 0
    out[present] = over[present] / sizes[present]
    return out


def clip_uniform(grads: PerSampleGrads, bound: float,
                 groups: np.ndarray | None = None,
                 num_groups: int | None = None) -> ClipOutcome:
    """Clip every row at one bound; sensitivity equals the bound.

    A per-group report is attached only when group labels are supplied.
    """
    if not bound > 0:
        raise ValueError("bound must be positive")
    row_bounds = np.full(grads.norms.shape, bound)
    clipped = _rescale_rows(grads.grads, grads.norms, row_bounds)
    report = None
    if groups is not None and num_groups is not None:
        full = np.full(num_groups, bound)
        report = GroupClipReport(full, _clip_fraction(grads.norms, groups, full, num_groups))
    return ClipOutcome(clipped, bound, report)


def group_counts(grads: PerSampleGrads, groups: np.ndarray, bound: float,
                 num_groups: int) -> GroupCounts:
    """Exact counts per group; a tie at the bound counts as not clipped."""
    if not bound > 0:
        raise ValueError("bound must be positive")
    groups = np.asarray(groups)
    over = grads.norms > bound
    above = np.bincount(groups[over], minlength=num_groups)
    at_or_below = np.bincount(groups[~over], minlength=num_groups)
    return GroupCounts(above, at_or_below)


def noise_counts(counts: GroupCounts, noise_std: float,
                 rng: np.random.Generator) -> NoisedGroupCounts:
    """Add independent Gaussian noise to every count.

    Draw order is fixed: above-counts for groups 0..K-1, then at-or-below
    counts. A zero noise_std returns the raw counts exactly.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    k = counts.above.shape[0]
    noise = rng.normal(0.0, noise_std, size=2 * k)
    return NoisedGroupCounts(counts.above + noise[:k], counts.at_or_below + noise[k:])


def adaptive_bounds(noised: NoisedGroupCounts, base_bound: float,
                    batch_size: int) -> np.ndarray:
    """Per-group clip bounds grown with the group's clipped share.

    bound_k = base * (1 + (above_k/size_k) / (total_above/batch)), using
    the clamped noised quantities. With no clipping pressure anywhere
    (total_above == 0) every bound stays at the base bound.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    total = noised.total_above
    k = noised.above.shape[0]
    if total <= 0.0:
        return np.full(k, base_bound)
    share = noised.above_clamped / noised.sizes_clamped
    return base_bound * (1.0 + share / (total / batch_size))


def clip_adaptive(grads: PerSampleGrads, groups: np.ndarray,
                  bounds: np.ndarray) -> ClipOutcome:
    """Clip each row at its group's bound.

    Sensitivity is the maximum bound among groups present in this batch;
    an absent group cannot contribute a row, so its bound is ignored.
    """
    bounds = np.asarray(bounds, dtype=np.float64)
    if not np.all(bounds > 0):
        raise ValueError("all bounds must be positive")
    groups = np.asarray(groups)
    clipped = _rescale_rows(grads.grads, grads.norms, bounds[groups])
    present = np.unique(groups)
    sensitivity = float(bounds[present].max())
    report = GroupClipReport(bounds.copy(),
                             _clip_fraction(grads.norms, groups, bounds, bounds.shape[0]))
    return ClipOutcome(clipped, sensitivity, report)


def naive_weights(sizes_noised: np.ndarray, num_groups: int,
                  batch_size: int) -> np.ndarray:
    """Reweight factor per group: (batch/K) over the noised size.

    Noised sizes are clamped at one so a negative draw cannot flip signs.
    """
    if num_groups < 1 or batch_size < 1:
        raise ValueError("num_groups and batch_size must be positive")
    sizes = np.maximum(np.asarray(sizes_noised, dtype=np.float64), 1.0)
    return (batch_size / num_groups) / sizes


def clip_naive(grads: PerSampleGrads, groups: np.ndarray, weights: np.ndarray,
               base_bound: float) -> ClipOutcome:
    """Clip at the base bound, then scale each row by its group weight.

    Sensitivity is base_bound times the largest weight among groups present
    in the batch.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if not np.all(weights > 0):
        raise ValueError("all weights must be positive")
    if not base_bound > 0:
        raise ValueError("base_bound must be positive")
    groups = np.asarray(groups)
    norms = grads.norms
    factors = np.ones_like(norms)
    over = norms > base_bound
    factors[over] = base_bound / norms[over]
    clipped = grads.grads * (factors * weights[groups])[:, None]
    present = np.unique(groups)
    sensitivity = float(base_bound * weights[present].max())
    base = np.full(weights.shape[0], base_bound)
    report = GroupClipReport(weights.copy(),
                             _clip_fraction(norms, groups, base, weights.shape[0]))
    return ClipOutcome(clipped, sensitivity, report)


def apply_strategy(strategy: ClipStrategy, grads: PerSampleGrads,
                   groups: np.ndarray, num_groups: int,
                   rng: np.random.Generator) -> ClipOutcome:
    """Run one strategy on a batch, consuming count noise from ``rng``.

    The returned report carries the noised counts/sizes where the strategy
    produced them.
    """
    batch_size = grads.norms.shape[0]
    if isinstance(strategy, Uniform):
        return clip_uniform(grads, strategy.bound, groups, num_groups)
    if isinstance(strategy, GroupAdaptive):
        counts = group_counts(grads, groups, strategy.base_bound, num_groups)
        noised = noise_counts(counts, strategy.count_noise_std, rng)
        bounds = adaptive_bounds(noised, strategy.base_bound, batch_size)
        outcome = clip_adaptive(grads, groups, bounds)
        outcome.report.above_noised = noised.above.copy()
        outcome.report.sizes_noised = noised.above + noised.at_or_below
        return outcome
    if isinstance(strategy, NaiveReweight):
        sizes = np.bincount(groups, minlength=num_groups).astype(np.float64)
        noised_sizes = sizes + rng.normal(0.0, strategy.count_noise_std, size=num_groups)
        weights = naive_weights(noised_sizes, num_groups, batch_size)
        outcome = clip_naive(grads, groups, weights, strategy.base_bound)
        outcome.report.sizes_noised = noised_sizes
        return outcome
    raise ValueError(f"not a clipping strategy: {strategy!r}")

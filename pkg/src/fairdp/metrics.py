"""Per-group utility metrics, privacy-impact testing, and fairness gaps.

``group_report`` evaluates a model per group; ``privacy_impact`` compares a
private model's report against a non-private baseline and tests whether the
per-group accuracy drops stay within a threshold of each other. The
within-model gaps (demographic parity, equalized odds) treat the decision
as binary: predicted-positive means the argmax class equals a designated
positive class.

All metrics are pure and invariant to row order. For more than two groups,
pairwise definitions are summarized by the maximum gap over pairs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import model
from .errors import DataError


@dataclass(frozen=True)
class GroupReport:
    """Per-group test accuracy and mean loss, plus the overall accuracy."""

    group_names: tuple[str, ...]
    accuracy: np.ndarray
    mean_loss: np.ndarray
    counts: np.ndarray
    overall_accuracy: float


@dataclass(frozen=True)
class ImpactReport:
    """Signed per-group accuracy change of a private model vs its baseline."""

    group_names: tuple[str, ...]
    delta: np.ndarray
    max_pairwise_gap: float
    tau: float
    passes: bool


def group_report(spec: model.ModelSpec, params: np.ndarray, data) -> GroupReport:
    """Exact per-group accuracy and mean (regularized) loss on a dataset."""
    counts = data.group_sizes()
    if np.any(counts == 0):
        missing = [data.group_names[k] for k in np.flatnonzero(counts == 0)]
        raise DataError(f"empty group(s) in evaluation data: {missing}")
    probs = model.forward(spec, params, data.features)
    correct = (np.argmax(probs, axis=1) == data.labels).astype(np.float64)
    losses = model.per_sample_grads(spec, params, data).losses
    num_groups = data.num_groups
    acc = np.bincount(data.groups, weights=correct, minlength=num_groups) / counts
    loss = np.bincount(data.groups, weights=losses, minlength=num_groups) / counts
    return GroupReport(data.group_names, acc, loss, counts, float(correct.mean()))


def _max_pairwise_gap(values: np.ndarray) -> float:
    finite = values[np.isfinite(values)]
    if finite.size < 2:
        return float("nan")
    return float(finite.max() - finite.min())


def privacy_impact(private: GroupReport, nonprivate: GroupReport, tau: float) -> ImpactReport:
    """Per-group accuracy deltas and the largest pairwise difference.

    Passes when max_{i,j} |delta_i - delta_j| <= tau. Deltas are signed, so
    swapping the two reports negates every delta but leaves the gap alone.
    """
    if private.group_names != nonprivate.group_names:
        raise ValueError(
            f"group mismatch: {private.group_names} vs {nonprivate.group_names}")
    delta = private.accuracy - nonprivate.accuracy
    gap = _max_pairwise_gap(delta)
    return ImpactReport(private.group_names, delta, gap, tau, bool(gap <= tau))


def _positive_rates(spec, params, data, positive_class, condition=None):
    """Per-group rate of predicting the positive class among ``condition``."""
    preds = np.argmax(model.forward(spec, params, data.features), axis=1)
    hit = (preds == positive_class).astype(np.float64)
    mask = np.ones(data.n, dtype=bool) if condition is None else condition
    rates = np.full(data.num_groups, np.nan)
    for k in range(data.num_groups):
        sel = mask & (data.groups == k)
        if sel.any():
            rates[k] = hit[sel].mean()
    return rates


def demographic_parity_gap(spec: model.ModelSpec, params: np.ndarray, data,
                           positive_class: int = 1) -> float:
    """Largest pairwise difference in positive-prediction rates."""
    if np.any(data.group_sizes() == 0):
        raise DataError("empty group in evaluation data")
    return _max_pairwise_gap(_positive_rates(spec, params, data, positive_class))


def equalized_odds_gaps(spec: model.ModelSpec, params: np.ndarray, data,
                        positive_class: int = 1) -> tuple[float, float]:
    """Largest pairwise TPR gap and FPR gap across groups.

    A group missing one label value has its rate undefined (NaN) and is
    excluded from the pairwise maxima; a warning reports which group. If
    fewer than two groups remain defined, the gap itself is NaN.
    """
    if np.any(data.group_sizes() == 0):
        raise DataError("empty group in evaluation data")
    is_positive = data.labels == positive_class
    tpr = _positive_rates(spec, params, data, positive_class, is_positive)
    fpr = _positive_rates(spec, params, data, positive_class, ~is_positive)
    for k in range(data.num_groups):
        if not np.isfinite(tpr[k]):
            warnings.warn(f"group '{data.group_names[k]}' has no positive labels; "
                          "TPR undefined", stacklevel=2)
        if not np.isfinite(fpr[k]):
            warnings.warn(f"group '{data.group_names[k]}' has no negative labels; "
                          "FPR undefined", stacklevel=2)
    return _max_pairwise_gap(tpr), _max_pairwise_gap(fpr)

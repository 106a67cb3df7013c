"""DP-SGD training loop with per-group logging and budget-matched stopping.

One master seed derives three independent random streams: batch sampling,
count noise, and gradient noise. Toggling count noise therefore never
perturbs batch selection or the gradient noise, which is what makes the
strategy-reduction equivalences exact.

Each iteration draws a fresh without-replacement batch (an epoch is
floor(n / batch_size) iterations), privatizes the per-sample gradients
with the configured strategy, perturbs the clipped sum with Gaussian noise
scaled to the strategy's effective sensitivity, and appends the step's
mechanism events to the privacy ledger. A zero noise scale contributes no
ledger event and draws nothing from its stream; such runs are only
meaningful for equivalence testing.

With a budget target set, the accumulated epsilon is recomputed each
iteration (one curve scale plus a minimum over orders) and the run stops
at the last iteration whose epsilon still fits the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from . import metrics, privacy
from .clipping import ClipOutcome, ClipStrategy, GroupClipReport, NonPrivate, apply_strategy
from .errors import NumericError
from .model import ModelSpec, forward as model_forward, init_params, per_sample_grads
from .privacy import MechanismEvent, PrivacyLedger, RdpCurve

INV_SQRT_TOTAL = "inv_sqrt_total"


@dataclass(frozen=True)
class TrainConfig:
    """Everything the training loop needs besides the data."""

    model: ModelSpec
    strategy: Union[ClipStrategy, NonPrivate]
    noise_multiplier: float
    lr: Union[float, str]
    batch_size: int
    epochs: int
    delta: float
    seed: int
    budget_target: float | None = None
    eval_every: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.eval_every < 1:
            raise ValueError("batch_size, epochs, eval_every must be >= 1")
        if self.noise_multiplier < 0:
            raise ValueError("noise_multiplier must be non-negative")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must be in (0, 1]")
        if isinstance(self.lr, str) and self.lr != INV_SQRT_TOTAL:
            raise ValueError(f"lr must be a number or '{INV_SQRT_TOTAL}'")


@dataclass
class EpochLog:
    """Per-group statistics measured on the full training set at epoch end."""

    epoch: int
    mean_loss: np.ndarray
    mean_grad_norm: np.ndarray
    train_accuracy: np.ndarray
    epsilon: float | None
    clip_report: GroupClipReport | None


@dataclass
class TrainResult:
    params: np.ndarray
    ledger: PrivacyLedger
    epoch_logs: list[EpochLog]
    test_report: metrics.GroupReport
    iterations_executed: int
    iterations_planned: int
    event_kinds: tuple[str, ...]
    final_epsilon: float | None
    final_best_order: float | None
    learning_rate: float


def sample_batch(n: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform without-replacement draw, returned in ascending index order."""
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds population {n}")
    return np.sort(rng.choice(n, size=batch_size, replace=False))


def private_mean_gradient(clipped: np.ndarray, sensitivity: float,
                          noise_multiplier: float,
                          rng: np.random.Generator) -> np.ndarray:
    """Mean of clipped rows after noising the sum.

    Adds i.i.d. Gaussian noise of standard deviation
    noise_multiplier * sensitivity to the row sum, then divides by the row
    count. With a zero noise multiplier, nothing is drawn from ``rng``.
    """
    total = clipped.sum(axis=0)
    if noise_multiplier > 0.0:
        total = total + rng.normal(0.0, noise_multiplier * sensitivity, size=total.shape)
    return total / clipped.shape[0]


def dp_step(spec: ModelSpec, params: np.ndarray, batch,
            strategy: Union[ClipStrategy, NonPrivate], noise_multiplier: float,
            lr: float, sampling_rate: float, count_rng: np.random.Generator,
            noise_rng: np.random.Generator, ledger: PrivacyLedger,
            num_groups: int) -> tuple[np.ndarray, ClipOutcome | None]:
    """One SGD update on a batch, privatized per the strategy.

    Appends this step's mechanism events to the ledger: the count-noise
    event first (group-aware strategies, unit sensitivity), then the
    gradient-noise event. Events with a zero noise scale are not recorded.

    Raises:
      NumericError: a non-finite per-sample gradient or loss was produced.
    """
    grads = per_sample_grads(spec, params, batch)
    if not (np.isfinite(grads.norms).all() and np.isfinite(grads.losses).all()):
        raise NumericError("non-finite per-sample gradient")
    if isinstance(strategy, NonPrivate):
        update = private_mean_gradient(grads.grads, 0.0, 0.0, noise_rng)
        return params - lr * update, None
    outcome = apply_strategy(strategy, grads, batch.groups, num_groups, count_rng)
    count_noise = getattr(strategy, "count_noise_std", 0.0)
    if count_noise > 0.0:
        ledger.append(MechanismEvent(count_noise, sampling_rate, 1))
    if noise_multiplier > 0.0:
        ledger.append(MechanismEvent(noise_multiplier, sampling_rate, 1))
    update = private_mean_gradient(outcome.clipped, outcome.sensitivity,
                                   noise_multiplier, noise_rng)
    return params - lr * update, outcome


def step_rdp_curve(strategy, noise_multiplier: float, sampling_rate: float,
                   orders=privacy.DEFAULT_ORDERS) -> np.ndarray | None:
    """RDP curve of a single iteration's events; None if there are none."""
    events = []
    count_noise = getattr(strategy, "count_noise_std", 0.0)
    if not isinstance(strategy, NonPrivate):
        if count_noise > 0.0:
            events.append(MechanismEvent(count_noise, sampling_rate, 1))
        if noise_multiplier > 0.0:
            events.append(MechanismEvent(noise_multiplier, sampling_rate, 1))
    if not events:
        return None
    return privacy.compose(PrivacyLedger(events), orders).eps_rdp


def group_train_stats(spec: ModelSpec, params: np.ndarray, data,
                      chunk_size: int = 2048):
    """Per-group mean loss, mean pre-clip gradient norm, and accuracy.

    Computed over the full dataset in chunks; a group absent from the data
    gets NaN entries.
    """
    num_groups = data.num_groups
    loss_sum = np.zeros(num_groups)
    norm_sum = np.zeros(num_groups)
    correct = np.zeros(num_groups)
    for start in range(0, data.n, chunk_size):
        idx = np.arange(start, min(start + chunk_size, data.n))
        batch = data.take(idx)
        grads = per_sample_grads(spec, params, batch)
        preds = np.argmax(model_forward(spec, params, batch.features), axis=1)
        hits = (preds == batch.labels).astype(np.float64)
        loss_sum += np.bincount(batch.groups, weights=grads.losses, minlength=num_groups)
        norm_sum += np.bincount(batch.groups, weights=grads.norms, minlength=num_groups)
        correct += np.bincount(batch.groups, weights=hits, minlength=num_groups)
    counts = data.group_sizes().astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return loss_sum / counts, norm_sum / counts, correct / counts


def _epsilon_after(step_curve: np.ndarray, steps: int, delta: float,
                   orders=privacy.DEFAULT_ORDERS) -> tuple[float, float]:
    curve = RdpCurve(np.asarray(orders, dtype=np.float64), steps * step_curve)
    return privacy.to_epsilon(curve, delta)


def resolve_learning_rate(lr, planned_iterations: int) -> float:
    """A numeric lr is used as-is; the inverse-sqrt rule is a constant
    1/sqrt(total planned iterations), not a per-step decay."""
    if isinstance(lr, str):
        return 1.0 / math.sqrt(planned_iterations)
    return float(lr)


def train(config: TrainConfig, train_data, test_data) -> TrainResult:
    """Run the configured training loop end to end.

    Returns the final parameters, the privacy ledger, the per-epoch group
    logs, and the final per-group test report, plus bookkeeping (iteration
    counts, event kinds, final epsilon at the config's delta).
    """
    n = train_data.n
    if config.batch_size > n:
        raise ValueError(f"batch_size {config.batch_size} exceeds training size {n}")
    iters_per_epoch = n // config.batch_size
    planned = config.epochs * iters_per_epoch
    lr = resolve_learning_rate(config.lr, planned)
    sampling_rate = config.batch_size / n

    batch_ss, count_ss, noise_ss = np.random.SeedSequence(config.seed).spawn(3)
    batch_rng = np.random.default_rng(batch_ss)
    count_rng = np.random.default_rng(count_ss)
    noise_rng = np.random.default_rng(noise_ss)

    spec = config.model
    params = init_params(spec, config.seed)
    ledger = PrivacyLedger()
    step_curve = step_rdp_curve(config.strategy, config.noise_multiplier, sampling_rate)

    logs: list[EpochLog] = []
    executed = 0
    last_outcome: ClipOutcome | None = None
    stopped = False
    for epoch in range(1, config.epochs + 1):
        for _ in range(iters_per_epoch):
            if config.budget_target is not None and step_curve is not None:
                eps_next, _ = _epsilon_after(step_curve, executed + 1, config.delta)
                if eps_next > config.budget_target:
                    stopped = True
                    break
            idx = sample_batch(n, config.batch_size, batch_rng)
            try:
                params, outcome = dp_step(
                    spec, params, train_data.take(idx), config.strategy,
                    config.noise_multiplier, lr, sampling_rate,
                    count_rng, noise_rng, ledger, train_data.num_groups)
            except NumericError as exc:
                raise NumericError(f"iteration {executed + 1}: {exc}") from exc
            if outcome is not None:
                last_outcome = outcome
            executed += 1
        if stopped or epoch % config.eval_every == 0 or epoch == config.epochs:
            loss, norm, acc = group_train_stats(spec, params, train_data)
            epsilon = None
            if step_curve is not None and executed > 0:
                epsilon = _epsilon_after(step_curve, executed, config.delta)[0]
            logs.append(EpochLog(epoch, loss, norm, acc, epsilon,
                                 last_outcome.report if last_outcome else None))
        if stopped:
            break

    final_epsilon = final_order = None
    if ledger.events:
        final_epsilon, final_order = privacy.to_epsilon(
            privacy.compose(ledger), config.delta)
    kinds = []
    if not isinstance(config.strategy, NonPrivate):
        if getattr(config.strategy, "count_noise_std", 0.0) > 0.0:
            kinds.append("count-noise")
        if config.noise_multiplier > 0.0:
            kinds.append("gradient-noise")
    return TrainResult(
        params=params,
        ledger=ledger,
        epoch_logs=logs,
        test_report=metrics.group_report(spec, params, test_data),
        iterations_executed=executed,
        iterations_planned=planned,
        event_kinds=tuple(kinds),
        final_epsilon=final_epsilon,
        final_best_order=final_order,
        learning_rate=lr,
    )


def train_nonprivate(config: TrainConfig, train_data, test_data) -> TrainResult:
    """The SGD baseline: the same loop with the non-private strategy."""
    return train(replace(config, strategy=NonPrivate(), noise_multiplier=0.0),
                 train_data, test_data)

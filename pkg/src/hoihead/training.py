"""Head-only gradient training with a cosine warm-restart schedule.

The backbone is out of scope: features arrive precomputed, and training
updates only the linear head.  Per batch the chain rule through the scaled
logits gives

    dL/dW_i = gamma * mean_b(g_{b,i} * x_b)      dL/db_i = mean_b(g_{b,i})

with g the configured loss's logit gradient.  The optimizer is plain SGD or
adaptive moments (Adam-form, zero weight decay).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .classifier import LinearClassifier, forward_logits_matrix
from .data import Dataset, oversample_epoch
from .evaluation import MeanApResult, mean_ap
from .losses import LOSS_KINDS, batch_loss
from .taxonomy import FrequencyBands

OPTIMIZERS = ("sgd", "adam")


class TrainingDiverged(RuntimeError):
    """Raised when a batch produces a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 256
    base_lr: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    restart_period: int = 5
    loss: str = "lse_sign"
    loss_params: dict | None = None
    min_count: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.base_lr < 0:
            raise ValueError("base_lr must be nonnegative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; use one of {OPTIMIZERS}")
        if self.restart_period < 1:
            raise ValueError("restart_period must be at least 1")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss!r}; use one of {LOSS_KINDS}")
        if self.min_count < 0:
            raise ValueError("min_count must be nonnegative")


@dataclass
class TrainReport:
    """Loss trajectory, the trained head, and (optionally) evaluation results.

    wall_clock is informational only and never serialized, so report files
    stay byte-reproducible.
    """

    epoch_losses: list[float]
    epoch_lrs: list[float]
    classifier: LinearClassifier
    eval_result: MeanApResult | None = None
    wall_clock: float = 0.0
    config: TrainConfig | None = None

    @property
    def overall_map(self) -> float | None:
        return None if self.eval_result is None else self.eval_result.overall


def lr_at(base_lr: float, restart_period_steps: int, step: int) -> float:
    """Cosine-annealed learning rate with hard restarts.

    Position t = step mod period; lr = base_lr * (1 + cos(pi * t / period)) / 2.
    Step 0 and every restart boundary return base_lr exactly.
    """
    if restart_period_steps < 1:
        raise ValueError("restart_period_steps must be at least 1")
    t = step % restart_period_steps
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * t / restart_period_steps))


@dataclass
class _AdamState:
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    t: int = 0


def train(
    config: TrainConfig,
    dataset: Dataset,
    classifier: LinearClassifier,
    eval_dataset: Dataset | None = None,
    bands: FrequencyBands | None = None,
) -> TrainReport:
    """Fine-tune the head in place and report the per-epoch mean loss.

    Each epoch draws a fresh shuffle of the oversampled index multiset (the
    multiset itself is fixed by the dataset and min_count, so epoch length is
    constant).  When ``eval_dataset`` is given, the trained head is scored on
    it and the AP report is attached.
    """
    if classifier.dim != dataset.dim or classifier.n_classes != dataset.n_classes:
        raise ValueError(
            f"classifier ({classifier.n_classes}, {classifier.dim}) does not match "
            f"dataset ({dataset.n_classes}, {dataset.dim})"
        )
    start = time.perf_counter()
    weights, bias, gamma = classifier.weights, classifier.bias, classifier.gamma
    adam = None
    if config.optimizer == "adam":
        adam = _AdamState(
            np.zeros_like(weights), np.zeros_like(weights), np.zeros_like(bias), np.zeros_like(bias)
        )

    epoch_losses: list[float] = []
    epoch_lrs: list[float] = []
    labels_f = dataset.labels.astype(np.float64)
    global_step = 0
    period_steps = 1
    for epoch in range(config.epochs):
        indices = oversample_epoch(dataset, config.min_count, seed=_epoch_seed(config.seed, epoch))
        steps_per_epoch = math.ceil(indices.size / config.batch_size)
        period_steps = config.restart_period * steps_per_epoch
        epoch_lrs.append(lr_at(config.base_lr, period_steps, global_step))
        loss_sum = 0.0
        for b in range(steps_per_epoch):
            batch = indices[b * config.batch_size : (b + 1) * config.batch_size]
            x = dataset.features[batch]
            y = labels_f[batch]
            logits = forward_logits_matrix(classifier, x)
            values, grads = batch_loss(config.loss, config.loss_params, logits, y)
            batch_mean = float(values.mean())
            if not math.isfinite(batch_mean):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {b} "
                    f"(loss={config.loss}, lr={lr_at(config.base_lr, period_steps, global_step):g})"
                )
            loss_sum += float(values.sum())
            grad_w = gamma * (grads.T @ x) / batch.size
            grad_b = grads.mean(axis=0)
            lr = lr_at(config.base_lr, period_steps, global_step)
            if adam is None:
                weights -= lr * grad_w
                bias -= lr * grad_b
            else:
                _adam_step(adam, weights, bias, grad_w, grad_b, lr, config)
            global_step += 1
        epoch_losses.append(loss_sum / indices.size)

    eval_result = None
    if eval_dataset is not None:
        scores = forward_logits_matrix(classifier, eval_dataset.features)
        eval_result = mean_ap(scores, eval_dataset.labels, bands)
    return TrainReport(
        epoch_losses=epoch_losses,
        epoch_lrs=epoch_lrs,
        classifier=classifier,
        eval_result=eval_result,
        wall_clock=time.perf_counter() - start,
        config=config,
    )


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(epoch,)).generate_state(1)[0])


def _adam_step(state: _AdamState, weights, bias, grad_w, grad_b, lr, config: TrainConfig):
    state.t += 1
    b1, b2, eps = config.beta1, config.beta2, config.adam_eps
    state.m_w = b1 * state.m_w + (1 - b1) * grad_w
    state.v_w = b2 * state.v_w + (1 - b2) * grad_w**2
    state.m_b = b1 * state.m_b + (1 - b1) * grad_b
    state.v_b = b2 * state.v_b + (1 - b2) * grad_b**2
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    weights -= lr * (state.m_w / c1) / (np.sqrt(state.v_w / c2) + eps)
    bias -= lr * (state.m_b / c1) / (np.sqrt(state.v_b / c2) + eps)

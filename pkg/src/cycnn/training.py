"""SGD with momentum, the plateau learning-rate schedule, early stopping and
the training loop."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np

from .datasets import AugmentSpec, LabeledDataset, augment, channel_stats, split_train_val
from .model import Model, backward, forward, loss_and_grad

log = logging.getLogger(__name__)

METRIC_FIELDS = ("epoch", "train_loss", "val_loss", "val_acc", "lr")


@dataclass
class TrainConfig:
    lr0: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-5
    lr_halve_patience: int = 5
    early_stop_patience: int = 15
    batch_size: int = 64
    seed: int = 0
    augment: str = "none"
    max_epochs: int = 200
    val_fraction: float = 0.1
    eval_batch_size: int = 256

    def __post_init__(self):
        for name in ("lr0", "batch_size", "max_epochs", "lr_halve_patience", "early_stop_patience"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("momentum and weight_decay must be >= 0")


def sgd_step(params, grads, velocity, lr, momentum, weight_decay):
    """In-place SGD update; returns ``(params, velocity)``.

    ``g = grad + weight_decay * p``; ``v = momentum * v + g``; ``p -= lr * v``.
    """
    for p, g, v in zip(params, grads, velocity):
        step = g + weight_decay * p if weight_decay else g
        v *= momentum
        v += step
        p -= (lr * v).astype(p.dtype, copy=False)
    return params, velocity


class PlateauSchedule:
    """Halve the learning rate after ``patience`` epochs without a decrease
    in validation loss."""

    def __init__(self, lr0: float, patience: int = 5, factor: float = 0.5):
        self.lr = lr0
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


class EarlyStopping:
    """Stop after ``patience`` epochs without a validation-accuracy gain."""

    def __init__(self, patience: int = 15):
        self.patience = patience
        self.best = -np.inf
        self.bad_epochs = 0

    def step(self, val_acc: float) -> bool:
        if val_acc > self.best:
            self.best = val_acc
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def predict(model: Model, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Logits for already prepared inputs, in evaluation mode."""
    out = [forward(model, x[i:i + batch_size], train=False)[0] for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.num_classes))


def evaluate(model: Model, ds: LabeledDataset, batch_size: int = 256) -> tuple[float, float, np.ndarray]:
    """Return ``(loss, accuracy, predictions)`` on raw images."""
    logits = predict(model, model.prepare(ds.images), batch_size)
    loss, _ = loss_and_grad(logits, ds.labels)
    preds = logits.argmax(axis=1)
    return loss, float(np.mean(preds == ds.labels)), preds


def fit_normalization(model: Model, ds: LabeledDataset) -> Model:
    """Set the model's standardisation from ``ds`` (after polar resampling)."""
    model.norm_mean = None
    model.norm_std = None
    mean, std = channel_stats(model.prepare(ds.images))
    model.norm_mean, model.norm_std = mean, std
    return model


def train(model: Model, dataset: LabeledDataset, cfg: TrainConfig | None = None,
          val: LabeledDataset | None = None, callback=None):
    """Train ``model`` in place; return ``(model, metrics)``.

    Without ``val`` the last ``cfg.val_fraction`` of the seed-shuffled
    ``dataset`` is held out. ``metrics`` holds one dict per epoch with
    :data:`METRIC_FIELDS`. ``callback(epoch_metrics)`` is called after every
    epoch.
    """
    cfg = cfg or TrainConfig()
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if val is None:
        train_ds, val = split_train_val(dataset, cfg.val_fraction, cfg.seed)
    else:
        train_ds = dataset
    if len(val) == 0:
        val = train_ds
    if model.norm_mean is None:
        fit_normalization(model, train_ds)

    params = [p for _, _, p in model.parameters()]
    velocity = [np.zeros_like(p) for p in params]
    schedule = PlateauSchedule(cfg.lr0, cfg.lr_halve_patience)
    stopper = EarlyStopping(cfg.early_stop_patience)
    val_x = model.prepare(val.images)
    metrics = []

    for epoch in range(1, cfg.max_epochs + 1):
        lr = schedule.lr
        rng = np.random.default_rng([cfg.seed, epoch])
        epoch_ds = train_ds
        if cfg.augment != "none":
            epoch_ds = augment(train_ds, AugmentSpec(cfg.augment, seed=cfg.seed * 100003 + epoch))
        x = model.prepare(epoch_ds.images)
        y = epoch_ds.labels
        order = rng.permutation(len(x))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits, cache = forward(model, x[idx], train=True)
            loss, grad = loss_and_grad(logits, y[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"loss diverged at epoch {epoch}")
            layer_grads = backward(model, cache, grad.astype(x.dtype, copy=False))
            grads = [layer_grads[i][name] for i, name, _ in model.parameters()]
            sgd_step(params, grads, velocity, lr, cfg.momentum, cfg.weight_decay)
            losses.append(loss * len(idx))

        val_logits = predict(model, val_x, cfg.eval_batch_size)
        val_loss, _ = loss_and_grad(val_logits, val.labels)
        val_acc = float(np.mean(val_logits.argmax(axis=1) == val.labels))
        row = {"epoch": epoch, "train_loss": float(sum(losses) / len(x)),
               "val_loss": float(val_loss), "val_acc": val_acc, "lr": lr}
        metrics.append(row)
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f lr %.5g",
                 epoch, row["train_loss"], val_loss, val_acc, lr)
        if callback is not None:
            callback(row)
        schedule.step(val_loss)
        if stopper.step(val_acc):
            break
    return model, metrics


def clone(model: Model) -> Model:
    return copy.deepcopy(model)

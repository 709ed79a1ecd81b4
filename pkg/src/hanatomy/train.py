"""Momentum SGD with step-annealed learning rate and epoch snapshots."""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError, TrainingDivergence
from .model import accuracy, dataset_loss, loss_and_grad


def default_snapshot_epochs(epochs):
    """Geometric grid 1, 2, 4, ... capped by ``epochs``, plus the final epoch."""
    grid = []
    e = 1
    while e < epochs:
        grid.append(e)
        e *= 2
    grid.append(epochs)
    return grid


@dataclass
class TrainConfig:
    initial_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 128
    epochs: int = 30
    snapshot_epochs: list = None
    seed: int = 0

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise ConfigError("initial_lr must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.snapshot_epochs is None:
            self.snapshot_epochs = default_snapshot_epochs(self.epochs)
        self.snapshot_epochs = sorted({int(e) for e in self.snapshot_epochs})
        if self.snapshot_epochs and not (1 <= self.snapshot_epochs[0] and self.snapshot_epochs[-1] <= self.epochs):
            raise ConfigError(f"snapshot epochs must lie in [1, {self.epochs}]")


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({"records": self.records}, indent=2, sort_keys=True)

    @property
    def final_loss(self):
        return self.records[-1]["loss"]


def lr_schedule(initial_lr, epochs, epoch):
    """Learning rate for 0-based ``epoch``: divided by 10 at 1/3 and again at 2/3 of training."""
    if epoch < math.ceil(epochs / 3):
        return initial_lr
    if epoch < math.ceil(2 * epochs / 3):
        return initial_lr / 10.0
    return initial_lr / 100.0


def momentum_step(theta, velocity, grad, lr, momentum, weight_decay):
    """In-place update: ``v <- momentum * v + g + weight_decay * theta``; ``theta <- theta - lr * v``."""
    velocity *= momentum
    velocity += grad
    velocity += weight_decay * theta
    theta -= lr * velocity
    return theta, velocity


def sgd_train(model, dataset, cfg):
    """Train a copy of ``model``; returns ``(trained_model, trace)``.

    Update per batch: ``v <- momentum * v + g + weight_decay * theta`` and
    ``theta <- theta - lr * v``. Batches come from a fresh seeded
    permutation each epoch and the final partial batch is kept. Every
    trace record holds the full-dataset loss and accuracy after the epoch;
    snapshots are parameter copies keyed by 1-based epoch.
    """
    if dataset.n_features != model.n_features or dataset.n_classes != model.n_classes:
        raise DataError(
            f"model expects {model.n_features} features / {model.n_classes} classes, dataset has "
            f"{dataset.n_features} / {dataset.n_classes}")
    model = model.copy()
    theta = model.params
    velocity = np.zeros_like(theta)
    rng = np.random.default_rng(cfg.seed)
    X, y = dataset.features, dataset.labels
    trace = TrainTrace()
    wanted = set(cfg.snapshot_epochs)
    for epoch in range(cfg.epochs):
        lr = lr_schedule(cfg.initial_lr, cfg.epochs, epoch)
        order = rng.permutation(dataset.n)
        for b, start in enumerate(range(0, dataset.n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                # overflow shows up as a non-finite loss and is reported below
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grad = loss_and_grad(model, X[idx], y[idx])
            except DataError:
                raise TrainingDivergence(epoch + 1, b, float("nan")) from None
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDivergence(epoch + 1, b, loss)
            momentum_step(theta, velocity, grad, lr, cfg.momentum, cfg.weight_decay)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                full_loss = dataset_loss(model, X, y)
        except DataError:
            full_loss = float("nan")
        if not np.isfinite(full_loss):
            raise TrainingDivergence(epoch + 1, None, full_loss)
        trace.records.append({
            "epoch": epoch + 1,
            "loss": full_loss,
            "accuracy": accuracy(model, X, y),
            "lr": lr,
        })
        if epoch + 1 in wanted:
            trace.snapshots[epoch + 1] = model.copy()
    return model, trace


def config_dict(cfg):
    return asdict(cfg)

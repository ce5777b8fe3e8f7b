"""Mini-batch training with linear-schedule SGD or Adam and early stopping.

The per-epoch inner loop is delegated to the selected backend kernel
(numba by default, pure numpy via GRANLAB_BACKEND=numpy). Everything a
run does is derived from TrainConfig.seed: the validation split, the
per-epoch shuffles, nothing else consumes randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import backends
from .dataset import LabeledDataset
from .exceptions import ConfigError, DataError, DivergenceError
from .gradients import ACT_IDS, HEAD_IDS, LOSS_IDS
from .losses import LossKind, aggregate_fine_to_coarse, evaluate_loss, loss_coarse
from .model import HEAD_SIGMOID, HEAD_SOFTMAX, MlpModel, predict_probs


@dataclass
class TrainConfig:
    optimizer: str = "sgd"
    lr_start: float = 0.01
    lr_end: float = 0.001
    max_epochs: int = 300
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-7
    early_stop_patience: int = 20  # 0 disables early stopping
    validation_fraction: float = 0.1
    seed: int = 0

    def validate(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ConfigError("learning rates must be positive")
        if self.lr_end > self.lr_start:
            raise ConfigError("lr_end must not exceed lr_start")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigError("max_epochs and batch_size must be >= 1")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.early_stop_patience < 0:
            raise ConfigError("patience must be >= 0")
        if not 0.0 <= self.validation_fraction < 0.5:
            raise ConfigError("validation_fraction must lie in [0, 0.5)")


@dataclass
class TrainingLog:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    stopped_early: bool = False


def learning_rate_at(cfg: TrainConfig, epoch: int) -> float:
    """SGD schedule: linear from lr_start to lr_end across max_epochs.

    Adam uses the constant cfg.lr_start. The schedule spans max_epochs
    regardless of early stopping, so it is independent of when a run halts.
    """
    if cfg.optimizer == "adam" or cfg.max_epochs == 1:
        return cfg.lr_start
    frac = epoch / (cfg.max_epochs - 1)
    return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac


def _coarse_probs(model: MlpModel, probs: np.ndarray, c0: list) -> np.ndarray:
    if model.head == HEAD_SIGMOID:
        return probs[:, 0]
    return probs[:, c0].sum(axis=1)


def _evaluate(model: MlpModel, x, onehot, coarse_y, hierarchy, loss: LossKind):
    """Objective value and coarse accuracy on one split."""
    probs = predict_probs(model, x)
    if model.head == HEAD_SIGMOID:
        value = loss_coarse(probs[:, 0], coarse_y)
        predicted = probs[:, 0]
    else:
        value = evaluate_loss(probs, onehot, hierarchy, loss)
        predicted = aggregate_fine_to_coarse(probs, hierarchy)
    acc = float(np.mean((predicted >= 0.5) == (coarse_y == 1.0)))
    return value, acc


def train(model: MlpModel, data: LabeledDataset, cfg: TrainConfig,
          loss: LossKind) -> tuple[MlpModel, TrainingLog]:
    """Train a copy of the model; the input model is left untouched.

    Early stopping monitors the objective on a held-out validation split
    (or on the training split when validation_fraction is 0) and restores
    the best parameters seen. Raises DivergenceError when the objective
    becomes non-finite.
    """
    cfg.validate()
    if data.p == 0:
        raise DataError("empty training set")
    if model.head == HEAD_SIGMOID and loss.kind != "coarse":
        raise ConfigError(f"sigmoid head only trains with the coarse loss, got {loss.kind!r}")
    if model.head == HEAD_SOFTMAX and model.out_dim != data.k:
        raise ConfigError(f"model has {model.out_dim} outputs but data has {data.k} classes")
    if data.d != model.input_dim:
        raise DataError(f"data dimension {data.d} does not match model input {model.input_dim}")

    hierarchy = data.hierarchy
    x = data.features
    if model.head == HEAD_SOFTMAX:
        targets = data.fine_labels
        c0_mask = hierarchy.c0_mask()
    else:
        targets = data.coarse_labels().reshape(-1, 1)
        c0_mask = np.ones(1)

    split_seed, shuffle_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    n_val = int(cfg.validation_fraction * data.p)
    perm = np.random.default_rng(split_seed).permutation(data.p)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        raise DataError("validation split left no training samples")

    x_train = np.ascontiguousarray(x[train_idx])
    t_train = np.ascontiguousarray(targets[train_idx])
    onehot_train = data.fine_labels[train_idx]
    coarse_train = hierarchy.coarse_labels(onehot_train)
    if n_val:
        x_val = x[val_idx]
        onehot_val = data.fine_labels[val_idx]
        coarse_val = hierarchy.coarse_labels(onehot_val)

    work = model.copy()
    kernels = backends.get_kernels()
    act_id = ACT_IDS[work.activation]
    head_id = HEAD_IDS[work.head]
    loss_id = LOSS_IDS[loss.kind]
    params = (work.hidden_weights, work.hidden_biases, work.output_weights, work.output_biases)
    if cfg.optimizer == "adam":
        moments = tuple(np.zeros_like(p) for p in params for _ in ("m", "v"))
        step = 0

    shuffle_rng = np.random.default_rng(shuffle_seed)
    log = TrainingLog()
    best_value = np.inf
    best_params = tuple(p.copy() for p in params)
    epochs_without_improvement = 0

    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(train_idx.size).astype(np.int64)
        lr = learning_rate_at(cfg, epoch)
        if cfg.optimizer == "sgd":
            kernels.sgd_epoch(*params, x_train, t_train, c0_mask, order,
                              cfg.batch_size, lr, act_id, head_id, loss_id, loss.beta)
        else:
            step = kernels.adam_epoch(*params, moments, step, x_train, t_train, c0_mask,
                                      order, cfg.batch_size, lr, cfg.adam_beta1,
                                      cfg.adam_beta2, cfg.adam_epsilon,
                                      act_id, head_id, loss_id, loss.beta)

        train_value, train_acc = _evaluate(work, x_train, onehot_train, coarse_train, hierarchy, loss)
        log.train_loss.append(train_value)
        log.train_acc.append(train_acc)
        if n_val:
            val_value, val_acc = _evaluate(work, x_val, onehot_val, coarse_val, hierarchy, loss)
            log.val_loss.append(val_value)
            log.val_acc.append(val_acc)
            monitored = val_value
        else:
            monitored = train_value
        log.epochs_run = epoch + 1

        if not np.isfinite(monitored) or not np.isfinite(train_value):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch)

        if monitored < best_value:
            best_value = monitored
            best_params = tuple(p.copy() for p in params)
            log.best_epoch = epoch
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if cfg.early_stop_patience and epochs_without_improvement >= cfg.early_stop_patience:
                log.stopped_early = True
                break

    trained = replace(
        work,
        hidden_weights=best_params[0],
        hidden_biases=best_params[1],
        output_weights=best_params[2],
        output_biases=best_params[3],
    )
    return trained, log

"""L1 training loop with Adam, patience-based early stopping, and evaluation.

One epoch walks seeded shuffled mini-batches of train windows; after every
epoch the validation L1 loss is computed in eval mode. Strict improvement
(<) over the best validation loss resets the patience counter, anything else
increments it, and training halts once the counter exceeds the patience or
the epoch budget runs out. Whatever happens, the returned model carries the
parameters of the best validation epoch.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .data import SeriesDataset, make_windows
from .errors import ConfigError, DimensionError, TrainingError
from .model import TPRNN
from .tensor import Tensor


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainState:
    """Optimizer and early-stopping bookkeeping, kept across the whole fit."""

    epoch: int = 0
    adam_t: int = 0
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    best_val: float = float("inf")
    best_epoch: int = 0
    worse_count: int = 0
    best_snapshot: dict[str, np.ndarray] | None = None
    stopped_early: bool = False
    history: list[dict] = field(default_factory=list)


@dataclass
class ForecastReport:
    """Aggregate and per-horizon errors of a model over one split."""

    split: str
    window_count: int
    mse: float
    mae: float
    mse_denorm: float
    mae_denorm: float
    per_horizon_mse: list[float]
    per_horizon_mae: list[float]

    def to_dict(self) -> dict:
        return {
            "split": self.split, "window_count": self.window_count,
            "mse": self.mse, "mae": self.mae,
            "mse_denorm": self.mse_denorm, "mae_denorm": self.mae_denorm,
            "per_horizon_mse": self.per_horizon_mse,
            "per_horizon_mae": self.per_horizon_mae,
        }


def l1_loss(pred: Tensor, truth: Tensor) -> Tensor:
    """Mean absolute error over every entry, as a differentiable scalar."""
    if pred.shape != truth.shape:
        raise DimensionError(f"l1_loss shape mismatch: {pred.shape} vs {truth.shape}")
    return T.mean_all(T.abs_(T.sub(pred, truth)))


def metrics(pred: np.ndarray, truth: np.ndarray) -> dict[str, float]:
    """MSE and MAE over all entries of plain arrays."""
    if pred.shape != truth.shape:
        raise DimensionError(f"metrics shape mismatch: {pred.shape} vs {truth.shape}")
    err = pred - truth
    return {"mse": float((err ** 2).mean()), "mae": float(np.abs(err).mean())}


def adam_step(named_params: list[tuple[str, Tensor]], state: TrainState,
              cfg: TrainConfig) -> None:
    """One bias-corrected Adam update, with optional global-norm clipping."""
    grads = []
    for name, p in named_params:
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter '{name}'")
        grads.append(g)
    if cfg.clip_norm is not None:
        total = float(np.sqrt(sum(float((g ** 2).sum()) for g in grads)))
        if total > cfg.clip_norm:
            factor = cfg.clip_norm / total
            grads = [g * factor for g in grads]
    state.adam_t += 1
    t = state.adam_t
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for (name, p), g in zip(named_params, grads):
        m = state.adam_m.get(name)
        v = state.adam_v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        state.adam_m[name] = m
        state.adam_v[name] = v
        p.data = p.data - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps_adam)


def _validation_l1(model: TPRNN, windows) -> float:
    total = 0.0
    with T.no_grad():
        for w in windows:
            pred = model.forward(Tensor(w.input)).data
            total += float(np.abs(pred - w.target).mean())
    return total / len(windows)


def fit(model: TPRNN, dataset: SeriesDataset, cfg: TrainConfig,
        log_path: str | Path | None = None,
        val_loss_fn: Callable[[TPRNN, int], float] | None = None) -> tuple[TPRNN, TrainState]:
    """Train in place and return the model restored to its best epoch.

    ``val_loss_fn(model, epoch)`` overrides the validation measurement; the
    early-stopping tests drive it with synthetic loss sequences.
    """
    mcfg = model.cfg
    train_windows = make_windows(dataset, "train", mcfg.input_len, mcfg.horizon)
    val_windows = None
    if val_loss_fn is None:
        val_windows = make_windows(dataset, "val", mcfg.input_len, mcfg.horizon)

    seq = np.random.SeedSequence(cfg.seed)
    shuffle_rng, dropout_rng = [np.random.default_rng(s) for s in seq.spawn(2)]
    named = model.named_parameters()
    params = [p for _, p in named]
    state = TrainState()
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    started = time.monotonic()

    try:
        for epoch in range(1, cfg.max_epochs + 1):
            state.epoch = epoch
            order = shuffle_rng.permutation(len(train_windows))
            loss_sum = 0.0
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                T.clear_tape()
                T.zero_grads(params)
                total = None
                for idx in batch:
                    w = train_windows[idx]
                    pred = model.forward(Tensor(w.input), training=True, rng=dropout_rng)
                    loss = l1_loss(pred, Tensor(w.target))
                    total = loss if total is None else T.add(total, loss)
                batch_loss = T.scale(total, 1.0 / len(batch))
                value = batch_loss.item()
                if not np.isfinite(value):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch}, "
                        f"batch {start // cfg.batch_size}")
                T.backward(batch_loss, params=params)
                adam_step(named, state, cfg)
                loss_sum += value * len(batch)
            T.clear_tape()
            train_loss = loss_sum / len(order)

            if val_loss_fn is not None:
                val_loss = float(val_loss_fn(model, epoch))
            else:
                val_loss = _validation_l1(model, val_windows)

            record = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                      "lr": cfg.lr, "elapsed_s": time.monotonic() - started}
            state.history.append(record)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()

            if val_loss < state.best_val:
                state.best_val = val_loss
                state.best_epoch = epoch
                state.best_snapshot = model.params.snapshot()
                state.worse_count = 0
            else:
                state.worse_count += 1
                if state.worse_count > cfg.patience:
                    state.stopped_early = True
                    break
    finally:
        if log_fh:
            log_fh.close()

    if state.best_snapshot is not None:
        model.params.restore(state.best_snapshot)
    return model, state


def evaluate(model: TPRNN, dataset: SeriesDataset, split: str) -> ForecastReport:
    """Forecast every stride-1 window of a split and aggregate the errors."""
    mcfg = model.cfg
    if dataset.d != mcfg.channels:
        raise ConfigError(
            f"dataset has {dataset.d} channels, model expects {mcfg.channels}")
    windows = make_windows(dataset, split, mcfg.input_len, mcfg.horizon)
    horizon = mcfg.horizon
    sq = np.zeros(horizon)
    ab = np.zeros(horizon)
    sq_dn = 0.0
    ab_dn = 0.0
    per_row = 0
    with T.no_grad():
        for w in windows:
            pred = model.forward(Tensor(w.input)).data
            err = pred - w.target
            sq += (err ** 2).sum(axis=1)
            ab += np.abs(err).sum(axis=1)
            err_dn = dataset.denormalize(pred) - dataset.denormalize(w.target)
            sq_dn += float((err_dn ** 2).sum())
            ab_dn += float(np.abs(err_dn).sum())
            per_row += err.shape[1]
    total = per_row * horizon
    return ForecastReport(
        split=split, window_count=len(windows),
        mse=float(sq.sum() / total), mae=float(ab.sum() / total),
        mse_denorm=sq_dn / total, mae_denorm=ab_dn / total,
        per_horizon_mse=list(sq / per_row), per_horizon_mae=list(ab / per_row),
    )

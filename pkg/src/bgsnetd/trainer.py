"""RMSprop training loop over a patch dataset.

Single-threaded and fully deterministic for a fixed (seed, dataset, config)
triple: the parameter trajectory, checkpoints, and history repeat bit-exactly.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import checkpoint as ckpt
from .nn import Model, ModelConfig, bce_loss, init_model
from .patches import PatchDataset


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 150
    epochs: int = 10
    rmsprop_rho: float = 0.9
    rmsprop_epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    # Optional stopping rules; None disables each.
    target_loss: Optional[float] = None
    early_stop_patience: Optional[int] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 (batch-norm train mode)")
        if not 0.0 < self.rmsprop_rho < 1.0:
            raise ValueError("rmsprop_rho must lie in (0, 1)")


@dataclass
class RmspropState:
    """Per-parameter running averages of squared gradients."""

    acc: dict[str, np.ndarray]

    @classmethod
    def for_model(cls, model: Model) -> "RmspropState":
        return cls({name: np.zeros_like(p) for name, p in model.parameters().items()})


def rmsprop_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: RmspropState,
    cfg: TrainConfig,
) -> None:
    """One in-place update: acc <- rho*acc + (1-rho)*g^2, then
    p <- p - lr * g / (sqrt(acc) + eps), elementwise."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match '{name}' {p.shape}")
        acc = state.acc[name]
        acc *= cfg.rmsprop_rho
        acc += (1.0 - cfg.rmsprop_rho) * g * g
        p -= cfg.learning_rate * g / (np.sqrt(acc) + cfg.rmsprop_epsilon)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    accuracy: float
    seconds: float


@dataclass
class TrainHistory:
    entries: list[EpochStats] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,mean_loss,accuracy,seconds"]
        for e in self.entries:
            lines.append(f"{e.epoch},{e.mean_loss:.10g},{e.accuracy:.10g},{e.seconds:.3f}")
        return "\n".join(lines) + "\n"


def train(
    dataset: PatchDataset,
    cfg: TrainConfig,
    model: Optional[Model] = None,
    model_config: Optional[ModelConfig] = None,
) -> tuple[Model, TrainHistory, RmspropState]:
    """Fit the classifier on a patch dataset.

    Per epoch: shuffle, split into batches of batch_size (a final batch
    smaller than 2 is dropped), train-mode forward, BCE loss, backward,
    RMSprop step. Returns the model, per-epoch history, and optimizer state.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    classes = np.unique(dataset.labels)
    if classes.size < 2:
        warnings.warn("training set contains a single class; the classifier will be degenerate")

    if model is None:
        model = init_model(cfg.seed, model_config or ModelConfig(patch_size=dataset.patch_size))
    state = RmspropState.for_model(model)
    params = model.parameters()
    rng = np.random.default_rng(cfg.seed)

    history = TrainHistory()
    best_loss = np.inf
    stale_epochs = 0
    n = len(dataset)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        loss_sum = 0.0
        correct = 0
        seen = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if idx.size < 2:
                break
            x = dataset.data[idx]  # model casts to its own precision
            t = dataset.labels[idx].astype(np.float64)
            probs = model.forward(x, train=True)
            loss, grad = bce_loss(probs, t)
            rmsprop_step(params, model.backward(grad), state, cfg)
            loss_sum += loss * idx.size
            correct += int(np.count_nonzero((probs >= 0.5) == (t == 1.0)))
            seen += idx.size
        mean_loss = loss_sum / seen
        history.entries.append(
            EpochStats(epoch, mean_loss, correct / seen, time.perf_counter() - t0)
        )
        if cfg.target_loss is not None and mean_loss <= cfg.target_loss:
            break
        if cfg.early_stop_patience is not None:
            if mean_loss < best_loss - 1e-6:
                best_loss = mean_loss
                stale_epochs = 0
            else:
                stale_epochs += 1
                if stale_epochs >= cfg.early_stop_patience:
                    break
    return model, history, state


def save_checkpoint(model: Model, state: Optional[RmspropState], path) -> None:
    ckpt.save_checkpoint(model, path, accumulators=state.acc if state else None)


def load_checkpoint(path) -> tuple[Model, Optional[RmspropState]]:
    model, acc = ckpt.load_checkpoint(path)
    return model, (RmspropState(acc) if acc is not None else None)

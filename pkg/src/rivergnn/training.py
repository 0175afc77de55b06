"""Relevancy-weighted objective and the mini-batch training loop."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from ._rng import substream
from .dataset import ArraySamples, NormalizationParams, SampleSet, relevancy_score
from .exceptions import ConfigError, DomainError, NumericError
from .models import Model, clip_learned_weights, forward

Samples = SampleSet | ArraySamples

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 1e-5
    holdout_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigError("lr and weight_decay must be non-negative")
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must lie in (0, 1)")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    holdout_loss: list[float] = field(default_factory=list)
    selected_epoch: int = -1

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "holdout_loss", "selected"])
            for e, (tr, ho) in enumerate(zip(self.train_loss, self.holdout_loss)):
                w.writerow([e, repr(tr), repr(ho), int(e == self.selected_epoch)])


def loss_from_scores(pred, target: np.ndarray, scores: np.ndarray) -> dc.Tensor:
    """Batch mean of ``1/n * ||score * (pred - target)||^2``."""
    pred = dc.as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or np.shape(scores) != target.shape:
        raise DomainError(f"loss: shapes {pred.shape}, {target.shape}, {np.shape(scores)} differ")
    return dc.mean(dc.square(dc.hadamard(dc.sub(pred, target), scores)))


def weighted_loss(pred, target: np.ndarray, X: np.ndarray, params: NormalizationParams) -> dc.Tensor:
    """Relevancy-weighted square loss for windows ``X`` (..., n, W, C)."""
    scores = relevancy_score(np.asarray(X)[..., 0], params)
    if not np.any(scores):
        warnings.warn("all relevancy scores are zero; the loss ignores every error", RuntimeWarning, stacklevel=2)
    return loss_from_scores(pred, target, scores)


def predict(model: Model, samples: Samples, batch_size: int = 1024) -> np.ndarray:
    """Normalised predictions, shape (len(samples), n)."""
    out = [
        forward(model, samples.windows(np.arange(a, min(a + batch_size, len(samples))))).data
        for a in range(0, len(samples), batch_size)
    ]
    return np.concatenate(out) if out else np.zeros((0, model.graph.n))


def mean_loss(model: Model, samples: Samples, params: NormalizationParams, batch_size: int = 1024) -> float:
    total = 0.0
    for a in range(0, len(samples), batch_size):
        idx = np.arange(a, min(a + batch_size, len(samples)))
        X = samples.windows(idx)
        scores = relevancy_score(X[..., 0], params)
        total += loss_from_scores(forward(model, X), samples.targets(idx), scores).item() * len(idx)
    return total / len(samples)


def holdout_split(n_samples: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(fit indices, holdout indices), both sorted; drawn once per run."""
    perm = substream(seed, "holdout").permutation(n_samples)
    n_hold = max(1, int(round(fraction * n_samples))) if n_samples > 1 else 0
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def train(
    model: Model, samples: Samples, params: NormalizationParams, config: TrainConfig
) -> tuple[Model, TrainHistory]:
    """Adam with coupled L2 over shuffled mini-batches; returns the model at
    the epoch with the lowest holdout loss (earliest on ties)."""
    if len(samples) == 0:
        raise DomainError("empty training set")
    fit_idx, hold_idx = holdout_split(len(samples), config.holdout_fraction, config.seed)
    assert not np.intersect1d(fit_idx, hold_idx).size
    fit_set, hold_set = samples.subset(fit_idx), samples.subset(hold_idx)
    if len(fit_set) == 0:
        raise DomainError("training set too small to keep samples after the holdout split")

    shuffle_rng = substream(config.seed, "shuffle")
    opt = dc.Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    history = TrainHistory()
    best_state, best_loss = model.state_dict(), np.inf

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(fit_set))
        running = 0.0
        for b, a in enumerate(range(0, len(order), config.batch_size)):
            idx = order[a : a + config.batch_size]
            X = fit_set.windows(idx)
            scores = relevancy_score(X[..., 0], params)
            opt.zero_grad()
            with dc.Tape() as tape:
                loss = loss_from_scores(forward(model, X), fit_set.targets(idx), scores)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            tape.backward(loss)
            opt.step()
            clip_learned_weights(model)
            running += value * len(idx)
        history.train_loss.append(running / len(fit_set))
        hold = mean_loss(model, hold_set, params) if len(hold_set) else history.train_loss[-1]
        if not np.isfinite(hold):
            raise NumericError(f"non-finite holdout loss at epoch {epoch}")
        history.holdout_loss.append(hold)
        if hold < best_loss:
            best_loss, best_state = hold, model.state_dict()
            history.selected_epoch = epoch
        logger.debug("epoch %d train %.6g holdout %.6g", epoch, history.train_loss[-1], hold)

    model.load_state_dict(best_state)
    return model, history

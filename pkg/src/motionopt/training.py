"""Supervised training of the seq2seq model with clipped SGD or Adam."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .gru import GruParams, Seq2SeqModel, backprop, rollout_batch
from .statespace import TRANSLATION_RANGE, WindowedSample, state_residual, transform_base

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Training settings.

    ``amplitude_jitter`` > 0 rescales every sample's motion about its last
    observed frame, per state dimension, by a factor of random sign and
    magnitude uniform in ``[1 - a, 1 + a]``.
    """

    batch_size: int = 16
    learning_rate: float = 0.005
    grad_clip_norm: float = 5.0
    epochs: int = 300
    context_frames: int = 24
    horizon_frames: int = 12
    seed: int = 0
    randomize_base: bool = True
    translation_range: float = TRANSLATION_RANGE
    shuffle: bool = True
    amplitude_jitter: float = 0.0
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not self.grad_clip_norm > 0:
            raise ValueError("grad_clip_norm must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not 0 <= self.amplitude_jitter < 1:
            raise ValueError("amplitude_jitter must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def _stack(batch: list[WindowedSample], model: Seq2SeqModel):
    if not batch:
        raise ValueError("empty batch")
    ctx_len, tgt_len = len(batch[0].context), len(batch[0].target)
    for s in batch:
        if len(s.context) != ctx_len or len(s.target) != tgt_len:
            raise ValueError("all samples in a batch must share context and target lengths")
        if s.context.dim != model.state_dim:
            raise ValueError(f"sample state dim {s.context.dim} does not match model state dim {model.state_dim}")
    ctx = np.stack([s.context.states for s in batch])
    tgt = np.stack([s.target.states for s in batch])
    return ctx, tgt


def batch_loss_and_grad(model: Seq2SeqModel, context, target):
    """Mean wraparound loss over a stacked batch and its exact parameter gradient."""
    B, K, D = target.shape
    pred, cache = rollout_batch(model, context, K)
    res = state_residual(pred, target)
    loss = float(np.mean(res * res))
    grads, _ = backprop(model, cache, 2.0 * res / res.size)
    return loss, grads


def clip_by_global_norm(grads: GruParams, max_norm: float) -> tuple[GruParams, float]:
    flat = grads.flatten()
    norm = float(np.sqrt(flat @ flat))
    if norm > max_norm:
        flat = flat * (max_norm / norm)
        return grads.unflatten(flat), norm
    return grads, norm


def train_step(model: Seq2SeqModel, batch: list[WindowedSample], config: TrainConfig):
    """One clipped-SGD update on a batch; returns ``(new_model, loss_before_update)``."""
    ctx, tgt = _stack(batch, model)
    return _step(model, ctx, tgt, config)


class Adam:
    """Adam moment state over the flattened parameter vector."""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def direction(self, g: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return mhat / (np.sqrt(vhat) + self.eps)


def _step(model, ctx, tgt, config, adam: Adam | None = None):
    loss, grads = batch_loss_and_grad(model, ctx, tgt)
    grads, _ = clip_by_global_norm(grads, config.grad_clip_norm)
    g = grads.flatten()
    step = g if adam is None else adam.direction(g)
    new = model.params.flatten() - config.learning_rate * step
    return model.with_params(model.params.unflatten(new)), loss


def _base_draws(config: TrainConfig, epoch: int, indices):
    shifts = np.zeros((len(indices), 3))
    yaws = np.empty(len(indices))
    r = config.translation_range
    for row, idx in enumerate(indices):
        # same draws as statespace.randomize_base(sample, seed=(seed, epoch, idx))
        rng = np.random.default_rng((config.seed, epoch, int(idx)))
        shifts[row, :2] = rng.uniform(-r, r, size=2)
        yaws[row] = rng.uniform(0.0, 2 * np.pi)
    return shifts, yaws


def _amplitudes(config: TrainConfig, epoch: int, indices, dim: int):
    """Per-sample motion scale factors in ``1 +- amplitude_jitter``."""
    a = config.amplitude_jitter
    out = np.empty((len(indices), dim))
    for row, idx in enumerate(indices):
        rng = np.random.default_rng((config.seed, epoch, int(idx), 1))
        out[row] = rng.uniform(1 - a, 1 + a, size=dim) * rng.choice([-1.0, 1.0], size=dim)
    return out


def train(model: Seq2SeqModel, dataset: list[WindowedSample], config: TrainConfig, on_epoch=None):
    """Run ``config.epochs`` epochs of shuffled mini-batch training.

    Each epoch reshuffles with a generator seeded by ``(seed, epoch)`` and
    re-randomizes the base transform of every sample.  ``on_epoch(epoch, loss)``
    is called after every epoch.  Returns ``(model, epoch_mean_losses)``.
    """
    if not dataset:
        raise ValueError("empty dataset")
    ctx_all, tgt_all = _stack(dataset, model)
    n = len(dataset)
    T = ctx_all.shape[1]
    adam = Adam(model.params.flatten().size) if config.optimizer == "adam" else None
    losses = []
    for epoch in range(config.epochs):
        order = np.arange(n)
        if config.shuffle:
            order = np.random.default_rng((config.seed, epoch)).permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            ctx, tgt = ctx_all[idx], tgt_all[idx]
            if config.randomize_base:
                both = np.concatenate([ctx, tgt], axis=1)
                shifts, yaws = _base_draws(config, epoch, idx)
                both = transform_base(both, shifts, yaws)
                ctx, tgt = both[:, :T], both[:, T:]
            if config.amplitude_jitter > 0:
                # stretch the motion about the last observed frame
                amp = _amplitudes(config, epoch, idx, ctx.shape[2])[:, None, :]
                pivot = ctx[:, -1:]
                ctx, tgt = pivot + amp * (ctx - pivot), pivot + amp * (tgt - pivot)
            model, loss = _step(model, ctx, tgt, config, adam)
            total += loss * len(idx)
            count += len(idx)
        losses.append(total / count)
        log.debug("epoch %d loss %.6g", epoch + 1, losses[-1])
        if on_epoch is not None:
            on_epoch(epoch + 1, losses[-1])
    return model, losses

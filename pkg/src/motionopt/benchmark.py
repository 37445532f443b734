"""Desk-scale synthetic benchmark: data split, model and training presets.

``run_benchmark`` trains on the first ``TRAIN_COUNT`` synthetic reaches and
scores the rest; every step is seeded, so repeated runs are identical.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .dataio import SyntheticConfig, generate_synthetic
from .evaluation import DEFAULT_HORIZONS_MS, ErrorTable, benchmark_table, build_eval_samples
from .gru import Seq2SeqModel, init_model
from .kinematics import Skeleton
from .lbfgs import LbfgsConfig
from .statespace import extract_windows
from .trajopt import DEFAULT_WEIGHT
from .training import TrainConfig, train

TRAIN_COUNT = 30
TEST_COUNT = 10
LEAD_FRAMES = 9
HIDDEN_DIM = 128
INPUT_SCALE = 10.0


def synthetic_config(seed: int = 0) -> SyntheticConfig:
    return SyntheticConfig(num_trajectories=TRAIN_COUNT + TEST_COUNT, seed=seed)


def train_config(seed: int = 0, epochs: int = 160) -> TrainConfig:
    return TrainConfig(learning_rate=3e-4, optimizer="adam", epochs=epochs, horizon_frames=24,
                       amplitude_jitter=0.7, seed=seed)


def new_model(skeleton: Skeleton, hidden_dim: int = HIDDEN_DIM, seed: int = 0) -> Seq2SeqModel:
    return init_model(skeleton.state_dim, hidden_dim, seed=seed, anchored=True, input_scale=INPUT_SCALE,
                      zero_output=True)


def training_windows(trajectories, config: TrainConfig, stride: int = 1):
    return [w for t in trajectories
            for w in extract_windows(t, config.context_frames, config.horizon_frames, stride)]


@dataclass
class BenchmarkRun:
    model: Seq2SeqModel
    losses: list[float]
    table: ErrorTable
    results: list = field(default_factory=list)
    train_seconds: float = 0.0
    eval_seconds: float = 0.0


def run_benchmark(skeleton: Skeleton, seed: int = 0, epochs: int = 160, hidden_dim: int = HIDDEN_DIM,
                  weight: float = DEFAULT_WEIGHT, lbfgs: LbfgsConfig = LbfgsConfig(),
                  horizons_ms=DEFAULT_HORIZONS_MS, on_epoch=None) -> BenchmarkRun:
    trajs, reaches = generate_synthetic(synthetic_config(seed), skeleton)
    cfg = train_config(seed, epochs)
    t0 = time.perf_counter()
    model, losses = train(new_model(skeleton, hidden_dim, seed), training_windows(trajs[:TRAIN_COUNT], cfg), cfg,
                          on_epoch=on_epoch)
    t1 = time.perf_counter()
    samples = build_eval_samples(trajs[TRAIN_COUNT:], reaches[TRAIN_COUNT:], cfg.context_frames, LEAD_FRAMES)
    results: list = []
    table = benchmark_table(model, samples, skeleton, horizons_ms, weight, lbfgs, results=results)
    return BenchmarkRun(model, losses, table, results, t1 - t0, time.perf_counter() - t1)

from dataclasses import replace

import numpy as np
import pytest

from motionopt.dataio import SyntheticConfig, generate_synthetic
from motionopt.gru import init_model
from motionopt.kinematics import Joint, Skeleton
from motionopt.statespace import Trajectory, WindowedSample, extract_windows, wraparound_loss
from motionopt.training import (
    TrainConfig,
    batch_loss_and_grad,
    clip_by_global_norm,
    train,
    train_step,
)
from motionopt.gru import rollout_batch


def samples(n=6, D=6, T=4, K=3, seed=0):
    rng = np.random.default_rng(seed)
    return [WindowedSample(Trajectory(rng.normal(size=(T, D)) * 0.3, 0.1), Trajectory(rng.normal(size=(K, D)) * 0.3, 0.1))
            for _ in range(n)]


def small_model(D=6, H=4, seed=0):
    return init_model(D, H, seed=seed)


def mean_loss(model, data):
    ctx = np.stack([s.context.states for s in data])
    tgt = np.stack([s.target.states for s in data])
    pred, _ = rollout_batch(model, ctx, tgt.shape[1])
    return wraparound_loss(pred, tgt)


def test_zero_learning_rate_keeps_model_and_loss():
    m = small_model()
    data = samples()
    cfg = TrainConfig(learning_rate=0.0, epochs=3, batch_size=6, randomize_base=False, shuffle=False)
    out, losses = train(m, data, cfg)
    assert np.array_equal(out.params.flatten(), m.params.flatten())
    assert losses[0] == losses[1] == losses[2]


def test_perfect_prediction_has_zero_loss_and_gradient():
    m = init_model(6, 4, seed=0, zero_output=True)
    ctx = np.random.default_rng(0).normal(size=(2, 3, 6))
    tgt = np.repeat(ctx[:, -1:], 4, axis=1)
    loss, grads = batch_loss_and_grad(m, ctx, tgt)
    assert loss == 0.0
    assert not np.any(grads.flatten())


def test_one_step_equals_clipped_finite_difference_update():
    m = small_model()
    data = samples(n=3)
    cfg = TrainConfig(learning_rate=0.1, grad_clip_norm=1e-3, randomize_base=False)
    new, loss = train_step(m, data, cfg)
    assert loss == pytest.approx(mean_loss(m, data), rel=1e-12)
    flat = m.params.flatten()
    num = np.empty_like(flat)
    eps = 1e-6
    for i in range(flat.size):
        a, b = flat.copy(), flat.copy()
        a[i] += eps
        b[i] -= eps
        num[i] = (mean_loss(m.with_params(m.params.unflatten(a)), data)
                  - mean_loss(m.with_params(m.params.unflatten(b)), data)) / (2 * eps)
    num *= 1e-3 / np.linalg.norm(num)  # the clip is active at this threshold
    np.testing.assert_allclose(new.params.flatten(), flat - 0.1 * num, atol=1e-9)


def test_clip_by_global_norm():
    g = init_model(3, 2).params
    g = g.unflatten(np.full(g.flatten().size, 2.0))
    clipped, norm = clip_by_global_norm(g, 1.0)
    assert norm == pytest.approx(2.0 * np.sqrt(g.flatten().size))
    assert np.linalg.norm(clipped.flatten()) == pytest.approx(1.0)
    same, _ = clip_by_global_norm(g, 1e9)
    assert same is g


def test_zero_epochs():
    m = small_model()
    out, losses = train(m, samples(), TrainConfig(epochs=0))
    assert out is m and losses == []


def test_training_is_deterministic():
    data = samples(n=10)
    for opt in ("sgd", "adam"):
        cfg = TrainConfig(epochs=2, batch_size=4, learning_rate=0.01, optimizer=opt, amplitude_jitter=0.5)
        a, la = train(small_model(), data, cfg)
        b, lb = train(small_model(), data, cfg)
        assert la == lb
        assert np.array_equal(a.params.flatten(), b.params.flatten())
        c, _ = train(small_model(), data, replace(cfg, seed=1))
        assert not np.array_equal(a.params.flatten(), c.params.flatten())


def test_batch_mismatch_rejected():
    bad = samples(n=2) + samples(n=1, T=5)
    with pytest.raises(ValueError, match="share"):
        train_step(small_model(), bad, TrainConfig())
    with pytest.raises(ValueError, match="state dim"):
        train_step(small_model(D=9), samples(n=2), TrainConfig())


def test_config_validation():
    for kw in ({"batch_size": 0}, {"learning_rate": -1.0}, {"grad_clip_norm": 0.0}, {"epochs": -1},
               {"optimizer": "rmsprop"}, {"amplitude_jitter": 1.0}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def tiny_skeleton():
    return Skeleton((Joint("root", None, (0, 0, 0)), Joint("upper", 0, (0.3, 0, 0)), Joint("hand", 1, (0.25, 0, 0))),
                    {"hand": 2})


def test_synthetic_training_reduces_loss():
    skel = tiny_skeleton()
    trajs, _ = generate_synthetic(SyntheticConfig(num_trajectories=4, end_effector="hand", seed=0), skel)
    data = [w for t in trajs for w in extract_windows(t, 24, 12, 6)]
    cfg = TrainConfig(epochs=300)
    _, losses = train(init_model(skel.state_dim, 64, seed=0), data, cfg)
    assert len(losses) == 300
    assert losses[-1] < 0.1 * losses[0]

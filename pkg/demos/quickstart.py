"""Train a small predictor, then steer one forecast to a reach goal.

Run: python3 demos/quickstart.py   (a few seconds)
"""
import numpy as np

from motionopt import (GoalConstraint, TrainConfig, build_eval_samples, default_skeleton, extract_windows,
                       forward_kinematics, generate_synthetic, init_model, predict_optimized, rollout, train)
from motionopt.benchmark import synthetic_config

skel = default_skeleton()
trajs, reaches = generate_synthetic(synthetic_config(seed=0), skel)
print(f"{len(trajs)} synthetic reaches, {len(trajs[0])} frames each at {trajs[0].fps:g} fps")

# a short run on a handful of clips; the benchmark preset trains far longer
cfg = TrainConfig(epochs=15, learning_rate=3e-4, optimizer="adam", horizon_frames=24, amplitude_jitter=0.7)
windows = [w for t in trajs[:8] for w in extract_windows(t, cfg.context_frames, cfg.horizon_frames, 4)]
model = init_model(skel.state_dim, 64, seed=0, anchored=True, input_scale=10.0, zero_output=True)
model, losses = train(model, windows, cfg, on_epoch=lambda e, l: print(f"epoch {e:2d}  loss {l:.5f}"))

# cut a held-out clip 9 frames into its reach and forecast one second
sample = build_eval_samples(trajs[-1:], reaches[-1:], lead_frames=9)[0]
wrist = sample.end_effector
plain, _ = rollout(model, sample.observed, 24)
res = predict_optimized(model, sample.observed, 24, GoalConstraint(wrist, sample.goal, 100.0), skel)

for name, traj in (("plain", plain), ("optimized", res.trajectory)):
    err = np.linalg.norm(forward_kinematics(skel, traj.states[-1])[wrist] - sample.goal)
    print(f"{name:>9}: final wrist error {err * 100:6.2f} cm")
print(f"L-BFGS: cost {res.initial_cost:.4g} -> {res.final_cost:.4g} in {res.iterations} iterations "
      f"({res.message}); offset norm {np.linalg.norm(res.delta_star):.4f}")

"""Compare the analytic offset gradient with central differences on one random instance.

Run: python3 demos/gradient_check.py
"""
import numpy as np

from motionopt import GoalConstraint, Joint, Skeleton, cost_V, grad_V, init_model

skel = Skeleton((Joint("shoulder", None, (0, 0, 0)), Joint("elbow", 0, (0.3, 0, 0)),
                 Joint("wrist", 1, (0.25, 0, 0))), {"wrist": 2})
rng = np.random.default_rng(0)
model = init_model(skel.state_dim, 16, seed=0)
observed = rng.normal(size=(5, skel.state_dim)) * 0.3
delta = rng.normal(size=(8, skel.state_dim)) * 0.1
goal = GoalConstraint(2, (0.4, 0.1, -0.2), 100.0)

analytic = grad_V(model, observed, delta, goal, skel)
numeric = np.zeros_like(delta)
eps = 1e-6
for idx in np.ndindex(delta.shape):
    step = np.zeros_like(delta)
    step[idx] = eps
    numeric[idx] = (cost_V(model, observed, delta + step, goal, skel)
                    - cost_V(model, observed, delta - step, goal, skel)) / (2 * eps)
rel = np.max(np.abs(analytic - numeric)) / np.max(np.abs(numeric))
print(f"cost {cost_V(model, observed, delta, goal, skel):.6f}")
print(f"max relative gradient error over {delta.size} offsets: {rel:.2e}")

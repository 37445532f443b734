"""Goal-directed refinement of a model rollout through per-step output offsets.

The decision variable is the offset schedule ``delta`` (horizon x state_dim)
added to every decoder output.  The objective is::

    V(delta) = ||delta||^2 + sum of penalty terms on the predicted trajectory

and the only shipped term is :class:`GoalConstraint`,
``weight * ||fk(final predicted state)[end_effector] - target||^2``.
Gradients are a single reverse pass: each term returns cotangents on the
predicted states, and those are pulled back through the decoder.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gru import Seq2SeqModel, backprop, rollout
from .kinematics import Skeleton, fk_jacobian, forward_kinematics
from .lbfgs import LbfgsConfig, lbfgs_minimize
from .statespace import Trajectory

DEFAULT_WEIGHT = 100.0


@dataclass(frozen=True)
class GoalConstraint:
    """Pull ``end_effector`` to ``target`` at the last predicted frame."""

    end_effector: int
    target: tuple[float, float, float]
    weight: float = DEFAULT_WEIGHT

    def __post_init__(self):
        target = np.asarray(self.target, dtype=float)
        if target.shape != (3,) or not np.all(np.isfinite(target)):
            raise ValueError(f"goal target must be a finite 3-vector, got {self.target!r}")
        if not self.weight > 0:
            raise ValueError(f"goal weight must be positive, got {self.weight}")
        object.__setattr__(self, "target", tuple(float(v) for v in target))

    def residual(self, skeleton: Skeleton, final_state) -> np.ndarray:
        return forward_kinematics(skeleton, final_state)[self.end_effector] - np.asarray(self.target)

    def evaluate(self, skeleton: Skeleton, predicted: np.ndarray):
        """Return ``(cost, cotangents)`` with cotangents shaped like ``predicted``."""
        final = predicted[-1]
        r = self.residual(skeleton, final)
        cot = np.zeros_like(predicted)
        cot[-1] = 2.0 * self.weight * (fk_jacobian(skeleton, final, self.end_effector).T @ r)
        return self.weight * float(r @ r), cot


@dataclass
class OptimizationResult:
    delta_star: np.ndarray
    trajectory: Trajectory
    final_cost: float
    initial_cost: float
    iterations: int
    converged: bool
    message: str = ""


def _terms(goal):
    if isinstance(goal, GoalConstraint):
        return [goal]
    return list(goal)


def _check(model, observed, delta, skeleton):
    if skeleton.state_dim != model.state_dim:
        raise ValueError(f"skeleton state dim {skeleton.state_dim} does not match model state dim {model.state_dim}")
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 2 or delta.shape[1] != model.state_dim:
        raise ValueError(f"delta must be (horizon, {model.state_dim}), got {delta.shape}")
    return delta


def value_and_grad(model: Seq2SeqModel, observed, delta, goal, skeleton: Skeleton):
    """``(V(delta), dV/ddelta)`` from one rollout and one reverse pass."""
    delta = _check(model, observed, delta, skeleton)
    pred, cache = rollout(model, observed, delta.shape[0], delta)
    value = float(np.sum(delta * delta))
    cot = np.zeros_like(pred.states)
    for term in _terms(goal):
        c, g = term.evaluate(skeleton, pred.states)
        value += c
        cot += g
    _, pulled = backprop(model, cache, cot, want_params=False)
    return value, 2.0 * delta + pulled


def cost_V(model: Seq2SeqModel, observed, delta, goal, skeleton: Skeleton) -> float:
    delta = _check(model, observed, delta, skeleton)
    pred, _ = rollout(model, observed, delta.shape[0], delta)
    value = float(np.sum(delta * delta))
    for term in _terms(goal):
        value += term.evaluate(skeleton, pred.states)[0]
    return value


def grad_V(model: Seq2SeqModel, observed, delta, goal, skeleton: Skeleton) -> np.ndarray:
    return value_and_grad(model, observed, delta, goal, skeleton)[1]


def predict_optimized(model: Seq2SeqModel, observed, horizon: int, goal, skeleton: Skeleton,
                      config: LbfgsConfig = LbfgsConfig()) -> OptimizationResult:
    """Minimize V over the offset schedule starting from zero offsets."""
    shape = (horizon, model.state_dim)

    def objective(x):
        value, grad = value_and_grad(model, observed, x.reshape(shape), goal, skeleton)
        return value, grad.ravel()

    res = lbfgs_minimize(objective, np.zeros(shape).ravel(), config)
    delta_star = res.x.reshape(shape)
    traj, _ = rollout(model, observed, horizon, delta_star)
    return OptimizationResult(delta_star, traj, res.f, res.history[0], res.iterations, res.converged, res.message)

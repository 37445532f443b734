"""Baseline predictors and per-horizon joint-position error tables."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .gru import Seq2SeqModel, rollout
from .kinematics import Skeleton, forward_kinematics
from .lbfgs import LbfgsConfig
from .statespace import Trajectory
from .trajopt import DEFAULT_WEIGHT, GoalConstraint, predict_optimized

DEFAULT_HORIZONS_MS = (125, 250, 375, 500, 625, 750, 875, 1000)
BODY_KEY_JOINTS = ("base", "wrist_l", "wrist_r", "elbow_l", "elbow_r", "knee_l", "knee_r", "ankle_l", "ankle_r")


@dataclass(frozen=True)
class EvalSample:
    """Observed context, ground-truth continuation and the end-effector goal."""

    observed: Trajectory
    truth: Trajectory
    end_effector: int
    goal: tuple[float, float, float]


def build_eval_samples(trajectories, reaches, context_frames: int = 24, lead_frames: int = 6,
                       horizon_frames: int = 24) -> list[EvalSample]:
    """Cut each trajectory ``lead_frames`` after reach onset.

    The goal is the true end-effector position at the last truth frame.
    """
    out = []
    for traj, info in zip(trajectories, reaches):
        cut = info.start_frame + lead_frames
        start = max(0, cut - context_frames)
        if cut + horizon_frames > len(traj) or cut < 1:
            raise ValueError(f"trajectory of {len(traj)} frames cannot hold a cut at {cut} plus {horizon_frames} frames")
        truth = traj.slice(cut, cut + horizon_frames)
        out.append(EvalSample(traj.slice(start, cut), truth, info.end_effector, tuple(info.goal)))
    return out


def zero_velocity_predict(observed: Trajectory, horizon: int) -> Trajectory:
    if len(observed) < 1:
        raise ValueError("observed trajectory is empty")
    return Trajectory(np.repeat(observed.states[-1:], horizon, axis=0), observed.dt)


def interp_wrist_predict(observed: Trajectory, horizon: int, skeleton: Skeleton, wrist: int, target) -> np.ndarray:
    """Straight line from the current wrist position to ``target``; (horizon, 3), last row is ``target``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    start = forward_kinematics(skeleton, observed.states[-1])[wrist]
    target = np.asarray(target, dtype=float)
    frac = np.arange(1, horizon + 1) / horizon
    path = start + frac[:, None] * (target - start)
    path[-1] = target
    return path


def horizon_steps(horizons_ms: Sequence[float], dt: float) -> list[int]:
    """1-based prediction step for each horizon in milliseconds."""
    steps = []
    for ms in horizons_ms:
        k = ms / 1000.0 / dt
        if abs(k - round(k)) > 1e-6 or round(k) < 1:
            raise ValueError(f"horizon {ms} ms is not a whole number of {dt * 1000:g} ms frames")
        steps.append(int(round(k)))
    return steps


def resolve_joints(skeleton: Skeleton, joints) -> list[int]:
    if joints is None:
        joints = [n for n in BODY_KEY_JOINTS if n in skeleton.key_joints] or list(skeleton.key_joints)
    return [j if isinstance(j, (int, np.integer)) else skeleton.index(j) for j in joints]


def _positions(pred, skeleton: Skeleton, joints: list[int]) -> np.ndarray:
    """(K, len(joints), 3) positions from a Trajectory or a raw position array."""
    if isinstance(pred, Trajectory):
        return forward_kinematics(skeleton, pred.states)[:, joints]
    pos = np.asarray(pred, dtype=float)
    if pos.ndim == 2:
        if len(joints) != 1:
            raise ValueError("a (K, 3) position prediction can only be scored on a single joint")
        pos = pos[:, None, :]
    return pos


def key_joint_error(pred, truth: Trajectory, skeleton: Skeleton, horizons_ms=DEFAULT_HORIZONS_MS,
                    joints=None) -> np.ndarray:
    """Sum over ``joints`` of the Euclidean position error at each horizon (meters)."""
    joints = resolve_joints(skeleton, joints)
    if isinstance(pred, Trajectory) and abs(pred.dt - truth.dt) > 1e-12:
        raise ValueError("prediction and truth have different frame rates")
    steps = horizon_steps(horizons_ms, truth.dt)
    p = _positions(pred, skeleton, joints)
    t = forward_kinematics(skeleton, truth.states)[:, joints]
    if max(steps) > min(len(p), len(t)):
        raise ValueError(f"horizon of {max(steps)} frames exceeds the {min(len(p), len(t))} available")
    idx = np.array(steps) - 1
    return np.linalg.norm(p[idx] - t[idx], axis=-1).sum(axis=-1)


@dataclass
class ErrorTable:
    horizons: list[float]
    rows: list[tuple[str, list[float]]] = field(default_factory=list)

    def row(self, name: str) -> np.ndarray:
        for n, values in self.rows:
            if n == name:
                return np.asarray(values)
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method"] + [f"h{int(h) if float(h).is_integer() else h}" for h in self.horizons])
        for name, values in self.rows:
            w.writerow([name] + [f"{v:.17g}" for v in values])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ErrorTable":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][0] != "method":
            raise ValueError("not an error-table CSV (missing 'method' header)")
        horizons = [float(h[1:]) for h in rows[0][1:]]
        return cls(horizons, [(r[0], [float(v) for v in r[1:]]) for r in rows[1:] if r])

    def to_text(self, digits: int = 2) -> str:
        names = [n for n, _ in self.rows]
        width = max([len("millis")] + [len(n) for n in names])
        head = "millis".rjust(width) + " | " + " | ".join(f"{h:>6g}" for h in self.horizons)
        lines = [head, "-" * len(head)]
        for name, values in self.rows:
            lines.append(name.rjust(width) + " | " + " | ".join(f"{v:>6.{digits}f}" for v in values))
        return "\n".join(lines) + "\n"


Predictor = Callable[[EvalSample], object]


def evaluate(samples: Sequence[EvalSample], methods: Sequence[tuple[str, Predictor]], skeleton: Skeleton,
             horizons_ms=DEFAULT_HORIZONS_MS, joints=None) -> ErrorTable:
    """Mean (over samples) of the summed joint error for every method, in the given order.

    A predictor maps a sample to a predicted :class:`Trajectory` or, when a single
    joint is scored, to a (K, 3) array of positions.
    """
    if not samples:
        raise ValueError("no evaluation samples")
    table = ErrorTable(list(horizons_ms))
    for name, predict in methods:
        errs = np.array([key_joint_error(predict(s), s.truth, skeleton, horizons_ms, joints) for s in samples])
        table.rows.append((name, [float(v) for v in errs.mean(axis=0)]))
    return table


def benchmark_table(model: Seq2SeqModel, samples: Sequence[EvalSample], skeleton: Skeleton,
                    horizons_ms=DEFAULT_HORIZONS_MS, weight: float = DEFAULT_WEIGHT,
                    lbfgs: LbfgsConfig = LbfgsConfig(), body_joints=None, results: list | None = None) -> ErrorTable:
    """Whole-body (b) and end-effector (w) rows for zero velocity, plain GRU, optimized GRU and interpolation.

    Each sample is optimized once; if ``results`` is a list, the per-sample
    :class:`OptimizationResult` objects are appended to it.
    """
    if not samples:
        raise ValueError("no evaluation samples")
    horizon = max(horizon_steps(horizons_ms, samples[0].truth.dt))
    plain = [rollout(model, s.observed, horizon)[0] for s in samples]
    opt = []
    for s in samples:
        goal = GoalConstraint(s.end_effector, s.goal, weight)
        r = predict_optimized(model, s.observed, horizon, goal, skeleton, lbfgs)
        opt.append(r)
        if results is not None:
            results.append(r)
    index = {id(s): i for i, s in enumerate(samples)}

    def by_index(preds):
        return lambda s: preds[index[id(s)]]

    zerovel = lambda s: zero_velocity_predict(s.observed, horizon)  # noqa: E731
    ours = by_index([r.trajectory for r in opt])
    gru = by_index(plain)
    interp = lambda s: interp_wrist_predict(s.observed, horizon, skeleton, s.end_effector, s.goal)  # noqa: E731

    body = evaluate(samples, [("Zerovel (b)", zerovel), ("GRU (b)", gru), ("Ours (b)", ours)],
                    skeleton, horizons_ms, body_joints)
    ee = samples[0].end_effector
    if any(s.end_effector != ee for s in samples):
        raise ValueError("all samples must share the end effector")
    wrist = evaluate(samples, [("Zerovel (w)", zerovel), ("GRU (w)", gru), ("Ours (w)", ours), ("Interp (w)", interp)],
                     skeleton, horizons_ms, [ee])
    return ErrorTable(list(horizons_ms), body.rows + wrist.rows)

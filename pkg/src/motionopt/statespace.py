"""Trajectories, the angle-wrapping loss, sliding windows and base randomization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import expmap_to_rotation

TRANSLATION_RANGE = 2.0


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered states, one row per frame, ``dt`` seconds apart."""

    states: np.ndarray
    dt: float

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim != 2 or states.shape[0] < 1:
            raise ValueError(f"trajectory states must be a non-empty (frames, dim) array, got shape {states.shape}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory contains non-finite values")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def fps(self) -> float:
        return 1.0 / self.dt

    def slice(self, start: int, stop: int) -> "Trajectory":
        return Trajectory(self.states[start:stop], self.dt)


@dataclass(frozen=True)
class WindowedSample:
    context: Trajectory
    target: Trajectory

    def __post_init__(self):
        if self.context.dt != self.target.dt:
            raise ValueError("context and target must share dt")
        if self.context.dim != self.target.dim:
            raise ValueError("context and target must share the state dimension")


def wrap_diff(a, b):
    """``a - b`` reduced to ``(-pi, pi]``, elementwise."""
    d = np.mod(np.subtract(a, b) + np.pi, 2 * np.pi) - np.pi
    # mod puts the seam at -pi; move it to +pi
    return np.where(d <= -np.pi, d + 2 * np.pi, d)


def state_residual(pred, target):
    """Per-entry residual: plain difference on the base translation, wrapped on angles."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    out = wrap_diff(pred, target)
    out[..., :3] = pred[..., :3] - target[..., :3]
    return out


def _as_states(x):
    return x.states if isinstance(x, Trajectory) else np.asarray(x, dtype=float)


def wraparound_loss(pred, target) -> float:
    """Mean squared error over frames and dimensions with angles compared modulo 2*pi."""
    p, t = _as_states(pred), _as_states(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: prediction {p.shape} vs target {t.shape}")
    r = state_residual(p, t)
    return float(np.mean(r * r))


def wraparound_loss_grad(pred, target) -> np.ndarray:
    """Gradient of :func:`wraparound_loss` with respect to the prediction."""
    p, t = _as_states(pred), _as_states(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: prediction {p.shape} vs target {t.shape}")
    return 2.0 * state_residual(p, t) / p.size


def extract_windows(traj: Trajectory, context_frames: int, horizon_frames: int,
                    stride: int = 1) -> list[WindowedSample]:
    if context_frames < 1 or horizon_frames < 1 or stride < 1:
        raise ValueError("context_frames, horizon_frames and stride must all be >= 1")
    span = context_frames + horizon_frames
    out = []
    for start in range(0, len(traj) - span + 1, stride):
        mid = start + context_frames
        out.append(WindowedSample(traj.slice(start, mid), traj.slice(mid, start + span)))
    return out


def transform_base(states, translation, yaw):
    """Rigidly move whole-body states: yaw about world z, then translate.

    ``states`` is (T, D) with scalar ``yaw`` and a 3-vector ``translation``, or
    (N, T, D) with ``yaw`` (N,) and ``translation`` (N, 3).  Only the base
    translation and the root rotation vector change; the new root vectors are
    kept continuous from frame to frame.
    """
    from scipy.spatial.transform import Rotation

    states = np.array(states, dtype=float)
    single = states.ndim == 2
    if single:
        states = states[None]
    N, T, _ = states.shape
    yaw = np.broadcast_to(np.asarray(yaw, dtype=float), (N,))
    translation = np.broadcast_to(np.asarray(translation, dtype=float), (N, 3))
    c, s = np.cos(yaw), np.sin(yaw)
    Rz = np.zeros((N, 3, 3))
    Rz[:, 0, 0], Rz[:, 0, 1], Rz[:, 1, 0], Rz[:, 1, 1], Rz[:, 2, 2] = c, -s, s, c, 1.0
    states[..., :3] = np.einsum("nij,ntj->nti", Rz, states[..., :3]) + translation[:, None, :]
    turned = np.flatnonzero(yaw != 0.0)
    if turned.size:
        roots = states[turned, :, 3:6]
        R = Rz[turned, None] @ expmap_to_rotation(roots)
        principal = Rotation.from_matrix(R.reshape(-1, 3, 3)).as_rotvec().reshape(R.shape[:2] + (3,))
        prev = roots[:, 0]
        for k in range(T):
            prev = _nearest_equivalent(principal[:, k], prev)
            states[turned, k, 3:6] = prev
    return states[0] if single else states


def _nearest_equivalent(v, near):
    """Among ``v + 2*pi*k*axis`` pick the vector closest to ``near`` (row-wise)."""
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    axis = v / np.where(theta > 1e-12, theta, 1.0)
    k = np.round((np.sum(axis * near, axis=-1, keepdims=True) - theta) / (2 * np.pi))
    return np.where(theta > 1e-12, v + 2 * np.pi * k * axis, v)


def apply_base_transform(sample: WindowedSample, translation, yaw: float) -> WindowedSample:
    n = len(sample.context)
    both = np.concatenate([sample.context.states, sample.target.states])
    moved = transform_base(both, translation, yaw)
    dt = sample.context.dt
    return WindowedSample(Trajectory(moved[:n], dt), Trajectory(moved[n:], dt))


def randomize_base(sample: WindowedSample, rng_seed, translation_range: float = TRANSLATION_RANGE) -> WindowedSample:
    """Random planar translation in ``[-range, range]^2`` and yaw in ``[0, 2*pi)``.

    ``rng_seed`` may be anything :func:`numpy.random.default_rng` accepts.
    """
    rng = np.random.default_rng(rng_seed)
    shift = rng.uniform(-translation_range, translation_range, size=2)
    yaw = rng.uniform(0.0, 2 * np.pi)
    return apply_base_transform(sample, (shift[0], shift[1], 0.0), yaw)

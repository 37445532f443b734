"""File formats, capture-rate downsampling and the synthetic reaching generator.

Trajectory CSV::

    time,base_x,base_y,base_z,j0_x,j0_y,j0_z,j1_x,...
    0.0,0.1,0.2,0.9,0.0,...

Values are written with 17 significant digits so a write/read cycle is exact.

Checkpoint JSON (``checkpoint_version`` 1)::

    {"checkpoint_version": 1, "skeleton_sha256": "...", "state_dim": 66,
     "hidden_dim": 128, "model_fps": 24.0, "anchored": true, "input_scale": 10.0,
     "train_config": {...},
     "params": {"w_in": {"shape": [3, 128, 66], "data": [...]}, ...}}
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gru import GruParams, Seq2SeqModel
from .kinematics import Skeleton, forward_kinematics
from .statespace import Trajectory

CHECKPOINT_VERSION = 1
TIME_JITTER_TOL = 1e-6


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_header(state_dim: int) -> list[str]:
    if (state_dim - 3) % 3 or state_dim < 3:
        raise ValueError(f"state dimension {state_dim} is not 3 + 3*joints")
    cols = ["time", "base_x", "base_y", "base_z"]
    for j in range((state_dim - 3) // 3):
        cols += [f"j{j}_x", f"j{j}_y", f"j{j}_z"]
    return cols


def format_trajectory_csv(traj: Trajectory, t0: float = 0.0) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_header(traj.dim))
    for k, row in enumerate(traj.states):
        w.writerow([f"{t0 + k * traj.dt:.17g}"] + [f"{v:.17g}" for v in row])
    return buf.getvalue()


def write_trajectory_csv(traj: Trajectory, path, t0: float = 0.0) -> None:
    atomic_write_text(path, format_trajectory_csv(traj, t0))


def read_trajectory_csv(path, skeleton: Skeleton | None = None, dt: float | None = None) -> Trajectory:
    """Read a trajectory CSV; dt is inferred from the time column unless given.

    A single-frame file needs an explicit ``dt``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    dim = len(header) - 1
    try:
        expected = trajectory_header(dim)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed header: {exc}") from None
    if header != expected:
        raise ValueError(f"{path}: unexpected header, expected {','.join(expected[:5])},...")
    if skeleton is not None and dim != skeleton.state_dim:
        raise ValueError(f"{path}: file has state dimension {dim}, skeleton expects {skeleton.state_dim}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise ValueError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    if not data:
        raise ValueError(f"{path}: no frames")
    arr = np.array(data)
    times = arr[:, 0]
    if len(times) > 1:
        steps = np.diff(times)
        inferred = (times[-1] - times[0]) / (len(times) - 1)
        if np.max(np.abs(steps - inferred)) > TIME_JITTER_TOL:
            raise ValueError(f"{path}: time column is not uniformly spaced (jitter > {TIME_JITTER_TOL} s)")
        if dt is None:
            dt = inferred
    elif dt is None:
        raise ValueError(f"{path}: single-frame file, dt must be given explicitly")
    return Trajectory(arr[:, 1:], dt)


def downsample(traj: Trajectory, target_fps: float) -> Trajectory:
    """Keep every k-th frame where ``k = source_fps / target_fps`` must be an integer."""
    ratio = traj.fps / target_fps
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"source rate {traj.fps:g} fps is not an integer multiple of {target_fps:g} fps")
    return Trajectory(traj.states[::k], traj.dt * k)


@dataclass(frozen=True)
class SyntheticConfig:
    """Settings for the minimum-jerk reaching generator.

    ``workspace_low``/``workspace_high`` bound the base position at reach start
    and end; joint rotation vector components are drawn from
    ``[-joint_range, joint_range]``.  With ``reach_chain_only`` only the joints
    from the root to the end effector change during the reach; the rest hold
    their start rotation.
    """

    num_trajectories: int = 40
    reach_duration: float = 1.0
    idle_padding: float = 1.0
    workspace_low: tuple[float, float, float] = (-0.75, -0.75, 0.85)
    workspace_high: tuple[float, float, float] = (0.75, 0.75, 0.95)
    joint_range: float = 0.4
    noise_std: float = 0.0
    capture_fps: float = 120.0
    model_fps: float = 24.0
    end_effector: str = "wrist_r"
    reach_chain_only: bool = True
    seed: int = 0

    def __post_init__(self):
        ratio = self.capture_fps / self.model_fps
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValueError("capture_fps must be an integer multiple of model_fps")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.num_trajectories < 1 or self.reach_duration <= 0 or self.idle_padding < 0:
            raise ValueError("need num_trajectories >= 1, reach_duration > 0, idle_padding >= 0")
        lo, hi = np.asarray(self.workspace_low), np.asarray(self.workspace_high)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi < lo):
            raise ValueError("workspace bounds must be 3-vectors with low <= high")
        if self.joint_range < 0:
            raise ValueError("joint_range must be >= 0")


@dataclass(frozen=True)
class ReachInfo:
    """Where the reach sits in a model-rate trajectory and where the end effector ends up."""

    start_frame: int
    end_frame: int
    end_effector: int
    goal: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))


def min_jerk_profile(tau):
    """Normalized minimum-jerk position ``10 t^3 - 15 t^4 + 6 t^5`` on ``[0, 1]``."""
    tau = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    return tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)


def generate_synthetic(config: SyntheticConfig, skeleton: Skeleton):
    """Idle, minimum-jerk reach, idle; generated at capture rate and downsampled.

    Returns ``(trajectories, reaches)`` where ``reaches[i]`` locates the reach in
    trajectory ``i`` and records the end effector's final position.
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = np.asarray(config.workspace_low, float), np.asarray(config.workspace_high, float)
    n_rot = 3 * skeleton.num_joints
    pad = int(round(config.idle_padding * config.capture_fps))
    reach = int(round(config.reach_duration * config.capture_fps))
    n = 2 * pad + reach + 1
    t = np.arange(n) / config.capture_fps
    tau = (t - config.idle_padding) / config.reach_duration
    s = min_jerk_profile(tau)[:, None]
    k = int(round(config.capture_fps / config.model_fps))
    ee = skeleton.index(config.end_effector)

    held = np.zeros(3 + n_rot, dtype=bool)
    if config.reach_chain_only:
        j, chain = ee, set()
        while j is not None:
            chain.add(j)
            j = skeleton.joints[j].parent
        for j in range(skeleton.num_joints):
            held[3 + 3 * j:6 + 3 * j] = j not in chain

    trajs, reaches = [], []
    for _ in range(config.num_trajectories):
        start = np.concatenate([rng.uniform(lo, hi), rng.uniform(-config.joint_range, config.joint_range, n_rot)])
        goal = np.concatenate([rng.uniform(lo, hi), rng.uniform(-config.joint_range, config.joint_range, n_rot)])
        goal[held] = start[held]
        states = start + (goal - start) * s
        if config.noise_std > 0:
            states[:, 3:] += rng.normal(0.0, config.noise_std, size=(n, n_rot))
        traj = downsample(Trajectory(states, 1.0 / config.capture_fps), config.model_fps)
        p = forward_kinematics(skeleton, goal)[ee]
        reaches.append(ReachInfo(pad // k, (pad + reach) // k, ee, tuple(float(v) for v in p)))
        trajs.append(traj)
    return trajs, reaches


def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _decode_array(doc, name: str) -> np.ndarray:
    try:
        shape = tuple(int(v) for v in doc["shape"])
        data = np.array(doc["data"], dtype=np.float64)
        return data.reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"checkpoint array {name!r} is corrupted: {exc}") from None


def checkpoint_document(model: Seq2SeqModel, skeleton: Skeleton | None = None,
                        train_config: dict | None = None) -> dict:
    return {
        "checkpoint_version": CHECKPOINT_VERSION,
        "skeleton_sha256": skeleton.digest() if skeleton is not None else None,
        "state_dim": model.state_dim,
        "hidden_dim": model.hidden_dim,
        "model_fps": model.model_fps,
        "anchored": model.anchored,
        "input_scale": model.input_scale,
        "train_config": train_config or {},
        "params": {k: _encode_array(v) for k, v in model.params.arrays().items()},
    }


def save_checkpoint(model: Seq2SeqModel, path, skeleton: Skeleton | None = None,
                    train_config: dict | None = None) -> None:
    doc = checkpoint_document(model, skeleton, train_config)
    atomic_write_text(path, json.dumps(doc) + "\n")


def load_checkpoint(path, skeleton: Skeleton | None = None) -> Seq2SeqModel:
    """Load a checkpoint, refusing version or skeleton mismatches."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: checkpoint is not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: checkpoint must be a JSON object")
    version = doc.get("checkpoint_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: checkpoint version {version!r} does not match supported version {CHECKPOINT_VERSION}")
    if skeleton is not None and doc.get("skeleton_sha256") not in (None, skeleton.digest()):
        raise ValueError(f"{path}: checkpoint was trained for a different skeleton (hash mismatch)")
    try:
        arrays = {k: _decode_array(doc["params"][k], k) for k in ("w_in", "w_rec", "b", "w_out", "b_out")}
        params = GruParams(**arrays)
    except KeyError as exc:
        raise ValueError(f"{path}: checkpoint is missing {exc}") from None
    if params.state_dim != doc.get("state_dim") or params.hidden_dim != doc.get("hidden_dim"):
        raise ValueError(f"{path}: declared dimensions disagree with the stored arrays")
    try:
        return Seq2SeqModel(params, float(doc.get("model_fps", 24.0)), bool(doc.get("anchored", False)),
                            float(doc.get("input_scale", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: bad model settings ({exc})") from None


def checkpoint_train_config(path) -> dict:
    return json.loads(Path(path).read_text()).get("train_config", {})

"""Skeleton model, exponential-map rotations and forward kinematics.

A state vector is laid out as ``[base_x, base_y, base_z, j0_x, j0_y, j0_z,
j1_x, ...]``: the base translation of the root followed by one axis-angle
(exponential map) rotation vector per joint.  Joint ``i`` rotates the frame
in which the offsets of its children are expressed.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SKELETON_VERSION = 1
_SMALL_ANGLE = 1e-7


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None
    offset: tuple[float, float, float]


@dataclass(frozen=True)
class Skeleton:
    """Kinematic tree with parents listed before their children."""

    joints: tuple[Joint, ...]
    key_joints: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.joints:
            raise ValueError("skeleton needs at least one joint")
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if roots != [0]:
            raise ValueError(f"expected a single root at index 0, got roots {roots}")
        for i, j in enumerate(self.joints):
            if j.parent is not None and not 0 <= j.parent < i:
                raise ValueError(f"joint {i} ({j.name}) has parent {j.parent}; parents must precede children")
            if len(j.offset) != 3 or not np.all(np.isfinite(j.offset)):
                raise ValueError(f"joint {i} ({j.name}) has an invalid offset {j.offset}")
        for name, idx in self.key_joints.items():
            if not 0 <= idx < len(self.joints):
                raise ValueError(f"key joint {name!r} refers to missing joint {idx}")

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def state_dim(self) -> int:
        return 3 + 3 * len(self.joints)

    @property
    def parents(self) -> list[int | None]:
        return [j.parent for j in self.joints]

    @property
    def offsets(self) -> np.ndarray:
        return np.array([j.offset for j in self.joints], dtype=float)

    def index(self, name: str) -> int:
        """Joint index for a joint name or a key-joint alias."""
        if name in self.key_joints:
            return self.key_joints[name]
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(f"unknown joint {name!r}")

    def to_dict(self) -> dict:
        return {
            "skeleton_version": SKELETON_VERSION,
            "joints": [{"name": j.name, "parent": j.parent, "offset": list(j.offset)} for j in self.joints],
            "key_joints": dict(self.key_joints),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Skeleton":
        version = doc.get("skeleton_version")
        if version != SKELETON_VERSION:
            raise ValueError(f"skeleton_version {version!r} is not supported (expected {SKELETON_VERSION})")
        joints = tuple(
            Joint(str(j["name"]), None if j["parent"] is None else int(j["parent"]),
                  tuple(float(v) for v in j["offset"]))
            for j in doc["joints"]
        )
        return cls(joints, {str(k): int(v) for k, v in doc.get("key_joints", {}).items()})

    def digest(self) -> str:
        """Stable SHA-256 of the canonical JSON form, used to pair checkpoints with skeletons."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def load_skeleton(path) -> Skeleton:
    with open(path) as fh:
        return Skeleton.from_dict(json.load(fh))


def save_skeleton(skeleton: Skeleton, path) -> None:
    Path(path).write_text(json.dumps(skeleton.to_dict(), indent=2) + "\n")


def default_skeleton() -> Skeleton:
    """21-joint humanoid in a z-up frame, arms along +-y (T-pose), meters."""
    layout = [
        ("hips", None, (0.0, 0.0, 0.0)),
        ("spine", 0, (0.0, 0.0, 0.10)),
        ("chest", 1, (0.0, 0.0, 0.15)),
        ("neck", 2, (0.0, 0.0, 0.20)),
        ("head", 3, (0.0, 0.0, 0.12)),
        ("clavicle_l", 2, (0.0, 0.05, 0.18)),
        ("shoulder_l", 5, (0.0, 0.15, 0.0)),
        ("elbow_l", 6, (0.0, 0.28, 0.0)),
        ("wrist_l", 7, (0.0, 0.25, 0.0)),
        ("hand_l", 8, (0.0, 0.08, 0.0)),
        ("clavicle_r", 2, (0.0, -0.05, 0.18)),
        ("shoulder_r", 10, (0.0, -0.15, 0.0)),
        ("elbow_r", 11, (0.0, -0.28, 0.0)),
        ("wrist_r", 12, (0.0, -0.25, 0.0)),
        ("hand_r", 13, (0.0, -0.08, 0.0)),
        ("hip_l", 0, (0.0, 0.10, -0.05)),
        ("knee_l", 15, (0.0, 0.0, -0.42)),
        ("ankle_l", 16, (0.0, 0.0, -0.40)),
        ("hip_r", 0, (0.0, -0.10, -0.05)),
        ("knee_r", 18, (0.0, 0.0, -0.42)),
        ("ankle_r", 19, (0.0, 0.0, -0.40)),
    ]
    joints = tuple(Joint(n, p, o) for n, p, o in layout)
    names = {j.name: i for i, j in enumerate(joints)}
    key = {k: names[k] for k in ("wrist_l", "wrist_r", "elbow_l", "elbow_r",
                                 "knee_l", "knee_r", "ankle_l", "ankle_r")}
    key["base"] = 0
    return Skeleton(joints, key)


def make_state(base_translation, joint_expmaps) -> np.ndarray:
    base = np.asarray(base_translation, dtype=float).reshape(3)
    rot = np.asarray(joint_expmaps, dtype=float).reshape(-1)
    return np.concatenate([base, rot])


def split_state(state):
    """Return ``(base (..., 3), expmaps (..., J, 3))`` views of a state array."""
    state = np.asarray(state, dtype=float)
    return state[..., :3], state[..., 3:].reshape(state.shape[:-1] + (-1, 3))


def skew(v):
    """Batched cross-product matrix: ``skew(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _rodrigues_coeffs(theta):
    small = theta < _SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(t) / t)
    b = np.where(small, 0.5 - t2 / 24.0, 2.0 * np.sin(0.5 * t) ** 2 / (t * t))
    # t - sin(t) cancels badly well above the Rodrigues threshold
    mid = theta < 1e-3
    u = np.where(mid, 1.0, theta)
    c = np.where(mid, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0, (u - np.sin(u)) / (u * u * u))
    return a, b, c


def expmap_to_rotation(v) -> np.ndarray:
    """Rodrigues' formula; accepts ``(3,)`` or batched ``(..., 3)`` rotation vectors."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    a, b, _ = _rodrigues_coeffs(theta)
    K = skew(v)
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * (K @ K)


def expmap_left_jacobian(v) -> np.ndarray:
    """Left Jacobian of SO(3): ``dR/dv_k = skew(J[:, k]) @ R``."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    _, b, c = _rodrigues_coeffs(theta)
    K = skew(v)
    return np.eye(3) + b[..., None, None] * K + c[..., None, None] * (K @ K)


def rotation_to_expmap(R, near=None) -> np.ndarray:
    """Inverse of :func:`expmap_to_rotation` for one matrix.

    The principal log has angle in ``[0, pi]``.  If ``near`` is given, the
    equivalent vector ``v + 2*pi*k*axis`` closest to ``near`` is returned, which
    keeps sequences of rotation vectors continuous across the antipodal seam.
    """
    from scipy.spatial.transform import Rotation

    v = Rotation.from_matrix(np.asarray(R, dtype=float)).as_rotvec()
    if near is None:
        return v
    near = np.asarray(near, dtype=float)
    theta = np.linalg.norm(v)
    if theta < 1e-12:
        # identity; candidates are multiples of 2*pi along near's axis
        n = np.linalg.norm(near)
        if n < np.pi:
            return v
        axis = near / n
        return axis * (2 * np.pi * np.round(n / (2 * np.pi)))
    axis = v / theta
    k = np.round((axis @ near - theta) / (2 * np.pi))
    return v + 2 * np.pi * k * axis


def _check_dim(skeleton: Skeleton, state: np.ndarray) -> None:
    if state.shape[-1] != skeleton.state_dim:
        raise ValueError(
            f"state dimension mismatch: expected {skeleton.state_dim} "
            f"(3 + 3*{skeleton.num_joints} joints), got {state.shape[-1]}"
        )


def global_frames(skeleton: Skeleton, state):
    """Positions ``(..., J, 3)`` and global rotations ``(..., J, 3, 3)`` of every joint."""
    state = np.asarray(state, dtype=float)
    _check_dim(skeleton, state)
    base, rotvecs = split_state(state)
    local = expmap_to_rotation(rotvecs)
    offsets = skeleton.offsets
    J = skeleton.num_joints
    pos = np.empty(state.shape[:-1] + (J, 3))
    rot = np.empty(state.shape[:-1] + (J, 3, 3))
    for i, parent in enumerate(skeleton.parents):
        if parent is None:
            pos[..., i, :] = base
            rot[..., i, :, :] = local[..., i, :, :]
        else:
            pos[..., i, :] = pos[..., parent, :] + rot[..., parent, :, :] @ offsets[i]
            rot[..., i, :, :] = rot[..., parent, :, :] @ local[..., i, :, :]
    return pos, rot


def forward_kinematics(skeleton: Skeleton, state) -> np.ndarray:
    """Joint positions ``(..., J, 3)`` in meters for a state or a stack of states."""
    return global_frames(skeleton, state)[0]


def fk_jacobian(skeleton: Skeleton, state, joint: int) -> np.ndarray:
    """Analytic ``3 x state_dim`` Jacobian of one joint's position.

    Rotating joint ``i`` moves every strict descendant ``j`` about joint ``i``'s
    position; with ``w = G_parent(i) @ Jl(v_i)[:, k]`` the column is
    ``w x (p_j - p_i)``.
    """
    state = np.asarray(state, dtype=float)
    if state.ndim != 1:
        raise ValueError("fk_jacobian expects a single state vector")
    if not 0 <= joint < skeleton.num_joints:
        raise IndexError(f"joint index {joint} out of range for {skeleton.num_joints} joints")
    pos, rot = global_frames(skeleton, state)
    _, rotvecs = split_state(state)
    parents = skeleton.parents
    jac = np.zeros((3, skeleton.state_dim))
    jac[:, :3] = np.eye(3)
    target = pos[joint]
    # rotations of strict ancestors of `joint` move it
    i = parents[joint]
    while i is not None:
        p = parents[i]
        frame = rot[p] if p is not None else np.eye(3)
        axes = frame @ expmap_left_jacobian(rotvecs[i])
        jac[:, 3 + 3 * i:6 + 3 * i] = np.cross(axes.T, target - pos[i]).T
        i = p
    return jac

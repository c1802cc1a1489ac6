"""Simplified 51-parameter kinematic hand with capsule surface samples and exact derivatives.

Parameter layout (per frame)::

    [0:3]   wrist translation (m)
    [3:6]   wrist rotation, axis-angle (rad)
    [6:51]  finger joints, index 6 + 9*finger + 3*joint + axis
            finger: thumb, index, middle, ring, pinky
            joint: mcp, pip, dip;  axis: local x, y, z (composed Rx @ Ry @ Rz)

Rest pose (all zeros): the wrist sits at the origin, the palm faces -z and every
finger is a straight chain in the x-y plane. Finger ``f`` leaves the wrist along
``Rz(fan_f) @ (0, 1, 0)`` and each bone points along its local +y. Rotation about
a bone's local x flexes it; negative angles curl toward the palm.

With the default config the rest index tip is at
``0.175 * (-sin 10deg, cos 10deg, 0) = (-0.0303884, 0.1723413, 0)``.

Surface samples live on each bone as rings around its local y axis, ring ``k`` at
``(k + 0.5) / rings`` of the bone length, point ``m`` at angle
``-pi/2 + 2*pi*m / points_per_ring`` in the local x-z plane (so point 0 faces the palm).
Bone level 0 (wrist to mcp) belongs to the palm group; levels 1-3 are the finger's vertices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .rotations import exp_map, left_jacobian, rot_x, rot_y, rot_z

N_PARAMS = 51
N_FINGERS = 5
FINGER_NAMES = ("thumb", "index", "middle", "ring", "pinky")
JOINT_NAMES = ("mcp", "pip", "dip", "tip")

DEFAULT_LENGTHS = (
    (0.045, 0.035, 0.030, 0.025),
    (0.090, 0.040, 0.025, 0.020),
    (0.090, 0.045, 0.028, 0.022),
    (0.085, 0.042, 0.026, 0.020),
    (0.080, 0.033, 0.020, 0.018),
)
DEFAULT_FAN_DEG = (50.0, 10.0, 0.0, -10.0, -20.0)


def joint_index(finger: int, joint: int, axis: int) -> int:
    return 6 + 9 * finger + 3 * joint + axis


@dataclass(frozen=True, eq=False)
class HandConfig:
    """Bone lengths and capsule radii per finger and segment (root-mcp, mcp-pip, pip-dip, dip-tip)."""

    bone_lengths: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_LENGTHS))
    radii: np.ndarray = field(default_factory=lambda: np.full((5, 4), 0.008))
    fan_angles: np.ndarray = field(default_factory=lambda: np.radians(DEFAULT_FAN_DEG))
    rings_per_segment: int = 6
    points_per_ring: int = 6

    def __post_init__(self):
        L = np.array(self.bone_lengths, dtype=float)
        r = np.broadcast_to(np.array(self.radii, dtype=float), (5, 4)).copy()
        fan = np.array(self.fan_angles, dtype=float).reshape(5)
        if L.shape != (5, 4) or np.any(L <= 0) or np.any(r <= 0):
            raise ValueError("bone lengths must be a positive 5x4 array and radii positive")
        if int(self.rings_per_segment) < 1 or int(self.points_per_ring) < 1:
            raise ValueError("need at least one ring and one point per ring")
        if int(self.rings_per_segment) * int(self.points_per_ring) < 4:
            raise ValueError("vertices_per_segment must be >= 4")
        for a in (L, r, fan):
            a.setflags(write=False)
        object.__setattr__(self, "bone_lengths", L)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "fan_angles", fan)
        object.__setattr__(self, "rings_per_segment", int(self.rings_per_segment))
        object.__setattr__(self, "points_per_ring", int(self.points_per_ring))

    @property
    def vertices_per_segment(self) -> int:
        return self.rings_per_segment * self.points_per_ring

    @property
    def vertices_per_finger(self) -> int:
        """n(i): surface vertices on finger bones (levels 1-3)."""
        return 3 * self.vertices_per_segment

    @property
    def total_vertices(self) -> int:
        return 20 * self.vertices_per_segment

    @cached_property
    def base_rotations(self) -> np.ndarray:
        return rot_z(self.fan_angles)

    @cached_property
    def local_samples(self) -> np.ndarray:
        """Bone-frame surface samples, shape (5, 4, vertices_per_segment, 3)."""
        R, P = self.rings_per_segment, self.points_per_ring
        s = (np.arange(R) + 0.5) / R
        phi = -np.pi / 2 + 2 * np.pi * np.arange(P) / P
        out = np.zeros((5, 4, R, P, 3))
        out[..., 0] = self.radii[:, :, None, None] * np.cos(phi)
        out[..., 1] = self.bone_lengths[:, :, None, None] * s[:, None]
        out[..., 2] = self.radii[:, :, None, None] * np.sin(phi)
        out = out.reshape(5, 4, R * P, 3)
        out.setflags(write=False)
        return out

    def scaled(self, s: float) -> "HandConfig":
        return HandConfig(self.bone_lengths * s, self.radii * s, self.fan_angles,
                          self.rings_per_segment, self.points_per_ring)

    def to_dict(self) -> dict:
        return {"bone_lengths": self.bone_lengths.tolist(), "radii": self.radii.tolist(),
                "fan_angles": self.fan_angles.tolist(),
                "rings_per_segment": self.rings_per_segment,
                "points_per_ring": self.points_per_ring}

    @classmethod
    def from_dict(cls, d: dict) -> "HandConfig":
        known = {"bone_lengths", "radii", "fan_angles", "rings_per_segment", "points_per_ring"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown hand config fields: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class HandPose:
    wrist_translation: np.ndarray
    wrist_rotation: np.ndarray
    joint_angles: np.ndarray

    def __post_init__(self):
        t = np.array(self.wrist_translation, dtype=float).reshape(3)
        w = np.array(self.wrist_rotation, dtype=float).reshape(3)
        q = np.clip(np.array(self.joint_angles, dtype=float).reshape(45), -np.pi, np.pi)
        object.__setattr__(self, "wrist_translation", t)
        object.__setattr__(self, "wrist_rotation", w)
        object.__setattr__(self, "joint_angles", q)

    @classmethod
    def from_vector(cls, v) -> "HandPose":
        v = np.asarray(v, dtype=float)
        if v.shape != (N_PARAMS,):
            raise ValueError(f"hand pose needs exactly {N_PARAMS} values, got shape {v.shape}")
        return cls(v[0:3], v[3:6], v[6:])

    @classmethod
    def zero(cls) -> "HandPose":
        return cls.from_vector(np.zeros(N_PARAMS))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.wrist_translation, self.wrist_rotation, self.joint_angles])


@dataclass(frozen=True, eq=False)
class HandJoints:
    """root (T, 3); fingers (T, 5, 4, 3) ordered mcp, pip, dip, tip."""

    root: np.ndarray
    fingers: np.ndarray

    @property
    def tips(self):
        return self.fingers[..., 3, :]

    def flat(self) -> np.ndarray:
        """(T, 21, 3): root followed by mcp, pip, dip, tip of each finger."""
        T = self.root.shape[0]
        return np.concatenate([self.root[:, None], self.fingers.reshape(T, 20, 3)], axis=1)


@dataclass(frozen=True, eq=False)
class HandSurface:
    """Capsule samples, shape (T, 5, 4, n, 3); bone level 0 is the palm group."""

    vertices: np.ndarray

    def finger_vertices(self, finger: int) -> np.ndarray:
        v = self.vertices[:, finger, 1:]
        return v.reshape(v.shape[0], -1, 3)

    @property
    def palm_vertices(self) -> np.ndarray:
        v = self.vertices[:, :, 0]
        return v.reshape(v.shape[0], -1, 3)

    def all_vertices(self) -> np.ndarray:
        return self.vertices.reshape(self.vertices.shape[0], -1, 3)


@dataclass(frozen=True, eq=False)
class Kinematics:
    """Everything forward kinematics produces for a batch of poses (leading axis T)."""

    theta: np.ndarray
    wrist_R: np.ndarray          # (T, 3, 3)
    wrist_t: np.ndarray          # (T, 3)
    bone_R: np.ndarray           # (T, 5, 4, 3, 3) world rotation of each bone frame
    bone_origin: np.ndarray      # (T, 5, 4, 3)
    joints: np.ndarray           # (T, 5, 4, 3) mcp, pip, dip, tip
    axes: np.ndarray             # (T, 5, 3, 3, 3) world axis of joint (finger, joint, k)

    def hand_joints(self) -> HandJoints:
        return HandJoints(self.wrist_t, self.joints)


def _as_batch(theta):
    th = np.asarray(theta, dtype=float)
    single = th.ndim == 1
    th = np.atleast_2d(th)
    if th.shape[-1] != N_PARAMS:
        raise ValueError(f"pose vectors must have {N_PARAMS} entries")
    return th, single


def kinematics(theta, config: HandConfig) -> Kinematics:
    th, _ = _as_batch(theta)
    T = th.shape[0]
    Rw = exp_map(th[:, 3:6])
    tw = th[:, 0:3]
    q = th[:, 6:].reshape(T, 5, 3, 3)
    Rx, Ry, Rz = rot_x(q[..., 0]), rot_y(q[..., 1]), rot_z(q[..., 2])
    L = config.bone_lengths
    bone_R = np.empty((T, 5, 4, 3, 3))
    bone_o = np.empty((T, 5, 4, 3))
    joints = np.empty((T, 5, 4, 3))
    axes = np.empty((T, 5, 3, 3, 3))
    P = Rw[:, None] @ config.base_rotations[None]
    pos = np.broadcast_to(tw[:, None], (T, 5, 3))
    bone_R[:, :, 0] = P
    bone_o[:, :, 0] = pos
    for j in range(4):
        pos = pos + L[None, :, j, None] * bone_R[:, :, j, :, 1]
        joints[:, :, j] = pos
        if j == 3:
            break
        parent = bone_R[:, :, j]
        PRx = parent @ Rx[:, :, j]
        PRxy = PRx @ Ry[:, :, j]
        axes[:, :, j, 0] = parent[..., 0]
        axes[:, :, j, 1] = PRx[..., 1]
        axes[:, :, j, 2] = PRxy[..., 2]
        bone_R[:, :, j + 1] = PRxy @ Rz[:, :, j]
        bone_o[:, :, j + 1] = pos
    return Kinematics(th, Rw, tw, bone_R, bone_o, joints, axes)


def forward_kinematics(theta, config: HandConfig) -> HandJoints:
    """Joint positions for one pose (51,) or a batch (T, 51); outputs always carry a T axis."""
    return kinematics(theta, config).hand_joints()


def surface_from_kinematics(kin: Kinematics, config: HandConfig) -> np.ndarray:
    return kin.bone_origin[..., None, :] + np.einsum("tflij,flnj->tflni", kin.bone_R,
                                                     config.local_samples)


def hand_surface(theta, config: HandConfig) -> HandSurface:
    return HandSurface(surface_from_kinematics(kinematics(theta, config), config))


def vjp(kin: Kinematics, points: np.ndarray, grads: np.ndarray,
        root_grad: np.ndarray | None = None) -> np.ndarray:
    """Pull per-point gradients back to pose parameters.

    ``points``/``grads`` have shape (T, 5, 4, n, 3) where axis 2 is the bone level a
    point is rigidly attached to (joints: mcp=0 ... tip=3 with n=1). ``root_grad``
    (T, 3) is the gradient on the wrist point. Returns (T, 51).
    """
    T = kin.theta.shape[0]
    F = grads.sum(axis=3)                                   # (T,5,4,3)
    M = np.cross(points, grads).sum(axis=3)
    Fc = np.cumsum(F[:, :, ::-1], axis=2)[:, :, ::-1]       # sums over levels >= l
    Mc = np.cumsum(M[:, :, ::-1], axis=2)[:, :, ::-1]
    out = np.zeros((T, N_PARAMS))
    # joint j pivots at the origin of level j + 1 and moves levels >= j + 1
    piv = kin.bone_origin[:, :, 1:]                          # (T,5,3,3)
    torque = Mc[:, :, 1:] - np.cross(piv, Fc[:, :, 1:])      # (T,5,3,3)
    out[:, 6:] = np.einsum("tfjkc,tfjc->tfjk", kin.axes, torque).reshape(T, 45)
    F_all = Fc[:, :, 0].sum(axis=1)
    M_all = Mc[:, :, 0].sum(axis=1)
    if root_grad is not None:
        F_all = F_all + root_grad
        M_all = M_all + np.cross(kin.wrist_t, root_grad)
    out[:, 0:3] = F_all
    tq = M_all - np.cross(kin.wrist_t, F_all)
    out[:, 3:6] = np.einsum("tij,ti->tj", left_jacobian(kin.theta[:, 3:6]), tq)
    return out


def joints_vjp(kin: Kinematics, grad_fingers: np.ndarray, grad_root: np.ndarray | None = None):
    """VJP for joint gradients shaped like ``kin.joints`` (T, 5, 4, 3)."""
    return vjp(kin, kin.joints[:, :, :, None], grad_fingers[:, :, :, None], grad_root)


def pose_jacobian(theta, config: HandConfig, targets: str = "joints") -> np.ndarray:
    """Explicit d(points)/d(theta) for one pose: shape (3 * n_points, 51).

    ``joints``: 21 points (root, then mcp, pip, dip, tip per finger).
    ``surface``: all capsule samples in (finger, level, sample) order.
    """
    th, _ = _as_batch(theta)
    if th.shape[0] != 1:
        raise ValueError("pose_jacobian takes a single pose")
    kin = kinematics(th, config)
    if targets == "joints":
        pts = kin.joints[0][:, :, None]                      # (5,4,1,3)
        root = True
    elif targets == "surface":
        pts = surface_from_kinematics(kin, config)[0]        # (5,4,n,3)
        root = False
    else:
        raise ValueError("targets must be 'joints' or 'surface'")
    n = pts.shape[2]
    t = kin.wrist_t[0]
    Jl = left_jacobian(kin.theta[0, 3:6])
    blocks = np.zeros((5, 4, n, 3, N_PARAMS))
    blocks[..., :, 0:3] = np.eye(3)
    rel = pts - t
    # d p / d omega = -[p - t]_x J_l
    cross_mats = np.zeros(rel.shape + (3,))
    cross_mats[..., 0, 1] = -rel[..., 2]
    cross_mats[..., 0, 2] = rel[..., 1]
    cross_mats[..., 1, 0] = rel[..., 2]
    cross_mats[..., 1, 2] = -rel[..., 0]
    cross_mats[..., 2, 0] = -rel[..., 1]
    cross_mats[..., 2, 1] = rel[..., 0]
    blocks[..., :, 3:6] = -cross_mats @ Jl
    for f in range(5):
        for j in range(3):
            o = kin.bone_origin[0, f, j + 1]
            for k in range(3):
                a = kin.axes[0, f, j, k]
                col = joint_index(f, j, k)
                for lvl in range(j + 1, 4):
                    blocks[f, lvl, :, :, col] = np.cross(a, pts[f, lvl] - o)
    J = blocks.reshape(-1, N_PARAMS)
    if root:
        root_block = np.zeros((3, N_PARAMS))
        root_block[:, 0:3] = np.eye(3)
        J = np.vstack([root_block, J])
    return J

"""Keyframed object trajectories with eased cubic Bezier stages."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..rotations import axis_angle, exp_map, slerp_matrix
from .frames import PartFrame


@dataclass(frozen=True)
class RevoluteAxis:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.array(self.origin, dtype=float).reshape(3)
        d = np.array(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValueError("revolute axis direction must be non-zero")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d / n)


@dataclass(frozen=True)
class PartGoal:
    """Goal pose of one part: root rigid motion (translation, rotation vector) and joint angle."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "translation", np.array(self.translation, dtype=float).reshape(3))
        object.__setattr__(self, "rotation", np.array(self.rotation, dtype=float).reshape(3))
        object.__setattr__(self, "angle", float(self.angle))


@dataclass(frozen=True, eq=False)
class PartTrack:
    """Per-frame world pose of one part: ``x_world = rotations[t] @ x_body + translations[t]``."""

    rotations: np.ndarray
    translations: np.ndarray
    angles: np.ndarray

    def __len__(self):
        return len(self.translations)

    def frame(self, t: int) -> PartFrame:
        return PartFrame(self.rotations[t], self.translations[t], 1.0)

    def frames(self) -> list[PartFrame]:
        return [self.frame(t) for t in range(len(self))]

    def apply(self, t: int, points):
        return np.asarray(points, dtype=float) @ self.rotations[t].T + self.translations[t]

    def to_body(self, points):
        """World points ``(T, ..., 3)`` to body coordinates, frame by frame."""
        p = np.asarray(points, dtype=float)
        shp = p.shape
        p = p.reshape(shp[0], -1, 3) - self.translations[:, None, :]
        return np.einsum("tnj,tjk->tnk", p, self.rotations).reshape(shp)

    def to_world(self, points):
        p = np.asarray(points, dtype=float)
        shp = p.shape
        p = p.reshape(shp[0], -1, 3)
        out = np.einsum("tjk,tnk->tnj", self.rotations, p) + self.translations[:, None, :]
        return out.reshape(shp)


def ease(u):
    """Cubic Bezier with controls (0, 0, 1, 1): ``3u^2 - 2u^3``."""
    u = np.asarray(u, dtype=float)
    return u * u * (3.0 - 2.0 * u)


def ease_derivative(u):
    u = np.asarray(u, dtype=float)
    return 6.0 * u * (1.0 - u)


def stage_parameters(n_stages: int, frames_per_stage: int):
    """Stage index and local parameter ``u`` in [0, 1] for every output frame."""
    if frames_per_stage < 1:
        raise ValueError("frames_per_stage must be >= 1")
    if n_stages < 1:
        raise ValueError("need at least two keyframes")
    f = np.arange(n_stages * frames_per_stage + 1)
    stage = np.minimum(f // frames_per_stage, n_stages - 1)
    u = (f - stage * frames_per_stage) / frames_per_stage
    return stage, u


def pose_from_goal(goal_R, goal_t, angle, axis: RevoluteAxis | None):
    """World pose (R, t) for root rotation/translation and a revolute angle."""
    if axis is None:
        return goal_R, goal_t
    Ra = axis_angle(axis.direction, angle)
    o = axis.origin
    R = goal_R @ Ra
    t = np.einsum("...ij,...j->...i", goal_R, o - np.einsum("...ij,j->...i", Ra, o)) + goal_t
    return R, t


def bezier_object_trajectory(goal_poses: Sequence[Sequence[PartGoal]], frames_per_stage: int,
                             axes: Sequence[RevoluteAxis | None] | None = None) -> list[PartTrack]:
    """Per-part tracks through the keyframes ``goal_poses[keyframe][part]``.

    Within each stage, translations and joint angles follow the eased cubic and the
    root rotation is slerped with the same eased parameter, so every stage starts
    and ends at rest and keyframes are hit exactly.
    """
    if len(goal_poses) < 2:
        raise ValueError("need at least two keyframes")
    n_parts = len(goal_poses[0])
    if any(len(k) != n_parts for k in goal_poses):
        raise ValueError("every keyframe must list every part")
    if axes is None:
        axes = [None] * n_parts
    stage, u = stage_parameters(len(goal_poses) - 1, frames_per_stage)
    s = ease(u)
    tracks = []
    for p in range(n_parts):
        trans = np.array([k[p].translation for k in goal_poses])
        rots = exp_map(np.array([k[p].rotation for k in goal_poses]))
        ang = np.array([k[p].angle for k in goal_poses])
        t = trans[stage] + s[:, None] * (trans[stage + 1] - trans[stage])
        a = ang[stage] + s * (ang[stage + 1] - ang[stage])
        R = slerp_matrix(rots[stage], rots[stage + 1], s)
        # hit keyframes bit-exactly
        at_key = u == 0.0
        R[at_key] = rots[stage[at_key]]
        t[at_key] = trans[stage[at_key]]
        a[at_key] = ang[stage[at_key]]
        R[-1], t[-1], a[-1] = rots[-1], trans[-1], ang[-1]
        Rw, tw = pose_from_goal(R, t, a, axes[p])
        tracks.append(PartTrack(Rw, tw, a))
    return tracks

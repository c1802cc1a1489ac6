"""Similarity frames and the normalized part coordinate space (NPCS)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rotations import is_rotation
from .mesh import MeshError, TriMesh


@dataclass(frozen=True, eq=False)
class PartFrame:
    """Maps local coordinates ``x`` to world ``rotation @ (scale * x) + translation``.

    ``scale`` is a positive scalar, or a positive 3-vector when per-axis NPCS scaling is on.
    """

    rotation: np.ndarray
    translation: np.ndarray
    scale: float | np.ndarray = 1.0

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        s = np.array(self.scale, dtype=float)
        if not is_rotation(R, 1e-9):
            raise ValueError("PartFrame rotation must be orthonormal with det +1")
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError("PartFrame scale must be positive")
        for a in (R, t, s):
            a.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(s) if s.ndim == 0 else s)

    @classmethod
    def identity(cls) -> "PartFrame":
        return cls(np.eye(3), np.zeros(3), 1.0)

    @property
    def uniform(self) -> bool:
        return np.ndim(self.scale) == 0

    def apply(self, points):
        p = np.asarray(points, dtype=float)
        return (p * self.scale) @ self.rotation.T + self.translation

    def inverse_apply(self, points):
        p = np.asarray(points, dtype=float)
        return ((p - self.translation) @ self.rotation) / self.scale

    def apply_normal(self, normals):
        n = (np.asarray(normals, dtype=float) / self.scale) @ self.rotation.T
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def inverse_apply_normal(self, normals):
        n = (np.asarray(normals, dtype=float) @ self.rotation) * self.scale
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def compose(self, inner: "PartFrame") -> "PartFrame":
        """Frame equal to ``self.apply(inner.apply(x))``; needs a uniform ``self.scale``."""
        if not self.uniform:
            raise ValueError("outer frame of a composition must have uniform scale")
        return PartFrame(self.rotation @ inner.rotation,
                         self.apply(inner.translation),
                         self.scale * inner.scale)


def npcs_normalize(mesh: TriMesh, canonical_orientation, per_axis: bool = False):
    """Normalize a part into the unit cube after rotating it into its canonical orientation.

    Returns ``(normalized_mesh, frame)`` with ``frame.apply(normalized) == mesh.vertices``.
    The largest bounding-box extent becomes 1 (or every extent, when ``per_axis``).
    """
    if mesh.is_empty:
        raise MeshError("cannot normalize an empty mesh")
    Rc = np.asarray(canonical_orientation, dtype=float)
    if not is_rotation(Rc, 1e-9):
        raise ValueError("canonical orientation must be a rotation matrix")
    X = mesh.vertices @ Rc.T
    lo, hi = X.min(axis=0), X.max(axis=0)
    extent = hi - lo
    largest = extent.max()
    if not largest > 0:
        raise MeshError("degenerate mesh: zero extent on every axis")
    center = 0.5 * (lo + hi)
    if per_axis:
        scale = np.where(extent > 1e-12 * largest, extent, largest)
    else:
        scale = largest
    normalized = (X - center) / scale + 0.5
    frame = PartFrame(Rc.T, Rc.T @ (center - 0.5 * scale), scale)
    return TriMesh(normalized, mesh.triangles), frame


def npcs_denormalize(point_or_mesh, frame: PartFrame):
    """Inverse of :func:`npcs_normalize` for points or meshes."""
    if isinstance(point_or_mesh, TriMesh):
        return TriMesh(frame.apply(point_or_mesh.vertices), point_or_mesh.triangles)
    return frame.apply(point_or_mesh)

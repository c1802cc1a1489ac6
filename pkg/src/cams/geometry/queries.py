"""Closest-point, signed-distance and local-section queries on triangle meshes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from .mesh import MeshError, TriMesh


@dataclass(frozen=True)
class SurfaceHit:
    point: np.ndarray
    normal: np.ndarray
    signed_distance: float
    triangle_id: int


@dataclass(frozen=True)
class LocalSection:
    """Subset of a mesh near a point whose normals face a given direction."""

    vertex_ids: np.ndarray
    triangle_ids: np.ndarray

    @property
    def is_empty(self) -> bool:
        return len(self.triangle_ids) == 0


def closest_points(mesh: TriMesh, queries, triangle_ids=None):
    """Nearest surface points for ``(n, 3)`` queries.

    Returns ``(points, distances, triangle_ids)``; with ``triangle_ids`` the search
    is restricted to that subset and the returned ids index the full mesh.
    """
    if mesh.is_empty:
        raise MeshError("query against an empty mesh")
    q = np.asarray(queries, dtype=float).reshape(-1, 3)
    tris = mesh.triangle_vertices
    if triangle_ids is not None:
        triangle_ids = np.asarray(triangle_ids, dtype=np.int64)
        if len(triangle_ids) == 0:
            raise MeshError("empty triangle subset")
        tris = tris[triangle_ids]
    pts, d2, ids = _kernels.closest_points(q, tris)
    if triangle_ids is not None:
        ids = triangle_ids[ids]
    return pts, np.sqrt(d2), ids


def inside_mask(mesh: TriMesh, queries) -> np.ndarray:
    """Generalized winding number test (> 1/2 means inside); only queries inside both the
    axis-aligned and the principal-axis bounding boxes are evaluated."""
    q = np.asarray(queries, dtype=float).reshape(-1, 3)
    lo, hi = mesh.bounds
    pad = 1e-9 * max(1.0, float(np.abs(hi - lo).max()))
    cand = np.all((q >= lo - pad) & (q <= hi + pad), axis=1)
    axes, olo, ohi = mesh.oriented_bounds
    local = q[cand] @ axes
    cand[cand] = np.all((local >= olo - pad) & (local <= ohi + pad), axis=1)
    out = np.zeros(len(q), dtype=bool)
    if cand.any():
        w = _kernels.winding_numbers(q[cand], mesh.triangle_vertices)
        out[cand] = w > 0.5
    return out


def signed_distances(mesh: TriMesh, queries, triangle_ids=None):
    """Signed distances (negative inside the whole mesh) plus nearest points and triangle ids.

    The sign always comes from the full mesh; ``triangle_ids`` only restricts the
    nearest-point search.
    """
    q = np.asarray(queries, dtype=float).reshape(-1, 3)
    pts, dist, ids = closest_points(mesh, q, triangle_ids)
    sign = np.where(inside_mask(mesh, q), -1.0, 1.0)
    return sign * dist, pts, ids


def nearest_surface_point(mesh: TriMesh, query) -> SurfaceHit:
    q = np.asarray(query, dtype=float).reshape(1, 3)
    d, pts, ids = signed_distances(mesh, q)
    tid = int(ids[0])
    return SurfaceHit(pts[0], mesh.face_normals[tid].copy(), float(d[0]), tid)


def local_surface_section(mesh: TriMesh, center, normal, angle_deg: float = 45.0,
                          radius: float = 0.015) -> LocalSection:
    """Vertices within ``radius`` of ``center`` whose vertex normal lies within ``angle_deg`` of ``normal``.

    The triangle subset holds faces touching a selected vertex whose own face normal
    also passes the angle test; it is what nearest-point searches run against.
    """
    n = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise ValueError("section normal must be a unit vector")
    cos_lim = np.cos(np.radians(angle_deg)) - 1e-12
    c = np.asarray(center, dtype=float)
    near = np.linalg.norm(mesh.vertices - c, axis=1) <= radius
    facing = mesh.vertex_normals @ n >= cos_lim
    vids = np.flatnonzero(near & facing)
    if len(vids) == 0:
        return LocalSection(vids, np.zeros(0, dtype=np.int64))
    sel = np.zeros(len(mesh.vertices), dtype=bool)
    sel[vids] = True
    touch = sel[mesh.triangles].any(axis=1)
    ok = mesh.face_normals @ n >= cos_lim
    return LocalSection(vids, np.flatnonzero(touch & ok))

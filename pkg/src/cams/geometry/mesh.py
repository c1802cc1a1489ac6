"""Triangle meshes and the procedural builders used for scenes and fixtures."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh in meters. Triangles are counter-clockwise seen from outside."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("triangle index out of range")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    def __len__(self):
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0 or len(self.triangles) == 0

    @cached_property
    def triangle_vertices(self) -> np.ndarray:
        return self.vertices[self.triangles]

    @cached_property
    def _cross(self) -> np.ndarray:
        tv = self.triangle_vertices
        return np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        n = self._cross
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        # area weighting: the raw cross product is twice the area times the unit normal
        acc = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(acc, self.triangles[:, k], self._cross)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        return np.divide(acc, norm, out=np.zeros_like(acc), where=norm > 0)

    @cached_property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def oriented_bounds(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Box along the vertex principal axes: ``(axes (3, 3) as columns, lo, hi)`` in those axes."""
        v = self.vertices
        _, axes = np.linalg.eigh(np.cov((v - v.mean(axis=0)).T) if len(v) > 1 else np.eye(3))
        local = v @ axes
        return axes, local.min(axis=0), local.max(axis=0)

    @cached_property
    def edge_counts(self) -> dict:
        counts: dict[tuple[int, int], int] = {}
        f = self.triangles
        for a, b in np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]).tolist():
            counts[(a, b)] = counts.get((a, b), 0) + 1
        return counts

    def is_watertight(self) -> bool:
        """Closed, consistently oriented, edge-manifold genus-0 surface."""
        if self.is_empty:
            return False
        counts = self.edge_counts
        for (a, b), n in counts.items():
            if n != 1 or counts.get((b, a), 0) != 1:
                return False
        n_edges = len(counts) // 2
        n_verts = len(np.unique(self.triangles))
        return n_verts - n_edges + len(self.triangles) == 2

    def require_watertight(self) -> None:
        if not self.is_watertight():
            raise MeshError("mesh is not watertight")

    def transformed(self, rotation=None, translation=None, scale=1.0) -> "TriMesh":
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return TriMesh(v, self.triangles)

    def reflected(self, axis: int) -> "TriMesh":
        """Mirror across the plane ``x[axis] = 0``; winding is reversed to stay outward."""
        v = self.vertices.copy()
        v[:, axis] *= -1.0
        return TriMesh(v, self.triangles[:, ::-1])

    def permuted(self, order) -> "TriMesh":
        return TriMesh(self.vertices, self.triangles[np.asarray(order)])


def box_mesh(size, center=(0.0, 0.0, 0.0), cell: float | None = None) -> TriMesh:
    """Axis-aligned box whose faces are gridded with roughly ``cell``-sized quads.

    Face vertices are shared along edges so the result is watertight.
    """
    size = np.asarray(size, dtype=float)
    if size.shape != (3,) or np.any(size <= 0):
        raise MeshError("box size must be three positive lengths")
    if cell is None:
        n = np.ones(3, dtype=int)
    else:
        if cell <= 0:
            raise MeshError("cell must be positive")
        n = np.maximum(1, np.ceil(size / cell - 1e-9).astype(int))
    lo = np.asarray(center, dtype=float) - size / 2
    step = size / n

    keys: dict[tuple[int, int, int], int] = {}
    verts: list[np.ndarray] = []
    tris: list[tuple[int, int, int]] = []

    def vid(idx):
        key = (int(idx[0]), int(idx[1]), int(idx[2]))
        if key not in keys:
            keys[key] = len(verts)
            verts.append(lo + np.array(key) * step)
        return keys[key]

    for k in range(3):
        u, v = (k + 1) % 3, (k + 2) % 3  # e_u x e_v = +e_k
        for sign in (-1, 1):
            if sign < 0:
                u_, v_ = v, u
            else:
                u_, v_ = u, v
            fixed = 0 if sign < 0 else n[k]
            for i in range(n[u_]):
                for j in range(n[v_]):
                    quad = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        idx = [0, 0, 0]
                        idx[k] = fixed
                        idx[u_] = i + di
                        idx[v_] = j + dj
                        quad.append(vid(idx))
                    tris.append((quad[0], quad[1], quad[2]))
                    tris.append((quad[0], quad[2], quad[3]))
    return TriMesh(np.array(verts), np.array(tris))


def icosphere(radius: float = 1.0, subdivisions: int = 2, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    v = np.array(verts) * radius + np.asarray(center, dtype=float)
    return TriMesh(v, np.array(faces))


def _ear_clip(poly: np.ndarray) -> list[tuple[int, int, int]]:
    idx = list(range(len(poly)))
    out = []

    def cross2(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(poly) ** 2:
            raise MeshError("polygon triangulation failed (self-intersecting?)")
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross2(a, b, c) <= 0:
                continue
            inside = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = poly[j]
                if cross2(a, b, p) >= 0 and cross2(b, c, p) >= 0 and cross2(c, a, p) >= 0:
                    inside = True
                    break
            if not inside:
                out.append((i0, i1, i2))
                idx.pop(k)
                break
    out.append(tuple(idx))
    return out


def extrude_polygon(polygon, z0: float, z1: float) -> TriMesh:
    """Prism over a simple counter-clockwise polygon between heights ``z0 < z1``."""
    poly = np.asarray(polygon, dtype=float)
    n = len(poly)
    if n < 3 or z1 <= z0:
        raise MeshError("need >= 3 polygon points and z1 > z0")
    area = 0.5 * np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    if area < 0:
        poly = poly[::-1]
    bottom = np.column_stack([poly, np.full(n, z0)])
    top = np.column_stack([poly, np.full(n, z1)])
    verts = np.vstack([bottom, top])
    tris = []
    for a, b, c in _ear_clip(poly):
        tris.append((n + a, n + b, n + c))
        tris.append((c, b, a))
    for i in range(n):
        j = (i + 1) % n
        tris.append((i, j, n + j))
        tris.append((i, n + j, n + i))
    return TriMesh(verts, np.array(tris))

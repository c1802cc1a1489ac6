"""Mass properties of closed triangle meshes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, TriMesh


@dataclass(frozen=True, eq=False)
class Inertia:
    mass: float
    I0: np.ndarray
    com: np.ndarray


def mesh_inertia(mesh: TriMesh, mass: float = 1.0) -> Inertia:
    """Uniform-density solid inertia about the centroid, body frame.

    Each oriented triangle spans a signed tetrahedron with a reference point; the
    volume, first and second moments are exact polynomial integrals over those
    tetrahedra (divergence theorem).
    """
    if not mesh.is_watertight():
        raise MeshError("inertia needs a watertight mesh")
    ref = mesh.vertices.mean(axis=0)
    tv = mesh.triangle_vertices - ref
    a, b, c = tv[:, 0], tv[:, 1], tv[:, 2]
    vol = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
    V = vol.sum()
    if not V > 0:
        raise MeshError("mesh encloses no positive volume (inverted winding?)")
    s = a + b + c
    first = (vol[:, None] * s).sum(axis=0) / 4.0
    outer = (np.einsum("ni,nj->nij", a, a) + np.einsum("ni,nj->nij", b, b)
             + np.einsum("ni,nj->nij", c, c) + np.einsum("ni,nj->nij", s, s))
    second = (vol[:, None, None] * outer).sum(axis=0) / 20.0
    com_local = first / V
    rho = mass / V
    cov = rho * second - mass * np.outer(com_local, com_local)
    I0 = np.trace(cov) * np.eye(3) - cov
    I0 = 0.5 * (I0 + I0.T)
    return Inertia(float(mass), I0, com_local + ref)

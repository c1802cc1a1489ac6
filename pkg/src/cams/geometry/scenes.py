"""Procedural articulated scenes and their JSON form."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..rotations import exp_map, is_rotation, log_map, rot_z
from .frames import PartFrame, npcs_normalize
from .inertia import Inertia, mesh_inertia
from .mesh import TriMesh, box_mesh
from .trajectory import PartGoal, PartTrack, RevoluteAxis, bezier_object_trajectory

SCENE_KINDS = ("hinged_laptop", "pliers", "box_on_ground")


class SceneError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Part:
    """A rigid part. ``mesh`` is in body coordinates, which coincide with world at zero pose."""

    name: str
    mesh: TriMesh
    canonical_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    revolute_axis: RevoluteAxis | None = None

    def __post_init__(self):
        R = np.array(self.canonical_rotation, dtype=float)
        if not is_rotation(R, 1e-9):
            raise SceneError(f"part {self.name!r}: canonical rotation is not a rotation")
        object.__setattr__(self, "canonical_rotation", R)

    @cached_property
    def inertia(self) -> Inertia:
        return mesh_inertia(self.mesh)

    def npcs_frame(self, per_axis: bool = False, canonical: bool = True) -> PartFrame:
        """Frame mapping NPCS coordinates to body coordinates."""
        R = self.canonical_rotation if canonical else np.eye(3)
        return npcs_normalize(self.mesh, R, per_axis=per_axis)[1]


@dataclass(frozen=True, eq=False)
class Scene:
    parts: tuple[Part, ...]
    goals: tuple[tuple[PartGoal, ...], ...]
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    ground_z: float = 0.0
    kind: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "goals", tuple(tuple(k) for k in self.goals))
        object.__setattr__(self, "gravity", np.array(self.gravity, dtype=float).reshape(3))
        object.__setattr__(self, "ground_z", float(self.ground_z))
        if not self.parts:
            raise SceneError("scene has no parts")
        names = [p.name for p in self.parts]
        if len(set(names)) != len(names):
            raise SceneError("part names must be unique")
        if len(self.goals) < 2:
            raise SceneError("need at least two goal keyframes")
        if any(len(k) != len(self.parts) for k in self.goals):
            raise SceneError("every goal keyframe must list every part")
        for p in self.parts:
            p.mesh.require_watertight()

    @property
    def n_stages(self) -> int:
        return len(self.goals) - 1

    @property
    def articulated(self) -> bool:
        return any(p.revolute_axis is not None for p in self.parts)

    def trajectories(self, frames_per_stage: int) -> list[PartTrack]:
        return bezier_object_trajectory(self.goals, frames_per_stage,
                                        [p.revolute_axis for p in self.parts])

    def part_index(self, name: str) -> int:
        for k, p in enumerate(self.parts):
            if p.name == name:
                return k
        raise SceneError(f"unknown part {name!r}")

    # -- rigid / scale transforms (used by invariance tests) ---------------
    def transformed(self, G_R, G_t) -> "Scene":
        """Apply the world transform ``x -> G_R x + G_t`` to geometry, axes and goals."""
        G_R = np.asarray(G_R, dtype=float)
        G_t = np.asarray(G_t, dtype=float)
        parts = []
        for p in self.parts:
            ax = None
            if p.revolute_axis is not None:
                ax = RevoluteAxis(G_R @ p.revolute_axis.origin + G_t, G_R @ p.revolute_axis.direction)
            parts.append(Part(p.name, p.mesh.transformed(G_R, G_t),
                              p.canonical_rotation @ G_R.T, ax))
        goals = []
        for key in self.goals:
            row = []
            for g in key:
                R = G_R @ exp_map(g.rotation) @ G_R.T
                t = G_R @ g.translation + G_t - R @ G_t
                row.append(PartGoal(t, log_map(R), g.angle))
            goals.append(row)
        return Scene(parts, goals, G_R @ self.gravity, self.ground_z, self.kind)

    def scaled(self, s: float) -> "Scene":
        parts = []
        for p in self.parts:
            ax = None
            if p.revolute_axis is not None:
                ax = RevoluteAxis(s * p.revolute_axis.origin, p.revolute_axis.direction)
            parts.append(Part(p.name, p.mesh.transformed(scale=s), p.canonical_rotation, ax))
        goals = [[PartGoal(s * g.translation, g.rotation, g.angle) for g in key] for key in self.goals]
        return Scene(parts, goals, self.gravity, s * self.ground_z, self.kind)

    # -- JSON ---------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "parts": [{
                "name": p.name,
                "vertices": p.mesh.vertices.tolist(),
                "triangles": p.mesh.triangles.tolist(),
                "canonical_rotation": p.canonical_rotation.tolist(),
                "revolute_axis": None if p.revolute_axis is None else {
                    "origin": p.revolute_axis.origin.tolist(),
                    "direction": p.revolute_axis.direction.tolist()},
            } for p in self.parts],
            "gravity": self.gravity.tolist(),
            "ground_z": self.ground_z,
            "goal_keyframes": [[{"part": p.name,
                                 "translation": g.translation.tolist(),
                                 "rotation": g.rotation.tolist(),
                                 "angle": g.angle} for p, g in zip(self.parts, key)]
                               for key in self.goals],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        try:
            parts = []
            for pd in d["parts"]:
                ax = pd.get("revolute_axis")
                axis = None if ax is None else RevoluteAxis(ax["origin"], ax["direction"])
                parts.append(Part(str(pd["name"]), TriMesh(pd["vertices"], pd["triangles"]),
                                  pd.get("canonical_rotation", np.eye(3).tolist()), axis))
            names = [p.name for p in parts]
            goals = []
            for key in d["goal_keyframes"]:
                by_name = {}
                for gd in key:
                    by_name[gd["part"]] = PartGoal(gd.get("translation", (0, 0, 0)),
                                                   gd.get("rotation", (0, 0, 0)),
                                                   gd.get("angle", 0.0))
                if sorted(by_name) != sorted(names):
                    raise SceneError("goal keyframe parts do not match scene parts")
                goals.append([by_name[n] for n in names])
            return cls(parts, goals, d.get("gravity", (0.0, 0.0, -9.81)),
                       d.get("ground_z", 0.0), d.get("kind", "custom"))
        except (KeyError, TypeError) as exc:
            raise SceneError(f"malformed scene: {exc}") from exc


def _positive(params, key, default):
    v = np.asarray(params.pop(key, default), dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise SceneError(f"{key} must be positive")
    return v


def _angles(params, default, lo, hi):
    a = np.asarray(params.pop("angles", default), dtype=float).reshape(-1)
    if len(a) < 2:
        raise SceneError("angles needs at least two keyframes")
    if np.any(a < lo) or np.any(a > hi):
        raise SceneError(f"angles must lie in [{lo}, {hi}]")
    return a


def make_scene(kind: str, **params) -> Scene:
    """Build a procedural scene.

    ``hinged_laptop``: ``base_size`` (0.3, 0.2, 0.015), ``lid_size`` (0.3, 0.2, 0.01),
    ``cell`` 0.01, ``angles`` (0, 0.6, 1.2) rad in [0, pi]. The lid lies on the base
    and hinges about its back edge (axis along -x, so positive angles lift the front).

    ``pliers``: ``length`` 0.18, ``width`` 0.015, ``thickness`` 0.01, ``cross_angle``
    0.35 rad, ``cell`` 0.01, ``angles`` (0, 0.25) rad in [0, cross_angle]. Two bars
    mirrored across the x-z plane share a pivot axis along +z; part ``arm_b`` turns by
    the negated angle.

    ``box_on_ground``: ``size`` (0.2, 0.2, 0.2), ``cell`` 0.02, ``slide`` (0.2, 0, 0) m.
    The box rests on z = 0 and slides by ``slide`` over one stage.
    """
    params = dict(params)
    if kind == "hinged_laptop":
        base = _positive(params, "base_size", (0.3, 0.2, 0.015))
        lid = _positive(params, "lid_size", (0.3, 0.2, 0.01))
        cell = float(_positive(params, "cell", 0.01))
        angles = _angles(params, (0.0, 0.6, 1.2), 0.0, np.pi)
        if base.shape != (3,) or lid.shape != (3,) or np.any(lid[:2] > base[:2] + 1e-12):
            raise SceneError("lid footprint must fit on the base")
        back = base[1] / 2
        base_mesh = box_mesh(base, (0.0, 0.0, base[2] / 2), cell)
        lid_mesh = box_mesh(lid, (0.0, back - lid[1] / 2, base[2] + lid[2] / 2), cell)
        axis = RevoluteAxis((0.0, back, base[2]), (-1.0, 0.0, 0.0))
        parts = [Part("base", base_mesh), Part("lid", lid_mesh, np.eye(3), axis)]
        goals = [[PartGoal(), PartGoal(angle=a)] for a in angles]
        scene = Scene(parts, goals, kind=kind)
    elif kind == "pliers":
        length = float(_positive(params, "length", 0.18))
        width = float(_positive(params, "width", 0.015))
        thick = float(_positive(params, "thickness", 0.01))
        cross = float(_positive(params, "cross_angle", 0.35))
        cell = float(_positive(params, "cell", 0.01))
        if cross >= np.pi / 2:
            raise SceneError("cross_angle must be below pi/2")
        angles = _angles(params, (0.0, 0.25), 0.0, cross)
        bar = box_mesh((length, width, thick), (0.1 * length, 0.0, thick / 2), cell)
        arm_a = bar.transformed(rot_z(cross))
        arm_b = arm_a.reflected(1)
        axis = ((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
        parts = [Part("arm_a", arm_a, np.eye(3), RevoluteAxis(*axis)),
                 Part("arm_b", arm_b, np.eye(3), RevoluteAxis(*axis))]
        goals = [[PartGoal(angle=-a), PartGoal(angle=a)] for a in angles]
        scene = Scene(parts, goals, kind=kind)
    elif kind == "box_on_ground":
        size = _positive(params, "size", (0.2, 0.2, 0.2))
        cell = float(_positive(params, "cell", 0.02))
        slide = np.asarray(params.pop("slide", (0.2, 0.0, 0.0)), dtype=float).reshape(3)
        if size.shape != (3,):
            raise SceneError("size must be three lengths")
        parts = [Part("box", box_mesh(size, (0.0, 0.0, size[2] / 2), cell))]
        goals = [[PartGoal()], [PartGoal(translation=slide)]]
        scene = Scene(parts, goals, kind=kind)
    else:
        raise SceneError(f"unknown scene kind {kind!r}; expected one of {SCENE_KINDS}")
    if params:
        raise SceneError(f"unknown parameters for {kind}: {sorted(params)}")
    return scene

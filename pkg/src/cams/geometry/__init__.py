"""Meshes, canonical frames, surface queries, inertia, trajectories and scenes."""
from .frames import PartFrame, npcs_denormalize, npcs_normalize
from .inertia import Inertia, mesh_inertia
from .mesh import MeshError, TriMesh, box_mesh, extrude_polygon, icosphere
from .queries import (LocalSection, SurfaceHit, closest_points, inside_mask, local_surface_section,
                      nearest_surface_point, signed_distances)
from .scenes import SCENE_KINDS, Part, Scene, SceneError, make_scene
from .trajectory import (PartGoal, PartTrack, RevoluteAxis, bezier_object_trajectory, ease,
                         ease_derivative, pose_from_goal, stage_parameters)

__all__ = [
    "PartFrame", "npcs_denormalize", "npcs_normalize", "Inertia", "mesh_inertia", "MeshError",
    "TriMesh", "box_mesh", "extrude_polygon", "icosphere", "LocalSection", "SurfaceHit",
    "closest_points", "inside_mask", "local_surface_section", "nearest_surface_point",
    "signed_distances", "SCENE_KINDS", "Part", "Scene", "SceneError", "make_scene", "PartGoal",
    "PartTrack", "RevoluteAxis", "bezier_object_trajectory", "ease", "ease_derivative",
    "pose_from_goal", "stage_parameters",
]

"""Scripted ground-truth motions used as fixtures for extraction, synthesis and metrics."""
from __future__ import annotations

import numpy as np

from .geometry.scenes import Scene
from .geometry.trajectory import PartTrack
from .hand import HandConfig, N_PARAMS
from .motion import Motion
from .rotations import log_map

FAR_AWAY = np.array([0.0, 0.0, 5.0])


def hand_riding_part(track: PartTrack, wrist_body, rotation_body=None) -> np.ndarray:
    """Hand track (T, 51) with zero finger angles rigidly attached to a part."""
    Rb = np.eye(3) if rotation_body is None else np.asarray(rotation_body, dtype=float)
    T = len(track)
    hand = np.zeros((T, N_PARAMS))
    hand[:, 0:3] = track.to_world(np.broadcast_to(np.asarray(wrist_body, dtype=float), (T, 3)))
    hand[:, 3:6] = log_map(track.rotations @ Rb)
    return hand


def laptop_opening_motion(scene: Scene, frames_per_stage: int = 30, fps: float = 30.0,
                          hand_config: HandConfig | None = None, gap: float = 0.0005,
                          front_inset: float = 0.01) -> Motion:
    """Flat open hand lying on the lid (palm down, fingers toward the hinge) while it opens.

    The palm-facing capsule samples sit ``gap`` above the lid's top face; the wrist is
    ``front_inset`` behind the lid's front edge.
    """
    hand_config = hand_config or HandConfig()
    k = scene.part_index("lid")
    lid = scene.parts[k]
    lo, hi = lid.mesh.bounds
    r = float(hand_config.radii[1:, :].max())
    wrist = np.array([0.5 * (lo[0] + hi[0]), lo[1] + front_inset, hi[2] + r + gap])
    tracks = scene.trajectories(frames_per_stage)
    hand = hand_riding_part(tracks[k], wrist)
    return Motion(fps, hand, tracks, [p.name for p in scene.parts])


def hand_far_motion(scene: Scene, frames_per_stage: int = 30, fps: float = 30.0,
                    tracks=None) -> Motion:
    """Object tracks with the hand parked far from everything."""
    tracks = tracks if tracks is not None else scene.trajectories(frames_per_stage)
    T = len(tracks[0])
    hand = np.zeros((T, N_PARAMS))
    hand[:, 0:3] = FAR_AWAY
    return Motion(fps, hand, tracks, [p.name for p in scene.parts])


def constant_tracks(n_parts: int, n_frames: int, translation=(0.0, 0.0, 0.0), velocity=(0.0, 0.0, 0.0),
                    dt: float = 1.0 / 30.0) -> list[PartTrack]:
    t = np.arange(n_frames)[:, None] * dt
    trans = np.asarray(translation, dtype=float) + t * np.asarray(velocity, dtype=float)
    R = np.broadcast_to(np.eye(3), (n_frames, 3, 3)).copy()
    return [PartTrack(R, trans.copy(), np.zeros(n_frames)) for _ in range(n_parts)]

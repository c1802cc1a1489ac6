"""Hand + object motion container and its JSON form."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry.scenes import Scene
from .geometry.trajectory import PartTrack
from .hand import N_PARAMS
from .rotations import exp_map, log_map


class MotionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Motion:
    """``hand`` is (T, 51); ``tracks`` holds one world-pose track per scene part."""

    fps: float
    hand: np.ndarray
    tracks: tuple[PartTrack, ...]
    part_names: tuple[str, ...]

    def __post_init__(self):
        hand = np.array(self.hand, dtype=float)
        if hand.ndim != 2 or hand.shape[1] != N_PARAMS:
            raise MotionError(f"hand track must be (T, {N_PARAMS})")
        hand[:, 6:] = np.clip(hand[:, 6:], -np.pi, np.pi)
        hand.setflags(write=False)
        object.__setattr__(self, "hand", hand)
        object.__setattr__(self, "tracks", tuple(self.tracks))
        object.__setattr__(self, "part_names", tuple(self.part_names))
        if not self.fps > 0:
            raise MotionError("fps must be positive")
        if len(self.tracks) != len(self.part_names):
            raise MotionError("one track per part name")
        for tr in self.tracks:
            if len(tr) != len(hand):
                raise MotionError(f"frame count mismatch: hand has {len(hand)}, part track has {len(tr)}")

    @property
    def n_frames(self) -> int:
        return len(self.hand)

    @property
    def dt(self) -> float:
        return 1.0 / self.fps

    def check_scene(self, scene: Scene) -> None:
        names = tuple(p.name for p in scene.parts)
        if names != self.part_names:
            raise MotionError(f"motion parts {self.part_names} do not match scene parts {names}")

    def transformed(self, G_R, G_t) -> "Motion":
        """Motion seen after the world transform ``x -> G_R x + G_t`` (pair with Scene.transformed)."""
        G_R = np.asarray(G_R, dtype=float)
        G_t = np.asarray(G_t, dtype=float)
        hand = self.hand.copy()
        hand[:, 0:3] = hand[:, 0:3] @ G_R.T + G_t
        hand[:, 3:6] = log_map(G_R @ exp_map(hand[:, 3:6]))
        tracks = []
        for tr in self.tracks:
            R = G_R @ tr.rotations @ G_R.T
            t = tr.translations @ G_R.T + G_t - R @ G_t
            tracks.append(PartTrack(R, t, tr.angles))
        return Motion(self.fps, hand, tracks, self.part_names)

    def scaled(self, s: float) -> "Motion":
        hand = self.hand.copy()
        hand[:, 0:3] *= s
        tracks = [PartTrack(tr.rotations, tr.translations * s, tr.angles) for tr in self.tracks]
        return Motion(self.fps, hand, tracks, self.part_names)

    def to_dict(self, header: dict | None = None) -> dict:
        d = {}
        if header is not None:
            d["header"] = header
        d["fps"] = self.fps
        d["hand"] = self.hand.tolist()
        d["parts"] = [{"name": n,
                       "poses": np.concatenate([tr.translations, log_map(tr.rotations)], axis=1).tolist()}
                      for n, tr in zip(self.part_names, self.tracks)]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Motion":
        try:
            hand = np.asarray(d["hand"], dtype=float)
            tracks, names = [], []
            for pd in d["parts"]:
                poses = np.asarray(pd["poses"], dtype=float).reshape(-1, 6)
                tracks.append(PartTrack(exp_map(poses[:, 3:6]), poses[:, :3], np.zeros(len(poses))))
                names.append(str(pd["name"]))
            return cls(float(d["fps"]), hand, tracks, names)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, MotionError):
                raise
            raise MotionError(f"malformed motion: {exc}") from exc

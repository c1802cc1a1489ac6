"""Canonicalized contact targets, contact reference frames and finger embeddings.

Object-centric level: every part is expressed in its normalized part space, so a
contact target is a point ``V`` and normal ``N`` inside the unit cube, stored per
(transition, finger, part). Contact-centric level: each finger is embedded in a
frame placed at the matched contact point with the part's canonical orientation,
as its tip position plus unit directions from the tip to dip, pip, mcp and wrist.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .config import ExtractionConfig
from .geometry.frames import PartFrame
from .geometry.queries import closest_points, signed_distances
from .geometry.scenes import Part, Scene
from .hand import HandConfig, HandJoints, kinematics, surface_from_kinematics
from .motion import Motion

EMBED_JOINTS = ("tip", "dip", "pip", "mcp", "root")


class CamsError(ValueError):
    pass


@dataclass(frozen=True)
class RepresentationMode:
    """Which canonicalization levels are on; the defaults are the full representation."""

    npcs: bool = True
    contact_frames: bool = True
    absolute_embedding: bool = False
    per_axis_npcs: bool = False

    def ablations(self) -> list[str]:
        out = []
        if not self.npcs:
            out.append("no-npcs")
        if not self.contact_frames:
            out.append("no-contact-frames")
        if self.absolute_embedding:
            out.append("absolute-embedding")
        if self.per_axis_npcs:
            out.append("per-axis-npcs")
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RepresentationMode":
        return cls(**{k: bool(v) for k, v in d.items()})


def temporal_encoding(t_norm: float) -> np.ndarray:
    """(sin 2^k pi t, cos 2^k pi t) for k = 0..5, interleaved."""
    t = float(t_norm)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"normalized time must lie in [0, 1], got {t_norm}")
    ang = (2.0 ** np.arange(6)) * np.pi * t
    out = np.empty(12)
    out[0::2] = np.sin(ang)
    out[1::2] = np.cos(ang)
    return out


@dataclass(frozen=True)
class ContactTarget:
    c: int
    V_norm: np.ndarray
    N_norm: np.ndarray
    finger: int
    transition: int
    part: int


@dataclass(frozen=True, eq=False)
class ContactRefFrame:
    origin: np.ndarray
    rotation: np.ndarray

    def to_local(self, points):
        return (np.asarray(points, dtype=float) - self.origin) @ self.rotation

    def to_world(self, points):
        return np.asarray(points, dtype=float) @ self.rotation.T + self.origin


@dataclass(frozen=True, eq=False)
class FingerEmbedding:
    """``J_tip`` (3,) and ``D`` (4, 3) for dip, pip, mcp, root."""

    J_tip: np.ndarray
    D: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.vstack([self.J_tip, self.D])

    @classmethod
    def from_array(cls, a) -> "FingerEmbedding":
        a = np.asarray(a, dtype=float).reshape(5, 3)
        return cls(a[0].copy(), a[1:].copy())


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

def finger_chain(joints: HandJoints, finger: int) -> np.ndarray:
    """World positions (T, 5, 3) in embedding order tip, dip, pip, mcp, root."""
    f = joints.fingers[:, finger]
    return np.stack([f[:, 3], f[:, 2], f[:, 1], f[:, 0], joints.root], axis=1)


def embed_chain(chain, origin, rotation, absolute: bool = False) -> np.ndarray:
    """Frame-local embedding of world chains ``(..., 5, 3)``; frames broadcast over ``...``."""
    chain = np.asarray(chain, dtype=float)
    origin = np.asarray(origin, dtype=float)
    rotation = np.asarray(rotation, dtype=float)
    local = np.einsum("...nj,...jk->...nk", chain - origin[..., None, :], rotation)
    if absolute:
        return local
    d = local[..., 1:, :] - local[..., :1, :]
    n = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise CamsError("zero-length joint direction (coincident joints)")
    return np.concatenate([local[..., :1, :], d / n], axis=-2)


def compute_finger_embedding(joints: HandJoints, finger: int, frame: ContactRefFrame,
                             mode: str = "directional", t: int = 0) -> FingerEmbedding:
    if mode not in ("directional", "absolute"):
        raise ValueError("mode must be 'directional' or 'absolute'")
    chain = finger_chain(joints, finger)[t]
    return FingerEmbedding.from_array(embed_chain(chain, frame.origin, frame.rotation,
                                                  mode == "absolute"))


def world_targets(E1, E2, t_norm, O1, R1, O2, R2, absolute: bool = False):
    """Blend two embeddings ``(..., 5, 3)`` given their frames into world targets.

    Returns ``(tip (..., 3), rest (..., 4, 3))``; ``rest`` holds unit directions in
    directional mode and absolute positions otherwise.
    """
    t = np.asarray(t_norm, dtype=float)[..., None]
    tip1 = np.einsum("...ij,...j->...i", R1, E1[..., 0, :]) + O1
    tip2 = np.einsum("...ij,...j->...i", R2, E2[..., 0, :]) + O2
    r1 = np.einsum("...ij,...nj->...ni", R1, E1[..., 1:, :])
    r2 = np.einsum("...ij,...nj->...ni", R2, E2[..., 1:, :])
    if absolute:
        r1 = r1 + O1[..., None, :]
        r2 = r2 + O2[..., None, :]
    tip = (1.0 - t) * tip1 + t * tip2
    rest = (1.0 - t[..., None]) * r1 + t[..., None] * r2
    if not absolute:
        n = np.linalg.norm(rest, axis=-1, keepdims=True)
        if np.any(n < 1e-6):
            raise CamsError("degenerate direction blend (opposite endpoint directions)")
        rest = rest / n
    return tip, rest


def embedding_world_targets(F1: FingerEmbedding, F2: FingerEmbedding, t_norm: float,
                            frame_start: ContactRefFrame, frame_end: ContactRefFrame,
                            absolute: bool = False):
    return world_targets(F1.as_array(), F2.as_array(), t_norm, frame_start.origin,
                         frame_start.rotation, frame_end.origin, frame_end.rotation, absolute)


# ---------------------------------------------------------------------------
# part canonical frames and contact matching
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _npcs_frame_cached(part: Part, canonical: bool, per_axis: bool) -> PartFrame:
    return part.npcs_frame(per_axis=per_axis, canonical=canonical)


def part_space(part: Part, mode: RepresentationMode) -> PartFrame:
    """Frame mapping the stored (normalized) part coordinates to body coordinates."""
    if not mode.npcs:
        return PartFrame.identity()
    return _npcs_frame_cached(part, True, mode.per_axis_npcs)


def part_center_body(part: Part, mode: RepresentationMode) -> np.ndarray:
    """Body-space origin of the part-level frame (center of the normalized cube)."""
    if not mode.npcs:
        lo, hi = part.mesh.bounds
        return 0.5 * (lo + hi)
    return _npcs_frame_cached(part, True, mode.per_axis_npcs).apply(np.full(3, 0.5))


def part_frame_rotation(part: Part, mode: RepresentationMode) -> np.ndarray:
    """Body-frame rotation of the embedding frame axes."""
    return part_space(part, mode).rotation


def match_contact_body(part: Part, V_norm, N_norm, mode: RepresentationMode | None = None,
                       cone_angle_deg: float = 45.0):
    """Body-space contact point for a stored target: ``(point, normal, triangle_id)``.

    Nearest surface point to the denormalized ``V`` among triangles whose normal is
    within the cone around the denormalized ``N``; unfiltered nearest point if no
    triangle passes.
    """
    mode = mode or RepresentationMode()
    space = part_space(part, mode)
    mesh = part.mesh
    if mesh.is_empty:
        raise CamsError("cannot match against an empty mesh")
    Vb = space.apply(np.asarray(V_norm, dtype=float))
    Nb = space.apply_normal(np.asarray(N_norm, dtype=float))
    ok = mesh.face_normals @ Nb >= np.cos(np.radians(cone_angle_deg)) - 1e-12
    subset = np.flatnonzero(ok) if ok.any() else None
    pts, _, ids = closest_points(mesh, Vb[None], subset)
    tid = int(ids[0])
    return pts[0], mesh.face_normals[tid].copy(), tid


def match_contact_point(part: Part, pose: PartFrame, V_norm, N_norm,
                        mode: RepresentationMode | None = None,
                        cone_angle_deg: float = 45.0) -> ContactRefFrame:
    """World contact reference frame for a target on ``part`` posed at ``pose``."""
    mode = mode or RepresentationMode()
    p, _, _ = match_contact_body(part, V_norm, N_norm, mode, cone_angle_deg)
    R = pose.rotation @ part_frame_rotation(part, mode)
    return ContactRefFrame(pose.apply(p), R)


def side_origins_body(scene: Scene, c, V, N, mode: RepresentationMode,
                      cone_angle_deg: float = 45.0) -> np.ndarray:
    """Body-space frame origin per (transition, finger, part): matched contact or part center."""
    M1, F, K = c.shape
    out = np.zeros((M1, F, K, 3))
    for k, part in enumerate(scene.parts):
        center = part_center_body(part, mode)
        for j in range(M1):
            for i in range(F):
                if mode.contact_frames and c[j, i, k]:
                    out[j, i, k] = match_contact_body(part, V[j, i, k], N[j, i, k], mode,
                                                      cone_angle_deg)[0]
                else:
                    out[j, i, k] = center
    return out


# ---------------------------------------------------------------------------
# sequences
# ---------------------------------------------------------------------------

def validate_boundaries(boundaries, n_frames: int) -> np.ndarray:
    b = np.asarray(boundaries)
    if b.ndim != 1 or len(b) < 2 or not np.all(np.equal(np.mod(b, 1), 0)):
        raise CamsError("stage boundaries must be >= 2 integer frame indices")
    b = b.astype(np.int64)
    if np.any(np.diff(b) <= 0):
        raise CamsError("stage boundaries must be strictly increasing")
    if b[0] != 0 or b[-1] != n_frames - 1:
        raise CamsError(f"stage boundaries must start at 0 and end at {n_frames - 1}")
    return b


def stage_of_frames(boundaries, n_frames: int):
    """Stage index and normalized stage time for every frame (last frame ends the last stage)."""
    b = np.asarray(boundaries)
    f = np.arange(n_frames)
    stage = np.clip(np.searchsorted(b, f, side="right") - 1, 0, len(b) - 2)
    t = (f - b[stage]) / (b[stage + 1] - b[stage])
    return stage, t


def default_boundaries(n_stages: int, frames_per_stage: int) -> np.ndarray:
    return np.arange(n_stages + 1) * frames_per_stage


@dataclass(frozen=True, eq=False)
class CamsSequence:
    """Contact targets per transition and bidirectional embeddings per frame.

    Shapes (T frames, M stages, N parts, S samples per stage)::

        c (M+1, 5, N), V / N (M+1, 5, N, 3)
        f_c / f_n (T, 5, N), F1 / F2 (T, 5, N, 5, 3)  zero where f_n = 0
        sample_pos (M, S) fractional frame positions
        s_f_c / s_f_n (M, S, 5, N), s_F1 / s_F2 (M, S, 5, N, 5, 3)
    """

    mode: RepresentationMode
    boundaries: np.ndarray
    part_names: tuple
    c: np.ndarray
    V: np.ndarray
    N: np.ndarray
    f_c: np.ndarray
    f_n: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    sample_pos: np.ndarray
    s_f_c: np.ndarray
    s_f_n: np.ndarray
    s_F1: np.ndarray
    s_F2: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.f_c.shape[0]

    @property
    def n_stages(self) -> int:
        return len(self.boundaries) - 1

    @property
    def n_parts(self) -> int:
        return len(self.part_names)

    @property
    def samples_per_stage(self) -> int:
        return self.sample_pos.shape[1]

    def targets(self) -> list[ContactTarget]:
        out = []
        for j in range(self.c.shape[0]):
            for i in range(5):
                for k in range(self.n_parts):
                    out.append(ContactTarget(int(self.c[j, i, k]), self.V[j, i, k].copy(),
                                             self.N[j, i, k].copy(), i, j, k))
        return out

    def frame_track(self, boundaries):
        """Flags and embeddings on a target frame grid with the same stage count.

        Uses the dense track when the grids coincide; otherwise interpolates the
        per-stage sample track at each target frame's normalized stage time.
        Returns ``(f_c, f_n, F1, F2)`` with the dense shapes.
        """
        b = np.asarray(boundaries, dtype=np.int64)
        if len(b) != len(self.boundaries):
            raise CamsError("stage count of the target grid does not match the CAMS sequence")
        if np.array_equal(b, self.boundaries):
            return self.f_c, self.f_n, self.F1, self.F2
        T = int(b[-1]) + 1
        stage, t = stage_of_frames(b, T)
        S = self.samples_per_stage
        u = t * (S - 1)
        lo = np.minimum(np.floor(u).astype(int), S - 1)
        hi = np.minimum(lo + 1, S - 1)
        w = (u - lo)[:, None, None, None, None]
        near = np.where(u - lo >= 0.5, hi, lo)
        f_c = self.s_f_c[stage, near]
        f_n = self.s_f_n[stage, near]
        out = []
        for E in (self.s_F1, self.s_F2):
            e_lo, e_hi = E[stage, lo], E[stage, hi]
            ok_lo = self.s_f_n[stage, lo][..., None, None]
            ok_hi = self.s_f_n[stage, hi][..., None, None]
            e_lo = np.where(ok_lo, e_lo, e_hi)
            e_hi = np.where(ok_hi, e_hi, e_lo)
            e = (1 - w) * e_lo + w * e_hi
            if not self.mode.absolute_embedding:
                d = e[..., 1:, :]
                n = np.linalg.norm(d, axis=-1, keepdims=True)
                e = np.concatenate([e[..., :1, :], np.divide(d, n, out=np.zeros_like(d), where=n > 0)],
                                   axis=-2)
            out.append(np.where(f_n[..., None, None], e, 0.0))
        return f_c, f_n, out[0], out[1]

    # -- JSON ---------------------------------------------------------------
    def to_dict(self, header: dict | None = None) -> dict:
        d = {}
        if header is not None:
            d["header"] = header
        d["mode"] = self.mode.to_dict()
        d["stages"] = self.n_stages
        d["boundaries"] = self.boundaries.tolist()
        d["parts"] = list(self.part_names)
        d["transitions"] = [{"targets": [{"finger": i, "part": k, "c": int(self.c[j, i, k]),
                                          "V": self.V[j, i, k].tolist(), "N": self.N[j, i, k].tolist()}
                                         for i in range(5) for k in range(self.n_parts)]}
                            for j in range(self.c.shape[0])]

        def frames(f_c, f_n, F1, F2):
            out = []
            for t in range(f_c.shape[0]):
                emb = [{"finger": i, "part": k, "F1": F1[t, i, k].ravel().tolist(),
                        "F2": F2[t, i, k].ravel().tolist()}
                       for i in range(5) for k in range(self.n_parts) if f_n[t, i, k]]
                out.append({"flags": {"f_c": f_c[t].astype(int).tolist(),
                                      "f_n": f_n[t].astype(int).tolist()},
                            "embeddings": emb})
            return out

        d["frames"] = frames(self.f_c, self.f_n, self.F1, self.F2)
        d["samples"] = [{"positions": self.sample_pos[j].tolist(),
                         "frames": frames(self.s_f_c[j], self.s_f_n[j], self.s_F1[j], self.s_F2[j])}
                        for j in range(self.n_stages)]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CamsSequence":
        try:
            mode = RepresentationMode.from_dict(d.get("mode", {}))
            b = np.asarray(d["boundaries"], dtype=np.int64)
            names = tuple(d["parts"])
            K = len(names)
            M1 = len(d["transitions"])
            if M1 != len(b):
                raise CamsError("transition count must equal boundary count")
            c = np.zeros((M1, 5, K), dtype=np.int8)
            V = np.zeros((M1, 5, K, 3))
            N = np.zeros((M1, 5, K, 3))
            for j, tr in enumerate(d["transitions"]):
                for tg in tr["targets"]:
                    i, k = int(tg["finger"]), int(tg["part"])
                    c[j, i, k] = int(tg["c"])
                    V[j, i, k] = tg["V"]
                    N[j, i, k] = tg["N"]

            def frames(fl):
                T = len(fl)
                f_c = np.zeros((T, 5, K), dtype=bool)
                f_n = np.zeros((T, 5, K), dtype=bool)
                F1 = np.zeros((T, 5, K, 5, 3))
                F2 = np.zeros((T, 5, K, 5, 3))
                for t, fr in enumerate(fl):
                    f_c[t] = np.asarray(fr["flags"]["f_c"], dtype=bool)
                    f_n[t] = np.asarray(fr["flags"]["f_n"], dtype=bool)
                    for e in fr["embeddings"]:
                        i, k = int(e["finger"]), int(e["part"])
                        F1[t, i, k] = np.reshape(e["F1"], (5, 3))
                        F2[t, i, k] = np.reshape(e["F2"], (5, 3))
                return f_c, f_n, F1, F2

            f_c, f_n, F1, F2 = frames(d["frames"])
            samples = [frames(s["frames"]) for s in d["samples"]]
            pos = np.asarray([s["positions"] for s in d["samples"]], dtype=float)
            seq = cls(mode, b, names, c, V, N, f_c, f_n, F1, F2, pos,
                      np.stack([s[0] for s in samples]), np.stack([s[1] for s in samples]),
                      np.stack([s[2] for s in samples]), np.stack([s[3] for s in samples]))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            if isinstance(exc, CamsError):
                raise
            raise CamsError(f"malformed CAMS file: {exc}") from exc
        if seq.n_frames != int(b[-1]) + 1:
            raise CamsError("frame count does not match the stage boundaries")
        if np.any(seq.f_c & ~seq.f_n):
            raise CamsError("f_c set where f_n is not")
        return seq


def extract_cams(motion: Motion, scene: Scene, stage_boundaries, hand_config: HandConfig | None = None,
                 mode: RepresentationMode | None = None,
                 config: ExtractionConfig | None = None) -> CamsSequence:
    """Ground-truth CAMS of a motion by contact analysis at every transition and frame."""
    hand_config = hand_config or HandConfig()
    mode = mode or RepresentationMode()
    config = config or ExtractionConfig()
    motion.check_scene(scene)
    T = motion.n_frames
    b = validate_boundaries(stage_boundaries, T)
    M, K = len(b) - 1, len(scene.parts)
    kin = kinematics(motion.hand, hand_config)
    surf = surface_from_kinematics(kin, hand_config)
    fverts = surf[:, :, 1:].reshape(T, 5, -1, 3)
    nv = fverts.shape[2]
    tips = kin.joints[:, :, 3]

    c = np.zeros((M + 1, 5, K), dtype=np.int8)
    V = np.zeros((M + 1, 5, K, 3))
    Nn = np.zeros((M + 1, 5, K, 3))
    f_c = np.zeros((T, 5, K), dtype=bool)
    f_n = np.zeros((T, 5, K), dtype=bool)
    for k, (part, track) in enumerate(zip(scene.parts, motion.tracks)):
        space = part_space(part, mode)
        body = track.to_body(fverts)
        sd, _, _ = signed_distances(part.mesh, body.reshape(-1, 3))
        sd = sd.reshape(T, 5, nv)
        f_c[:, :, k] = sd.min(axis=2) < config.contact_distance
        _, tipd, _ = closest_points(part.mesh, track.to_body(tips).reshape(-1, 3))
        f_n[:, :, k] = (tipd.reshape(T, 5) < config.near_distance) | f_c[:, :, k]
        for j, frame in enumerate(b):
            for i in range(5):
                inside = sd[frame, i] < config.contact_distance
                if not inside.any():
                    continue
                centroid = body[frame, i][inside].mean(axis=0)
                p, _, tid = closest_points(part.mesh, centroid[None])
                c[j, i, k] = 1
                V[j, i, k] = space.inverse_apply(p[0])
                Nn[j, i, k] = space.inverse_apply_normal(part.mesh.face_normals[tid[0]])

    origins = side_origins_body(scene, c, V, Nn, mode, config.cone_angle_deg)
    stage, t_norm = stage_of_frames(b, T)
    joints = kin.hand_joints()
    chains = np.stack([finger_chain(joints, i) for i in range(5)], axis=1)   # (T,5,5,3)
    F1 = np.zeros((T, 5, K, 5, 3))
    F2 = np.zeros((T, 5, K, 5, 3))
    for k, (part, track) in enumerate(zip(scene.parts, motion.tracks)):
        R = track.rotations @ part_frame_rotation(part, mode)                # (T,3,3)
        for side, F in ((0, F1), (1, F2)):
            ob = origins[stage + side, :, k]                                    # (T,5,3)
            ow = np.einsum("tij,tfj->tfi", track.rotations, ob) + track.translations[:, None]
            E = embed_chain(chains, ow, R[:, None], mode.absolute_embedding)
            F[:, :, k] = np.where(f_n[:, :, k, None, None], E, 0.0)

    S = config.samples_per_stage
    pos = b[:-1, None] + np.linspace(0.0, 1.0, S)[None] * np.diff(b)[:, None]
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, T - 1)
    w = (pos - lo)[..., None, None, None, None]
    near = np.floor(pos + 0.5).astype(int)
    s_f_c, s_f_n = f_c[near], f_n[near]
    samples = []
    for F in (F1, F2):
        ok_lo = f_n[lo][..., None, None]
        ok_hi = f_n[hi][..., None, None]
        e_lo = np.where(ok_lo, F[lo], F[hi])
        e_hi = np.where(ok_hi, F[hi], F[lo])
        e = (1 - w) * e_lo + w * e_hi
        if not mode.absolute_embedding:
            d = e[..., 1:, :]
            n = np.linalg.norm(d, axis=-1, keepdims=True)
            e = np.concatenate([e[..., :1, :], np.divide(d, n, out=np.zeros_like(d), where=n > 0)],
                               axis=-2)
        samples.append(np.where(s_f_n[..., None, None], e, 0.0))
    names = tuple(p.name for p in scene.parts)
    return CamsSequence(mode, b, names, c, V, Nn, f_c, f_n, F1, F2, pos, s_f_c, s_f_n,
                        samples[0], samples[1])

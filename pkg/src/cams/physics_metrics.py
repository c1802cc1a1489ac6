"""Physical plausibility metrics: contact-movement consistency, articulation consistency, penetration."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import MetricsConfig
from .geometry.inertia import Inertia
from .geometry.queries import signed_distances
from .geometry.scenes import Part, Scene
from .geometry.trajectory import PartTrack
from .hand import HandConfig, hand_surface
from .motion import Motion
from .numopt import nnls
from .rotations import orthonormal_tangents, vee

GROUND = -1
PALM = 5


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ContactPoint:
    position: np.ndarray
    normal: np.ndarray      # outward object normal
    part: int
    finger: int             # 0-4 fingers, -1 ground support


@dataclass(frozen=True, eq=False)
class WrenchSystem:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray


@dataclass
class MetricsReport:
    cm_consistency: float
    penetration_rate: float
    articulation_consistency: float | None = None
    per_frame: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"cm_consistency": self.cm_consistency, "penetration_rate": self.penetration_rate}
        if self.articulation_consistency is not None:
            d["articulation_consistency"] = self.articulation_consistency
        d["per_frame"] = self.per_frame
        return d


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

def rigid_dynamics(track: PartTrack, inertia: Inertia, dt: float):
    """Per-frame (Pdot, Ldot) of a rigid part following ``track`` (central differences)."""
    if not dt > 0:
        raise MetricsError("dt must be positive")
    if len(track) < 3:
        raise MetricsError("rigid dynamics needs at least 3 frames")
    R = track.rotations
    x = np.einsum("tij,j->ti", R, inertia.com) + track.translations
    v = np.gradient(x, dt, axis=0, edge_order=2)
    a = np.gradient(v, dt, axis=0, edge_order=2)
    Rd = np.gradient(R, dt, axis=0, edge_order=2)
    w = vee(Rd @ np.swapaxes(R, 1, 2))
    wd = np.gradient(w, dt, axis=0, edge_order=2)
    I = R @ inertia.I0 @ np.swapaxes(R, 1, 2)
    Id = Rd @ inertia.I0 @ np.swapaxes(R, 1, 2) + R @ inertia.I0 @ np.swapaxes(Rd, 1, 2)
    Pdot = inertia.mass * a
    Ldot = np.einsum("tij,tj->ti", Id, w) + np.einsum("tij,tj->ti", I, wd)
    return Pdot, Ldot


def angular_velocity(track: PartTrack, dt: float) -> np.ndarray:
    R = track.rotations
    Rd = np.gradient(R, dt, axis=0, edge_order=2)
    return vee(Rd @ np.swapaxes(R, 1, 2))


# ---------------------------------------------------------------------------
# contacts and wrench systems
# ---------------------------------------------------------------------------

def detect_contacts(vertices, labels, part: Part, pose_R, pose_t, part_index: int = 0,
                    threshold: float = 0.002) -> list[ContactPoint]:
    """Hand vertices (n, 3) world with owner labels (n,) against a posed part.

    Every vertex closer than ``threshold`` (inside counts) yields the nearest surface
    point and outward face normal; one contact per (owner, triangle), keeping the closest.
    """
    v = np.asarray(vertices, dtype=float).reshape(-1, 3)
    labels = np.asarray(labels).reshape(-1)
    pose_R = np.asarray(pose_R, dtype=float)
    pose_t = np.asarray(pose_t, dtype=float)
    body = (v - pose_t) @ pose_R
    lo, hi = part.mesh.bounds
    near = np.all((body >= lo - threshold) & (body <= hi + threshold), axis=1)
    if not near.any():
        return []
    idx = np.flatnonzero(near)
    d, p, tri = signed_distances(part.mesh, body[idx])
    best: dict[tuple[int, int], tuple[float, int]] = {}
    for n in np.flatnonzero(d < threshold):
        key = (int(labels[idx[n]]), int(tri[n]))
        if key not in best or d[n] < best[key][0]:
            best[key] = (float(d[n]), int(n))
    out = []
    for (owner, t), (_, n) in sorted(best.items()):
        out.append(ContactPoint(pose_R @ p[n] + pose_t, pose_R @ part.mesh.face_normals[t],
                                part_index, owner))
    return out


def support_points(part: Part, pose_R, pose_t, ground_z: float, tolerance: float = 0.005,
                   cap: int = 8) -> list[ContactPoint]:
    """Ground support points: bottom vertices within ``tolerance`` of the lowest point when
    that point is within ``tolerance`` of the ground; reduced to at most ``cap`` extreme points."""
    w = part.mesh.vertices @ np.asarray(pose_R, dtype=float).T + np.asarray(pose_t, dtype=float)
    zmin = w[:, 2].min()
    if zmin - ground_z > tolerance:
        return []
    bottom = w[w[:, 2] <= zmin + tolerance]
    ang = 2 * np.pi * np.arange(cap) / cap
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    picks = sorted(set(int(np.argmax(bottom[:, :2] @ d)) for d in dirs))
    up = np.array([0.0, 0.0, -1.0])  # outward normal of the part's bottom face
    return [ContactPoint(bottom[i], up, -1, GROUND) for i in picks]


def friction_bases(normal, mu: float = 0.35, count: int = 4) -> np.ndarray:
    """Unit force directions into the surface, each at arctan(mu) from the inward normal."""
    n = np.asarray(normal, dtype=float)
    t1, t2 = orthonormal_tangents(n)
    if count != 4:
        ang = 2 * np.pi * np.arange(count) / count
        tangents = [np.cos(a) * t1 + np.sin(a) * t2 for a in ang]
    else:
        tangents = [t1, -t1, t2, -t2]
    out = np.array([-n + mu * t for t in tangents])
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def contact_columns(contacts, com, mu: float = 0.35, count: int = 4) -> np.ndarray:
    cols = []
    for cp in contacts:
        for f in friction_bases(cp.normal, mu, count):
            cols.append(np.concatenate([f, np.cross(cp.position - com, f)]))
    return np.array(cols).T if cols else np.zeros((6, 0))


def axis_columns(axis_origin, axis_dir, com) -> np.ndarray:
    """Four force bases (+-e1, +-e2) perpendicular to the axis at the axis point nearest the COM."""
    d = np.asarray(axis_dir, dtype=float)
    d = d / np.linalg.norm(d)
    o = np.asarray(axis_origin, dtype=float)
    a = o + d * np.dot(com - o, d)
    e1, e2 = orthonormal_tangents(d)
    cols = []
    for f in (e1, -e1, e2, -e2):
        cols.append(np.concatenate([f, np.cross(a - com, f)]))
    return np.array(cols).T


def build_wrench_system(contacts, com, inertia_mass: float, Pdot, Ldot, gravity,
                        support=(), axis=None, mu: float = 0.35, count: int = 4) -> WrenchSystem:
    """Single-part system ``A x + b = c`` with hand contacts, support points and optional
    articulation bases acting as a world reaction."""
    A = [contact_columns(list(contacts) + list(support), com, mu, count)]
    if axis is not None:
        A.append(axis_columns(axis[0], axis[1], com))
    b = np.concatenate([inertia_mass * np.asarray(gravity, dtype=float), np.zeros(3)])
    c = np.concatenate([Pdot, Ldot])
    return WrenchSystem(np.hstack(A), b, c)


def _posed_axis(part: Part, R, t):
    ax = part.revolute_axis
    return R @ ax.origin + t, R @ ax.direction


def _articulated_pair(scene: Scene):
    """(owner of the axis, partner) when two parts are joined by a revolute axis."""
    if len(scene.parts) != 2:
        return None
    for k, p in enumerate(scene.parts):
        if p.revolute_axis is not None:
            return k, 1 - k
    return None


def _hand_vertices(motion: Motion, hand_config: HandConfig, fingers_only: bool = False):
    """World hand vertices (T, n, 3) with owner labels; level-0 rings form the palm group."""
    surf = hand_surface(motion.hand, hand_config).vertices          # (T,5,4,n,3)
    T = surf.shape[0]
    labels = np.broadcast_to(np.arange(5)[:, None, None], surf.shape[1:4]).copy()
    labels[:, 0] = PALM
    verts, labels = surf.reshape(T, -1, 3), labels.reshape(-1)
    if fingers_only:
        keep = labels != PALM
        return verts[:, keep], labels[keep]
    return verts, labels


def frame_wrench_residuals(motion: Motion, scene: Scene, hand_config: HandConfig | None = None,
                           config: MetricsConfig | None = None) -> np.ndarray:
    """NNLS residual per (frame, part)."""
    hand_config = hand_config or HandConfig()
    config = config or MetricsConfig()
    motion.check_scene(scene)
    T = motion.n_frames
    if T < 3:
        raise MetricsError("contact-movement consistency needs at least 3 frames")
    verts, labels = _hand_vertices(motion, hand_config, fingers_only=True)
    dyn = []
    for part, tr in zip(scene.parts, motion.tracks):
        inertia = Inertia(config.mass, part.inertia.I0, part.inertia.com)
        dyn.append(rigid_dynamics(tr, inertia, motion.dt))
    pair = _articulated_pair(scene)
    K = len(scene.parts)
    res = np.zeros((T, K))
    for t in range(T):
        systems = []
        for k, (part, tr) in enumerate(zip(scene.parts, motion.tracks)):
            R, tt = tr.rotations[t], tr.translations[t]
            com = R @ part.inertia.com + tt
            cps = detect_contacts(verts[t], labels, part, R, tt, k, config.contact_distance)
            sup = support_points(part, R, tt, scene.ground_z, config.support_tolerance, config.support_cap)
            A = contact_columns(cps + sup, com, config.mu, config.friction_bases)
            b = np.concatenate([config.mass * scene.gravity, np.zeros(3)])
            c = np.concatenate([dyn[k][0][t], dyn[k][1][t]])
            systems.append((A, b, c, com, R, tt))
        if pair is not None:
            own, other = pair
            o, d = _posed_axis(scene.parts[own], systems[own][4], systems[own][5])
            art_own = axis_columns(o, d, systems[own][3])
            art_other = -axis_columns(o, d, systems[other][3])
            blocks = [None, None]
            blocks[own], blocks[other] = art_own, art_other
            A0, A1 = systems[0][0], systems[1][0]
            A_big = np.zeros((12, A0.shape[1] + A1.shape[1] + 4))
            A_big[:6, :A0.shape[1]] = A0
            A_big[6:, A0.shape[1]:A0.shape[1] + A1.shape[1]] = A1
            A_big[:6, -4:] = blocks[0]
            A_big[6:, -4:] = blocks[1]
            b_big = np.concatenate([systems[0][1], systems[1][1]])
            c_big = np.concatenate([systems[0][2], systems[1][2]])
            sol = nnls(A_big, b_big, c_big)
            r = A_big @ sol.x + b_big - c_big
            res[t, 0] = np.linalg.norm(r[:6])
            res[t, 1] = np.linalg.norm(r[6:])
        else:
            for k, (A, b, c, com, R, tt) in enumerate(systems):
                part = scene.parts[k]
                if part.revolute_axis is not None:
                    o, d = _posed_axis(part, R, tt)
                    A = np.hstack([A, axis_columns(o, d, com)])
                res[t, k] = nnls(A, b, c).residual_norm
    return res


def contact_movement_consistency(motion: Motion, scene: Scene, hand_config: HandConfig | None = None,
                                 config: MetricsConfig | None = None):
    """Fraction of frames whose every part admits a non-negative force combination
    reproducing its required wrench within the residual threshold."""
    config = config or MetricsConfig()
    res = frame_wrench_residuals(motion, scene, hand_config, config)
    ok = np.all(res < config.residual_threshold, axis=1)
    return float(ok.mean()), res


def axis_inertia(part: Part, R, t, mass: float = 1.0) -> float:
    """Moment of inertia of the posed part about its revolute axis (parallel-axis rule)."""
    o, d = _posed_axis(part, R, t)
    com = R @ part.inertia.com + t
    I = mass * (R @ part.inertia.I0 @ R.T)
    r_perp = (com - o) - d * np.dot(com - o, d)
    return float(d @ I @ d + mass * r_perp @ r_perp)


def axis_torques(contacts, axis_origin, axis_dir, I_axis: float) -> np.ndarray:
    """Angular acceleration about the axis from a unit inward force at each contact."""
    o = np.asarray(axis_origin, dtype=float)
    d = np.asarray(axis_dir, dtype=float)
    return np.array([np.dot(np.cross(cp.position - o, -cp.normal), d) for cp in contacts]) / I_axis


def articulation_score(contacts, axis_origin, axis_dir, I_axis: float, rate: float) -> float:
    """Best torque in the direction the part turns; best magnitude when it does not turn."""
    if not contacts:
        return 0.0
    tau = axis_torques(contacts, axis_origin, axis_dir, I_axis)
    if abs(rate) > 1e-9:
        return float(np.max(np.sign(rate) * tau))
    return float(np.max(np.abs(tau)))


def articulation_scores(motion: Motion, scene: Scene, hand_config: HandConfig | None = None,
                        config: MetricsConfig | None = None) -> np.ndarray:
    """E per (frame, articulated part): max inertia-normalized torque of unit inward
    contact forces about the part's axis, signed by its rotation direction."""
    hand_config = hand_config or HandConfig()
    config = config or MetricsConfig()
    motion.check_scene(scene)
    arts = [k for k, p in enumerate(scene.parts) if p.revolute_axis is not None]
    if not arts:
        raise MetricsError("articulation consistency needs a revolute axis")
    verts, labels = _hand_vertices(motion, hand_config, fingers_only=True)
    T = motion.n_frames
    E = np.zeros((T, len(arts)))
    for col, k in enumerate(arts):
        part, tr = scene.parts[k], motion.tracks[k]
        omega = angular_velocity(tr, motion.dt) if T >= 3 else np.zeros((T, 3))
        for t in range(T):
            R, tt = tr.rotations[t], tr.translations[t]
            o, d = _posed_axis(part, R, tt)
            cps = detect_contacts(verts[t], labels, part, R, tt, k, config.contact_distance)
            cps = cps + support_points(part, R, tt, scene.ground_z, config.support_tolerance,
                                       config.support_cap)
            E[t, col] = articulation_score(cps, o, d, axis_inertia(part, R, tt, config.mass),
                                           float(omega[t] @ d))
    return E


def articulation_consistency(motion: Motion, scene: Scene, hand_config: HandConfig | None = None,
                             config: MetricsConfig | None = None):
    config = config or MetricsConfig()
    E = articulation_scores(motion, scene, hand_config, config)
    ok = np.all(E > config.articulation_threshold, axis=1)
    return float(ok.mean()), E


def penetration_fractions(motion: Motion, scene: Scene, hand_config: HandConfig | None = None,
                          depth: float = 0.005) -> np.ndarray:
    hand_config = hand_config or HandConfig()
    motion.check_scene(scene)
    verts, _ = _hand_vertices(motion, hand_config)
    return vertex_penetration_fractions(verts, scene, motion.tracks, depth)


def vertex_penetration_fractions(verts, scene: Scene, tracks, depth: float = 0.005) -> np.ndarray:
    """Per-frame fraction of world points (T, n, 3) deeper than ``depth`` inside any part."""
    verts = np.asarray(verts, dtype=float)
    T, n = verts.shape[:2]
    deep = np.zeros((T, n), dtype=bool)
    for part, tr in zip(scene.parts, tracks):
        body = tr.to_body(verts)
        d, _, _ = signed_distances(part.mesh, body.reshape(-1, 3))
        deep |= d.reshape(T, n) < -depth
    return deep.mean(axis=1)


def penetration_rate(motion: Motion, scene: Scene, hand_config: HandConfig | None = None,
                     depth: float = 0.005) -> float:
    """Mean over frames of the fraction of hand vertices deeper than ``depth`` inside any part."""
    return float(penetration_fractions(motion, scene, hand_config, depth).mean())


def evaluate(motion: Motion, scene: Scene, hand_config: HandConfig | None = None,
             config: MetricsConfig | None = None, articulation: bool = False) -> MetricsReport:
    config = config or MetricsConfig()
    cm, res = contact_movement_consistency(motion, scene, hand_config, config)
    pen = penetration_fractions(motion, scene, hand_config, config.penetration_depth)
    art = E = None
    if articulation:
        art, E = articulation_consistency(motion, scene, hand_config, config)
    rows = []
    for t in range(motion.n_frames):
        row = {"frame": t, "cm_consistent": bool(np.all(res[t] < config.residual_threshold)),
               "residuals": res[t].tolist(), "penetration": float(pen[t])}
        if E is not None:
            row["articulation_scores"] = E[t].tolist()
        rows.append(row)
    return MetricsReport(cm, float(pen.mean()), art, rows)

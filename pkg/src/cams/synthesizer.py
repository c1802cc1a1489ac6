"""Two-stage hand motion synthesis from a CAMS sequence and an object trajectory.

Stage A fits the finger embeddings (tip positions and joint directions) with
temporal smoothing. Stage B alternates between rebuilding contact/penetration
correspondences and optimizing a fixed-correspondence objective that attracts
finger vertices to local contact sections, pushes penetrating vertices out and
smooths wrist and joint motion.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cams_repr import (CamsSequence, default_boundaries, match_contact_body, part_frame_rotation,
                        part_space, side_origins_body, stage_of_frames, world_targets)
from .config import ContactWeights, FitWeights
from .geometry.queries import closest_points, local_surface_section, signed_distances
from .geometry.scenes import Scene
from .geometry.trajectory import PartTrack
from .hand import HandConfig, Kinematics, joints_vjp, kinematics, surface_from_kinematics, vjp
from .motion import Motion
from .numopt import NumericalError, ObjectiveReport, Schedule, minimize

log = logging.getLogger(__name__)

# chain order tip, dip, pip, mcp, root -> index into kin.joints (root handled separately)
_CHAIN_TO_JOINT = (3, 2, 1, 0)


# ---------------------------------------------------------------------------
# Stage A: fitting finger embeddings
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmbeddingTargets:
    """World targets per (frame, finger, part): tip (T,5,K,3), rest (T,5,K,4,3), mask (T,5,K)."""

    tip: np.ndarray
    rest: np.ndarray
    mask: np.ndarray
    absolute: bool


def embedding_targets(cams: CamsSequence, scene: Scene, tracks: list[PartTrack],
                      boundaries, cone_angle_deg: float = 45.0) -> EmbeddingTargets:
    mode = cams.mode
    T = len(tracks[0])
    _, f_n, F1, F2 = cams.frame_track(boundaries)
    stage, t_norm = stage_of_frames(boundaries, T)
    origins = side_origins_body(scene, cams.c, cams.V, cams.N, mode, cone_angle_deg)
    K = len(scene.parts)
    tip = np.zeros((T, 5, K, 3))
    rest = np.zeros((T, 5, K, 4, 3))
    for k, (part, tr) in enumerate(zip(scene.parts, tracks)):
        R = tr.rotations @ part_frame_rotation(part, mode)
        ow = []
        for side in (0, 1):
            ob = origins[stage + side, :, k]
            ow.append(np.einsum("tij,tfj->tfi", tr.rotations, ob) + tr.translations[:, None])
        m = f_n[:, :, k]
        tt, rr = world_targets(F1[:, :, k][m], F2[:, :, k][m],
                               np.broadcast_to(t_norm[:, None], m.shape)[m],
                               ow[0][m], np.broadcast_to(R[:, None], m.shape + (3, 3))[m],
                               ow[1][m], np.broadcast_to(R[:, None], m.shape + (3, 3))[m],
                               mode.absolute_embedding)
        tip[:, :, k][m] = tt
        rest[:, :, k][m] = rr
    return EmbeddingTargets(tip, rest, f_n.astype(float), mode.absolute_embedding)


def smoothness_weights(weights: FitWeights) -> np.ndarray:
    w = np.full(51, weights.lambda_smooth_joints)
    w[0:3] = weights.lambda_smooth_wrist
    w[3:6] = weights.lambda_smooth_wrist_rotation
    return w


class FitObjective:
    """Embedding-fitting loss over a (T, 51) parameter block."""

    def __init__(self, targets: EmbeddingTargets, weights: FitWeights, hand_config: HandConfig,
                 literal_joint_loss: bool = False):
        self.targets = targets
        self.weights = weights
        self.hand_config = hand_config
        self.literal = literal_joint_loss
        self.smooth_w = smoothness_weights(weights)

    def terms_and_grad(self, theta):
        th = np.asarray(theta, dtype=float)
        kin = kinematics(th, self.hand_config)
        tg = self.targets
        mask = tg.mask                                              # (T,5,K)
        J = kin.joints                                              # (T,5,4,3)
        tip = J[:, :, 3]
        g_f = np.zeros_like(J)
        g_root = np.zeros_like(kin.wrist_t)

        r_tip = (tip[:, :, None] - tg.tip) * mask[..., None]        # (T,5,K,3)
        l_tip = float((r_tip * r_tip).sum())
        g_f[:, :, 3] += 2 * self.weights.lambda_tip * r_tip.sum(axis=2)

        l_joint = 0.0
        lj = self.weights.lambda_joint
        for n in range(4):                                           # dip, pip, mcp, root
            if n < 3:
                P = J[:, :, _CHAIN_TO_JOINT[n + 1]]
            else:
                P = np.broadcast_to(kin.wrist_t[:, None], tip.shape)
            D = tg.rest[:, :, :, n]                                  # (T,5,K,3)
            if tg.absolute:
                r = (P[:, :, None] - D) * mask[..., None]
                l_joint += float((r * r).sum())
                gP = 2 * lj * r.sum(axis=2)
                gT = 0.0
            else:
                v = P - tip
                if self.literal:
                    r = (v[:, :, None] - D) * mask[..., None]
                    l_joint += float((r * r).sum())
                    gv = 2 * lj * r.sum(axis=2)
                else:
                    nv = np.linalg.norm(v, axis=-1, keepdims=True)
                    u = v / nv
                    r = (u[:, :, None] - D) * mask[..., None]
                    l_joint += float((r * r).sum())
                    rs = r.sum(axis=2)
                    gv = 2 * lj * (rs - u * (u * rs).sum(-1, keepdims=True)) / nv
                gP = gv
                gT = -gv
            if n < 3:
                g_f[:, :, _CHAIN_TO_JOINT[n + 1]] += gP
            else:
                g_root += gP.sum(axis=1)
            g_f[:, :, 3] += gT

        grad = joints_vjp(kin, g_f, g_root)
        diff = th[1:] - th[:-1]
        l_smooth = float((self.smooth_w * diff * diff).sum())
        gs = 2 * self.smooth_w * diff
        grad[1:] += gs
        grad[:-1] -= gs
        total = self.weights.lambda_tip * l_tip + lj * l_joint + l_smooth
        terms = {"tip": l_tip, "joint": l_joint, "smooth": l_smooth, "total": total}
        return total, grad, terms

    def __call__(self, theta):
        v, g, _ = self.terms_and_grad(theta)
        return v, g

    def terms(self, theta):
        return self.terms_and_grad(theta)[2]


def fit_rate_scale(T: int, wrist_translation_scale: float = 0.1) -> np.ndarray:
    s = np.ones((T, 51))
    s[:, 0:3] = wrist_translation_scale
    return s


def fit_finger_embeddings(cams: CamsSequence, scene: Scene, tracks: list[PartTrack], theta0,
                          weights: FitWeights | None = None, hand_config: HandConfig | None = None,
                          boundaries=None, literal_joint_loss: bool = False,
                          cone_angle_deg: float = 45.0):
    """Stage A. Returns ``(theta (T, 51), ObjectiveReport)``."""
    weights = weights or FitWeights()
    hand_config = hand_config or HandConfig()
    theta0 = np.array(theta0, dtype=float)
    T = len(tracks[0])
    if theta0.shape != (T, 51):
        raise ValueError(f"theta0 must be ({T}, 51)")
    if boundaries is None:
        boundaries = default_boundaries(cams.n_stages, (T - 1) // cams.n_stages)
    targets = embedding_targets(cams, scene, tracks, boundaries, cone_angle_deg)
    obj = FitObjective(targets, weights, hand_config, literal_joint_loss)
    sch = Schedule(weights.learning_rate, int(weights.epochs), fit_rate_scale(T))
    return minimize(obj, theta0, sch, terms=obj.terms)


# ---------------------------------------------------------------------------
# Stage B: contact and penetration
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContactTuple:
    """Frozen contact data for one (frame, finger, part) with f_c = 1."""

    frame: int
    finger: int
    part: int
    triangle_ids: np.ndarray | None     # local section; None means whole-part fallback
    p: np.ndarray                       # (n, 3) world nearest points
    d: np.ndarray                       # (n,) signed distances
    coef: np.ndarray                    # (n,) centralized coefficients


@dataclass(frozen=True, eq=False)
class Correspondences:
    contacts: list
    # penetration data per part, over every hand vertex: (K, T, 5, 4, n[, 3])
    pen_p: np.ndarray
    pen_d: np.ndarray
    pen_coef: np.ndarray
    pen_flag: np.ndarray

    def quadratic(self, shape, lambda_contact: float):
        """Fold all frozen attraction terms into per-vertex ``W |v|^2 - 2 v.B + C``."""
        W = np.zeros(shape[:-1])
        B = np.zeros(shape)
        C = 0.0
        for ct in self.contacts:
            w = lambda_contact * ct.coef.reshape(3, -1)
            W[ct.frame, ct.finger, 1:] += w
            B[ct.frame, ct.finger, 1:] += w[..., None] * ct.p.reshape(3, -1, 3)
            C += float((w * (ct.p.reshape(3, -1, 3) ** 2).sum(-1)).sum())
        wp = lambda_contact * self.pen_coef * self.pen_flag
        W += wp.sum(axis=0)
        B += (wp[..., None] * self.pen_p).sum(axis=0)
        C += float((wp * (self.pen_p ** 2).sum(-1)).sum())
        return W, B, C


def centralized(d2, scale: float, axis=-1):
    """exp(-(d^2 - min d^2) / scale^2) along ``axis``; the minimum gets exactly 1."""
    return np.exp(-(d2 - d2.min(axis=axis, keepdims=True)) / (scale * scale))


def _contact_sources(cams: CamsSequence, stage, t_norm):
    """Transition supplying the contact target per (frame, finger, part), -1 if none has c = 1."""
    c = cams.c.astype(bool)
    start = c[stage]                                   # (T,5,K)
    end = c[stage + 1]
    prefer_start = (t_norm <= 0.5)[:, None, None]
    first = np.where(prefer_start, stage[:, None, None], stage[:, None, None] + 1)
    second = np.where(prefer_start, stage[:, None, None] + 1, stage[:, None, None])
    ok_first = np.where(prefer_start, start, end)
    ok_second = np.where(prefer_start, end, start)
    return np.where(ok_first, first, np.where(ok_second, second, -1))


def build_correspondences(theta, cams: CamsSequence, scene: Scene, tracks: list[PartTrack],
                          hand_config: HandConfig, boundaries, weights: ContactWeights | None = None):
    weights = weights or ContactWeights()
    mode = cams.mode
    T = len(tracks[0])
    kin = kinematics(theta, hand_config)
    surf = surface_from_kinematics(kin, hand_config)               # (T,5,4,n,3)
    f_c, _, _, _ = cams.frame_track(boundaries)
    stage, t_norm = stage_of_frames(boundaries, T)
    source = _contact_sources(cams, stage, t_norm)
    contacts = []
    K = len(scene.parts)
    for k, (part, tr) in enumerate(zip(scene.parts, tracks)):
        mesh = part.mesh
        space = part_space(part, mode)
        body = tr.to_body(surf)                                      # (T,5,4,n,3)
        groups: dict[tuple[int, int], list[int]] = {}
        for t, i in zip(*np.nonzero(f_c[:, :, k])):
            groups.setdefault((int(source[t, i, k]), int(i)), []).append(int(t))
        for (j, i), frames in sorted(groups.items()):
            tri_ids = None
            if j >= 0:
                P, _, _ = match_contact_body(part, cams.V[j, i, k], cams.N[j, i, k], mode,
                                             weights.cone_angle)
                Nb = space.apply_normal(cams.N[j, i, k])
                sec = local_surface_section(mesh, P, Nb, weights.cone_angle, weights.section_radius)
                if sec.is_empty:
                    log.info("empty local section (transition %d, finger %d, part %d); using whole part",
                             j, i, k)
                else:
                    tri_ids = sec.triangle_ids
            fr = np.array(frames)
            q = body[fr, i, 1:].reshape(len(fr), -1, 3)
            d, pb, _ = signed_distances(mesh, q.reshape(-1, 3), tri_ids)
            d = d.reshape(len(fr), -1)
            pb = pb.reshape(len(fr), -1, 3)
            coef = centralized(d * d, weights.contact_coef_scale)
            pw = np.einsum("tij,tnj->tni", tr.rotations[fr], pb) + tr.translations[fr, None]
            for n, t in enumerate(fr):
                contacts.append(ContactTuple(int(t), i, k, tri_ids, pw[n], d[n], coef[n]))
    shape = surf.shape
    pen_p = np.zeros((K,) + shape)
    pen_d = np.zeros((K,) + shape[:-1])
    pen_coef = np.zeros((K,) + shape[:-1])
    for k, (part, tr) in enumerate(zip(scene.parts, tracks)):
        body = tr.to_body(surf)
        d, pb, _ = signed_distances(part.mesh, body.reshape(-1, 3))
        d = d.reshape(shape[:-1])
        pen_d[k] = d
        pen_p[k] = tr.to_world(pb.reshape(shape))
        d2 = d * d
        coef = np.empty_like(d2)
        # groups: finger bones (levels 1-3) per finger, and all palm samples (level 0)
        fing = d2[:, :, 1:].reshape(T, 5, -1)
        coef[:, :, 1:] = centralized(fing, weights.penetration_coef_scale).reshape(coef[:, :, 1:].shape)
        palm = d2[:, :, 0].reshape(T, -1)
        coef[:, :, 0] = centralized(palm, weights.penetration_coef_scale).reshape(coef[:, :, 0].shape)
        pen_coef[k] = coef
    return Correspondences(contacts, pen_p, pen_d, pen_coef, (pen_d < 0).astype(float)), kin


def _joint_points(kin: Kinematics) -> np.ndarray:
    return kin.hand_joints().flat()


class ContactObjective:
    """Fixed-correspondence contact objective over a (T, 51) block."""

    def __init__(self, corr: Correspondences, weights: ContactWeights, lambda_smooth: float,
                 hand_config: HandConfig, shape):
        self.hand_config = hand_config
        self.weights = weights
        self.lambda_smooth = lambda_smooth
        self.W, self.B, self.C = corr.quadratic(shape, weights.lambda_contact)
        self.active = self.W > 0

    def terms_and_grad(self, theta):
        th = np.asarray(theta, dtype=float)
        T = th.shape[0]
        kin = kinematics(th, self.hand_config)
        surf = surface_from_kinematics(kin, self.hand_config)
        W, B = self.W, self.B
        l_attr = float((W * (surf * surf).sum(-1)).sum() - 2 * (surf * B).sum() + self.C)
        g_surf = 2 * (W[..., None] * surf - B)
        grad = vjp(kin, surf, g_surf)

        w = self.weights
        d = th[1:, 0:3] - th[:-1, 0:3]
        l_trans = float((d * d).sum())
        grad[1:, 0:3] += 2 * w.lambda_trans * d
        grad[:-1, 0:3] -= 2 * w.lambda_trans * d

        P = _joint_points(kin)                                       # (T,21,3)
        gP = np.zeros_like(P)
        l_v = l_a = 0.0
        if T >= 3:
            v = 0.5 * (P[2:] - P[:-2])
            a = P[2:] - 2 * P[1:-1] + P[:-2]
            l_v = float((v * v).sum())
            l_a = float((a * a).sum())
            sv = self.lambda_smooth * w.lambda_v
            sa = self.lambda_smooth * w.lambda_a
            gv = 2 * sv * v * 0.5
            gP[2:] += gv
            gP[:-2] -= gv
            ga = 2 * sa * a
            gP[2:] += ga
            gP[1:-1] -= 2 * ga
            gP[:-2] += ga
            g_f = gP[:, 1:].reshape(T, 5, 4, 3)
            grad += joints_vjp(kin, g_f, gP[:, 0])
        total = (l_attr + w.lambda_trans * l_trans
                 + self.lambda_smooth * (w.lambda_v * l_v + w.lambda_a * l_a))
        terms = {"contact_penetr": l_attr, "trans": l_trans, "v": l_v, "a": l_a, "total": total}
        return total, grad, terms

    def __call__(self, theta):
        v, g, _ = self.terms_and_grad(theta)
        return v, g

    def terms(self, theta):
        return self.terms_and_grad(theta)[2]


def contact_rate_scale(T: int, wrist_translation_scale: float = 0.1) -> np.ndarray:
    return fit_rate_scale(T, wrist_translation_scale)


@dataclass
class ContactStepReport:
    step: int
    lambda_smooth: float
    n_contacts: int
    n_penetrating: int
    report: ObjectiveReport


def optimize_contact(theta, cams: CamsSequence, scene: Scene, tracks: list[PartTrack],
                     weights: ContactWeights | None = None, hand_config: HandConfig | None = None,
                     boundaries=None):
    """Stage B. Returns ``(theta, [ContactStepReport ...])``."""
    weights = weights or ContactWeights()
    hand_config = hand_config or HandConfig()
    th = np.array(theta, dtype=float)
    T = th.shape[0]
    if boundaries is None:
        boundaries = default_boundaries(cams.n_stages, (T - 1) // cams.n_stages)
    reports = []
    for s in range(weights.steps):
        corr, kin = build_correspondences(th, cams, scene, tracks, hand_config, boundaries, weights)
        shape = surface_from_kinematics(kin, hand_config).shape
        obj = ContactObjective(corr, weights, weights.smooth_schedule[s], hand_config, shape)
        sch = Schedule(weights.learning_rate, int(weights.epochs_per_step), contact_rate_scale(T))
        try:
            th, rep = minimize(obj, th, sch, terms=obj.terms, step=s)
        except NumericalError as exc:
            raise NumericalError(str(exc).split(" (")[0], exc.iteration, s) from exc
        reports.append(ContactStepReport(s, weights.smooth_schedule[s], len(corr.contacts),
                                         int(corr.pen_flag.sum()), rep))
    return th, reports


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass
class SynthesisResult:
    motion: Motion
    theta_fit: np.ndarray
    fit_report: ObjectiveReport
    contact_reports: list = field(default_factory=list)

    def report_dict(self) -> dict:
        return {"fit": self.fit_report.to_dict(),
                "contact_steps": [{"step": r.step, "lambda_smooth": r.lambda_smooth,
                                   "n_contacts": r.n_contacts, "n_penetrating": r.n_penetrating,
                                   **r.report.to_dict()} for r in self.contact_reports]}


def synthesize(scene: Scene, cams: CamsSequence, theta_init, frames_per_stage: int = 30,
               fps: float = 30.0, fit_weights: FitWeights | None = None,
               contact_weights: ContactWeights | None = None, hand_config: HandConfig | None = None,
               literal_joint_loss: bool = False) -> SynthesisResult:
    """Object trajectory from the goals, then Stage A and Stage B on the hand."""
    if cams.n_stages != scene.n_stages:
        raise ValueError(f"CAMS has {cams.n_stages} stages, goals define {scene.n_stages}")
    if tuple(p.name for p in scene.parts) != tuple(cams.part_names):
        raise ValueError("CAMS part names do not match the scene")
    hand_config = hand_config or HandConfig()
    contact_weights = contact_weights or ContactWeights()
    tracks = scene.trajectories(frames_per_stage)
    T = len(tracks[0])
    b = default_boundaries(scene.n_stages, frames_per_stage)
    h0 = np.asarray(theta_init, dtype=float).reshape(51)
    theta0 = np.repeat(h0[None], T, axis=0)
    th_fit, fit_rep = fit_finger_embeddings(cams, scene, tracks, theta0, fit_weights, hand_config, b,
                                            literal_joint_loss, contact_weights.cone_angle)
    th, steps = optimize_contact(th_fit, cams, scene, tracks, contact_weights, hand_config, b)
    motion = Motion(fps, th, tracks, [p.name for p in scene.parts])
    return SynthesisResult(motion, th_fit, fit_rep, steps)

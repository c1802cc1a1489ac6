import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cams import _kernels
from cams.config import MetricsConfig
from cams.geometry import Inertia, Part, PartTrack, RevoluteAxis, Scene, box_mesh, make_scene
from cams.motion import Motion
from cams.physics_metrics import (ContactPoint, MetricsError, articulation_score, articulation_scores,
                                  axis_inertia, axis_torques, build_wrench_system, contact_columns,
                                  contact_movement_consistency, detect_contacts, evaluate,
                                  frame_wrench_residuals, friction_bases, penetration_rate,
                                  rigid_dynamics, support_points, vertex_penetration_fractions)
from cams.rotations import rot_z
from cams.scripted import constant_tracks, hand_far_motion

G = 9.81


def spin_track(T, dt, omega, axis_rot=np.eye(3), accel=(0, 0, 0)):
    t = np.arange(T) * dt
    R = np.array([axis_rot @ rot_z(omega * s) @ axis_rot.T for s in t])
    x = 0.5 * np.asarray(accel, dtype=float) * t[:, None] ** 2
    return PartTrack(R, x, np.zeros(T))


@pytest.fixture(scope="module")
def box_scene():
    return make_scene("box_on_ground")


def box_motion(scene, T=5, lift=0.0, accel=(0, 0, 0)):
    dt = 1 / 30
    t = np.arange(T) * dt
    x = np.array([0, 0, lift]) + 0.5 * np.asarray(accel, dtype=float) * t[:, None] ** 2
    track = PartTrack(np.broadcast_to(np.eye(3), (T, 3, 3)).copy(), x, np.zeros(T))
    return hand_far_motion(scene, tracks=[track])


# -- dynamics -------------------------------------------------------------------

def test_static_and_constant_velocity():
    I = Inertia(2.0, np.diag([1.0, 2.0, 3.0]), np.zeros(3))
    Pd, Ld = rigid_dynamics(constant_tracks(1, 6, velocity=(1.0, -2.0, 0.5))[0], I, 1 / 30)
    assert np.allclose(Pd, 0, atol=1e-9) and np.allclose(Ld, 0, atol=1e-9)


def test_constant_acceleration():
    I = Inertia(2.0, np.eye(3), np.zeros(3))
    Pd, _ = rigid_dynamics(spin_track(7, 0.05, 0.0, accel=(0.0, 3.0, -1.0)), I, 0.05)
    assert np.allclose(Pd, np.tile([0, 6.0, -2.0], (7, 1)), atol=1e-9)


def test_principal_axis_spin_has_no_torque():
    I = Inertia(1.0, np.diag([0.1, 0.2, 0.3]), np.zeros(3))
    _, Ld = rigid_dynamics(spin_track(40, 0.01, 2.0), I, 0.01)
    assert np.allclose(Ld[2:-2], 0, atol=1e-3)


def test_translation_invariance():
    I = Inertia(1.0, np.diag([0.1, 0.2, 0.3]), np.array([0.01, 0.0, 0.02]))
    tr = spin_track(20, 0.02, 1.5, accel=(1, 0, 0))
    moved = PartTrack(tr.rotations, tr.translations + (3.0, -1.0, 2.0), tr.angles)
    for a, b in zip(rigid_dynamics(tr, I, 0.02), rigid_dynamics(moved, I, 0.02)):
        assert np.allclose(a, b, atol=1e-9)


def test_dynamics_errors():
    I = Inertia(1.0, np.eye(3), np.zeros(3))
    tr = spin_track(5, 0.1, 1.0)
    with pytest.raises(MetricsError):
        rigid_dynamics(tr, I, 0.0)
    with pytest.raises(MetricsError):
        rigid_dynamics(spin_track(2, 0.1, 1.0), I, 0.1)


# -- contacts -------------------------------------------------------------------

def test_detect_contacts_threshold(box_scene):
    part = box_scene.parts[0]
    v = np.array([[0.01, 0.02, 0.201], [0.01, 0.02, 0.205]])
    cps = detect_contacts(v, [0, 1], part, np.eye(3), np.zeros(3))
    assert len(cps) == 1
    assert cps[0].finger == 0
    assert np.allclose(cps[0].position, (0.01, 0.02, 0.2), atol=1e-12)
    assert np.allclose(cps[0].normal, (0, 0, 1))


def test_detect_contacts_pinch_and_dedup():
    plate = Part("plate", box_mesh((0.1, 0.1, 0.01), (0, 0, 0), 0.1))
    v = np.array([[0.01, 0.01, 0.006], [0.011, 0.01, 0.006], [0.01, 0.01, -0.006]])
    cps = detect_contacts(v, [1, 1, 0], plate, np.eye(3), np.zeros(3))
    normals = sorted(float(c.normal[2]) for c in cps)
    assert normals == [-1.0, 1.0]
    # posed plate: world contacts follow the pose
    R = rot_z(0.7)
    moved = detect_contacts(v @ R.T + 1.0, [1, 1, 0], plate, R, np.ones(3))
    assert len(moved) == 2
    for a, b in zip(cps, moved):
        assert np.allclose(R @ a.position + 1.0, b.position) and np.allclose(R @ a.normal, b.normal)


@pytest.mark.parametrize("count", [4, 6])
def test_friction_bases_angle(count):
    n = np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8])
    B = friction_bases(n, 0.35, count)
    assert B.shape == (count, 3)
    assert np.allclose(np.linalg.norm(B, axis=1), 1.0)
    assert np.allclose(np.arccos(B @ -n), np.arctan(0.35))


def test_zero_lever_arm_has_no_torque():
    com = np.array([0.1, 0.2, 0.3])
    A = contact_columns([ContactPoint(com, np.array([0, 0, 1.0]), 0, 0)], com)
    assert A.shape == (6, 4)
    assert np.all(A[3:] == 0)


def test_support_points(box_scene):
    part = box_scene.parts[0]
    sup = support_points(part, np.eye(3), np.zeros(3), 0.0)
    assert 0 < len(sup) <= 8
    assert all(p.position[2] == pytest.approx(0.0) for p in sup)
    corners = {tuple(np.round(p.position[:2], 6)) for p in sup}
    assert {(0.1, 0.1), (-0.1, 0.1), (0.1, -0.1), (-0.1, -0.1)} <= corners
    assert support_points(part, np.eye(3), (0, 0, 0.006), 0.0) == []


# -- contact-movement consistency ---------------------------------------------

def _oracle_residual(sys):
    x = _kernels.nnls_fista(sys.A, sys.c - sys.b, 200_000)
    return float(np.linalg.norm(sys.A @ x + sys.b - sys.c))


def test_resting_box(box_scene):
    m = box_motion(box_scene)
    frac, res = contact_movement_consistency(m, box_scene)
    assert frac == 1.0
    part = box_scene.parts[0]
    sys = build_wrench_system([], part.inertia.com, 1.0, np.zeros(3), np.zeros(3), box_scene.gravity,
                              support_points(part, np.eye(3), np.zeros(3), 0.0))
    assert _oracle_residual(sys) < 1e-6
    assert np.all(res < 1e-6)


def test_floating_box(box_scene):
    frac, res = contact_movement_consistency(box_motion(box_scene, lift=0.5), box_scene)
    assert frac == 0.0
    assert np.allclose(res, G, atol=1e-9)


def test_sliding_box_residual_matches_oracle(box_scene):
    """Ground friction alone cannot supply 5 m/s^2 sideways (mu g = 3.43)."""
    m = box_motion(box_scene, accel=(5.0, 0.0, 0.0))
    res = frame_wrench_residuals(m, box_scene)
    part = box_scene.parts[0]
    Pd, Ld = rigid_dynamics(m.tracks[0], Inertia(1.0, part.inertia.I0, part.inertia.com), m.dt)
    R, t = m.tracks[0].rotations[2], m.tracks[0].translations[2]
    sys = build_wrench_system([], R @ part.inertia.com + t, 1.0, Pd[2], Ld[2], box_scene.gravity,
                              support_points(part, R, t, 0.0))
    assert res[2, 0] > 0.01
    assert res[2, 0] == pytest.approx(_oracle_residual(sys), rel=1e-6)


# -- articulation ---------------------------------------------------------------

LEVER = (0.4, 0.04, 0.01)


def lever_part():
    L, w, h = LEVER
    return Part("lever", box_mesh(LEVER, (L / 2, 0.0, 0.0), 0.02), np.eye(3),
                RevoluteAxis((0, 0, 0), (0, 0, 1)))


def test_lever_axis_inertia_closed_form():
    L, w, _ = LEVER
    assert axis_inertia(lever_part(), np.eye(3), np.zeros(3)) == pytest.approx((L * L + w * w) / 12 + L * L / 4,
                                                                                rel=1e-9)


@pytest.mark.parametrize("ratio", [0.2, 0.29, 0.31, 0.5])
def test_lever_qualification(ratio):
    part = lever_part()
    I_axis = axis_inertia(part, np.eye(3), np.zeros(3))
    r = ratio * I_axis
    # pushing on the -y face: normal perpendicular to both the arm (x) and the axis (z)
    cp = ContactPoint(np.array([r, -LEVER[1] / 2, 0.0]), np.array([0, -1.0, 0]), 0, 1)
    arm = cp.position - np.zeros(3)
    tau_oracle = np.cross(arm, -cp.normal)[2] / I_axis
    tau = axis_torques([cp], np.zeros(3), (0, 0, 1), I_axis)[0]
    assert tau == pytest.approx(tau_oracle, rel=1e-12)
    assert tau == pytest.approx(r / I_axis, rel=1e-12)
    E = articulation_score([cp], np.zeros(3), (0, 0, 1), I_axis, rate=1.0)
    assert (E > MetricsConfig().articulation_threshold) == (ratio > 0.3)
    assert articulation_score([cp], np.zeros(3), (0, 0, 1), I_axis, rate=-1.0) < 0


def test_degenerate_lever_arms():
    I_axis = 0.05
    on_axis = ContactPoint(np.array([0, 0, 0.003]), np.array([0, -1.0, 0]), 0, 1)
    parallel = ContactPoint(np.array([0.2, 0, 0]), np.array([1.0, 0, 0]), 0, 1)
    assert np.allclose(axis_torques([on_axis, parallel], np.zeros(3), (0, 0, 1), I_axis), 0.0)
    assert articulation_score([], np.zeros(3), (0, 0, 1), I_axis, 1.0) == 0.0


def test_articulation_requires_axis(box_scene):
    with pytest.raises(MetricsError):
        articulation_scores(box_motion(box_scene), box_scene)


@settings(max_examples=3, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-1, 1), st.floats(-1, 1))
def test_articulation_invariant_to_ground_preserving_moves(laptop_scene, laptop_motion, yaw, x, y):
    m = Motion(laptop_motion.fps, laptop_motion.hand[:6], [tr_slice(t, 6) for t in laptop_motion.tracks],
               laptop_motion.part_names)
    E = articulation_scores(m, laptop_scene)
    R, t = rot_z(yaw), np.array([x, y, 0.0])
    E2 = articulation_scores(m.transformed(R, t), laptop_scene.transformed(R, t))
    assert np.allclose(E, E2, atol=1e-9)


def tr_slice(tr, n):
    return PartTrack(tr.rotations[:n], tr.translations[:n], tr.angles[:n])


def test_laptop_hand_pressing_lid_scores(laptop_scene, laptop_motion):
    E = articulation_scores(laptop_motion, laptop_scene)
    assert E.shape == (laptop_motion.n_frames, 1)
    assert np.all(np.isfinite(E))


# -- penetration ----------------------------------------------------------------

def _cloud(n, inner_depth):
    """``n`` points well outside the box plus, if given, one point ``inner_depth`` under its top."""
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.5, 0.5, size=(n, 3))
    pts[:, 2] = rng.uniform(0.3, 0.6, size=n)
    if inner_depth is not None:
        pts[0] = (0.0, 0.0, 0.2 - inner_depth)
    return pts[None]


@pytest.mark.parametrize("n", [80, 200])
def test_penetration_counts(box_scene, n):
    tracks = constant_tracks(1, 1)
    assert vertex_penetration_fractions(_cloud(n, 0.003), box_scene, tracks, 0.005)[0] == 0.0
    assert vertex_penetration_fractions(_cloud(n, 0.010), box_scene, tracks, 0.005)[0] == 1.0 / n


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 0.05), st.floats(0.0, 0.05))
def test_penetration_monotone_in_depth(d1, d2):
    scene = make_scene("box_on_ground")
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.15, 0.25, size=(1, 100, 3))
    tracks = constant_tracks(1, 1)
    lo, hi = sorted((d1, d2))
    assert (vertex_penetration_fractions(pts, scene, tracks, hi)[0]
            <= vertex_penetration_fractions(pts, scene, tracks, lo)[0])


def test_far_hand_has_no_penetration(box_scene):
    assert penetration_rate(box_motion(box_scene), box_scene) == 0.0


def test_evaluate_report(box_scene):
    rep = evaluate(box_motion(box_scene), box_scene)
    d = rep.to_dict()
    assert d["cm_consistency"] == 1.0 and d["penetration_rate"] == 0.0
    assert "articulation_consistency" not in d
    assert len(d["per_frame"]) == 5 and d["per_frame"][0]["cm_consistent"] is True

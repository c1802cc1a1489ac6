import numpy as np
import pytest

from cams.cams_repr import default_boundaries, extract_cams
from cams.config import ContactWeights, FitWeights
from cams.geometry import make_scene
from cams.hand import N_PARAMS, HandConfig, surface_from_kinematics
from cams.motion import Motion
from cams.numopt import finite_diff_gradient
from cams.physics_metrics import penetration_fractions
from cams.scripted import constant_tracks
from cams.synthesizer import (ContactObjective, FitObjective, build_correspondences, centralized,
                              embedding_targets, fit_finger_embeddings, optimize_contact, synthesize)

R_FINGER = 0.008


def _rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


@pytest.fixture(scope="module")
def short_problem(laptop_scene, laptop_cams):
    """Laptop CAMS replayed over 4 frames per stage with a perturbed hand."""
    fps = 4
    tracks = laptop_scene.trajectories(fps)
    b = default_boundaries(laptop_cams.n_stages, fps)
    T = len(tracks[0])
    rng = np.random.default_rng(3)
    from cams.scripted import laptop_opening_motion
    base = laptop_opening_motion(laptop_scene, fps).hand
    theta = base + rng.normal(scale=0.05, size=(T, N_PARAMS))
    theta[:, 0:3] = base[:, 0:3] + rng.normal(scale=0.004, size=(T, 3))
    return tracks, b, theta


@pytest.mark.parametrize("literal", [False, True])
def test_fit_objective_gradient(laptop_scene, laptop_cams, short_problem, literal):
    tracks, b, theta = short_problem
    cfg = HandConfig()
    obj = FitObjective(embedding_targets(laptop_cams, laptop_scene, tracks, b), FitWeights(), cfg, literal)
    _, g = obj(theta)
    g_fd = finite_diff_gradient(lambda x: obj(x)[0], theta, 1e-6)
    assert _rel_err(g, g_fd) < 1e-4


def test_contact_objective_gradient(laptop_scene, laptop_cams, short_problem):
    tracks, b, theta = short_problem
    cfg = HandConfig()
    th = theta.copy()
    th[:, 2] -= 0.006       # push the palm into the lid so penetration terms are active
    w = ContactWeights()
    corr, kin = build_correspondences(th, laptop_cams, laptop_scene, tracks, cfg, b, w)
    assert corr.contacts and corr.pen_flag.sum() > 0
    obj = ContactObjective(corr, w, 10.0, cfg, surface_from_kinematics(kin, cfg).shape)
    _, g = obj(th)
    g_fd = finite_diff_gradient(lambda x: obj(x)[0], th, 1e-6)
    assert _rel_err(g, g_fd) < 1e-4


def test_centralized_coefficients():
    rng = np.random.default_rng(0)
    d2 = rng.uniform(0, 1e-4, size=(7, 30))
    c = centralized(d2, 0.002)
    assert np.all(c.max(axis=-1) == 1.0)
    assert np.all((c > 0) & (c <= 1.0))
    order = np.argsort(d2, axis=-1)
    assert np.all(np.diff(np.take_along_axis(c, order, -1), axis=-1) <= 0)


def test_fit_without_near_flags_keeps_theta(laptop_scene, laptop_cams, short_problem):
    tracks, b, theta = short_problem
    from dataclasses import replace
    names = ("f_n", "f_c", "F1", "F2", "s_f_n", "s_f_c", "s_F1", "s_F2")
    quiet = replace(laptop_cams, **{n: np.zeros_like(getattr(laptop_cams, n)) for n in names})
    const = np.repeat(theta[:1], len(theta), axis=0)
    th, rep = fit_finger_embeddings(quiet, laptop_scene, tracks, const, FitWeights(epochs=50), boundaries=b)
    assert np.allclose(th, const, atol=1e-12)
    assert rep.history[-1] == pytest.approx(0.0, abs=1e-12)


def test_fit_converges_from_different_starts(laptop_scene, laptop_cams, short_problem):
    # coarse frames make smoothness dominate, so compare the two optima instead of a ratio
    from cams.scripted import laptop_opening_motion
    tracks, b, theta = short_problem
    w = FitWeights(epochs=1500)
    _, perturbed = fit_finger_embeddings(laptop_cams, laptop_scene, tracks, theta, w, boundaries=b)
    clean = laptop_opening_motion(laptop_scene, 4).hand
    _, scripted = fit_finger_embeddings(laptop_cams, laptop_scene, tracks, clean, w, boundaries=b)
    assert perturbed.history[-1] < 0.5 * perturbed.history[0]
    assert perturbed.history[-1] == pytest.approx(scripted.history[-1], rel=0.01)
    assert np.all(np.diff(perturbed.history) <= 0)


def test_fit_shape_error(laptop_scene, laptop_cams, short_problem):
    tracks, b, theta = short_problem
    with pytest.raises(ValueError):
        fit_finger_embeddings(laptop_cams, laptop_scene, tracks, theta[:-1], boundaries=b)


def test_seeded_penetration_removed():
    """A flat hand sunk 10 mm into a box top is lifted clear by the contact stage."""
    scene = make_scene("box_on_ground")
    T = 5
    cfg = HandConfig()

    def hover(h):
        hand = np.zeros((T, N_PARAMS))
        hand[:, 0:3] = (0.0, -0.08, 0.2 + R_FINGER + h)
        return Motion(30.0, hand, constant_tracks(1, T), ["box"])

    b = [0, 2, 4]
    cams = extract_cams(hover(0.001), scene, b)
    sunk = hover(-0.010)
    before = penetration_fractions(sunk, scene, cfg, 0.005)
    assert np.all(before > 0)
    w = ContactWeights(steps=2, smooth_schedule=(1.0, 1.0), epochs_per_step=400)
    th, steps = optimize_contact(sunk.hand, cams, scene, list(sunk.tracks), w, cfg, b)
    after = penetration_fractions(Motion(30.0, th, sunk.tracks, ["box"]), scene, cfg, 0.005)
    assert np.all(after == 0)
    assert steps[0].n_penetrating > 0 and steps[0].n_contacts > 0
    for s in steps:
        assert s.report.history[-1] <= s.report.history[0]


def test_synthesize_frame_count_and_validation(laptop_scene, laptop_cams, laptop_motion):
    fw = FitWeights(epochs=20)
    cw = ContactWeights(steps=1, smooth_schedule=(1.0,), epochs_per_step=10)
    res = synthesize(laptop_scene, laptop_cams, laptop_motion.hand[0], 5, 30.0, fw, cw)
    assert res.motion.n_frames == laptop_scene.n_stages * 5 + 1
    assert res.motion.part_names == laptop_cams.part_names
    d = res.report_dict()
    assert len(d["contact_steps"]) == 1 and "fit" in d
    with pytest.raises(ValueError):
        synthesize(make_scene("box_on_ground"), laptop_cams, laptop_motion.hand[0], 5)

"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""
import json
import time
from dataclasses import replace

import numpy as np
import pytest

from cams import _kernels
from cams.cams_repr import RepresentationMode, default_boundaries, extract_cams, temporal_encoding
from cams.cli import fingertip_deviation, main
from cams.config import ContactWeights, FitWeights
from cams.geometry import Part, RevoluteAxis, box_mesh, make_scene
from cams.hand import N_PARAMS, HandConfig, forward_kinematics, hand_surface, pose_jacobian
from cams.motion import Motion
from cams.numopt import nnls
from cams.physics_metrics import (ContactPoint, articulation_score, axis_inertia,
                                  contact_movement_consistency, penetration_rate,
                                  vertex_penetration_fractions)
from cams.planner import GaussianParams, PlannerPrediction, cvae_loss, kl_standard_normal
from cams.scripted import constant_tracks, hand_far_motion, laptop_opening_motion
from cams.synthesizer import (ContactObjective, FitObjective, build_correspondences, embedding_targets,
                              synthesize)
from cams.hand import surface_from_kinematics

from conftest import ACCEPTANCE_LINES
from helpers import random_rotation


class Criterion:
    """Collects named checks and a wall-clock bound, then records one summary line."""

    def __init__(self, number, title, seconds):
        self.number, self.title, self.seconds = number, title, seconds
        self.failures = []
        self.notes = []

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def check(self, ok, what):
        if not ok:
            self.failures.append(what)

    def note(self, text):
        self.notes.append(text)

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        if exc_type is not None:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        self.check(dt < self.seconds, f"runtime {dt:.1f}s over {self.seconds}s")
        status = "PASS" if not self.failures else "FAIL"
        detail = "; ".join(self.notes + self.failures)
        line = f"criterion {self.number:2d} {status}  {self.title} [{dt:.1f}s] {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        if exc_type is None and self.failures:
            pytest.fail("; ".join(self.failures))
        return False


def central_diff(f, x, h):
    """Plain central differences over every entry of ``x``; ``f`` returns an array or scalar."""
    x = np.array(x, dtype=float)
    f0 = np.asarray(f(x))
    out = np.zeros(f0.shape + x.shape)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        out[(...,) + idx] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h)
    return out


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


# ---------------------------------------------------------------------------

def test_criterion_01_constants(capsys):
    with Criterion(1, "default constants", 1.0) as cr:
        assert main(["config", "dump"]) == 0
        d = json.loads(capsys.readouterr().out)
        m, e, p, f, c = d["metrics"], d["extraction"], d["planner"], d["fit"], d["contact"]
        expect = {
            "mu": (m["mu"], 0.35), "friction bases": (m["friction_bases"], 4),
            "residual threshold": (m["residual_threshold"], 0.01),
            "articulation threshold": (m["articulation_threshold"], 0.3),
            "contact distance": (e["contact_distance"], 0.002),
            "metric contact distance": (m["contact_distance"], 0.002),
            "support tolerance": (m["support_tolerance"], 0.005),
            "penetration depth": (m["penetration_depth"], 0.005),
            "near distance": (e["near_distance"], 0.10),
            "cone angle": (e["cone_angle_deg"], 45.0), "contact cone": (c["cone_angle"], 45.0),
            "planner weights": ([p[k] for k in ("lambda_flag", "lambda_pos", "lambda_dir", "lambda_tip",
                                                "lambda_vec", "lambda_kld")], [0.1, 500, 100, 100, 1, 5]),
            "fit weights": ([f["lambda_tip"], f["lambda_joint"], f["lambda_smooth_joints"],
                             f["lambda_smooth_wrist"], f["epochs"]], [50, 1, 0.05, 1000, 2000]),
            "contact weights": ([c["lambda_contact"], c["lambda_trans"], c["lambda_v"], c["lambda_a"]],
                                [80, 1, 5, 20]),
            "schedule": (c["smooth_schedule"], [1, 1, 10, 10, 500, 500]),
            "steps": ([c["steps"], c["epochs_per_step"]], [6, 500]),
        }
        for name, (got, want) in expect.items():
            cr.check(got == want, f"{name}: {got} != {want}")


def test_criterion_02_temporal_encoding():
    table = {0.0: [0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1],
             0.5: [1, 0, 0, -1, 0, 1, 0, 1, 0, 1, 0, 1],
             1.0: [0, -1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1]}
    with Criterion(2, "temporal encoding table", 1.0) as cr:
        for t, want in table.items():
            err = np.max(np.abs(temporal_encoding(t) - np.array(want, dtype=float)))
            cr.check(err <= 1e-12, f"t={t}: max error {err:.2e}")
            cr.note(f"t={t} err {err:.1e}")


def test_criterion_03_nnls_oracle():
    rng = np.random.default_rng(2024)
    with Criterion(3, "NNLS vs projected-gradient oracle", 30.0) as cr:
        worst_obj = worst_kkt = 0.0
        for _ in range(50):
            A = rng.normal(size=(6, 8))
            b = rng.normal(size=6)
            c = rng.normal(size=6)
            d = c - b
            sol = nnls(A, b, c)
            x_ref = _kernels.nnls_fista(A, d, 1_000_000)
            obj = 0.5 * np.sum((A @ sol.x - d) ** 2)
            ref = 0.5 * np.sum((A @ x_ref - d) ** 2)
            worst_obj = max(worst_obj, abs(obj - ref))
            g = A.T @ (A @ sol.x - d)
            free = sol.x > 0
            kkt = max(np.max(np.abs(g[free]), initial=0.0), np.max(-g[~free], initial=0.0),
                      np.max(-sol.x, initial=0.0))
            worst_kkt = max(worst_kkt, kkt)
        cr.note(f"max objective gap {worst_obj:.1e}, max KKT violation {worst_kkt:.1e}")
        cr.check(worst_obj <= 1e-5, "objective gap over 1e-5")
        cr.check(worst_kkt <= 1e-8, "KKT violation over 1e-8")


def test_criterion_04_gradients(laptop_scene, laptop_cams):
    cfg = HandConfig()
    rng = np.random.default_rng(7)
    with Criterion(4, "Jacobians and objective gradients vs central differences", 120.0) as cr:
        thetas = rng.normal(scale=0.4, size=(100, N_PARAMS))
        thetas[:, 0:3] = rng.normal(scale=0.2, size=(100, 3))
        J = np.stack([pose_jacobian(th, cfg, "joints") for th in thetas])       # (100, 63, 51)
        # poses are independent, so one batched perturbation per parameter covers all of them
        J_fd = np.zeros_like(J)
        h = 1e-6
        for j in range(N_PARAMS):
            dp, dm = thetas.copy(), thetas.copy()
            dp[:, j] += h
            dm[:, j] -= h
            diff = forward_kinematics(dp, cfg).flat() - forward_kinematics(dm, cfg).flat()
            J_fd[:, :, j] = diff.reshape(len(thetas), -1) / (2 * h)
        e_joint = rel_err(J, J_fd)
        cr.check(e_joint < 1e-4, f"joint Jacobian rel err {e_joint:.1e}")

        fps = 4
        tracks = laptop_scene.trajectories(fps)
        b = default_boundaries(laptop_cams.n_stages, fps)
        base = laptop_opening_motion(laptop_scene, fps).hand
        targets = embedding_targets(laptop_cams, laptop_scene, tracks, b)
        worst = 0.0
        for k in range(20):
            th = base + rng.normal(scale=0.05, size=base.shape)
            th[:, 0:3] = base[:, 0:3] + rng.normal(scale=0.004, size=(len(base), 3))
            if k < 10:
                obj = FitObjective(targets, FitWeights(), cfg, literal_joint_loss=bool(k % 2))
            else:
                th[:, 2] -= 0.006
                corr, kin = build_correspondences(th, laptop_cams, laptop_scene, tracks, cfg, b)
                obj = ContactObjective(corr, ContactWeights(), [1.0, 10.0, 500.0][k % 3], cfg,
                                       surface_from_kinematics(kin, cfg).shape)
            _, g = obj(th)
            g_fd = central_diff(lambda x: obj(x)[0], th, 1e-6)
            worst = max(worst, rel_err(g, g_fd))
        cr.check(worst < 1e-4, f"objective gradient rel err {worst:.1e}")
        cr.note(f"joint Jacobian {e_joint:.1e}, objectives {worst:.1e}")


def _cams_fields(c):
    return {"c": c.c, "V": c.V, "N": c.N, "f_c": c.f_c, "f_n": c.f_n, "F1": c.F1, "F2": c.F2}


def test_criterion_05_rigid_invariance(laptop_scene, laptop_motion, laptop_cams):
    rng = np.random.default_rng(11)
    with Criterion(5, "extraction invariant to rigid transforms", 60.0) as cr:
        worst = 0.0
        for _ in range(10):
            R, t = random_rotation(rng), rng.normal(size=3)
            moved = extract_cams(laptop_motion.transformed(R, t), laptop_scene.transformed(R, t),
                                 laptop_cams.boundaries)
            for name, a in _cams_fields(laptop_cams).items():
                worst = max(worst, float(np.max(np.abs(np.asarray(a, float) - getattr(moved, name)))))
        cr.note(f"max deviation {worst:.1e}")
        cr.check(worst < 1e-6, "deviation over 1e-6")


def test_criterion_06_scale_invariance(laptop_scene, laptop_motion, laptop_cams):
    with Criterion(6, "V_norm unchanged under x2 scale", 60.0) as cr:
        big = extract_cams(laptop_motion.scaled(2.0), laptop_scene.scaled(2.0), laptop_cams.boundaries,
                           HandConfig().scaled(2.0))
        cr.check(np.array_equal(big.c, laptop_cams.c), "contact flags changed")
        err = float(np.max(np.abs(big.V - laptop_cams.V)))
        cr.note(f"max V deviation {err:.1e}")
        cr.check(err < 1e-6, "V deviation over 1e-6")


def test_criterion_07_metrics_sanity():
    with Criterion(7, "metrics sanity fixtures", 60.0) as cr:
        box = make_scene("box_on_ground")
        T = 5
        rest = hand_far_motion(box, tracks=constant_tracks(1, T))
        cm_rest, _ = contact_movement_consistency(rest, box)
        cr.check(cm_rest == 1.0, f"resting box cm {cm_rest}")
        floating = hand_far_motion(box, tracks=constant_tracks(1, T, translation=(0, 0, 0.5)))
        cm_float, res = contact_movement_consistency(floating, box)
        cr.check(cm_float == 0.0, f"floating box cm {cm_float}")
        cr.check(np.allclose(res, 9.81, atol=1e-9), f"floating residual {res.ravel()[0]}")

        lever = Part("lever", box_mesh((0.4, 0.04, 0.01), (0.2, 0, 0), 0.02), np.eye(3),
                     RevoluteAxis((0, 0, 0), (0, 0, 1)))
        I_axis = axis_inertia(lever, np.eye(3), np.zeros(3))
        for ratio in (0.25, 0.29, 0.31, 0.4):
            r = ratio * I_axis
            cp = ContactPoint(np.array([r, -0.02, 0.0]), np.array([0, -1.0, 0]), 0, 1)
            E = articulation_score([cp], np.zeros(3), (0, 0, 1), I_axis, rate=1.0)
            cr.check(abs(E - r / I_axis) < 1e-12, f"lever torque {E} != {r / I_axis}")
            cr.check((E > 0.3) == (ratio > 0.3), f"lever ratio {ratio} misclassified")

        n = 80
        rng = np.random.default_rng(0)
        pts = rng.uniform(-0.5, 0.5, size=(1, n, 3))
        pts[0, :, 2] = rng.uniform(0.3, 0.6, size=n)
        tracks = constant_tracks(1, 1)
        pts[0, 0] = (0, 0, 0.2 - 0.003)
        shallow = vertex_penetration_fractions(pts, box, tracks, 0.005)[0]
        pts[0, 0] = (0, 0, 0.2 - 0.010)
        deep = vertex_penetration_fractions(pts, box, tracks, 0.005)[0]
        cr.check(shallow == 0.0, f"3 mm counted: {shallow}")
        cr.check(deep == 1.0 / n, f"10 mm rate {deep} != 1/{n}")
        cr.note(f"floating residual {res.ravel()[0]:.4f}, penetration 1/{n}")


def test_criterion_08_laptop_round_trip(laptop_scene, laptop_motion, laptop_cams):
    with Criterion(8, "laptop round trip", 600.0) as cr:
        res = synthesize(laptop_scene, laptop_cams, laptop_motion.hand[0], 30, laptop_motion.fps)
        fit = res.fit_report.history
        ratio = fit[-1] / fit[0]
        cr.check(ratio <= 0.01, f"stage A final/initial {ratio:.2e}")
        dev = fingertip_deviation(laptop_motion, res.motion, laptop_cams, HandConfig())
        cr.check(dev["mean"] < 0.015, f"fingertip deviation {dev['mean'] * 1000:.1f} mm")
        pre = penetration_rate(Motion(res.motion.fps, res.theta_fit, res.motion.tracks, res.motion.part_names),
                               laptop_scene)
        post = penetration_rate(res.motion, laptop_scene)
        cr.check(post <= pre and post < 0.01, f"penetration pre {pre:.4f} post {post:.4f}")
        cr.check(len(res.contact_reports) == 6, "expected 6 contact steps")
        for step in res.contact_reports:
            h = np.asarray(step.report.history)
            cr.check(np.all(np.diff(h) <= 0) and h[-1] <= h[0], f"step {step.step} objective increased")
        cr.note(f"fit ratio {ratio:.1e}, tip deviation {dev['mean'] * 1000:.2f} mm, "
                f"penetration {pre:.4f} -> {post:.4f}")


def test_criterion_09_planner_losses(laptop_cams):
    with Criterion(9, "planner loss suite", 10.0) as cr:
        perfect = cvae_loss(PlannerPrediction.from_cams(laptop_cams), laptop_cams, GaussianParams.standard())
        cr.check(perfect.total == 0.0, f"perfect prediction total {perfect.total}")
        kld = kl_standard_normal(GaussianParams(np.ones(64), np.ones(64)))
        cr.check(abs(kld - 32.0) <= 1e-9, f"KLD {kld}")

        box = make_scene("box_on_ground")
        bc = extract_cams(hand_far_motion(box, 10), box, default_boundaries(1, 10))
        wrong = PlannerPrediction.from_cams(bc)
        wrong = replace(wrong, V=np.full(bc.V.shape, 0.9))
        g = cvae_loss(PlannerPrediction(wrong.c, np.full(bc.V.shape, 0.9), wrong.N, wrong.f_c, wrong.f_n,
                                        wrong.F1, wrong.F2), bc, GaussianParams.standard())
        cr.check(g.l_pos == 0.0, f"ungated V contributes {g.l_pos}")

        base = PlannerPrediction.from_cams(laptop_cams)
        on = tuple(np.argwhere(laptop_cams.c.astype(bool))[0])
        start = (0, 0) + on[1:]
        mutations = {"c": (on, "flip"), "V": (on + (0,), 0.1), "N": (on + (2,), 0.1),
                     "f_n": (start, "flip"), "f_c": (start, "flip"),
                     "F1": (start + (0, 1), 0.1), "F2": (start + (2, 0), 0.1)}
        for name, (idx, how) in mutations.items():
            arr = getattr(base, name).copy()
            arr[idx] = 1.0 - arr[idx] if how == "flip" else arr[idx] + how
            fields = {k: getattr(base, k) for k in ("c", "V", "N", "f_c", "f_n", "F1", "F2")}
            fields[name] = arr
            total = cvae_loss(PlannerPrediction(**fields), laptop_cams, GaussianParams.standard()).total
            cr.check(total > 0.0, f"mutating {name} left total at 0")


ABLATIONS = ["--no-npcs", "--no-contact-frames", "--absolute-embedding", "--literal-joint-loss"]
LABELS = ["no-npcs", "no-contact-frames", "absolute-embedding", "literal-joint-loss"]


@pytest.fixture(scope="module")
def cli_inputs(tmp_path_factory):
    d = tmp_path_factory.mktemp("acceptance")
    assert main(["scene", "gen", "--kind", "hinged_laptop", "--out", str(d / "scene.json"),
                 "--motion-out", str(d / "motion.json")]) == 0
    return d


def _roundtrip(d, out, extra=()):
    return main(["--seed", "5", "roundtrip", "--scene", str(d / "scene.json"), "--motion", str(d / "motion.json"),
                 "--stages", "2", "--out-dir", str(out), *extra])


def test_criterion_10_ablations(cli_inputs):
    d = cli_inputs
    with Criterion(10, "ablation round trips", 1200.0) as cr:
        for flag, label in zip(ABLATIONS, LABELS):
            out = d / f"ablation{flag}"
            code = _roundtrip(d, out, [flag])
            cr.check(code == 0, f"{flag} exit {code}")
            if code == 0:
                s = json.loads((out / "summary.json").read_text())
                cr.check(s["header"]["ablations"] == [label], f"{flag} label {s['header']['ablations']}")
                cr.note(f"{label} dev {s['fingertip_deviation']['mean'] * 1000:.1f} mm")


def test_criterion_11_determinism(cli_inputs):
    d = cli_inputs
    with Criterion(11, "same-seed round trips byte-identical", 1200.0) as cr:
        a, b = d / "det_a", d / "det_b"
        cr.check(_roundtrip(d, a) == 0 and _roundtrip(d, b) == 0, "round trip failed")
        names = ["cams", "motion", "synthesis_report", "metrics_source", "metrics_synthesized", "summary"]
        for n in names:
            same = (a / f"{n}.json").read_bytes() == (b / f"{n}.json").read_bytes()
            cr.check(same, f"{n}.json differs")

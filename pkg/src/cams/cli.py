"""Command-line entry point: ``cams <command> ...``.

Exit codes: 0 success, 2 input error, 3 numerical failure. Errors are reported as one JSON
object on standard error. Every JSON output carries a header with the tool version, seed,
SHA-256 of each input file and the active ablations.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .cams_repr import CamsError, CamsSequence, RepresentationMode, extract_cams, validate_boundaries
from .config import (ContactWeights, ExtractionConfig, FitWeights, MetricsConfig, PlannerWeights,
                     default_config_dict, override)
from .geometry.mesh import MeshError
from .geometry.scenes import SCENE_KINDS, Scene, SceneError, make_scene
from .hand import N_PARAMS, HandConfig, forward_kinematics
from .motion import Motion, MotionError
from .numopt import NnlsError, NumericalError
from .physics_metrics import MetricsError, evaluate
from .planner import PlannerError, condition_descriptor, load_library, retrieval_plan
from .scripted import hand_far_motion, laptop_opening_motion
from .synthesizer import synthesize

INPUT_ERRORS = (CamsError, MotionError, SceneError, MeshError, MetricsError, PlannerError,
                ValueError, KeyError, TypeError, OSError, json.JSONDecodeError)
NUMERICAL_ERRORS = (NumericalError, NnlsError, FloatingPointError)


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# IO helpers
# ---------------------------------------------------------------------------

def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(obj) -> str:
    """Stable JSON text; floats use the shortest repr that round-trips exactly."""
    return json.dumps(obj, default=_plain, indent=1, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))


def read_json(path, what: str):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{what} file is not valid JSON: {exc}") from exc


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def header(args, inputs: dict, ablations=(), command: str | None = None) -> dict:
    return {"tool": "cams", "version": __version__, "command": command or args.command,
            "seed": args.seed, "inputs": {k: sha256(v) for k, v in inputs.items()},
            "ablations": list(ablations)}


def load_scene(path) -> Scene:
    return Scene.from_dict(read_json(path, "scene"))


def load_motion(path) -> Motion:
    return Motion.from_dict(read_json(path, "motion"))


def load_cams(path) -> CamsSequence:
    return CamsSequence.from_dict(read_json(path, "CAMS"))


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

CONFIG_SECTIONS = {"extraction": ExtractionConfig, "planner": PlannerWeights, "fit": FitWeights,
                   "contact": ContactWeights, "metrics": MetricsConfig}
CONFIG_SCALARS = {"frames_per_stage": int, "fps": float}


class RunConfig:
    """Defaults overlaid with a ``--config`` JSON file and per-flag weight overrides."""

    def __init__(self, data: dict | None = None):
        self.sections = {k: cls() for k, cls in CONFIG_SECTIONS.items()}
        self.hand = HandConfig()
        self.frames_per_stage = 30
        self.fps = 30.0
        data = data or {}
        if not isinstance(data, dict):
            raise InputError("config must be a JSON object")
        extra = set(data) - set(CONFIG_SECTIONS) - set(CONFIG_SCALARS) - {"hand", "adam"}
        if extra:
            raise InputError(f"unknown config keys: {sorted(extra)}")
        for k, v in data.items():
            if k in CONFIG_SECTIONS:
                if not isinstance(v, dict):
                    raise InputError(f"config section {k!r} must be an object")
                self.sections[k] = override(self.sections[k], v, k)
            elif k == "hand":
                self.hand = HandConfig.from_dict(v)
            elif k == "adam":
                if v != default_config_dict()["adam"]:
                    raise InputError("the optimizer moment constants are fixed")
            else:
                setattr(self, k, CONFIG_SCALARS[k](v))

    def apply_flags(self, args) -> None:
        for section in ("fit", "contact"):
            vals = {}
            for f in fields(CONFIG_SECTIONS[section]):
                v = getattr(args, f"{section}_{f.name}", None)
                if v is not None:
                    vals[f.name] = v
            if vals:
                self.sections[section] = override(self.sections[section], vals, section)

    def __getattr__(self, name):
        sections = self.__dict__.get("sections", {})
        if name in sections:
            return sections[name]
        raise AttributeError(name)


def _weight_flags(parser) -> None:
    g = parser.add_argument_group("weight overrides")
    for section in ("fit", "contact"):
        for f in fields(CONFIG_SECTIONS[section]):
            default = f.default
            if isinstance(default, bool) or not isinstance(default, (int, float)):
                continue
            flag = f"--{section}-{f.name.replace('_', '-')}"
            g.add_argument(flag, dest=f"{section}_{f.name}", type=type(default), default=None,
                           help=f"default {default}")


def _ablation_flags(parser, joint_loss: bool = True) -> None:
    g = parser.add_argument_group("ablations")
    g.add_argument("--no-npcs", action="store_true", help="skip part-level normalization")
    g.add_argument("--no-contact-frames", action="store_true",
                   help="embed fingers in the part frame instead of contact frames")
    g.add_argument("--absolute-embedding", action="store_true",
                   help="store absolute joint positions instead of tip plus directions")
    g.add_argument("--per-axis-npcs", action="store_true", help="per-axis normalization scale")
    if joint_loss:
        g.add_argument("--literal-joint-loss", action="store_true",
                       help="unnormalized joint-direction loss in the fitting stage")


def _mode(args) -> RepresentationMode:
    return RepresentationMode(npcs=not args.no_npcs, contact_frames=not args.no_contact_frames,
                              absolute_embedding=args.absolute_embedding,
                              per_axis_npcs=args.per_axis_npcs)


def _ablation_labels(args, mode: RepresentationMode) -> list[str]:
    out = mode.ablations()
    if getattr(args, "literal_joint_loss", False):
        out.append("literal-joint-loss")
    return out


def _parse_stages(text: str, n_frames: int) -> np.ndarray:
    parts = [p for p in text.split(",") if p.strip()]
    try:
        vals = [int(p) for p in parts]
    except ValueError as exc:
        raise InputError(f"--stages must be an integer or a comma list of boundaries: {text!r}") from exc
    if len(vals) == 1:
        M = vals[0]
        if M < 1 or (n_frames - 1) % M:
            raise InputError(f"{n_frames} frames cannot be split into {M} equal stages")
        return np.arange(M + 1) * ((n_frames - 1) // M)
    return validate_boundaries(vals, n_frames)


def _parse_param(text: str):
    if "=" not in text:
        raise InputError(f"--param expects key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        vals = [float(x) for x in v.split(",")]
    except ValueError as exc:
        raise InputError(f"--param {k}: numeric value expected") from exc
    return k.strip(), (vals[0] if len(vals) == 1 and "," not in v else tuple(vals))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_config(args, cfg: RunConfig) -> int:
    """Print the effective configuration (defaults overlaid with ``--config``)."""
    d = {k: asdict(v) for k, v in cfg.sections.items()}
    d["contact"]["smooth_schedule"] = list(d["contact"]["smooth_schedule"])
    d["adam"] = default_config_dict()["adam"]
    d.update(frames_per_stage=cfg.frames_per_stage, fps=cfg.fps, hand=cfg.hand.to_dict())
    sys.stdout.write(dumps(d))
    return 0


def cmd_scene_gen(args, cfg: RunConfig) -> int:
    params = dict(_parse_param(p) for p in args.param or [])
    scene = make_scene(args.kind, **params)
    write_json(args.out, {"header": header(args, {}, command="scene gen"), **scene.to_dict()})
    if args.motion_out:
        if scene.kind == "hinged_laptop":
            motion = laptop_opening_motion(scene, cfg.frames_per_stage, cfg.fps, cfg.hand)
        else:
            motion = hand_far_motion(scene, cfg.frames_per_stage, cfg.fps)
        write_json(args.motion_out, motion.to_dict(header(args, {"scene": args.out}, command="scene gen")))
    return 0


def _extract(args, cfg, scene_path, motion_path, stages, mode) -> tuple[CamsSequence, Motion, Scene]:
    scene = load_scene(scene_path)
    motion = load_motion(motion_path)
    motion.check_scene(scene)
    b = _parse_stages(stages, motion.n_frames)
    if len(b) - 1 != scene.n_stages:
        raise InputError(f"{len(b) - 1} stages requested but the scene goals define {scene.n_stages}")
    cams = extract_cams(motion, scene, b, cfg.hand, mode, cfg.extraction)
    return cams, motion, scene


def cmd_extract(args, cfg: RunConfig) -> int:
    mode = _mode(args)
    cams, _, _ = _extract(args, cfg, args.scene, args.motion, args.stages, mode)
    hdr = header(args, {"scene": args.scene, "motion": args.motion}, mode.ablations())
    write_json(args.out, cams.to_dict(hdr))
    return 0


def cmd_library_add(args, cfg: RunConfig) -> int:
    scene = load_scene(args.scene)
    load_cams(args.cams)
    lib = Path(args.library)
    rows = read_json(lib, "library") if lib.exists() else []
    if not isinstance(rows, list):
        raise InputError("library must be a JSON array")
    rows.append({"condition_descriptor": condition_descriptor(scene), "cams_file_path": str(args.cams)})
    write_json(lib, rows)
    return 0


def cmd_plan(args, cfg: RunConfig) -> int:
    scene = load_scene(args.scene)
    library = load_library(args.library)
    cams, idx = retrieval_plan(scene, library, args.jitter, args.seed)
    hdr = header(args, {"scene": args.scene, "library": args.library}, cams.mode.ablations())
    hdr["library_entry"] = idx
    hdr["jitter"] = args.jitter
    write_json(args.out, cams.to_dict(hdr))
    return 0


def _load_h0(path) -> np.ndarray:
    d = read_json(path, "initial pose")
    if isinstance(d, dict):
        d = d["hand"][0] if "hand" in d else d.get("pose")
    h0 = np.asarray(d, dtype=float).reshape(-1)
    if h0.shape != (N_PARAMS,):
        raise InputError(f"initial pose must have {N_PARAMS} values")
    return h0


def _synthesize(args, cfg, scene, cams, h0):
    return synthesize(scene, cams, h0, cfg.frames_per_stage, cfg.fps, cfg.fit, cfg.contact, cfg.hand,
                      literal_joint_loss=args.literal_joint_loss)


def cmd_synthesize(args, cfg: RunConfig) -> int:
    scene = load_scene(args.scene)
    cams = load_cams(args.cams)
    mode = _mode(args)
    if mode != cams.mode:
        raise InputError(f"ablation flags {mode.ablations()} do not match the CAMS file {cams.mode.ablations()}")
    inputs = {"scene": args.scene, "cams": args.cams}
    h0 = np.zeros(N_PARAMS)
    if args.h0:
        h0 = _load_h0(args.h0)
        inputs["h0"] = args.h0
    result = _synthesize(args, cfg, scene, cams, h0)
    hdr = header(args, inputs, _ablation_labels(args, mode))
    write_json(args.out, result.motion.to_dict(hdr))
    report = args.report or str(Path(args.out).with_suffix("")) + ".report.json"
    write_json(report, {"header": hdr, **result.report_dict()})
    return 0


def _metrics(args, cfg, scene, motion, articulation: bool):
    return evaluate(motion, scene, cfg.hand, cfg.metrics, articulation=articulation)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    scene = load_scene(args.scene)
    motion = load_motion(args.motion)
    rep = _metrics(args, cfg, scene, motion, args.articulation)
    hdr = header(args, {"scene": args.scene, "motion": args.motion})
    write_json(args.out, {"header": hdr, **rep.to_dict()})
    if args.per_frame:
        _write_csv(args.per_frame, rep.per_frame)
    return 0


def _write_csv(path, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    cols = ["frame", "cm_consistent", "penetration"]
    extra = [k for k in ("residuals", "articulation_scores") if rows and k in rows[0]]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = list(cols)
        for k in extra:
            head += [f"{k}_{i}" for i in range(len(rows[0][k]))]
        w.writerow(head)
        for r in rows:
            line = [r["frame"], int(r["cm_consistent"]), repr(r["penetration"])]
            for k in extra:
                line += [repr(float(x)) for x in r[k]]
            w.writerow(line)


def fingertip_deviation(source: Motion, synth: Motion, cams: CamsSequence, hand_config: HandConfig) -> dict:
    """Fingertip distance between two motions over (frame, finger) pairs near any part."""
    if source.n_frames != synth.n_frames:
        raise InputError("source and synthesized motions differ in frame count")
    a = forward_kinematics(source.hand, hand_config).tips
    b = forward_kinematics(synth.hand, hand_config).tips
    d = np.linalg.norm(a - b, axis=-1)                  # (T, 5)
    near = cams.f_n.any(axis=2)
    vals = d[near]
    out = {"pairs": int(near.sum())}
    if vals.size:
        out.update(mean=float(vals.mean()), max=float(vals.max()), median=float(np.median(vals)))
    else:
        out.update(mean=0.0, max=0.0, median=0.0)
    out["per_finger_mean"] = [float(d[near[:, i], i].mean()) if near[:, i].any() else 0.0 for i in range(5)]
    return out


class StageFailure(Exception):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(str(exc))
        self.stage = stage
        self.exc = exc


def cmd_roundtrip(args, cfg: RunConfig) -> int:
    out = Path(args.out_dir)
    mode = _mode(args)
    labels = _ablation_labels(args, mode)
    inputs = {"scene": args.scene, "motion": args.motion}
    try:
        cams, motion, scene = _extract(args, cfg, args.scene, args.motion, args.stages, mode)
    except Exception as exc:
        raise StageFailure("extract", exc) from exc
    if not np.array_equal(cams.boundaries, np.arange(len(cams.boundaries)) * cams.boundaries[1]):
        raise StageFailure("extract", InputError("round trips need equal-length stages"))
    cfg.frames_per_stage = int(cams.boundaries[1])
    cfg.fps = motion.fps
    hdr = header(args, inputs, labels)
    write_json(out / "cams.json", cams.to_dict(hdr))
    try:
        result = _synthesize(args, cfg, scene, cams, motion.hand[0])
    except Exception as exc:
        raise StageFailure("synthesize", exc) from exc
    write_json(out / "motion.json", result.motion.to_dict(hdr))
    write_json(out / "synthesis_report.json", {"header": hdr, **result.report_dict()})
    try:
        art = scene.articulated
        rep_src = _metrics(args, cfg, scene, motion, art)
        rep_syn = _metrics(args, cfg, scene, result.motion, art)
    except Exception as exc:
        raise StageFailure("evaluate", exc) from exc
    write_json(out / "metrics_source.json", {"header": hdr, **rep_src.to_dict()})
    write_json(out / "metrics_synthesized.json", {"header": hdr, **rep_syn.to_dict()})
    fit = result.fit_report
    summary = {
        "header": hdr,
        "fingertip_deviation": fingertip_deviation(motion, result.motion, cams, cfg.hand),
        "fit": {"initial": fit.history[0], "final": fit.history[-1],
                "ratio": fit.history[-1] / fit.history[0] if fit.history[0] > 0 else 0.0},
        "contact_steps": [{"step": r.step, "start": r.report.history[0], "final": r.report.history[-1]}
                          for r in result.contact_reports],
        "penetration_rate": {"source": rep_src.penetration_rate, "synthesized": rep_syn.penetration_rate},
        "cm_consistency": {"source": rep_src.cm_consistency, "synthesized": rep_syn.cm_consistency},
    }
    if art:
        summary["articulation_consistency"] = {"source": rep_src.articulation_consistency,
                                               "synthesized": rep_syn.articulation_consistency}
    write_json(out / "summary.json", summary)
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cams", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cams {__version__}")
    p.add_argument("--seed", type=int, default=0, help="random seed recorded in every output")
    p.add_argument("--config", help="JSON file overriding default constants")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("config", help="print the default configuration")
    c.add_argument("action", choices=["dump"])
    c.set_defaults(func=cmd_config)

    s = sub.add_parser("scene", help="procedural scenes")
    s.add_argument("action", choices=["gen"])
    s.add_argument("--kind", required=True, choices=SCENE_KINDS)
    s.add_argument("--param", action="append", help="key=value, comma-separated for sequences")
    s.add_argument("--out", required=True)
    s.add_argument("--motion-out", help="also write a scripted source motion")
    s.set_defaults(func=cmd_scene_gen)

    e = sub.add_parser("extract", help="motion to CAMS")
    e.add_argument("--scene", required=True)
    e.add_argument("--motion", required=True)
    e.add_argument("--stages", required=True, help="stage count or comma-separated boundary frames")
    e.add_argument("--out", required=True)
    _ablation_flags(e, joint_loss=False)
    e.set_defaults(func=cmd_extract)

    lb = sub.add_parser("library", help="planner library maintenance")
    lb.add_argument("action", choices=["add"])
    lb.add_argument("--library", required=True)
    lb.add_argument("--scene", required=True)
    lb.add_argument("--cams", required=True)
    lb.set_defaults(func=cmd_library_add)

    pl = sub.add_parser("plan", help="retrieve a CAMS plan for a scene")
    pl.add_argument("--library", required=True)
    pl.add_argument("--scene", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--jitter", type=float, default=0.0, help="noise scale in meters")
    pl.set_defaults(func=cmd_plan)

    sy = sub.add_parser("synthesize", help="CAMS to hand motion")
    sy.add_argument("--scene", required=True)
    sy.add_argument("--cams", required=True)
    sy.add_argument("--out", required=True)
    sy.add_argument("--report", help="objective report path (default: <out>.report.json)")
    sy.add_argument("--h0", help="initial hand pose: JSON list of 51 values or a motion file")
    _ablation_flags(sy)
    _weight_flags(sy)
    sy.set_defaults(func=cmd_synthesize)

    ev = sub.add_parser("evaluate", help="physical plausibility metrics")
    ev.add_argument("--scene", required=True)
    ev.add_argument("--motion", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--articulation", action="store_true")
    ev.add_argument("--per-frame", help="CSV of per-frame diagnostics")
    ev.set_defaults(func=cmd_evaluate)

    rt = sub.add_parser("roundtrip", help="extract, synthesize and evaluate in one run")
    rt.add_argument("--scene", required=True)
    rt.add_argument("--motion", required=True)
    rt.add_argument("--stages", required=True)
    rt.add_argument("--out-dir", required=True)
    _ablation_flags(rt)
    _weight_flags(rt)
    rt.set_defaults(func=cmd_roundtrip)
    return p


def _fail(code: int, exc: Exception, stage: str | None = None) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if stage:
        err["stage"] = stage
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def _code(exc: Exception) -> int:
    if isinstance(exc, NUMERICAL_ERRORS):
        return 3
    if isinstance(exc, (InputError,) + INPUT_ERRORS):
        return 2
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(read_json(args.config, "config") if args.config else None)
        cfg.apply_flags(args)
        np.seterr(all="ignore")
        return args.func(args, cfg)
    except StageFailure as exc:
        return _fail(_code(exc.exc), exc.exc, exc.stage)
    except Exception as exc:
        return _fail(_code(exc), exc)


if __name__ == "__main__":
    sys.exit(main())

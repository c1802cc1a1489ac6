"""Default constants and weight sets, grouped by the stage that consumes them."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields


@dataclass(frozen=True)
class ExtractionConfig:
    contact_distance: float = 0.002     # m, finger-to-part distance for c and f_c
    near_distance: float = 0.10         # m, fingertip-to-part distance for f_n
    cone_angle_deg: float = 45.0        # contact-point matching cone
    samples_per_stage: int = 10         # training-layout timestamps per stage


@dataclass(frozen=True)
class PlannerWeights:
    lambda_flag: float = 0.1
    lambda_pos: float = 500.0
    lambda_dir: float = 100.0
    lambda_tip: float = 100.0
    lambda_vec: float = 1.0
    lambda_kld: float = 5.0


@dataclass(frozen=True)
class FitWeights:
    lambda_tip: float = 50.0
    lambda_joint: float = 1.0
    lambda_smooth_joints: float = 0.05
    lambda_smooth_wrist: float = 1000.0
    lambda_smooth_wrist_rotation: float = 0.05
    epochs: int = 2000
    learning_rate: float = 1e-2

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")


@dataclass(frozen=True)
class ContactWeights:
    lambda_contact: float = 80.0
    lambda_trans: float = 1.0
    lambda_v: float = 5.0
    lambda_a: float = 20.0
    smooth_schedule: tuple = (1.0, 1.0, 10.0, 10.0, 500.0, 500.0)
    steps: int = 6
    epochs_per_step: int = 500
    cone_angle: float = 45.0
    learning_rate: float = 5e-3
    section_radius: float = 0.015
    contact_coef_scale: float = 0.002
    penetration_coef_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "smooth_schedule", tuple(float(s) for s in self.smooth_schedule))
        if len(self.smooth_schedule) != self.steps:
            raise ValueError("smooth_schedule length must equal steps")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "smooth_schedule" and v < 0:
                raise ValueError(f"{f.name} must be >= 0")
        if self.contact_coef_scale <= 0 or self.penetration_coef_scale <= 0:
            raise ValueError("coefficient length scales must be positive")


@dataclass(frozen=True)
class MetricsConfig:
    mu: float = 0.35
    friction_bases: int = 4
    residual_threshold: float = 0.01
    articulation_threshold: float = 0.3
    contact_distance: float = 0.002
    support_tolerance: float = 0.005
    support_cap: int = 8
    penetration_depth: float = 0.005
    mass: float = 1.0


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class Defaults:
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    planner: PlannerWeights = field(default_factory=PlannerWeights)
    fit: FitWeights = field(default_factory=FitWeights)
    contact: ContactWeights = field(default_factory=ContactWeights)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)


def default_config_dict() -> dict:
    d = asdict(Defaults())
    d["contact"]["smooth_schedule"] = list(d["contact"]["smooth_schedule"])
    return d


def override(obj, values: dict, where: str = ""):
    """Copy of a config dataclass with ``values`` applied; unknown keys are rejected."""
    names = {f.name for f in fields(obj)}
    extra = set(values) - names
    if extra:
        raise ValueError(f"unknown {where or type(obj).__name__} fields: {sorted(extra)}")
    cur = asdict(obj)
    cur.update(values)
    return type(obj)(**cur)

"""Training-loss suite for a CAMS generator, and a retrieval planner standing in for one."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .cams_repr import CamsSequence, part_space
from .config import PlannerWeights
from .geometry.scenes import Scene

BCE_EPS = 1e-7
PROFILE_POINTS = 16


class PlannerError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PlannerPrediction:
    """Generator output on the CAMS training layout.

    ``c`` (M+1, 5, N) and the per-sample flags ``f_c``/``f_n`` (M, S, 5, N) are
    probabilities; ``V``/``N`` (M+1, 5, N, 3); ``F1``/``F2`` (M, S, 5, N, 5, 3).
    """

    c: np.ndarray
    V: np.ndarray
    N: np.ndarray
    f_c: np.ndarray
    f_n: np.ndarray
    F1: np.ndarray
    F2: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            a = np.array(getattr(self, f.name), dtype=float)
            if not np.all(np.isfinite(a)):
                raise PlannerError(f"{f.name} has non-finite entries")
            object.__setattr__(self, f.name, a)
        for name in ("c", "f_c", "f_n"):
            a = getattr(self, name)
            if np.any((a < 0) | (a > 1)):
                raise PlannerError(f"{name} probabilities must lie in [0, 1]")

    @classmethod
    def from_cams(cls, cams: CamsSequence) -> "PlannerPrediction":
        """The prediction that reproduces ``cams`` exactly."""
        return cls(cams.c, cams.V, cams.N, cams.s_f_c, cams.s_f_n, cams.s_F1, cams.s_F2)


@dataclass(frozen=True, eq=False)
class GaussianParams:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        sigma = np.array(self.sigma, dtype=float).reshape(-1)
        if mu.shape != sigma.shape:
            raise PlannerError("mu and sigma must have the same length")
        if np.any(~(sigma > 0)):
            raise PlannerError("sigma must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def standard(cls, dim: int = 64) -> "GaussianParams":
        return cls(np.zeros(dim), np.ones(dim))


@dataclass(frozen=True)
class LossBreakdown:
    l_flag: float
    l_pos: float
    l_dir: float
    l_tip: float
    l_vec: float
    l_kld: float
    weights: PlannerWeights = field(default_factory=PlannerWeights)

    @property
    def total(self) -> float:
        w = self.weights
        return (w.lambda_flag * self.l_flag + w.lambda_pos * self.l_pos + w.lambda_dir * self.l_dir
                + w.lambda_tip * self.l_tip + w.lambda_vec * self.l_vec + w.lambda_kld * self.l_kld)

    def to_dict(self) -> dict:
        return {"l_flag": self.l_flag, "l_pos": self.l_pos, "l_dir": self.l_dir, "l_tip": self.l_tip,
                "l_vec": self.l_vec, "l_kld": self.l_kld, "total": self.total}


def bce(target, prob) -> np.ndarray:
    """Elementwise BCE with both log arguments floored at 1e-7, so an exact 0/1 prediction
    costs nothing while a saturated wrong one stays finite."""
    p = np.asarray(prob, dtype=float)
    y = np.asarray(target, dtype=float)
    return -(y * np.log(np.maximum(p, BCE_EPS)) + (1 - y) * np.log(np.maximum(1 - p, BCE_EPS)))


def kl_standard_normal(gauss: GaussianParams) -> float:
    mu, s2 = gauss.mu, gauss.sigma ** 2
    return float(0.5 * np.sum(mu ** 2 + s2 - 1.0 - np.log(s2)))


def _check_shapes(pred: PlannerPrediction, gt: CamsSequence):
    pairs = [("c", gt.c), ("V", gt.V), ("N", gt.N), ("f_c", gt.s_f_c), ("f_n", gt.s_f_n),
             ("F1", gt.s_F1), ("F2", gt.s_F2)]
    for name, ref in pairs:
        if getattr(pred, name).shape != ref.shape:
            raise PlannerError(f"{name}: shape {getattr(pred, name).shape} does not match {ref.shape}")


def cvae_loss(pred: PlannerPrediction, gt: CamsSequence, gauss: GaussianParams,
              weights: PlannerWeights | None = None) -> LossBreakdown:
    """Reconstruction and latent losses of a prediction against ground-truth CAMS.

    Flags use summed BCE. Position, direction and embedding terms count only tuples whose
    ground-truth contact flag is set: a sample in stage j uses the flag of transition j for
    its start embedding and of transition j+1 for its end embedding.
    """
    weights = weights or PlannerWeights()
    _check_shapes(pred, gt)
    l_flag = float(bce(gt.c, pred.c).sum() + bce(gt.s_f_n, pred.f_n).sum() + bce(gt.s_f_c, pred.f_c).sum())
    gate = gt.c.astype(float)
    l_pos = float(np.sum(gate * np.sum((pred.V - gt.V) ** 2, axis=-1)))
    l_dir = float(np.sum(gate * np.sum((pred.N - gt.N) ** 2, axis=-1)))
    g_start = gate[:-1][:, None]            # (M, 1, 5, N)
    g_end = gate[1:][:, None]
    e1 = np.sum((pred.F1 - gt.s_F1) ** 2, axis=-1)    # (M, S, 5, N, 5)
    e2 = np.sum((pred.F2 - gt.s_F2) ** 2, axis=-1)
    l_tip = float(np.sum(g_start * e1[..., 0]) + np.sum(g_end * e2[..., 0]))
    l_vec = float(np.sum(g_start * e1[..., 1:].sum(-1)) + np.sum(g_end * e2[..., 1:].sum(-1)))
    return LossBreakdown(l_flag, l_pos, l_dir, l_tip, l_vec, kl_standard_normal(gauss), weights)


# ---------------------------------------------------------------------------
# retrieval
# ---------------------------------------------------------------------------

def condition_descriptor(scene: Scene) -> np.ndarray:
    """Per-part canonical extents over the largest extent, then each part's goal angle
    profile resampled to 16 points."""
    ext = []
    for p in scene.parts:
        lo, hi = p.mesh.transformed(p.canonical_rotation.T).bounds
        ext.append(hi - lo)
    ext = np.array(ext)
    ext = ext / ext.max()
    u = np.linspace(0.0, 1.0, len(scene.goals))
    q = np.linspace(0.0, 1.0, PROFILE_POINTS)
    prof = [np.interp(q, u, [g[k].angle for g in scene.goals]) for k in range(len(scene.parts))]
    return np.concatenate([ext.reshape(-1), np.concatenate(prof)])


def condition_distance(a, b, extent_weight: float = 1.0, angle_weight: float = 1.0) -> float:
    """Weighted L2 over extents plus L2 over angle profiles; infinite across part counts."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        return float("inf")
    k = len(a) // (3 + PROFILE_POINTS)
    return float(extent_weight * np.linalg.norm(a[:3 * k] - b[:3 * k])
                 + angle_weight * np.linalg.norm(a[3 * k:] - b[3 * k:]))


@dataclass(frozen=True, eq=False)
class LibraryEntry:
    descriptor: np.ndarray
    cams: CamsSequence
    path: str = ""


def load_library(path) -> list[LibraryEntry]:
    """JSON array of ``{condition_descriptor, cams_file_path}``; relative paths resolve
    against the library file's directory."""
    path = Path(path)
    try:
        rows = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise PlannerError(f"library is not valid JSON: {exc}") from exc
    if not isinstance(rows, list):
        raise PlannerError("library must be a JSON array")
    out = []
    for row in rows:
        try:
            p = Path(row["cams_file_path"])
            desc = np.asarray(row["condition_descriptor"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise PlannerError(f"malformed library entry: {exc}") from exc
        if not p.is_absolute():
            p = path.parent / p
        cams = CamsSequence.from_dict(json.loads(p.read_text()))
        out.append(LibraryEntry(desc, cams, str(p)))
    return out


def select_entry(descriptor, library) -> int:
    if not library:
        raise PlannerError("empty planner library")
    d = [condition_distance(descriptor, e.descriptor) for e in library]
    best = int(np.argmin(d))
    if not np.isfinite(d[best]):
        raise PlannerError("no library entry has a compatible part layout")
    return best


def jitter_cams(cams: CamsSequence, scene: Scene, jitter: float, rng: np.random.Generator) -> CamsSequence:
    """Gaussian noise of ``jitter`` meters on contact points and fingertip embeddings."""
    if jitter < 0:
        raise PlannerError("jitter must be >= 0")
    if jitter == 0:
        return cams
    if len(scene.parts) != cams.n_parts:
        raise PlannerError("scene part count does not match the CAMS sequence")
    scale = np.array([np.max(part_space(p, cams.mode).scale) for p in scene.parts])
    V = cams.V + rng.normal(0.0, jitter, cams.V.shape) / scale[None, None, :, None]
    out = {"V": V}
    for name, flag in (("F1", cams.f_n), ("F2", cams.f_n), ("s_F1", cams.s_f_n), ("s_F2", cams.s_f_n)):
        E = getattr(cams, name).copy()
        noise = rng.normal(0.0, jitter, E.shape[:-2] + (3,))
        E[..., 0, :] += np.where(flag[..., None], noise, 0.0)
        out[name] = E
    return replace(cams, **out)


def retrieval_plan(scene: Scene, library, jitter: float = 0.0, seed: int = 0,
                   h0=None) -> tuple[CamsSequence, int]:
    """Nearest library entry by condition descriptor, optionally jittered.

    ``h0`` is accepted for interface parity with a learned generator; the descriptor does not
    depend on it. Returns the plan and the selected entry index.
    """
    idx = select_entry(condition_descriptor(scene), library)
    cams = library[idx].cams
    return jitter_cams(cams, scene, jitter, np.random.default_rng(seed)), idx

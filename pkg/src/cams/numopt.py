"""First-order minimization, finite-difference checks and non-negative least squares."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class NumericalError(RuntimeError):
    """Non-finite loss or gradient; carries where it happened."""

    def __init__(self, message: str, iteration: int | None = None, step: int | None = None):
        self.iteration = iteration
        self.step = step
        where = []
        if step is not None:
            where.append(f"step {step}")
        if iteration is not None:
            where.append(f"iteration {iteration}")
        super().__init__(message + (f" ({', '.join(where)})" if where else ""))


class NnlsError(RuntimeError):
    pass


@dataclass
class Schedule:
    """Adam settings. ``rate_scale`` multiplies the learning rate per parameter index."""

    learning_rate: float = 1e-2
    iterations: int = 2000
    rate_scale: np.ndarray | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ObjectiveReport:
    history: list[float]
    raw_history: list[float]
    terms_start: dict = field(default_factory=dict)
    terms_end: dict = field(default_factory=dict)
    iterations: int = 0
    converged: bool = False
    best_iteration: int = 0

    def to_dict(self) -> dict:
        return {"history": list(self.history), "raw_history": list(self.raw_history),
                "terms_start": dict(self.terms_start), "terms_end": dict(self.terms_end),
                "iterations": self.iterations, "converged": self.converged,
                "best_iteration": self.best_iteration}


def _check(value, grad, iteration, step):
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite loss or gradient", iteration=iteration, step=step)


def minimize(objective: Callable, x0, schedule: Schedule | None = None,
             terms: Callable | None = None, step: int | None = None, ftol: float = 1e-10):
    """Adam descent on ``objective(x) -> (value, grad)``; returns the best iterate seen.

    ``history[k]`` is the best loss among iterates ``0..k`` (so it never increases);
    ``raw_history[k]`` is the loss of iterate ``k`` itself. ``terms(x) -> dict`` fills
    the per-term breakdown at the start and at the returned iterate.
    """
    sch = schedule or Schedule()
    x = np.array(x0, dtype=float, copy=True)
    shape = x.shape
    x = x.ravel()
    lr = sch.learning_rate
    if sch.rate_scale is not None:
        lr = lr * np.broadcast_to(np.asarray(sch.rate_scale, dtype=float).ravel(), x.shape)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    value, grad = objective(x.reshape(shape))
    grad = np.asarray(grad, dtype=float).ravel()
    _check(value, grad, 0, step)
    best_x, best_val, best_it = x.copy(), float(value), 0
    raw = [float(value)]
    hist = [float(value)]
    b1, b2 = sch.beta1, sch.beta2
    for it in range(1, sch.iterations + 1):
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        mhat = m / (1 - b1 ** it)
        vhat = v / (1 - b2 ** it)
        x = x - lr * mhat / (np.sqrt(vhat) + sch.eps)
        value, grad = objective(x.reshape(shape))
        grad = np.asarray(grad, dtype=float).ravel()
        _check(value, grad, it, step)
        raw.append(float(value))
        if value < best_val:
            best_x, best_val, best_it = x.copy(), float(value), it
        hist.append(best_val)
    tail = max(1, sch.iterations // 10)
    ref = hist[-1 - tail] if len(hist) > tail else hist[0]
    converged = bool(ref - hist[-1] <= ftol * max(1.0, abs(ref)))
    report = ObjectiveReport(hist, raw, iterations=sch.iterations, converged=converged,
                             best_iteration=best_it)
    if terms is not None:
        report.terms_start = terms(np.array(x0, dtype=float).reshape(shape))
        report.terms_end = terms(best_x.reshape(shape))
    return best_x.reshape(shape), report


def finite_diff_gradient(objective: Callable, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient; ``objective`` may return a scalar or ``(value, ...)``."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=float)
    flat = x.ravel()
    g = np.zeros_like(flat)

    def val(z):
        r = objective(z.reshape(x.shape))
        return float(r[0] if isinstance(r, tuple) else r)

    for i in range(flat.size):
        e = flat.copy()
        e[i] += h
        fp = val(e)
        e[i] -= 2 * h
        fm = val(e)
        g[i] = (fp - fm) / (2 * h)
    return g.reshape(x.shape)


@dataclass(frozen=True)
class NnlsResult:
    x: np.ndarray
    residual_norm: float
    iterations: int


def nnls_kkt_ok(A, d, x, tol: float = 1e-8) -> bool:
    """KKT conditions of min 0.5||A x - d||^2 s.t. x >= 0."""
    if A.shape[1] == 0:
        return True
    g = A.T @ (A @ x - d)
    active = x <= 0
    return bool(np.all(g[active] >= -tol) and np.all(np.abs(g[~active]) <= tol))


def nnls(A, b, c, max_iter: int | None = None, kkt_tol: float = 1e-8) -> NnlsResult:
    """min ||A x + b - c||_2 subject to x >= 0 (Lawson-Hanson active set).

    ``A`` is (m, K); K = 0 is accepted and gives the residual of ``b - c``.
    """
    A = np.asarray(A, dtype=float)
    d = np.asarray(c, dtype=float) - np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != d.shape[0]:
        raise ValueError("A must be (m, K) with m matching b and c")
    K = A.shape[1]
    x = np.zeros(K)
    if K == 0:
        return NnlsResult(x, float(np.linalg.norm(d)), 0)
    cap = max_iter if max_iter is not None else 10 * K + 50
    passive = np.zeros(K, dtype=bool)
    scale = max(1.0, float(np.abs(A).max() * np.abs(d).max()))
    enter_tol = 1e-12 * scale
    it = 0
    w = A.T @ (d - A @ x)
    banned = np.zeros(K, dtype=bool)
    while it < cap:
        cand = ~passive & ~banned & (w > enter_tol)
        if not cand.any():
            break
        it += 1
        j = int(np.argmax(np.where(cand, w, -np.inf)))
        passive[j] = True
        first = True
        while True:
            it += 1
            if it > cap:
                break
            idx = np.flatnonzero(passive)
            z = np.zeros(K)
            z[idx] = np.linalg.lstsq(A[:, idx], d, rcond=None)[0]
            if first and z[j] <= 0:
                # the entering column cannot help numerically; skip it until x moves
                passive[j] = False
                banned[j] = True
                break
            first = False
            banned[:] = False
            if np.all(z[idx] > 0):
                x = z
                break
            neg = idx[z[idx] <= 0]
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive &= x > 1e-14 * max(1.0, np.abs(x).max())
            x[~passive] = 0.0
        w = A.T @ (d - A @ x)
    x = np.maximum(x, 0.0)
    if not nnls_kkt_ok(A, d, x, kkt_tol):
        if it >= cap:
            raise NnlsError(f"NNLS hit its iteration cap ({cap}) without satisfying KKT")
        raise NnlsError("NNLS terminated without satisfying KKT conditions")
    return NnlsResult(x, float(np.linalg.norm(A @ x - d)), it)

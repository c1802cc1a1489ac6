"""Independent reference implementations used as test oracles."""
import numpy as np
from scipy.optimize import minimize as sp_minimize


def random_rotation(rng):
    """Rotation from a random unit quaternion (independent of the package's exp map)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rodrigues(axis, angle):
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def closest_point_on_triangle_qp(p, a, b, c):
    """Closest point by solving the barycentric QP with SLSQP."""
    e1, e2 = b - a, c - a

    def f(uv):
        r = a + uv[0] * e1 + uv[1] * e2 - p
        return r @ r

    def g(uv):
        r = a + uv[0] * e1 + uv[1] * e2 - p
        return np.array([2 * r @ e1, 2 * r @ e2])

    best = None
    for start in ([1 / 3, 1 / 3], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]):
        res = sp_minimize(f, start, jac=g, method="SLSQP", bounds=[(0, 1), (0, 1)],
                          constraints=[{"type": "ineq", "fun": lambda uv: 1 - uv[0] - uv[1],
                                        "jac": lambda uv: np.array([-1.0, -1.0])}],
                          options={"ftol": 1e-16, "maxiter": 200})
        if best is None or res.fun < best.fun:
            best = res
    uv = best.x
    return a + uv[0] * e1 + uv[1] * e2




def chain_matrix(R, t):
    M = np.eye(4)
    M[:3, :3] = R
    M[:3, 3] = t
    return M

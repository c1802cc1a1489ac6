"""Time the numba and numpy kernel backends side by side.

Each kernel runs in-process through its ``*_numba`` / ``*_numpy`` entry points on the
same inputs; a subprocess with CAMS_NO_NUMBA=1 times a full extraction end to end.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from cams import _kernels
from cams.geometry import icosphere

EXTRACT = """
import time
from cams.cams_repr import default_boundaries, extract_cams
from cams.geometry import make_scene
from cams.scripted import laptop_opening_motion
from cams import _kernels
s = make_scene("hinged_laptop"); m = laptop_opening_motion(s); b = default_boundaries(2, 30)
extract_cams(m, s, b)
t = time.perf_counter(); extract_cams(m, s, b)
print(_kernels.backend(), time.perf_counter() - t)
"""


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    tris = icosphere(0.1, 3).triangle_vertices
    q = rng.uniform(-0.15, 0.15, size=(4000, 3))
    A = rng.normal(size=(12, 40))
    t = rng.normal(size=12)
    cases = [
        ("closest_points 4000 x 1280 tris", _kernels.closest_points_numba, _kernels.closest_points_numpy,
         (q, tris)),
        ("winding_numbers 4000 x 1280 tris", _kernels.winding_numbers_numba, _kernels.winding_numbers_numpy,
         (q, tris)),
        ("nnls_fista 12x40, 20000 iterations", _kernels.nnls_fista_numba, _kernels.nnls_fista_numpy,
         (A, t, 20000)),
    ]
    print(f"{'kernel':40s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for name, fast, slow, a in cases:
        tn = best_of(lambda: fast(*a), args.repeat)
        tp = best_of(lambda: slow(*a), args.repeat)
        print(f"{name:40s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f}")
    for flag in ("0", "1"):
        env = dict(os.environ, CAMS_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", EXTRACT], env=env, capture_output=True, text=True,
                             check=True).stdout.split()
        print(f"{'laptop extraction (' + out[0] + ')':40s} {float(out[1]):10.4f}")


if __name__ == "__main__":
    main()

"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter (the switch is read at import time):

    python3 benchmarks/bench_kernels.py            # both backends, table
    python3 benchmarks/bench_kernels.py --worker   # one backend, JSON on stdout
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up (includes compilation on the numba path)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def worker(repeat):
    import rollgeom as rg
    from rollgeom.manifolds import PathSpec, frame_transport, geodesic_path
    from rollgeom.rolling import random_piecewise

    rng = np.random.default_rng(0)
    S, E = rg.sphere(2, 1.0), rg.euclidean(2)
    S3, H3 = rg.sphere(3, 1.0), rg.hyperbolic(3, 1.0)
    q = rg.random_state(S, E, rng, 0.2)
    q3 = rg.random_state(S3, H3, rng, 0.2)
    c = random_piecewise(rng, 2, 1.0, 10)
    c3 = random_piecewise(rng, 3, 1.0, 10)
    path = PathSpec.from_function(lambda t: (np.array([np.cos(t), np.sin(t)]) * 0.5,
                                             np.array([-np.sin(t), np.cos(t)]) * 0.5), 1.0, 2)
    cases = {
        "roll sphere(2)/plane, 1000 steps": lambda: rg.roll(S, E, q, c, 1e-3),
        "roll sphere(3)/hyperbolic(3), 1000 steps": lambda: rg.roll(S3, H3, q3, c3, 1e-3),
        "geodesic + transport, 1000 steps": lambda: geodesic_path(S3, np.zeros(3),
                                                                  np.array([0.3, 0.4, 0.5]), 1.0),
        "frame transport on a path, 1000 steps": lambda: frame_transport(S, path, step=1e-3),
    }
    out = {"backend": rg.backend()}
    for name, fn in cases.items():
        out[name] = _best(fn, repeat)
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--worker", action="store_true")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if args.worker:
        worker(args.repeat)
        return
    res = {}
    for flag in ("1", "0"):
        env = dict(os.environ, ROLLGEOM_NUMBA=flag)
        p = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(args.repeat)],
                           env=env, capture_output=True, text=True, check=True)
        r = json.loads(p.stdout.strip().splitlines()[-1])
        res[r.pop("backend")] = r
    nb, npy = res.get("numba", {}), res["numpy"]
    print(f"{'case':45s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}")
    for k in npy:
        a = nb.get(k, float("nan"))
        print(f"{k:45s} {1e3 * a:11.2f} {1e3 * npy[k]:11.2f} {npy[k] / a:8.1f}x")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Time the compiled kernels against the pure-Python fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time by ``ERGMVI_DISABLE_NUMBA``. Prints one JSON object per backend
and a speedup summary.
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from ergmvi import _accel
from ergmvi.network import karate
from ergmvi.sampler import Chain
from ergmvi.stats import ModelSpec, all_change_stats

steps, reps = int(sys.argv[1]), int(sys.argv[2])
net = karate()
spec = ModelSpec.parse("edges,gwesp:0.2,gwd:0.8")
theta = np.array([-3.4, 1.15, 0.3])

def best(f):
    f()  # warm-up (includes compilation)
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        f()
        out.append(time.perf_counter() - t0)
    return min(out)

def sample():
    Chain(net, spec).run(theta, steps, np.random.default_rng(0))

res = {"backend": _accel.backend(), "steps": steps,
       "tnt_seconds": best(sample), "change_matrix_seconds": best(lambda: all_change_stats(net, spec))}
res["steps_per_second"] = steps / res["tnt_seconds"]
print(json.dumps(res))
"""


def run(disable, steps, reps):
    env = dict(os.environ, ERGMVI_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(steps), str(reps)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=100_000, help="tie-no-tie steps per timing")
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args()
    fast = run(False, args.steps, args.reps)
    slow = run(True, args.steps, args.reps)
    print(json.dumps(fast))
    print(json.dumps(slow))
    print(f"tie-no-tie speedup {slow['tnt_seconds'] / fast['tnt_seconds']:.1f}x, "
          f"change-matrix speedup {slow['change_matrix_seconds'] / fast['change_matrix_seconds']:.1f}x")


if __name__ == "__main__":
    main()

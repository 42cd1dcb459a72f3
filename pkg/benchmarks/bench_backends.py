"""Time the hot kernels under the numba and numpy backends.

Each backend runs in its own interpreter because the backend is fixed at
import time by ``BRAINMIM_DISABLE_NUMBA``. Outputs from both runs are
compared so a speedup never hides a numerical difference.

    python benchmarks/bench_backends.py --size 96 --repeat 3
"""
import argparse
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

WORKER = r"""
import json, sys, time
import numpy as np
import brainmim
from brainmim.augment import rotate3d, elastic_deform, gaussian_blur, simulate_low_resolution
from brainmim.preprocess import resample_isotropic
from brainmim.volume import Volume

size, repeat, out = int(sys.argv[1]), int(sys.argv[2]), sys.argv[3]
patch = np.random.default_rng(0).random((size,) * 3).astype(np.float32)
vol = Volume(patch, spacing=(1.3, 0.9, 1.1))
cases = {
    "rotation": lambda: rotate3d(patch, (12.0, -7.0, 20.0)),
    "elastic": lambda: elastic_deform(patch, 400.0, 25.0, 1),
    "blur": lambda: gaussian_blur(patch, 1.0),
    "low_resolution": lambda: simulate_low_resolution(patch, (0.5, 0.7, 0.9)),
    "resample": lambda: resample_isotropic(vol).data,
}
small = np.zeros((4, 4, 4), np.float32)
rotate3d(small, (1, 0, 0)); elastic_deform(small, 1.0, 1.0, 0)  # load compiled code
times, results = {}, {}
for name, fn in cases.items():
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        results[name] = fn()
        runs.append(time.perf_counter() - t0)
    times[name] = sorted(runs)[len(runs) // 2]
np.savez(out, **results)
print(json.dumps({"backend": brainmim.BACKEND, "times": times}))
"""


def run_backend(disable, size, repeat, out):
    env = dict(os.environ)
    env.pop("BRAINMIM_DISABLE_NUMBA", None)
    if disable:
        env["BRAINMIM_DISABLE_NUMBA"] = "1"
    proc = subprocess.run([sys.executable, "-c", WORKER, str(size), str(repeat), str(out)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=96, help="cube edge in voxels")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print the raw report")
    args = ap.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        fast = run_backend(False, args.size, args.repeat, Path(tmp) / "nb.npz")
        slow = run_backend(True, args.size, args.repeat, Path(tmp) / "np.npz")
        a, b = np.load(Path(tmp) / "nb.npz"), np.load(Path(tmp) / "np.npz")
        diffs = {k: float(np.abs(a[k].astype(np.float64) - b[k]).max()) for k in a.files}

    if fast["backend"] != "numba":
        print("numba is not installed; only the numpy backend ran", file=sys.stderr)
    report = {"size": args.size, "repeat": args.repeat, "numba": fast["times"], "numpy": slow["times"],
              "max_abs_diff": diffs}
    if args.json:
        print(json.dumps(report, indent=2))
        return 0
    print(f"{args.size}^3 patch, median of {args.repeat}")
    print(f"{'kernel':<16}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max diff':>11}")
    for name in fast["times"]:
        t_nb, t_np = fast["times"][name], slow["times"][name]
        print(f"{name:<16}{t_nb:>10.3f}{t_np:>10.3f}{t_np / t_nb:>8.1f}x{diffs[name]:>11.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

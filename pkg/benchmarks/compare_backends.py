#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Micro-benchmarks call both kernel modules directly; the end-to-end row
re-runs a short training job in a subprocess with POSEREL_BACKEND forced,
because the backend is fixed at import time.

Usage: python benchmarks/compare_backends.py [--quick]
"""

import argparse
import os
import random
import subprocess
import sys
import time
from array import array

from poserel import _corepy

try:
    from poserel import _core
except ImportError:
    _core = None

# (label, m, k, n): region-feature layer, PPG layer, hidden-square
MATMUL_SHAPES = [
    ("pog layer1 8x2048 @ 2048x256", 8, 2048, 256),
    ("ppg layer1 34x30 @ 30x64", 34, 30, 64),
    ("hidden square 256x256 @ 256x256", 256, 256, 256),
]

TRAIN_SNIPPET = """
import sys, time, tempfile
from poserel.backend import active_backend
from poserel.data import SyntheticConfig, generate_synthetic, load_manifest, dataset_instances
from poserel.engine import TrainConfig, train
with tempfile.TemporaryDirectory() as d:
    manifest = generate_synthetic(SyntheticConfig(num_scenes=60, num_classes=6, seed=1), d)
    _, scenes = load_manifest(manifest)
    data = dataset_instances(scenes)
    config = TrainConfig.for_variant("mgr", epochs={epochs}, seed=0,
                                     pog_hidden=48, ppg_hidden=32)
    started = time.monotonic()
    train(data, config, num_classes=6)
    print(f"{{active_backend()}} {{time.monotonic() - started:.3f}}")
"""


def bench_matmul(kernels, m, k, n, repeats):
    rng = random.Random(0)
    a = array("d", (rng.uniform(-1, 1) for _ in range(m * k)))
    b = array("d", (rng.uniform(-1, 1) for _ in range(k * n)))
    out = array("d", bytes(8 * m * n))
    kernels.matmul(m, k, n, a, b, out)  # warm up
    started = time.perf_counter()
    for _ in range(repeats):
        kernels.matmul(m, k, n, a, b, out)
    return (time.perf_counter() - started) / repeats


def bench_train(backend, epochs):
    env = dict(os.environ, POSEREL_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, "-c", TRAIN_SNIPPET.format(epochs=epochs)],
        capture_output=True, text=True, env=env, check=True)
    name, seconds = proc.stdout.split()
    assert name == backend, f"expected backend {backend}, got {name}"
    return float(seconds)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true",
                        help="fewer repeats and a shorter training run")
    args = parser.parse_args()

    if _core is None:
        print("compiled core is not built; only the pure-Python numbers "
              "are meaningful")

    repeats_fast = 5 if args.quick else 20
    repeats_slow = 1 if args.quick else 3

    print(f"{'kernel':40s} {'compiled':>12s} {'python':>12s} {'speedup':>9s}")
    for label, m, k, n in MATMUL_SHAPES:
        py = bench_matmul(_corepy, m, k, n, repeats_slow)
        if _core is not None:
            cc = bench_matmul(_core, m, k, n, repeats_fast)
            print(f"{label:40s} {cc * 1e3:10.3f}ms {py * 1e3:10.3f}ms "
                  f"{py / cc:8.1f}x")
        else:
            print(f"{label:40s} {'-':>12s} {py * 1e3:10.3f}ms")

    epochs = 1 if args.quick else 3
    py = bench_train("python", epochs)
    line = f"{'train mgr 60 scenes x %d epochs' % epochs:40s} "
    if _core is not None:
        cc = bench_train("compiled", epochs)
        line += f"{cc:11.2f}s {py:11.2f}s {py / cc:8.1f}x"
    else:
        line += f"{'-':>12s} {py:11.2f}s"
    print(line)


if __name__ == "__main__":
    main()

"""Timing comparison between the compiled kernels and the NumPy/pure-Python
fallback on realistic 640x480 inputs.

Usage: python benchmarks/bench_kernels.py [--height 480] [--width 640]
       [--repeats 3] [--blobs 12]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ulcerbench import _kernels
from ulcerbench.postprocess import DetectConfig, detect
from ulcerbench.types import ProbMap


def synth_map(height: int, width: int, blobs: int, seed: int = 5) -> ProbMap:
    gen = np.random.default_rng(seed)
    grid = gen.uniform(0.0, 0.35, (height, width))
    for _ in range(blobs):
        h = int(gen.integers(14, height // 3))
        w = int(gen.integers(14, width // 3))
        y0 = int(gen.integers(0, height - h))
        x0 = int(gen.integers(0, width - w))
        grid[y0 : y0 + h, x0 : x0 + w] = gen.uniform(0.55, 0.99)
    return ProbMap(grid)


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--height", type=int, default=480)
    parser.add_argument("--width", type=int, default=640)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--blobs", type=int, default=12)
    args = parser.parse_args()

    backends = _kernels.available_backends()
    if "c" not in backends:
        print("compiled kernels not built; benchmarking the fallback only")

    pmap = synth_map(args.height, args.width, args.blobs)
    mask = (pmap.values >= 0.5).astype(np.uint8)
    mask.flags.writeable = False
    gt = (pmap.values >= 0.6).astype(np.uint8)
    gt.flags.writeable = False
    cfg = DetectConfig()

    cases = {
        "label_components(8)": lambda k: k.label_components(mask, 8),
        "overlap_sums": lambda k: k.overlap_sums(pmap.values, gt),
        "focal_value_grad": lambda k: k.focal_value_grad(pmap.values, gt, 0.25, 2.0, 1e-7, True),
    }

    print(f"grid {args.height}x{args.width}, best of {args.repeats}")
    header = f"{'kernel':<24}" + "".join(f"{name:>14}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, call in cases.items():
        row = f"{label:<24}"
        timings = {}
        for name, mod in backends.items():
            timings[name] = best_of(lambda: call(mod), args.repeats)
            row += f"{timings[name] * 1e3:>12.2f}ms"
        if len(timings) == 2:
            row += f"{timings['python'] / timings['c']:>9.1f}x"
        print(row)

    # end-to-end detect with each backend selected
    row = f"{'detect (end-to-end)':<24}"
    timings = {}
    for name in backends:
        _kernels.use_backend(name)
        timings[name] = best_of(lambda: detect(pmap, cfg), args.repeats)
        row += f"{timings[name] * 1e3:>12.2f}ms"
    if len(timings) == 2:
        row += f"{timings['python'] / timings['c']:>9.1f}x"
    print(row)

    # cross-backend sanity: identical labels, matching detections
    if len(backends) == 2:
        results = {}
        for name in backends:
            _kernels.use_backend(name)
            results[name] = detect(pmap, cfg)
        assert results["python"] == results["c"], "backends disagree on detections"
        print("cross-backend check: detections identical")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

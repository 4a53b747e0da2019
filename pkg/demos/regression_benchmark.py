"""Ridge regression on a planted ReLU network: exact NTK against its feature maps.

Run with ``python3 demos/regression_benchmark.py``. Takes under a minute.
"""
from __future__ import annotations

from ntksketch.harness import bench

config = {
    "seed": 0,
    "ridge": 1e-2,
    "timing_repeats": 1,
    "dataset": {"kind": "planted-relu", "n": 300, "d": 16},
    "methods": [
        {"name": "exact-ntk", "depth": 2},
        {"name": "ntk-sketch", "depth": 2, "r": 2048, "m": 8192, "n1": 8192, "s": 4096, "s_star": 8192,
         "p": 1, "p_dot": 1},
        {"name": "ntk-rf", "depth": 2, "m0": 256, "m1": 4096, "ms": 1024},
    ],
}

report = bench.run_benchmark(config)
print(bench.format_table(report))

"""Compare the sketched and random-feature NTK maps with the exact kernel.

Run with ``python3 demos/ntk_feature_maps.py``. Takes under a minute.
"""
from __future__ import annotations

import time

import numpy as np

from ntksketch.kernels_exact import ntk_exact
from ntksketch.ntk_sketch import NtkSketch, NtkSketchConfig
from ntksketch.random_features import NtkRandomFeatures, RandomFeatureConfig

DEPTH = 2
D = 32
PAIRS = 200

# ---------------------------------------------------------------------------
# Data: random unit pairs and their exact two-layer NTK values
# ---------------------------------------------------------------------------

rng = np.random.default_rng(0)
Y = rng.standard_normal((PAIRS, D))
Z = rng.standard_normal((PAIRS, D))
Y /= np.linalg.norm(Y, axis=1, keepdims=True)
Z /= np.linalg.norm(Z, axis=1, keepdims=True)
exact = np.array([ntk_exact(y, z, DEPTH) for y, z in zip(Y, Z)])
print(f"exact NTK on {PAIRS} unit pairs: min {exact.min():.3f}, max {exact.max():.3f}")


def report(name, featurize, out_dim):
    t0 = time.perf_counter()
    F = featurize(np.vstack([Y, Z]))
    secs = time.perf_counter() - t0
    est = np.sum(F[:PAIRS] * F[PAIRS:], axis=1)
    rel = np.abs(est - exact) / exact
    print(f"{name:<28} dim {out_dim:>6}  median rel err {np.median(rel):.3f}  "
          f"90th pct {np.quantile(rel, 0.9):.3f}  {secs:.1f} s")


# ---------------------------------------------------------------------------
# Sketch: polynomial degree pinned to 1, widths grow by 2x per row
# ---------------------------------------------------------------------------

for scale in (1, 2, 4):
    cfg = NtkSketchConfig.from_targets(DEPTH, 0.25, 0.1, r=512 * scale, m=2048 * scale, n1=2048 * scale,
                                       s=1024 * scale, s_star=2048 * scale, p=1, p_dot=1)
    sk = NtkSketch(cfg, D, seed=0)
    report(f"NTKSketch m={cfg.m}", sk.featurize, sk.out_dim)

# ---------------------------------------------------------------------------
# Random features at the default sample sizes for eps = 0.3
# ---------------------------------------------------------------------------

cfg = RandomFeatureConfig.from_targets(DEPTH, 0.3, 0.2)
rf = NtkRandomFeatures(cfg, D, seed=0)
report(f"random features m1={cfg.m1}", rf.featurize, rf.out_dim)

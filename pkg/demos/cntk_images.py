"""Sketch the convolutional NTK of small images and watch runtime grow with pixels.

Run with ``python3 demos/cntk_images.py``. Takes under a minute.
"""
from __future__ import annotations

import numpy as np

from ntksketch.cntk_sketch import CntkSketch, CntkSketchConfig, cntksketch_runtime_probe
from ntksketch.kernels_exact import cntk_exact

DEPTH, FILTER = 2, 3

# ---------------------------------------------------------------------------
# Accuracy on 4 x 4 grayscale images
# ---------------------------------------------------------------------------

rng = np.random.default_rng(1)
Y, Z = rng.standard_normal((2, 10, 4, 4, 1))
cfg = CntkSketchConfig.from_targets(DEPTH, FILTER, 0.25, 0.1, r=512, m=2048, n1=2048, s=1024, s_star=2048,
                                    p=1, p_dot=1)
sk = CntkSketch(cfg, (4, 4, 1), seed=0)
FY, FZ = sk.featurize(Y), sk.featurize(Z)
for y, z, fy, fz in zip(Y, Z, FY, FZ):
    exact = cntk_exact(y, z, DEPTH, FILTER)
    print(f"exact {exact:+.4f}   sketch {fy @ fz:+.4f}")

# ---------------------------------------------------------------------------
# Runtime: each 4x step in pixel count should cost about 4x
# ---------------------------------------------------------------------------

small = CntkSketchConfig.from_targets(DEPTH, FILTER, 0.25, 0.1, r=128, m=512, n1=512, s=256, s_star=256,
                                      p=1, p_dot=1)
rows = cntksketch_runtime_probe(small, [8, 16, 32])
for prev, row in zip([None] + rows[:-1], rows):
    ratio = "" if prev is None else f"  x{row['seconds'] / prev['seconds']:.2f}"
    print(f"{row['d1']:>3} x {row['d2']:<3} {row['pixels']:>5} px  {row['seconds'] * 1e3:8.1f} ms{ratio}")

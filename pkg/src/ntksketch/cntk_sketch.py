"""CNTKSketch: per-pixel sketched features for the ReLU CNTK with global average pooling.

The per-pixel work mirrors NTKSketch; patches are formed by stacking the
neighbouring pixel features (zero outside the image), so the cost per image is
linear in the pixel count.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ConfigError, DomainError, NumericError, ShapeError
from .kernels_exact import pixel_norms
from .ntk_sketch import DEFAULT_MAX_DIM, DEFAULT_MEMORY_BUDGET, ntk_default_dims
from .poly_approx import DEFAULT_DEGREE_CAP, build_p_relu, build_pdot_relu, select_degrees
from .sketches import GaussianJl, PolySketch, Srht
from .tensor_core import RngStream, as_tensor, next_pow2

__all__ = ["CntkSketchConfig", "CntkSketch", "patch_stack", "cntksketch_runtime_probe"]


def patch_stack(grid: np.ndarray, q: int) -> np.ndarray:
    """Concatenate the q x q neighbourhood of every pixel: (d1, d2, k) -> (d1, d2, q*q*k).

    Offsets run row-major from (-(q-1)/2, -(q-1)/2); pixels outside the image are zeros.
    """
    half = (q - 1) // 2
    d1, d2, k = grid.shape
    padded = np.zeros((d1 + 2 * half, d2 + 2 * half, k))
    padded[half:half + d1, half:half + d2] = grid
    out = np.empty((d1, d2, q * q * k))
    t = 0
    for a in range(q):
        for b in range(q):
            out[:, :, t * k:(t + 1) * k] = padded[a:a + d1, b:b + d2]
            t += 1
    return out


@dataclass(frozen=True)
class CntkSketchConfig:
    depth: int
    q: int
    eps: float
    delta: float
    s: int
    n1: int
    r: int
    m: int
    s_star: int
    p: int
    p_dot: int
    leaf: str = "srht"
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    max_dim: int = DEFAULT_MAX_DIM
    pixel_chunk: int = 64

    @classmethod
    def from_targets(cls, depth: int, q: int, eps: float, delta: float, dim_scale: float = 1.0,
                     degree_cap: int | None = DEFAULT_DEGREE_CAP, **overrides) -> "CntkSketchConfig":
        if not 0 < eps <= 1 or not 0 < delta < 1:
            raise ConfigError("eps must lie in (0, 1] and delta in (0, 1)")
        dims = {k: math.ceil(v * dim_scale) for k, v in ntk_default_dims(depth, eps, delta).items()}
        p, p_dot = select_degrees(eps, depth, cap=degree_cap)
        fields = dict(depth=depth, q=q, eps=eps, delta=delta, p=p, p_dot=p_dot, **dims)
        fields.update(overrides)
        return cls(**fields)

    def with_dims(self, **changes) -> "CntkSketchConfig":
        return replace(self, **changes)

    def validate(self) -> None:
        if int(self.depth) != self.depth or self.depth < 1:
            raise ConfigError(f"depth must be a positive integer, got {self.depth}")
        if self.q < 1 or self.q % 2 == 0:
            raise ConfigError(f"filter size must be a positive odd integer, got {self.q}")
        for name in ("s", "n1", "r", "m", "s_star", "pixel_chunk"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v}")
            if v > self.max_dim:
                raise ConfigError(f"{name}={v} exceeds the dimension cap {self.max_dim}")
        if self.p < 0 or self.p_dot < 0:
            raise ConfigError("polynomial degrees must be >= 0")
        if self.leaf not in ("srht", "sparse", "identity"):
            raise ConfigError(f"unknown leaf kind {self.leaf!r}")

    def estimated_bytes(self, channels: int) -> int:
        qr = self.q * self.q * self.r
        total = PolySketch.estimate_bytes(2 * self.p + 2, qr, self.m, self.leaf)
        total += PolySketch.estimate_bytes(2 * self.p_dot + 1, qr, self.n1, self.leaf)
        total += PolySketch.estimate_bytes(2, self.s, self.s, self.leaf)
        total += 8 * self.s_star * self.s
        row = max((self.p + 3) * max(self.m, next_pow2(qr)), (self.p_dot + 2) * max(self.n1, next_pow2(qr)))
        return total + 8 * 3 * row

    def as_dict(self) -> dict:
        return asdict(self)


class CntkSketch:
    """Random transforms for CNTKSketch, shared by every pixel, layer and image."""

    def __init__(self, config: CntkSketchConfig, image_shape: tuple[int, int, int], seed: int,
                 jl: GaussianJl | None = None):
        config.validate()
        if len(image_shape) != 3 or min(image_shape) < 1:
            raise ConfigError(f"image shape must be (d1, d2, c), got {image_shape}")
        need = config.estimated_bytes(image_shape[2])
        if need > config.memory_budget:
            raise ConfigError(
                f"sketch stack needs about {need / 2**30:.1f} GiB, above the memory budget "
                f"{config.memory_budget / 2**30:.1f} GiB (m={config.m}, r={config.r}, n1={config.n1}, "
                f"p={config.p}, p'={config.p_dot})"
            )
        self.config = config
        self.image_shape = tuple(int(v) for v in image_shape)
        self.seed = int(seed)
        cfg = config
        qq = cfg.q * cfg.q
        root = RngStream(self.seed).child("cntk-sketch")
        self.c = build_p_relu(cfg.p).coeffs
        self.b = build_pdot_relu(cfg.p_dot).coeffs
        self.c_terms = np.flatnonzero(self.c > 0)
        self.b_terms = np.flatnonzero(self.b > 0)
        self.S = Srht.build(self.image_shape[2], cfg.r, root.child("S"))
        self.Qz = PolySketch(2 * cfg.p + 2, qq * cfg.r, cfg.m, root.child("Qz"), leaf=cfg.leaf)
        self.T = Srht.build(self.c_terms.size * cfg.m, cfg.r, root.child("T"))
        self.Qy = PolySketch(2 * cfg.p_dot + 1, qq * cfg.r, cfg.n1, root.child("Qy"), leaf=cfg.leaf)
        self.W = Srht.build(self.b_terms.size * cfg.n1, cfg.s, root.child("W"))
        self.Q2 = PolySketch(2, cfg.s, cfg.s, root.child("Q2"), leaf=cfg.leaf)
        self.R = Srht.build(qq * (cfg.s + cfg.r), cfg.s, root.child("R"))
        self.G = jl if jl is not None else GaussianJl.build(cfg.s, cfg.s_star, root.child("G"))
        self._sqrt_c = np.sqrt(self.c[self.c_terms])[None, :, None]
        self._sqrt_b = np.sqrt(self.b[self.b_terms])[None, :, None]

    @property
    def out_dim(self) -> int:
        return self.G.rows

    def _pixel_maps(self, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unscaled T(⊕ sqrt(c_l) Z_l) and W(⊕ sqrt(b_l) Y_l) for rows of mu."""
        n = mu.shape[0]
        Z = self.Qz.apply_power(mu, self.c_terms)
        Z *= self._sqrt_c
        phi = self.T.apply(Z.reshape(n, -1))
        del Z
        Y = self.Qy.apply_power(mu, self.b_terms)
        Y *= self._sqrt_b
        return phi, self.W.apply(Y.reshape(n, -1))

    def trace(self, image) -> dict:
        """Per-layer pixel grids phi, phi_dot, psi and the norms N for one image."""
        x = as_tensor(image, 3, "image")
        if x.shape != self.image_shape:
            raise ShapeError(f"sketch built for images of shape {self.image_shape}, got {x.shape}")
        cfg = self.config
        q, L = cfg.q, cfg.depth
        d1, d2, _ = x.shape
        npix = d1 * d2
        norms = pixel_norms(x, q, L)
        if not np.any(norms[0] > 0):
            raise DomainError("CNTKSketch input image is identically zero")
        phi = self.S.apply(x)
        psi = np.zeros((d1, d2, cfg.s))
        out = {"norms": norms, "phi": [phi], "phi_dot": [None], "psi": [psi]}
        for h in range(1, L + 1):
            nh = norms[h].reshape(npix)
            live = nh > 0
            inv_root = np.zeros(npix)
            inv_root[live] = 1.0 / np.sqrt(nh[live])
            mu_all = patch_stack(phi, q).reshape(npix, -1)
            phi_next = np.empty((npix, cfg.r))
            phi_dot = np.empty((npix, cfg.s))
            for lo in range(0, npix, cfg.pixel_chunk):
                hi = min(npix, lo + cfg.pixel_chunk)
                mu = mu_all[lo:hi] * inv_root[lo:hi, None]
                a, b = self._pixel_maps(mu)
                phi_next[lo:hi] = a
                phi_dot[lo:hi] = b
            phi_next *= (np.sqrt(nh) / q)[:, None]
            phi_dot *= 1.0 / q
            prod = self.Q2.apply_distinct([psi.reshape(npix, cfg.s), phi_dot])
            if h < L:
                eta = np.concatenate([prod, phi_next], axis=1).reshape(d1, d2, -1)
                psi = self.R.apply(patch_stack(eta, q).reshape(npix, -1)).reshape(d1, d2, cfg.s)
            else:
                psi = prod.reshape(d1, d2, cfg.s)
            phi = phi_next.reshape(d1, d2, cfg.r)
            out["phi"].append(phi)
            out["phi_dot"].append(phi_dot.reshape(d1, d2, cfg.s))
            out["psi"].append(psi)
        return out

    def featurize_one(self, image) -> np.ndarray:
        tr = self.trace(image)
        d1, d2 = self.image_shape[:2]
        pooled = tr["psi"][-1].reshape(d1 * d2, -1).sum(axis=0) / (d1 * d2)
        feat = self.G.apply(pooled)
        if not np.all(np.isfinite(feat)):
            raise NumericError("CNTKSketch produced non-finite features; sketch dims are too small for the degrees")
        return feat

    def featurize(self, images) -> np.ndarray:
        """Features of one image (d1, d2, c) or a batch (n, d1, d2, c)."""
        imgs = as_tensor(images, (3, 4), "images")
        if imgs.ndim == 3:
            return self.featurize_one(imgs)
        return np.stack([self.featurize_one(img) for img in imgs]) if len(imgs) else np.empty((0, self.out_dim))

    __call__ = featurize


def cntksketch_runtime_probe(config: CntkSketchConfig, sizes, channels: int = 1, seed: int = 0,
                             repeats: int = 3) -> list[dict]:
    """Median wall-clock seconds to featurize one random image per size.

    ``sizes`` holds side lengths d (for d x d images) or (d1, d2) pairs. Each
    size gets its own stack, built outside the timed region.
    """
    shapes = [(int(v), int(v)) if np.isscalar(v) else (int(v[0]), int(v[1])) for v in sizes]
    if len(shapes) < 3:
        raise ConfigError("runtime probe needs at least three image sizes")
    rng = np.random.default_rng(seed)
    rows = []
    for d1, d2 in shapes:
        stack = CntkSketch(config, (d1, d2, channels), seed)
        img = rng.standard_normal((d1, d2, channels))
        stack.featurize_one(img)  # warm-up: JIT compilation and allocator
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            stack.featurize_one(img)
            times.append(time.perf_counter() - t0)
        rows.append({"d1": d1, "d2": d2, "pixels": d1 * d2, "seconds": float(np.median(times))})
    return rows

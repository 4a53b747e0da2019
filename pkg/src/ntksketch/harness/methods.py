"""Method registry: turns a method name plus parameters into a feature map or an exact kernel."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..cntk_sketch import CntkSketch, CntkSketchConfig
from ..errors import ConfigError
from ..kernels_exact import cntk_gram, ntk_gram
from ..ntk_sketch import NtkSketch, NtkSketchConfig
from ..random_features import NtkRandomFeatures, RandomFeatureConfig

__all__ = ["METHODS", "FEATURE_METHODS", "KERNEL_METHODS", "Method", "build_method", "parallel_rows"]

FEATURE_METHODS = ("ntk-sketch", "ntk-rf", "ntk-rf-leverage", "cntk-sketch")
KERNEL_METHODS = ("exact-ntk", "exact-cntk")
METHODS = FEATURE_METHODS + KERNEL_METHODS
IMAGE_METHODS = ("cntk-sketch", "exact-cntk")

_NTK_DIMS = ("s", "n1", "r", "m", "s_star", "p", "p_dot")
_RF_DIMS = ("m0", "m1", "ms")


def parallel_rows(fn, X: np.ndarray, out_dim: int, workers: int = 1, chunk: int = 64) -> np.ndarray:
    """Apply a row-wise map over chunks of X with a thread pool; output order matches input."""
    n = X.shape[0]
    out = np.empty((n, out_dim))
    spans = [(lo, min(n, lo + chunk)) for lo in range(0, n, chunk)]
    if workers <= 1 or len(spans) <= 1:
        for lo, hi in spans:
            out[lo:hi] = fn(X[lo:hi])
        return out

    def run(span):
        lo, hi = span
        out[lo:hi] = fn(X[lo:hi])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(run, spans))
    return out


@dataclass
class Method:
    """A built method: either ``featurize`` (explicit features) or ``gram`` (exact kernel) is set."""

    name: str
    params: dict
    config: object = None
    mapper: object = None
    workers: int = 1

    @property
    def is_kernel(self) -> bool:
        return self.name in KERNEL_METHODS

    @property
    def feature_dim(self) -> int | None:
        return None if self.mapper is None else int(self.mapper.out_dim)

    def featurize(self, X) -> np.ndarray:
        if self.mapper is None:
            raise ConfigError(f"method {self.name} has no explicit feature map")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            return np.empty((0, self.feature_dim))
        return parallel_rows(self.mapper.featurize, X, self.feature_dim, self.workers,
                             chunk=int(self.params.get("row_chunk", 64)))

    def gram(self, X, Z=None) -> np.ndarray:
        depth = int(self.params["depth"])
        if self.name == "exact-ntk":
            return ntk_gram(X, depth, Z)
        if self.name == "exact-cntk":
            return cntk_gram(X, depth, int(self.params.get("filter_size", 3)), Z)
        raise ConfigError(f"method {self.name} is not an exact kernel")


def _overrides(params: dict, keys) -> dict:
    return {k: int(params[k]) for k in keys if params.get(k) is not None}


def build_method(name: str, params: dict, input_shape: tuple[int, ...], seed: int) -> Method:
    """Instantiate a method for inputs of the given shape ((d,) or (d1, d2, c))."""
    if name not in METHODS:
        raise ConfigError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    params = dict(params)
    params.setdefault("depth", 2)
    images = len(input_shape) == 3
    if (name in IMAGE_METHODS) != images:
        want = "images" if name in IMAGE_METHODS else "vectors"
        raise ConfigError(f"method {name} needs {want}, got inputs of shape {input_shape}")
    depth = int(params["depth"])
    eps = float(params.get("eps", 0.25))
    delta = float(params.get("delta", 0.1))
    scale = float(params.get("dim_scale", 1.0))
    workers = int(params.get("workers", 1))
    if name in KERNEL_METHODS:
        if depth < 1:
            raise ConfigError("depth must be >= 1")
        return Method(name, params, workers=workers)
    if name == "ntk-sketch":
        extra = {"leaf": params["leaf"]} if "leaf" in params else {}
        cfg = NtkSketchConfig.from_targets(depth, eps, delta, dim_scale=scale, **_overrides(params, _NTK_DIMS), **extra)
        return Method(name, params, cfg, NtkSketch(cfg, input_shape[0], seed), workers)
    if name in ("ntk-rf", "ntk-rf-leverage"):
        mode = "leverage" if name == "ntk-rf-leverage" else "plain"
        cfg = RandomFeatureConfig.from_targets(depth, eps, delta, dim_scale=scale, mode=mode,
                                               **_overrides(params, _RF_DIMS))
        return Method(name, params, cfg, NtkRandomFeatures(cfg, input_shape[0], seed), workers)
    q = int(params.get("filter_size", 3))
    extra = {"leaf": params["leaf"]} if "leaf" in params else {}
    cfg = CntkSketchConfig.from_targets(depth, q, eps, delta, dim_scale=scale, **_overrides(params, _NTK_DIMS),
                                        **extra)
    return Method(name, params, cfg, CntkSketch(cfg, tuple(input_shape), seed), workers)

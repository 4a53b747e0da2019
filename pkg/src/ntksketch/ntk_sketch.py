"""NTKSketch: an oblivious feature map whose inner products approximate the ReLU NTK.

Each layer replaces the arc-cosine kernels by their truncated Taylor
polynomials and sketches every monomial with a shared PolySketch, so the
whole map is a fixed composition of linear sketches and tensor products.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ConfigError, DomainError, NumericError, ShapeError
from .poly_approx import DEFAULT_DEGREE_CAP, build_p_relu, build_pdot_relu, select_degrees
from .sketches import GaussianJl, PolySketch, Srht
from .tensor_core import RngStream, as_tensor, next_pow2

__all__ = ["NtkSketchConfig", "NtkSketch", "ntk_default_dims", "ntksketch_build"]

DEFAULT_MEMORY_BUDGET = 3 * 2**30
DEFAULT_MAX_DIM = 2**22


def ntk_default_dims(depth: int, eps: float, delta: float) -> dict:
    """Sketch dimensions with every hidden constant set to one."""
    L = depth
    return {
        "s": math.ceil(L**2 / eps**2),
        "n1": math.ceil(L**4 / eps**4),
        "r": math.ceil(L**6 / eps**4),
        "m": math.ceil(L**8 / eps ** (16.0 / 3.0)),
        "s_star": math.ceil(math.log(1.0 / delta) / eps**2),
    }


@dataclass(frozen=True)
class NtkSketchConfig:
    depth: int
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

    @classmethod
    def from_targets(cls, depth: int, eps: float, delta: float, dim_scale: float = 1.0,
                     degree_cap: int | None = DEFAULT_DEGREE_CAP, **overrides) -> "NtkSketchConfig":
        """Defaults from (L, eps, delta); ``dim_scale`` multiplies every dimension."""
        _check_targets(depth, eps, delta)
        dims = {k: math.ceil(v * dim_scale) for k, v in ntk_default_dims(depth, eps, delta).items()}
        p, p_dot = select_degrees(eps, depth, cap=degree_cap)
        fields = dict(depth=depth, eps=eps, delta=delta, p=p, p_dot=p_dot, **dims)
        fields.update(overrides)
        return cls(**fields)

    def with_dims(self, **changes) -> "NtkSketchConfig":
        return replace(self, **changes)

    def validate(self) -> None:
        _check_targets(self.depth, self.eps, self.delta)
        for name in ("s", "n1", "r", "m", "s_star"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v}")
            if v > self.max_dim:
                raise ConfigError(f"{name}={v} exceeds the dimension cap {self.max_dim}")
        if self.p < 0 or self.p_dot < 0:
            raise ConfigError("polynomial degrees must be >= 0")
        if self.leaf not in ("srht", "sparse", "identity"):
            raise ConfigError(f"unknown leaf kind {self.leaf!r}")

    def estimated_bytes(self, d: int) -> int:
        """Transform storage plus per-row working memory of one featurization."""
        nz_c = self.p + 3
        nz_b = self.p_dot + 2
        total = PolySketch.estimate_bytes(2 * self.p + 2, self.r, self.m, self.leaf)
        total += PolySketch.estimate_bytes(2 * self.p_dot + 1, self.r, self.n1, self.leaf)
        total += PolySketch.estimate_bytes(2, self.s, self.s, self.leaf)
        total += 8 * self.s_star * self.s
        # a single input row still materialises every Z and Y block
        row = max(nz_c * max(self.m, next_pow2(self.r)), nz_b * max(self.n1, next_pow2(self.r)))
        return total + 8 * 3 * row

    def as_dict(self) -> dict:
        return asdict(self)


def _check_targets(depth, eps, delta):
    if int(depth) != depth or depth < 1:
        raise ConfigError(f"depth must be a positive integer, got {depth}")
    if not 0.0 < eps <= 1.0:
        raise ConfigError(f"eps must lie in (0, 1], got {eps}")
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")


class NtkSketch:
    """The full set of random transforms for one NTKSketch feature map.

    Built once from a seed and then applied to any number of inputs, so all
    inputs share the same randomness.
    """

    def __init__(self, config: NtkSketchConfig, d: int, seed: int, jl: GaussianJl | None = None):
        config.validate()
        if d < 1:
            raise ConfigError("input dimension must be >= 1")
        need = config.estimated_bytes(d)
        if need > config.memory_budget:
            raise ConfigError(
                f"sketch stack needs about {need / 2**30:.1f} GiB, above the memory budget "
                f"{config.memory_budget / 2**30:.1f} GiB (m={config.m}, r={config.r}, n1={config.n1}, "
                f"p={config.p}, p'={config.p_dot})"
            )
        self.config = config
        self.d = int(d)
        self.seed = int(seed)
        cfg = config
        root = RngStream(self.seed).child("ntk-sketch")
        self.c = build_p_relu(cfg.p).coeffs
        self.b = build_pdot_relu(cfg.p_dot).coeffs
        self.c_terms = np.flatnonzero(self.c > 0)
        self.b_terms = np.flatnonzero(self.b > 0)

        self.Q1 = PolySketch(1, d, cfg.r, root.child("Q1"), leaf=cfg.leaf)
        self.V = Srht.build(cfg.r, cfg.s, root.child("V"))
        self.Qz = PolySketch(2 * cfg.p + 2, cfg.r, cfg.m, root.child("Qz"), leaf=cfg.leaf)
        self.T = Srht.build(self.c_terms.size * cfg.m, cfg.r, root.child("T"))
        self.Qy = PolySketch(2 * cfg.p_dot + 1, cfg.r, cfg.n1, root.child("Qy"), leaf=cfg.leaf)
        self.W = Srht.build(self.b_terms.size * cfg.n1, cfg.s, root.child("W"))
        self.Q2 = PolySketch(2, cfg.s, cfg.s, root.child("Q2"), leaf=cfg.leaf)
        self.R = Srht.build(cfg.s + cfg.r, cfg.s, root.child("R"))
        self.G = jl if jl is not None else GaussianJl.build(cfg.s, cfg.s_star, root.child("G"))
        if self.G.d_in != cfg.s:
            raise ConfigError("JL override must have s columns")
        self._sqrt_c = np.sqrt(self.c[self.c_terms])[None, :, None]
        self._sqrt_b = np.sqrt(self.b[self.b_terms])[None, :, None]

    @property
    def out_dim(self) -> int:
        return self.G.rows

    def _layer_inputs(self, X: np.ndarray):
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0):
            raise DomainError("NTKSketch input has zero norm")
        return norms

    def next_layer(self, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(phi, phi_dot) of the next layer from the current phi; rows are inputs."""
        n = phi.shape[0]
        Z = self.Qz.apply_power(phi, self.c_terms)
        Z *= self._sqrt_c
        phi_next = self.T.apply(Z.reshape(n, -1))
        del Z
        Y = self.Qy.apply_power(phi, self.b_terms)
        Y *= self._sqrt_b
        phi_dot = self.W.apply(Y.reshape(n, -1))
        return phi_next, phi_dot

    def trace(self, X) -> dict:
        """All intermediate phi, phi_dot and psi per layer (for diagnostics and tests)."""
        X = self._check(X)
        norms = self._layer_inputs(X)
        phi = self.Q1.apply_distinct([X]) / norms[:, None]
        psi = self.V.apply(phi)
        out = {"phi": [phi], "phi_dot": [None], "psi": [psi], "norms": norms}
        for _ in range(self.config.depth):
            phi, phi_dot = self.next_layer(phi)
            psi = self.R.apply(np.concatenate([self.Q2.apply_distinct([psi, phi_dot]), phi], axis=1))
            out["phi"].append(phi)
            out["phi_dot"].append(phi_dot)
            out["psi"].append(psi)
        return out

    def _check(self, X) -> np.ndarray:
        X = as_tensor(X, (1, 2), "x")
        if X.shape[-1] != self.d:
            raise ShapeError(f"sketch built for dimension {self.d}, got {X.shape[-1]}")
        return X

    def _row_chunk(self) -> int:
        cfg = self.config
        width = max(self.c_terms.size * cfg.m, self.b_terms.size * cfg.n1, 4 * next_pow2(cfg.r))
        return max(1, (64 * 2**20) // (8 * 4 * width))

    def featurize(self, X) -> np.ndarray:
        """Feature vectors of the rows of X (or of a single vector)."""
        X = self._check(X)
        single = X.ndim == 1
        X2 = X[None] if single else X
        out = np.empty((X2.shape[0], self.out_dim))
        step = self._row_chunk()
        for lo in range(0, X2.shape[0], step):
            psi = self.trace(X2[lo:lo + step])
            out[lo:lo + step] = self.G.apply(psi["psi"][-1]) * psi["norms"][:, None]
        if not np.all(np.isfinite(out)):
            raise NumericError("NTKSketch produced non-finite features; sketch dims are too small for the degrees")
        return out[0] if single else out

    __call__ = featurize


def ntksketch_build(config: NtkSketchConfig, d: int, seed: int) -> NtkSketch:
    return NtkSketch(config, d, seed)

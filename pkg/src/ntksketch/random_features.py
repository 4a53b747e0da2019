"""Arc-cosine random features composed across layers, plus the leverage-score variant.

Layer weights are Gaussian matrices generated in fixed row blocks from named
RNG streams. Small matrices are materialized once; large ones are regenerated
block by block during featurization, which keeps memory bounded while every
input still sees exactly the same weights.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg
from scipy.special import ndtr

from .errors import ConfigError, DomainError, NumericError, ShapeError
from .sketches import PolySketch
from .tensor_core import RngStream, as_tensor

__all__ = [
    "RandomFeatureConfig",
    "BlockWeights",
    "NtkRandomFeatures",
    "phi0_apply",
    "phi1_apply",
    "phi1_leverage_apply",
    "conditional_cdf",
    "invert_conditional_cdf",
    "gibbs_sample_directions",
    "statistical_dimension",
    "spectral_audit",
    "rf_default_dims",
    "leverage_sample_sizes",
]

BLOCK_ROWS = 1024
DEFAULT_CACHE_BYTES = 512 * 2**20


def rf_default_dims(depth: int, eps: float, delta: float) -> dict:
    """Feature counts for pointwise (1 ± eps) accuracy with hidden constants set to one."""
    L = depth
    log_l = math.log(L / delta)
    return {
        "m0": math.ceil(L**2 / eps**2 * log_l),
        "m1": math.ceil(L**6 / eps**4 * log_l),
        "ms": math.ceil(L**2 / eps**2 * math.log(L / (eps * delta)) ** 3),
    }


def leverage_sample_sizes(n: int, d: int, lam: float, eps: float, delta: float,
                          stat_dim: float, rank: int | None = None,
                          x_norm_sq: float | None = None) -> dict:
    """Advisory feature counts for a (1 ± eps) spectral approximation at ridge ``lam``.

    ``stat_dim`` is the statistical dimension of the kernel matrix at ``lam``;
    ``x_norm_sq`` the squared operator norm of the data matrix.
    """
    if lam <= 0:
        raise DomainError("ridge must be positive")
    log_term = math.log(16 * max(stat_dim, 1e-12) / delta)
    m0 = 8.0 / 3.0 * n / (lam * eps**2) * log_term
    options = [v for v in ((rank**2 if rank is not None else None),
                           (x_norm_sq / lam if x_norm_sq is not None else None)) if v is not None]
    if not options:
        raise ConfigError("need the data rank or its squared operator norm")
    m1 = 8.0 / 3.0 * d / eps**2 * min(options) * log_term
    ms = 1.0 / eps**2 * n / (1 + lam) * math.log(n / (eps * delta)) ** 3
    return {"m0": math.ceil(m0), "m1": math.ceil(m1), "ms": math.ceil(ms)}


# ---------------------------------------------------------------------------
# Gibbs sampler for the norm-weighted Gaussian density
# ---------------------------------------------------------------------------

_SQRT_2PI = math.sqrt(2 * math.pi)
BISECT_LO, BISECT_HI, BISECT_TOL = -12.0, 12.0, 1e-10
_TINY = float(np.nextafter(0.0, 1.0))


def conditional_cdf(x, z):
    """CDF of one coordinate given the squared norm z of the others."""
    x = np.asarray(x, dtype=np.float64)
    return ndtr(x) - x * np.exp(-0.5 * x * x) / (_SQRT_2PI * (np.asarray(z) + 1.0))


def invert_conditional_cdf(u, z, tol: float = BISECT_TOL) -> np.ndarray:
    """Solve conditional_cdf(x, z) = u for x by vectorized bisection on [-12, 12]."""
    u = np.asarray(u, dtype=np.float64)
    z = np.broadcast_to(np.asarray(z, dtype=np.float64), u.shape)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(z))):
        raise NumericError("inverse CDF got non-finite input")
    if np.any(z < 0):
        raise NumericError(f"inverse CDF needs z >= 0, got min z = {z.min()}")
    if np.any((u <= 0) | (u >= 1)):
        raise NumericError("inverse CDF target must lie strictly between 0 and 1")
    lo = np.full(u.shape, BISECT_LO)
    hi = np.full(u.shape, BISECT_HI)
    f_lo = conditional_cdf(lo, z)
    f_hi = conditional_cdf(hi, z)
    if np.any((u < f_lo) | (u > f_hi)):
        bad = np.flatnonzero(((u < f_lo) | (u > f_hi)).ravel())[0]
        raise NumericError(
            f"inverse CDF target u={u.ravel()[bad]!r} outside the bracket [-12, 12] (z={z.ravel()[bad]!r})"
        )
    steps = math.ceil(math.log2((BISECT_HI - BISECT_LO) / tol)) + 1
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        below = conditional_cdf(mid, z) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    # the density is symmetric, so the median is exactly 0; at z = 0 the CDF is
    # flat to third order there and bisection alone would stop ~1e-5 away
    return np.where(u == 0.5, 0.0, 0.5 * (lo + hi))


def gibbs_sample_directions(d: int, count: int, sweeps: int, stream: RngStream) -> np.ndarray:
    """``count`` approximate draws from q(w) ∝ |w|^2 N(w; 0, I_d), chains run in parallel.

    Each chain starts from a standard Gaussian and resamples coordinates in
    index order, ``sweeps`` times.
    """
    if d < 1 or sweeps < 1:
        raise ConfigError("Gibbs sampler needs d >= 1 and at least one sweep")
    gen = stream.generator()
    w = gen.standard_normal((count, d))
    for _ in range(sweeps):
        sq = np.sum(w * w, axis=1)
        for j in range(d):
            rest = np.maximum(sq - w[:, j] ** 2, 0.0)
            w[:, j] = invert_conditional_cdf(gen.uniform(_TINY, 1.0, count), rest)
            sq = rest + w[:, j] ** 2
    return w


# ---------------------------------------------------------------------------
# Layer weights
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class BlockWeights:
    """A rows x cols weight matrix defined block-wise by RNG streams.

    ``kind`` is "gaussian" (i.i.d. N(0, 1) entries) or "leverage" (unit rows
    from the norm-weighted density via Gibbs sampling).
    """

    rows: int
    cols: int
    stream: RngStream
    kind: str = "gaussian"
    sweeps: int = 1
    cache_bytes: int = DEFAULT_CACHE_BYTES

    def __post_init__(self):
        self._cache = None
        if self.rows * self.cols * 8 <= self.cache_bytes:
            self._cache = np.vstack([blk for _, blk in self._generate()])

    def _block(self, b: int, size: int) -> np.ndarray:
        st = self.stream.child("block", b)
        if self.kind == "gaussian":
            return st.generator().standard_normal((size, self.cols))
        w = gibbs_sample_directions(self.cols, size, self.sweeps, st)
        return w / np.linalg.norm(w, axis=1, keepdims=True)

    def _generate(self):
        for b, lo in enumerate(range(0, self.rows, BLOCK_ROWS)):
            yield lo, self._block(b, min(BLOCK_ROWS, self.rows - lo))

    def blocks(self):
        if self._cache is not None:
            yield 0, self._cache
        else:
            yield from self._generate()

    def matrix(self) -> np.ndarray:
        return self._cache if self._cache is not None else np.vstack([blk for _, blk in self._generate()])

    def project(self, X: np.ndarray, activation) -> np.ndarray:
        """activation(X @ W^T), streamed over row blocks of W."""
        if X.shape[-1] != self.cols:
            raise ShapeError(f"weights expect input dim {self.cols}, got {X.shape[-1]}")
        out = np.empty(X.shape[:-1] + (self.rows,))
        for lo, blk in self.blocks():
            out[..., lo:lo + blk.shape[0]] = activation(X @ blk.T)
        return out


def _step(v):
    return (v > 0).astype(np.float64)


def _relu(v):
    return np.maximum(v, 0.0)


def phi0_apply(weights: BlockWeights, X) -> np.ndarray:
    """sqrt(2/m0) Step(W x); Step(0) = 0."""
    X = np.asarray(X, dtype=np.float64)
    return math.sqrt(2.0 / weights.rows) * weights.project(X, _step)


def phi1_apply(weights: BlockWeights, X) -> np.ndarray:
    """sqrt(2/m1) ReLU(W x)."""
    X = np.asarray(X, dtype=np.float64)
    return math.sqrt(2.0 / weights.rows) * weights.project(X, _relu)


def phi1_leverage_apply(weights: BlockWeights, X) -> np.ndarray:
    """sqrt(2d/m1) ReLU(U x) with unit directions U drawn from the norm-weighted density."""
    X = np.asarray(X, dtype=np.float64)
    return math.sqrt(2.0 * weights.cols / weights.rows) * weights.project(X, _relu)


# ---------------------------------------------------------------------------
# Feature map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomFeatureConfig:
    depth: int
    m0: int
    m1: int
    ms: int
    mode: str = "plain"
    gibbs_sweeps: int = 1
    leaf: str = "srht"
    cache_bytes: int = DEFAULT_CACHE_BYTES

    @classmethod
    def from_targets(cls, depth: int, eps: float, delta: float, dim_scale: float = 1.0, **overrides):
        if not 0 < eps <= 1 or not 0 < delta < 1:
            raise ConfigError("eps must lie in (0, 1] and delta in (0, 1)")
        dims = {k: math.ceil(v * dim_scale) for k, v in rf_default_dims(depth, eps, delta).items()}
        dims.update(overrides)
        return cls(depth=depth, **dims)

    def validate(self) -> None:
        if int(self.depth) != self.depth or self.depth < 1:
            raise ConfigError(f"depth must be a positive integer, got {self.depth}")
        for name in ("m0", "m1", "ms"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v}")
        if self.mode not in ("plain", "leverage"):
            raise ConfigError(f"mode must be 'plain' or 'leverage', got {self.mode!r}")
        if self.gibbs_sweeps < 1:
            raise ConfigError("Gibbs sweeps must be >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


class NtkRandomFeatures:
    """Random-feature map whose inner products estimate the ReLU NTK.

    Per layer, ``phi`` comes from ReLU features of the previous ``phi``,
    ``phi_dot`` from Step features, and ``psi`` stacks ``phi`` with a degree-2
    sketch of ``phi_dot ⊗ psi_prev``. The output is ``|x| psi`` of length m1 + ms.
    """

    def __init__(self, config: RandomFeatureConfig, d: int, seed: int):
        config.validate()
        if d < 1:
            raise ConfigError("input dimension must be >= 1")
        self.config = config
        self.d = int(d)
        self.seed = int(seed)
        root = RngStream(self.seed).child("ntk-rf")
        self.layers = []
        d_phi, d_psi = self.d, self.d
        for layer in range(1, config.depth + 1):
            lr = root.child("layer", layer)
            w0 = BlockWeights(config.m0, d_phi, lr.child("W0"), cache_bytes=config.cache_bytes)
            w1 = BlockWeights(config.m1, d_phi, lr.child("W1"),
                              kind="leverage" if config.mode == "leverage" else "gaussian",
                              sweeps=config.gibbs_sweeps, cache_bytes=config.cache_bytes)
            q2 = PolySketch(2, max(config.m0, d_psi), config.ms, lr.child("Q2"), leaf=config.leaf)
            self.layers.append({"W0": w0, "W1": w1, "Q2": q2, "d_in": d_phi, "d_psi": d_psi})
            d_phi, d_psi = config.m1, config.m1 + config.ms

    @property
    def out_dim(self) -> int:
        return self.config.m1 + self.config.ms

    def featurize(self, X) -> np.ndarray:
        X = as_tensor(X, (1, 2), "x")
        if X.shape[-1] != self.d:
            raise ShapeError(f"features built for dimension {self.d}, got {X.shape[-1]}")
        single = X.ndim == 1
        X2 = X[None] if single else X
        norms = np.linalg.norm(X2, axis=1)
        if np.any(norms == 0):
            raise DomainError("random-feature input has zero norm")
        phi = X2 / norms[:, None]
        psi = phi
        for layer in self.layers:
            phi_dot = phi0_apply(layer["W0"], phi)
            if self.config.mode == "leverage":
                phi_next = phi1_leverage_apply(layer["W1"], phi)
            else:
                phi_next = phi1_apply(layer["W1"], phi)
            sk = layer["Q2"].apply_distinct([phi_dot, psi])
            psi = np.concatenate([phi_next, sk], axis=1)
            phi = phi_next
        out = psi * norms[:, None]
        return out[0] if single else out

    __call__ = featurize


# ---------------------------------------------------------------------------
# Spectral utilities
# ---------------------------------------------------------------------------


def _check_symmetric(K: np.ndarray) -> np.ndarray:
    K = as_tensor(K, 2, "kernel matrix")
    if K.shape[0] != K.shape[1]:
        raise ShapeError(f"kernel matrix must be square, got {K.shape}")
    scale = max(1.0, float(np.max(np.abs(K))) if K.size else 1.0)
    if not np.allclose(K, K.T, atol=1e-10 * scale, rtol=0):
        raise ShapeError("kernel matrix is not symmetric")
    return 0.5 * (K + K.T)


def statistical_dimension(K, lam: float) -> float:
    """tr(K (K + lam I)^{-1}) from the eigenvalues of K (negative round-off clipped to 0)."""
    if lam <= 0:
        raise DomainError("ridge must be positive")
    K = _check_symmetric(K)
    ev = np.clip(np.linalg.eigvalsh(K), 0.0, None)
    return float(np.sum(ev / (ev + lam)))


def spectral_audit(features, K, lam: float) -> tuple[float, float]:
    """Extreme eigenvalues of (K + lam I)^{-1/2} (F F^T + lam I) (K + lam I)^{-1/2}.

    ``features`` holds one feature vector per row, so F F^T is the approximate
    kernel matrix.
    """
    if lam <= 0:
        raise DomainError("ridge must be positive")
    K = _check_symmetric(K)
    F = as_tensor(features, 2, "features")
    if F.shape[0] != K.shape[0]:
        raise ShapeError(f"{F.shape[0]} feature rows vs kernel of size {K.shape[0]}")
    n = K.shape[0]
    approx = F @ F.T + lam * np.eye(n)
    ev = scipy.linalg.eigh(0.5 * (approx + approx.T), K + lam * np.eye(n), eigvals_only=True)
    return float(ev[0]), float(ev[-1])

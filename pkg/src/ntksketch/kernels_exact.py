"""Exact ReLU NTK and CNTK values.

These closed-form recursions are the oracles every sketch and random-feature
map is measured against.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .tensor_core import as_tensor

__all__ = [
    "kappa0",
    "kappa1",
    "ReluNtkTable",
    "relu_ntk_function",
    "relu_ntk_value",
    "ntk_exact",
    "ntk_gram",
    "box_sum",
    "pixel_norms",
    "CntkState",
    "cntk_exact",
    "cntk_gram",
]


def _clamped(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(np.isnan(a)):
        raise DomainError("arc-cosine kernel argument is NaN")
    return np.clip(a, -1.0, 1.0)


def kappa0(alpha):
    """Zeroth-order arc-cosine kernel (pi - arccos a) / pi."""
    a = _clamped(alpha)
    out = (np.pi - np.arccos(a)) / np.pi
    return out if out.ndim else float(out)


def kappa1(alpha):
    """First-order arc-cosine kernel (sqrt(1 - a^2) + a (pi - arccos a)) / pi."""
    a = _clamped(alpha)
    out = (np.sqrt(1.0 - a * a) + a * (np.pi - np.arccos(a))) / np.pi
    return out if out.ndim else float(out)


@dataclass
class ReluNtkTable:
    """Per-layer values of the ReLU NTK recursion at one (or an array of) alpha.

    Index ``l`` of each list holds layer ``l``; ``sigma_dot[0]`` is unused (NaN).
    """

    depth: int
    alpha: np.ndarray
    sigma: list = field(default_factory=list)
    sigma_dot: list = field(default_factory=list)
    k: list = field(default_factory=list)

    @property
    def value(self):
        return self.k[self.depth]


def relu_ntk_function(alpha, depth: int) -> ReluNtkTable:
    if depth < 0:
        raise DomainError(f"depth must be >= 0, got {depth}")
    a = _clamped(alpha)
    table = ReluNtkTable(depth=depth, alpha=a)
    sig = a
    k = a
    table.sigma.append(sig)
    table.sigma_dot.append(np.full_like(a, np.nan))
    table.k.append(k)
    for _ in range(depth):
        sdot = np.asarray(kappa0(sig))
        sig = np.asarray(kappa1(sig))
        k = k * sdot + sig
        table.sigma.append(sig)
        table.sigma_dot.append(sdot)
        table.k.append(k)
    return table


def relu_ntk_value(alpha, depth: int):
    """K^(L)(alpha) only."""
    v = relu_ntk_function(alpha, depth).value
    return v if np.ndim(v) else float(v)


# Cosines within this distance of +-1 are treated as exactly +-1. kappa0 has a
# square-root singularity at 1, so one ulp of rounding in a self-similarity
# would otherwise move kappa0 by about 1e-8.
UNIT_SNAP = 64 * np.finfo(np.float64).eps


def snap_unit(cos):
    c = np.asarray(cos, dtype=np.float64)
    return np.where(np.abs(c) >= 1.0 - UNIT_SNAP, np.sign(c), c)


def _norms(X, name):
    n = np.linalg.norm(X, axis=-1)
    if np.any(n == 0):
        raise DomainError(f"{name}: zero-norm input has no defined NTK angle")
    return n


def ntk_exact(y, z, depth: int) -> float:
    """Theta(y, z) = |y| |z| K^(L)(<y, z> / (|y| |z|))."""
    y = as_tensor(y, 1, "y")
    z = as_tensor(z, 1, "z")
    if y.shape != z.shape:
        raise ShapeError(f"dimension mismatch {y.shape} vs {z.shape}")
    ny = _norms(y, "y")
    nz = _norms(z, "z")
    return float(ny * nz * relu_ntk_value(snap_unit(np.dot(y, z) / (ny * nz)), depth))


def ntk_gram(X, depth: int, Z=None) -> np.ndarray:
    """NTK Gram matrix of rows of X (or cross matrix against rows of Z)."""
    X = as_tensor(X, 2, "X")
    nx = _norms(X, "X")
    if Z is None:
        Zm, nz = X, nx
    else:
        Zm = as_tensor(Z, 2, "Z")
        if Zm.shape[1] != X.shape[1]:
            raise ShapeError("X and Z column counts differ")
        nz = _norms(Zm, "Z")
    scale = np.outer(nx, nz)
    cos = snap_unit((X @ Zm.T) / scale)
    K = scale * relu_ntk_value(cos, depth)
    if Z is None:
        K = 0.5 * (K + K.T)
        # diagonal is exactly (L+1) |x|^2
        K[np.diag_indices_from(K)] = (depth + 1) * nx * nx
    return K


# ---------------------------------------------------------------------------
# Convolutional NTK
# ---------------------------------------------------------------------------


def _check_filter(q: int) -> int:
    q = int(q)
    if q < 1 or q % 2 == 0:
        raise DomainError(f"filter size must be a positive odd integer, got {q}")
    return q


def box_sum(a: np.ndarray, q: int, axes=(0, 1)) -> np.ndarray:
    """Sum over the centred q x q window on two spatial axes, zero outside the image.

    With ``axes`` of length 4 the window shift is applied jointly to the
    (i, j) and (i', j') pairs, which is the patch sum used on covariance
    tensors indexed [i, j, i', j'].
    """
    half = (q - 1) // 2
    if half == 0:
        return a.copy()
    if len(axes) == 2:
        ax_i, ax_j = axes
        pad = [(0, 0)] * a.ndim
        pad[ax_i] = (half, half)
        pad[ax_j] = (half, half)
        ap = np.pad(a, pad)
        out = np.zeros_like(a)
        d1, d2 = a.shape[ax_i], a.shape[ax_j]
        for da in range(q):
            for db in range(q):
                sl = [slice(None)] * a.ndim
                sl[ax_i] = slice(da, da + d1)
                sl[ax_j] = slice(db, db + d2)
                out += ap[tuple(sl)]
        return out
    if a.ndim != 4:
        raise ShapeError("joint patch sum expects a [d1, d2, d1, d2] tensor")
    d1, d2 = a.shape[0], a.shape[1]
    ap = np.pad(a, [(half, half)] * 4)
    out = np.zeros_like(a)
    for da in range(q):
        for db in range(q):
            out += ap[da:da + d1, db:db + d2, da:da + d1, db:db + d2]
    return out


def pixel_norms(x: np.ndarray, q: int, depth: int) -> list[np.ndarray]:
    """N^(0..depth) for one image x of shape (d1, d2, c).

    N^(0) = q^2 * per-pixel squared norm, then N^(h) = box_sum(N^(h-1)) / q^2.
    """
    out = [q * q * np.sum(x * x, axis=-1)]
    for _ in range(depth):
        out.append(box_sum(out[-1], q) / (q * q))
    return out


@dataclass
class CntkState:
    d1: int
    d2: int
    channels: int
    q: int
    depth: int
    norms_y: list
    norms_z: list
    gamma: list
    gamma_dot: list
    pi: list
    value: float


def _cntk_layers(y, z, depth, q):
    d1, d2, c = y.shape
    ny = pixel_norms(y, q, depth)
    nz = pixel_norms(z, q, depth)
    qq = q * q
    gamma = [np.einsum("ijl,abl->ijab", y, z)]
    gamma_dot = [None]
    for h in range(1, depth + 1):
        prod = ny[h][:, :, None, None] * nz[h][None, None, :, :]
        root = np.sqrt(prod)
        live = prod > 0
        summed = box_sum(gamma[h - 1], q, axes=(0, 1, 2, 3))
        ratio = np.zeros_like(summed)
        np.divide(summed, root, out=ratio, where=live)
        ratio = snap_unit(ratio)
        g = np.where(live, root * kappa1(ratio) / qq, 0.0)
        gd = np.asarray(kappa0(ratio)) / qq
        gamma.append(g)
        gamma_dot.append(gd)
    pi = [np.zeros((d1, d2, d1, d2))]
    for h in range(1, depth):
        pi.append(box_sum(pi[h - 1] * gamma_dot[h] + gamma[h], q, axes=(0, 1, 2, 3)))
    pi.append(pi[depth - 1] * gamma_dot[depth])
    value = float(np.sum(pi[depth]) / (d1 * d1 * d2 * d2))
    return CntkState(d1, d2, c, q, depth, ny, nz, gamma, gamma_dot, pi, value)


def cntk_exact(y, z, depth: int, q: int, return_state: bool = False):
    """ReLU CNTK with global average pooling between images y, z of shape (d1, d2, c)."""
    y = as_tensor(y, 3, "y")
    z = as_tensor(z, 3, "z")
    if y.shape != z.shape:
        raise ShapeError(f"image shapes differ: {y.shape} vs {z.shape}")
    q = _check_filter(q)
    if depth < 1:
        raise DomainError("CNTK depth must be >= 1")
    state = _cntk_layers(y, z, depth, q)
    return state if return_state else state.value


def cntk_gram(images, depth: int, q: int, others=None) -> np.ndarray:
    """CNTK Gram matrix of a batch (n, d1, d2, c), or the cross matrix against ``others``."""
    imgs = as_tensor(images, 4, "images")
    n = imgs.shape[0]
    if others is not None:
        oth = as_tensor(others, 4, "images")
        K = np.empty((n, oth.shape[0]))
        for i in range(n):
            for j in range(oth.shape[0]):
                K[i, j] = cntk_exact(imgs[i], oth[j], depth, q)
        return K
    K = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            K[i, j] = K[j, i] = cntk_exact(imgs[i], imgs[j], depth, q)
    return K

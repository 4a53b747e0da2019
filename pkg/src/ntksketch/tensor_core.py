"""Dense array helpers, the fast Walsh-Hadamard transform and seeded RNG streams.

Vectors are plain float64 numpy arrays. Every function that takes a vector
also accepts a batch whose last axis is the vector axis, which is how the
feature maps push many inputs through one set of transforms.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

try:  # optional compiled butterfly; the numpy path below is the reference
    import numba
except ImportError:  # pragma: no cover
    numba = None

from .errors import DataError, ShapeError

__all__ = [
    "as_tensor",
    "next_pow2",
    "pad_last",
    "fwht",
    "fwht_inplace",
    "tensor_product",
    "direct_sum",
    "RngStream",
    "stream_id",
]


def as_tensor(x, ndim: int | tuple[int, ...] | None = None, name: str = "input") -> np.ndarray:
    """Convert external input to a finite float64 array, checking its rank."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None:
        allowed = (ndim,) if isinstance(ndim, int) else ndim
        if arr.ndim not in allowed:
            raise ShapeError(f"{name}: expected rank in {allowed}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name}: contains NaN or Inf")
    return arr


def next_pow2(n: int) -> int:
    n = int(n)
    if n < 1:
        raise ShapeError(f"dimension must be positive, got {n}")
    return 1 << (n - 1).bit_length()


def pad_last(x: np.ndarray, size: int) -> np.ndarray:
    """Zero-pad the last axis of ``x`` up to ``size`` (always returns a fresh C-contiguous copy)."""
    d = x.shape[-1]
    if d > size:
        raise ShapeError(f"cannot pad length {d} down to {size}")
    out = np.zeros(x.shape[:-1] + (size,), dtype=np.float64)
    out[..., :d] = x
    return out


def _check_pow2(n: int) -> None:
    if n < 1 or n & (n - 1):
        raise ShapeError(f"Walsh-Hadamard length must be a power of two, got {n}")


def _fwht_numpy(flat: np.ndarray) -> None:
    n = flat.shape[1]
    tmp = np.empty((flat.shape[0], n // 2), dtype=flat.dtype)
    h = 1
    while h < n:
        v = flat.reshape(flat.shape[0], n // (2 * h), 2, h)
        lo = v[:, :, 0, :]
        hi = v[:, :, 1, :]
        t = tmp.reshape(flat.shape[0], n // (2 * h), h)
        np.copyto(t, lo)
        lo += hi
        np.subtract(t, hi, out=hi)
        h *= 2


if numba is not None:

    @numba.njit(cache=True, nogil=True)
    def _fwht_compiled(flat):  # pragma: no cover - exercised through fwht_inplace
        rows, n = flat.shape
        for r in range(rows):
            row = flat[r]
            h = 1
            while h < n:
                for i in range(0, n, 2 * h):
                    for j in range(i, i + h):
                        a = row[j]
                        b = row[j + h]
                        row[j] = a + b
                        row[j + h] = a - b
                h *= 2

else:
    _fwht_compiled = None


def use_compiled_fwht() -> bool:
    return _fwht_compiled is not None and os.environ.get("NTKSKETCH_PURE_NUMPY", "") in ("", "0")


def fwht_inplace(buf: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along the last axis, in place.

    ``buf`` must be C-contiguous float64. Returns ``buf`` for chaining.
    Both code paths perform the same butterflies in the same order, so they
    agree bit for bit.
    """
    n = buf.shape[-1]
    _check_pow2(n)
    if not buf.flags.c_contiguous:
        raise ShapeError("fwht_inplace needs a C-contiguous buffer")
    if buf.dtype != np.float64:
        raise ShapeError("fwht_inplace needs a float64 buffer")
    flat = buf.reshape(-1, n)
    if flat.size and use_compiled_fwht():
        _fwht_compiled(flat)
    else:
        _fwht_numpy(flat)
    return buf


def fwht(v) -> np.ndarray:
    """Return H·v for the Sylvester Hadamard matrix H, without normalization."""
    buf = np.array(v, dtype=np.float64, order="C", copy=True)
    if buf.ndim == 0:
        raise ShapeError("fwht needs at least one axis")
    return fwht_inplace(buf)


def tensor_product(a, b) -> np.ndarray:
    """Kronecker product of the last axes: out[..., i*len(b) + j] = a[..., i] * b[..., j]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = a[..., :, None] * b[..., None, :]
    return out.reshape(out.shape[:-2] + (a.shape[-1] * b.shape[-1],))


def direct_sum(*parts) -> np.ndarray:
    """Concatenate along the last axis."""
    arrays = [np.asarray(p, dtype=np.float64) for p in parts]
    return np.concatenate(arrays, axis=-1)


def stream_id(*labels) -> int:
    """Deterministic 64-bit id for a path of labels such as ("ntk", "Qz", "node", 3)."""
    h = hashlib.blake2b(digest_size=8)
    for lab in labels:
        h.update(repr(lab).encode())
        h.update(b"/")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream-id) pair naming one reproducible random sequence.

    The generator is PCG64 seeded through ``SeedSequence`` with the stream id
    as spawn key, so distinct ids give statistically independent streams and
    the same pair gives the same draws on every platform.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64) or not (0 <= int(self.stream) < 2**64):
            raise ValueError("seed and stream id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *labels) -> "RngStream":
        return RngStream(self.seed, stream_id(self.stream, *labels))

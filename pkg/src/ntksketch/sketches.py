"""Oblivious linear sketches: SRHT, TensorSRHT, count-sketch leaves, PolySketch, Gaussian JL.

All transforms act on the last axis and accept arbitrary leading batch axes.
Randomness is drawn once at construction from an :class:`RngStream`, so a
transform is an immutable value that can be applied to any number of inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError
from .tensor_core import RngStream, fwht_inplace, next_pow2

__all__ = [
    "Srht",
    "TensorSrht",
    "CountSketch",
    "PolySketch",
    "GaussianJl",
]

# bytes of float64 scratch allowed per batched chunk
_CHUNK_BYTES = 48 * 2**20


def _random_signs(gen: np.random.Generator, size) -> np.ndarray:
    return (gen.integers(0, 2, size=size, dtype=np.int8) * 2 - 1).astype(np.int8)


def _sample_rows(gen: np.random.Generator, padded: int, m: int) -> np.ndarray:
    """Row indices for an SRHT: every row floor(m/padded) times, the remainder without replacement.

    Each row's expected multiplicity is m/padded, so the estimator stays unbiased,
    and when padded divides m the map is an exact isometry.
    """
    reps, rest = divmod(m, padded)
    rows = np.concatenate([np.tile(np.arange(padded), reps), gen.choice(padded, size=rest, replace=False)])
    if reps:
        gen.shuffle(rows)
    return rows.astype(np.int32)


def _hadamard_rows(x: np.ndarray, signs: np.ndarray, padded: int) -> np.ndarray:
    """H·D·pad(x) on the last axis; ``signs`` broadcasts against the padded batch."""
    lead = np.broadcast_shapes(x.shape[:-1], np.shape(signs)[:-1])
    buf = np.zeros(lead + (padded,))
    buf[..., : x.shape[-1]] = x
    buf *= signs
    return fwht_inplace(buf)


def _check_last(x: np.ndarray, limit: int, what: str) -> None:
    if x.shape[-1] > limit:
        raise ShapeError(f"{what}: input length {x.shape[-1]} exceeds configured dimension {limit}")


@dataclass(frozen=True, eq=False)
class Srht:
    """Subsampled randomized Hadamard transform from ``d_in`` to ``m`` coordinates."""

    d_in: int
    m: int
    padded: int
    signs: np.ndarray
    rows: np.ndarray

    @classmethod
    def build(cls, d_in: int, m: int, stream: RngStream) -> "Srht":
        if d_in < 1 or m < 1:
            raise ShapeError(f"SRHT dims must be positive, got {d_in} -> {m}")
        gen = stream.generator()
        padded = next_pow2(d_in)
        signs = _random_signs(gen, padded)
        rows = _sample_rows(gen, padded, m)
        return cls(d_in, m, padded, signs, rows)

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.m)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        _check_last(x, self.d_in, "srht")
        hx = _hadamard_rows(x, self.signs, self.padded)
        out = hx[..., self.rows]
        out *= self.scale
        return out

    __call__ = apply

    def matrix(self) -> np.ndarray:
        return self.apply(np.eye(self.d_in)).T


@dataclass(frozen=True, eq=False)
class TensorSrht:
    """Sketch of a⊗b from the Hadamard transforms of a and b, sampled at index pairs."""

    d1: int
    d2: int
    m: int
    signs1: np.ndarray
    signs2: np.ndarray
    rows1: np.ndarray
    rows2: np.ndarray

    @classmethod
    def build(cls, d1: int, d2: int, m: int, stream: RngStream) -> "TensorSrht":
        if min(d1, d2, m) < 1:
            raise ShapeError("TensorSRHT dims must be positive")
        gen = stream.generator()
        D1, D2 = next_pow2(d1), next_pow2(d2)
        signs1 = _random_signs(gen, D1)
        signs2 = _random_signs(gen, D2)
        rows1 = gen.integers(0, D1, size=m).astype(np.intp)
        rows2 = gen.integers(0, D2, size=m).astype(np.intp)
        return cls(d1, d2, m, signs1, signs2, rows1, rows2)

    def apply(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        _check_last(a, self.d1, "tensor-srht left")
        _check_last(b, self.d2, "tensor-srht right")
        ha = _hadamard_rows(a, self.signs1, self.signs1.size)[..., self.rows1]
        hb = _hadamard_rows(b, self.signs2, self.signs2.size)[..., self.rows2]
        ha *= hb
        ha *= 1.0 / math.sqrt(self.m)
        return ha

    __call__ = apply


@dataclass(frozen=True, eq=False)
class CountSketch:
    """Sparse embedding: each input coordinate lands in one bucket with a random sign."""

    d_in: int
    m: int
    buckets: np.ndarray
    signs: np.ndarray

    @classmethod
    def build(cls, d_in: int, m: int, stream: RngStream) -> "CountSketch":
        gen = stream.generator()
        buckets = gen.integers(0, m, size=d_in).astype(np.intp)
        signs = _random_signs(gen, d_in)
        return cls(d_in, m, buckets, signs)

    def sparse_matrix(self) -> sp.csr_matrix:
        """The (d_in, m) matrix M with apply(x) = x @ M."""
        return sp.csr_matrix(
            (self.signs.astype(np.float64), (np.arange(self.d_in), self.buckets)),
            shape=(self.d_in, self.m),
        )

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        _check_last(x, self.d_in, "count sketch")
        flat = x.reshape(-1, x.shape[-1])
        out = np.asarray(flat @ self.sparse_matrix()[: flat.shape[1]])
        return out.reshape(x.shape[:-1] + (self.m,))

    __call__ = apply


def _gather_last(arr: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """arr[..., t, rows[t, :]] for arr of shape (n, T, D) and rows (T, m)."""
    return np.take_along_axis(arr, rows[None, :, :], axis=-1)


@dataclass(eq=False)
class _Level:
    """All TensorSRHT nodes of one tree level, stacked for batched application."""

    d_child: int
    padded: int
    signs_l: np.ndarray  # (nodes, padded) int8
    signs_r: np.ndarray
    rows_l: np.ndarray  # (nodes, m)
    rows_r: np.ndarray

    def apply(self, node_ids: np.ndarray, left: np.ndarray, right: np.ndarray, m: int) -> np.ndarray:
        """Apply node ``node_ids[t]`` to (left[:, t], right[:, t]); inputs are (n, T, d_child)."""
        hl = _hadamard_rows(left, self.signs_l[node_ids], self.padded)
        out = _gather_last(hl, self.rows_l[node_ids])
        del hl
        hr = _hadamard_rows(right, self.signs_r[node_ids], self.padded)
        out *= _gather_last(hr, self.rows_r[node_ids])
        out *= 1.0 / math.sqrt(m)
        return out


class PolySketch:
    """Degree-p tensor sketch built as a binary tree of TensorSRHT nodes.

    The tree has ``leaves = next_pow2(p)`` leaves; leaves beyond ``p`` always
    receive e1, which leaves inner products of the sketched tensor unchanged.
    Each leaf first compresses its factor to ``m`` coordinates with an SRHT
    (``leaf="srht"``), a count sketch (``leaf="sparse"``), or passes it through
    unchanged (``leaf="identity"``).
    """

    def __init__(self, degree: int, d_in: int, m: int, stream: RngStream, leaf: str = "srht"):
        if degree < 1:
            raise ShapeError(f"PolySketch degree must be >= 1, got {degree}")
        if d_in < 1 or m < 1:
            raise ShapeError("PolySketch dims must be positive")
        if leaf not in ("srht", "sparse", "identity"):
            raise ShapeError(f"unknown leaf kind {leaf!r}")
        self.degree = int(degree)
        self.d_in = int(d_in)
        self.m = int(m)
        self.leaf = leaf
        self.leaves = next_pow2(self.degree)
        self.depth = self.leaves.bit_length() - 1
        self.leaf_dim = self.d_in if leaf == "identity" else self.m

        self._leaf_padded = next_pow2(self.d_in)
        if leaf == "srht":
            signs, rows = [], []
            for a in range(self.leaves):
                gen = stream.child("leaf", a).generator()
                signs.append(_random_signs(gen, self._leaf_padded))
                rows.append(_sample_rows(gen, self._leaf_padded, self.m))
            self._leaf_signs = np.stack(signs)
            self._leaf_rows = np.stack(rows)
        elif leaf == "sparse":
            blocks = [
                CountSketch.build(self.d_in, self.m, stream.child("leaf", a)).sparse_matrix()
                for a in range(self.leaves)
            ]
            self._leaf_matrix = sp.hstack(blocks, format="csr")

        self._levels: list[_Level] = []
        d_child = self.leaf_dim
        for k in range(1, self.depth + 1):
            nodes = self.leaves >> k
            padded = next_pow2(d_child)
            sl, sr, rl, rr = [], [], [], []
            for a in range(nodes):
                gen = stream.child("node", k, a).generator()
                sl.append(_random_signs(gen, padded))
                sr.append(_random_signs(gen, padded))
                rl.append(gen.integers(0, padded, size=self.m, dtype=np.int32))
                rr.append(gen.integers(0, padded, size=self.m, dtype=np.int32))
            self._levels.append(
                _Level(d_child, padded, np.stack(sl), np.stack(sr), np.stack(rl), np.stack(rr))
            )
            d_child = self.m

        e1 = np.zeros((1, self.d_in))
        e1[0, 0] = 1.0
        # values of every node whose leaves all receive e1; input independent
        vals = self._leaf_values(e1, np.arange(self.leaves))[0]
        self._e1_nodes = [vals]
        for k, level in enumerate(self._levels, start=1):
            ids = np.arange(self.leaves >> k)
            vals = level.apply(ids, vals[None, 0::2], vals[None, 1::2], self.m)[0]
            self._e1_nodes.append(vals)

    @staticmethod
    def estimate_bytes(degree: int, d_in: int, m: int, leaf: str = "srht") -> int:
        """Storage a PolySketch of these dims would need, without building it."""
        leaves = next_pow2(degree)
        leaf_dim = d_in if leaf == "identity" else m
        total = 0
        if leaf == "srht":
            total += leaves * (next_pow2(d_in) + 4 * m)
        elif leaf == "sparse":
            total += leaves * d_in * 20
        d_child = leaf_dim
        nodes = leaves // 2
        while nodes >= 1:
            total += nodes * 2 * (next_pow2(d_child) + 4 * m)
            d_child = m
            nodes //= 2
        return total

    @property
    def out_dim(self) -> int:
        return self.leaf_dim if self.depth == 0 else self.m

    def nbytes(self) -> int:
        total = sum(a.nbytes for lv in self._levels for a in (lv.signs_l, lv.signs_r, lv.rows_l, lv.rows_r))
        if self.leaf == "srht":
            total += self._leaf_signs.nbytes + self._leaf_rows.nbytes
        return total

    # -- leaves ----------------------------------------------------------------

    def _leaf_values(self, X: np.ndarray, leaf_ids: np.ndarray) -> np.ndarray:
        """Leaf ``leaf_ids[t]`` applied to every row of X; returns (n, T, leaf_dim)."""
        n = X.shape[0]
        if self.leaf == "identity":
            return np.broadcast_to(X[:, None, :], (n, leaf_ids.size, self.d_in)).copy()
        if self.leaf == "sparse":
            cols = (leaf_ids[:, None] * self.m + np.arange(self.m)[None, :]).ravel()
            out = np.asarray((sp.csr_matrix(X) @ self._leaf_matrix[:, cols]).todense())
            return out.reshape(n, leaf_ids.size, self.m)
        h = _hadamard_rows(X[:, None, :], self._leaf_signs[leaf_ids], self._leaf_padded)
        out = _gather_last(h, self._leaf_rows[leaf_ids])
        out *= 1.0 / math.sqrt(self.m)
        return out

    def _chunk_rows(self, n: int, width: int) -> int:
        per_row = max(1, width) * 8 * 3
        return max(1, min(n, _CHUNK_BYTES // per_row))

    def _as_batch(self, x) -> tuple[np.ndarray, tuple]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            raise ShapeError("PolySketch input must be a vector or batch of vectors")
        _check_last(x, self.d_in, "polysketch")
        lead = x.shape[:-1]
        flat = np.zeros((int(np.prod(lead, dtype=np.int64)), self.d_in))
        flat[:, : x.shape[-1]] = x.reshape(-1, x.shape[-1])
        return flat, lead

    # -- x^{⊗l} ⊗ e1^{⊗(p-l)} for many l at once ---------------------------------

    def apply_power(self, x, powers=None) -> np.ndarray:
        """Sketches of x^{⊗l} ⊗ e1^{⊗(p-l)} for each l in ``powers`` (default 0..p).

        Returns an array of shape batch + (len(powers), out_dim). The x factors
        occupy the first l leaves. Node values are shared across l: the all-x
        and all-e1 subtrees are computed once, and for each l only the single
        node per level that mixes x and e1 is evaluated.
        """
        flat, lead = self._as_batch(x)
        ls = np.arange(self.degree + 1) if powers is None else np.asarray(powers, dtype=np.intp)
        if ls.ndim != 1 or (ls.size and (ls.min() < 0 or ls.max() > self.degree)):
            raise ShapeError(f"powers must lie in [0, {self.degree}]")
        n = flat.shape[0]
        out = np.empty((n, ls.size, self.out_dim))
        width = max(self.degree, ls.size) * max(self._leaf_padded, self.m) * 2
        step = self._chunk_rows(n, width)
        for lo in range(0, n, step):
            out[lo:lo + step] = self._power_chunk(flat[lo:lo + step], ls)
        return out.reshape(lead + (ls.size, self.out_dim))

    def _power_chunk(self, X: np.ndarray, ls: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        top = int(ls.max()) if ls.size else 0
        # all-x subtrees: node a at level k is all-x when its leaves lie below top
        allx = [self._leaf_values(X, np.arange(top))]
        for k, level in enumerate(self._levels, start=1):
            cnt = top >> k
            prev = allx[-1]
            if cnt == 0:
                allx.append(np.empty((n, 0, self.m)))
                continue
            ids = np.arange(cnt)
            allx.append(level.apply(ids, prev[:, 0:2 * cnt:2], prev[:, 1:2 * cnt:2], self.m))

        result = np.empty((n, ls.size, self.out_dim))
        full = ls == self.leaves  # only possible when degree is a power of two
        if np.any(full):
            result[:, full] = allx[self.depth][:, :1]
        mixed = ls[~full]
        if mixed.size == 0:
            return result
        # the node on level 0 containing leaf l is leaf l itself, which is e1
        cur = np.broadcast_to(self._e1_nodes[0][mixed][None], (n, mixed.size, self.leaf_dim))
        for k, level in enumerate(self._levels, start=1):
            node = mixed >> k
            right_side = ((mixed >> (k - 1)) & 1).astype(bool)
            left = np.array(cur, copy=True)
            right = np.array(cur, copy=True)
            if np.any(right_side):
                # left child lies entirely below l, so it is an all-x subtree
                left[:, right_side] = allx[k - 1][:, 2 * node[right_side]]
            if np.any(~right_side):
                right[:, ~right_side] = self._e1_nodes[k - 1][2 * node[~right_side] + 1][None]
            cur = level.apply(node, left, right, self.m)
        result[:, ~full] = cur
        return result

    # -- v1 ⊗ ... ⊗ vp --------------------------------------------------------

    def apply_distinct(self, vectors) -> np.ndarray:
        """Sketch of v_1 ⊗ ... ⊗ v_p; each v_i may be a vector or a batch with equal leading shape."""
        vectors = list(vectors)
        if len(vectors) != self.degree:
            raise ShapeError(f"expected {self.degree} factors, got {len(vectors)}")
        batches = [self._as_batch(v) for v in vectors]
        lead = batches[0][1]
        if any(b[1] != lead for b in batches):
            raise ShapeError("all factors must share the same batch shape")
        n = batches[0][0].shape[0]
        out = np.empty((n, self.out_dim))
        step = self._chunk_rows(n, self.leaves * max(self._leaf_padded, self.m))
        for lo in range(0, n, step):
            hi = min(n, lo + step)
            vals = np.empty((hi - lo, self.leaves, self.leaf_dim))
            for a, (flat, _) in enumerate(batches):
                vals[:, a:a + 1] = self._leaf_values(flat[lo:hi], np.array([a]))
            vals[:, self.degree:] = self._e1_nodes[0][self.degree:][None]
            for k, level in enumerate(self._levels, start=1):
                ids = np.arange(self.leaves >> k)
                vals = level.apply(ids, vals[:, 0::2], vals[:, 1::2], self.m)
            out[lo:hi] = vals[:, 0]
        return out.reshape(lead + (self.out_dim,))


@dataclass(frozen=True, eq=False)
class GaussianJl:
    """Dense map with i.i.d. N(0, 1/rows) entries."""

    matrix: np.ndarray

    @classmethod
    def build(cls, d_in: int, rows: int, stream: RngStream) -> "GaussianJl":
        gen = stream.generator()
        return cls(gen.standard_normal((rows, d_in)) / math.sqrt(rows))

    @classmethod
    def identity(cls, d: int) -> "GaussianJl":
        return cls(np.eye(d))

    @property
    def d_in(self) -> int:
        return self.matrix.shape[1]

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"JL map expects length {self.d_in}, got {x.shape[-1]}")
        return x @ self.matrix.T

    __call__ = apply

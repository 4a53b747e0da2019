"""CSV and binary tensor files.

Binary layout ("NTKF"): 4 magic bytes, u32 version, u32 dtype code
(1 = float64 LE, 2 = float32 LE), u32 rank, rank x u64 dims, then the
row-major payload. All integers are little-endian.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .data import Dataset, one_hot

__all__ = ["load_csv", "save_csv", "write_tensor", "read_tensor", "load_image_tensor", "load_targets",
           "MAGIC", "FORMAT_VERSION"]

MAGIC = b"NTKF"
FORMAT_VERSION = 1
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4")}


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _resolve_target(target, names: list[str] | None, width: int, line: int) -> int | None:
    if target is None or (isinstance(target, str) and target.lower() == "none"):
        return None
    if isinstance(target, str) and not target.lstrip("-").isdigit():
        if names is None:
            raise DataError(f"line {line}: target column {target!r} given by name but the file has no header")
        if target not in names:
            raise DataError(f"line {line}: target column {target!r} not found in header {names}")
        return names.index(target)
    col = int(target)
    if not -width <= col < width:
        raise DataError(f"line {line}: target column {col} missing, rows have {width} columns")
    return col % width


def load_csv(path, target=-1, header: bool = False, delimiter: str = ",", task: str = "regression") -> Dataset:
    """Read a numeric CSV into a vector dataset.

    ``target`` is a column index (negative counts from the end), a header
    name, or None for an unlabeled file. For ``task="classification"`` the
    target column holds integer class labels and is one-hot encoded.
    """
    rows: list[list[float]] = []
    names = None
    width = None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line_no, rec in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if header and names is None:
                names = [c.strip() for c in rec]
                width = len(names)
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise DataError(f"line {line_no}: expected {width} columns, found {len(rec)} (ragged row)")
            vals = []
            for col_no, cell in enumerate(rec, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"line {line_no}, column {col_no}: non-numeric cell {cell.strip()!r}") from None
            rows.append(vals)
    if width is None:
        raise DataError(f"{path}: file is empty")
    data = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    col = _resolve_target(target, names, width, 1)
    if col is None:
        return Dataset("vectors", data, None, meta={"columns": names})
    X = np.delete(data, col, axis=1)
    y = data[:, col]
    if task == "classification":
        if not np.all(y == np.round(y)) or (y.size and y.min() < 0):
            raise DataError("classification target column must hold non-negative integer labels")
        y = one_hot(y.astype(np.int64))
    return Dataset("vectors", X, y, task=task, meta={"columns": names, "target_column": col})


def save_csv(path, X, y=None, header: list[str] | None = None, delimiter: str = ",") -> None:
    """Write features (and an optional last target column) with round-trip exact formatting."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    data = X if y is None else np.column_stack([X, np.asarray(y, dtype=np.float64)])
    head = "" if header is None else delimiter.join(header)
    np.savetxt(path, data, fmt="%.17g", delimiter=delimiter, header=head, comments="")


# ---------------------------------------------------------------------------
# Binary tensors
# ---------------------------------------------------------------------------


def write_tensor(path, arr, dtype_code: int = 1) -> None:
    if dtype_code not in _DTYPES:
        raise DataError(f"unknown dtype code {dtype_code}; use 1 (float64) or 2 (float32)")
    arr = np.ascontiguousarray(arr, dtype=_DTYPES[dtype_code])
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, dtype_code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read an NTKF file; float32 payloads come back as float32 (no silent widening)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 16:
        raise DataError(f"{path}: truncated header")
    version, code, rank = struct.unpack_from("<III", raw, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    if code not in _DTYPES:
        raise DataError(f"{path}: unknown dtype code {code}")
    off = 16 + 8 * rank
    if len(raw) < off:
        raise DataError(f"{path}: truncated dimension list")
    dims = struct.unpack_from(f"<{rank}Q", raw, 16)
    dt = _DTYPES[code]
    need = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(raw) - off < need:
        raise DataError(f"{path}: truncated payload ({len(raw) - off} of {need} bytes)")
    if len(raw) - off > need:
        raise DataError(f"{path}: {len(raw) - off - need} trailing bytes after payload")
    return np.frombuffer(raw, dtype=dt, count=need // dt.itemsize, offset=off).reshape(dims).copy()


def load_targets(path, task: str = "regression") -> np.ndarray:
    """Targets from a binary tensor or a headerless one-column CSV (class labels for classification)."""
    p = str(path)
    if p.endswith(".csv"):
        y = load_csv(p, target=None).features
        y = y[:, 0] if y.shape[1] == 1 else y
    else:
        y = np.asarray(read_tensor(p), dtype=np.float64)
    if task == "classification" and y.ndim == 1:
        if not np.all(y == np.round(y)):
            raise DataError("class labels must be integers")
        y = one_hot(y.astype(np.int64))
    return y


def load_image_tensor(path, targets=None, task: str = "regression") -> Dataset:
    """Image dataset from a rank-4 NTKF file (n x d1 x d2 x c); ``targets`` is an array or a path."""
    imgs = read_tensor(path)
    if imgs.ndim != 4:
        raise DataError(f"{path}: image tensor must have rank 4, got rank {imgs.ndim}")
    y = None
    if targets is not None:
        y = load_targets(targets, task) if isinstance(targets, (str, Path)) else np.asarray(targets, dtype=np.float64)
    return Dataset("images", np.asarray(imgs, dtype=np.float64), y, task=task)

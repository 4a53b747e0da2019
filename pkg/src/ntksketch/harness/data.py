"""Dataset containers and small synthetic generators used by the benchmarks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from ..tensor_core import RngStream

__all__ = ["Dataset", "RegressionResult", "one_hot", "planted_relu_dataset", "random_image_dataset"]


def one_hot(labels, classes: int | None = None) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer) or (labels.size and labels.min() < 0):
        raise DataError("class labels must be a 1-D array of non-negative integers")
    k = int(labels.max()) + 1 if classes is None else int(classes)
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


@dataclass
class Dataset:
    """Inputs (n x d vectors or n x d1 x d2 x c images) with targets and a train/test split.

    ``targets`` is a length-n vector for regression or an n x k one-hot matrix
    for classification. An empty dataset (n = 0) is allowed so that header-only
    files load; the regression paths reject it.
    """

    kind: str
    features: np.ndarray
    targets: np.ndarray | None = None
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    task: str = "regression"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("vectors", "images"):
            raise DataError(f"dataset kind must be 'vectors' or 'images', got {self.kind!r}")
        self.features = np.asarray(self.features, dtype=np.float64)
        want = 2 if self.kind == "vectors" else 4
        if self.features.ndim != want:
            raise DataError(f"{self.kind} dataset needs rank-{want} features, got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise DataError("dataset features contain NaN or Inf")
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=np.float64)
            if self.targets.shape[:1] != (self.n,) or self.targets.ndim > 2:
                raise DataError(f"targets of shape {self.targets.shape} do not match {self.n} inputs")
            if not np.all(np.isfinite(self.targets)):
                raise DataError("dataset targets contain NaN or Inf")
        if self.task not in ("regression", "classification"):
            raise DataError(f"task must be 'regression' or 'classification', got {self.task!r}")
        if self.task == "classification":
            t = self.targets
            if t is None or t.ndim != 2 or not np.all((t == 0) | (t == 1)) or not np.all(t.sum(axis=1) == 1):
                raise DataError("classification targets must be one-hot rows")
        if self.train_idx is None:
            self.train_idx = np.arange(self.n)
            self.test_idx = np.arange(0)
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.test_idx = np.asarray(self.test_idx if self.test_idx is not None else [], dtype=np.int64)
        for idx in (self.train_idx, self.test_idx):
            if idx.size and (idx.min() < 0 or idx.max() >= self.n):
                raise DataError("split indices out of range")

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.features.shape[1:])

    def split(self, test_fraction: float, seed: int) -> "Dataset":
        """Same data with a seeded random train/test split."""
        if not 0.0 <= test_fraction < 1.0:
            raise DataError("test fraction must lie in [0, 1)")
        perm = RngStream(int(seed)).child("split").generator().permutation(self.n)
        n_test = int(round(test_fraction * self.n))
        return Dataset(self.kind, self.features, self.targets, np.sort(perm[n_test:]), np.sort(perm[:n_test]),
                       self.task, dict(self.meta))

    def part(self, which: str) -> tuple[np.ndarray, np.ndarray | None]:
        idx = self.train_idx if which == "train" else self.test_idx
        y = None if self.targets is None else self.targets[idx]
        return self.features[idx], y


@dataclass
class RegressionResult:
    ridge: float
    weights: np.ndarray
    train_mse: float
    test_mse: float | None = None
    test_accuracy: float | None = None
    featurize_seconds: float = 0.0
    solve_seconds: float = 0.0
    test_predictions: np.ndarray | None = None

    def __post_init__(self):
        if self.train_mse < 0 or (self.test_mse is not None and self.test_mse < 0):
            raise DataError("mean squared error cannot be negative")

    def summary(self) -> dict:
        return {
            "ridge": self.ridge,
            "train_mse": self.train_mse,
            "test_mse": self.test_mse,
            "test_accuracy": self.test_accuracy,
            "featurize_seconds": self.featurize_seconds,
            "solve_seconds": self.solve_seconds,
        }


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def planted_relu_dataset(n: int, d: int, seed: int, width: int = 64, noise: float = 0.05,
                         test_fraction: float = 0.3) -> Dataset:
    """Unit-norm Gaussian inputs with targets from a random one-hidden-layer ReLU network plus noise."""
    if n < 1 or d < 1 or width < 1:
        raise DataError("n, d and width must be positive")
    gen = RngStream(int(seed)).child("planted-relu").generator()
    X = gen.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    W = gen.standard_normal((width, d))
    a = gen.standard_normal(width)
    y = np.maximum(X @ W.T, 0.0) @ a / np.sqrt(width)
    y = y + noise * gen.standard_normal(n)
    ds = Dataset("vectors", X, y, meta={"source": "planted-relu", "width": width, "noise": noise})
    return ds.split(test_fraction, seed)


def random_image_dataset(n: int, shape: tuple[int, int, int], seed: int, classes: int = 2,
                         test_fraction: float = 0.3) -> Dataset:
    """Gaussian images whose one-hot class comes from a planted linear score on local 3x3 energy."""
    d1, d2, c = shape
    gen = RngStream(int(seed)).child("random-images").generator()
    imgs = gen.standard_normal((n, d1, d2, c))
    filt = gen.standard_normal((classes, 3, 3, c))
    padded = np.pad(imgs, ((0, 0), (1, 1), (1, 1), (0, 0)))
    scores = np.zeros((n, classes))
    for a in range(3):
        for b in range(3):
            win = padded[:, a:a + d1, b:b + d2, :]
            scores += np.maximum(np.einsum("nijc,kc->nijk", win, filt[:, a, b, :]), 0).mean(axis=(1, 2))
    labels = np.argmax(scores, axis=1)
    ds = Dataset("images", imgs, one_hot(labels, classes), task="classification",
                 meta={"source": "random-images", "classes": classes})
    return ds.split(test_fraction, seed)

"""Ridge regression on explicit features and on Gram matrices, with the lambda*n scaling."""
from __future__ import annotations

import time

import numpy as np
import scipy.linalg

from ..errors import DataError, DomainError, NumericError, ShapeError
from ..tensor_core import RngStream, as_tensor
from .data import RegressionResult

__all__ = ["ridge_solve", "kernel_ridge", "kernel_ridge_result", "mse", "accuracy", "select_ridge",
           "normal_equation_residual"]


def mse(pred: np.ndarray, y: np.ndarray) -> float:
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.mean(diff**2)) if diff.size else 0.0


def accuracy(pred: np.ndarray, y: np.ndarray) -> float | None:
    if y.ndim != 2 or y.shape[1] < 2:
        return None
    return float(np.mean(np.argmax(pred, axis=1) == np.argmax(y, axis=1)))


def _check_ridge(lam: float) -> float:
    lam = float(lam)
    if not lam > 0 or not np.isfinite(lam):
        raise DomainError(f"ridge parameter must be positive and finite, got {lam}")
    return lam


def _spd_solve(A: np.ndarray, b: np.ndarray, lam: float, what: str) -> np.ndarray:
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        scale = float(np.trace(A)) / max(1, A.shape[0])
        raise NumericError(
            f"Cholesky factorization of the {what} failed at ridge {lam:g}; "
            f"try a ridge of at least {max(10 * lam, 1e-8 * scale):g}"
        ) from exc
    x = scipy.linalg.cho_solve(factor, b)
    # one round of iterative refinement tightens the residual for ill-conditioned systems
    x += scipy.linalg.cho_solve(factor, b - A @ x)
    return x


def normal_equation_residual(Phi: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float) -> float:
    """||(Phi^T Phi + lam n I) w - Phi^T y|| / ||Phi^T y||, without forming Phi^T Phi."""
    n = Phi.shape[0]
    rhs = Phi.T @ y
    lhs = Phi.T @ (Phi @ w) + lam * n * w
    denom = np.linalg.norm(rhs)
    return float(np.linalg.norm(lhs - rhs) / denom) if denom > 0 else float(np.linalg.norm(lhs))


def ridge_solve(Phi, y, lam: float, Phi_test=None, y_test=None) -> RegressionResult:
    """w = (Phi^T Phi + lam n I)^{-1} Phi^T y by Cholesky.

    When there are more features than rows the same w is computed as
    Phi^T (Phi Phi^T + lam n I)^{-1} y, which factors an n x n matrix instead.
    Targets may be a vector or an n x k one-hot matrix (k right-hand sides).
    """
    lam = _check_ridge(lam)
    Phi = as_tensor(Phi, 2, "feature matrix")
    y = as_tensor(y, (1, 2), "targets")
    n, D = Phi.shape
    if n == 0:
        raise DataError("cannot fit ridge regression on zero rows")
    if y.shape[0] != n:
        raise ShapeError(f"{n} feature rows but {y.shape[0]} targets")
    t0 = time.perf_counter()
    if D <= n:
        A = Phi.T @ Phi
        A[np.diag_indices_from(A)] += lam * n
        w = _spd_solve(A, Phi.T @ y, lam, "regularized feature covariance")
    else:
        B = Phi @ Phi.T
        B[np.diag_indices_from(B)] += lam * n
        w = Phi.T @ _spd_solve(B, y, lam, "regularized feature Gram matrix")
    solve_s = time.perf_counter() - t0
    train_pred = Phi @ w
    res = RegressionResult(ridge=lam, weights=w, train_mse=mse(train_pred, y), solve_seconds=solve_s)
    if Phi_test is not None:
        Pt = as_tensor(Phi_test, 2, "test feature matrix")
        if Pt.shape[1] != D:
            raise ShapeError(f"test features have {Pt.shape[1]} columns, expected {D}")
        pred = Pt @ w
        res.test_predictions = pred
        if y_test is not None:
            yt = as_tensor(y_test, (1, 2), "test targets")
            res.test_mse = mse(pred, yt)
            res.test_accuracy = accuracy(pred, yt)
    return res


def kernel_ridge(K, y, lam: float, K_test=None):
    """alpha = (K + lam n I)^{-1} y, and K_test alpha when a test-by-train kernel is given."""
    lam = _check_ridge(lam)
    K = as_tensor(K, 2, "kernel matrix")
    y = as_tensor(y, (1, 2), "targets")
    n = K.shape[0]
    if K.shape != (n, n) or y.shape[0] != n:
        raise ShapeError(f"kernel of shape {K.shape} does not match {y.shape[0]} targets")
    if n == 0:
        raise DataError("cannot fit kernel ridge regression on zero rows")
    A = 0.5 * (K + K.T)
    A[np.diag_indices_from(A)] += lam * n
    alpha = _spd_solve(A, y, lam, "regularized kernel matrix")
    pred = None if K_test is None else as_tensor(K_test, 2, "test kernel") @ alpha
    return alpha, pred


def kernel_ridge_result(K, y, lam: float, K_test=None, y_test=None) -> RegressionResult:
    t0 = time.perf_counter()
    alpha, pred = kernel_ridge(K, y, lam, K_test)
    solve_s = time.perf_counter() - t0
    y = np.asarray(y, dtype=np.float64)
    res = RegressionResult(ridge=float(lam), weights=alpha, train_mse=mse(np.asarray(K) @ alpha, y),
                           solve_seconds=solve_s, test_predictions=pred)
    if pred is not None and y_test is not None:
        yt = np.asarray(y_test, dtype=np.float64)
        res.test_mse = mse(pred, yt)
        res.test_accuracy = accuracy(pred, yt)
    return res


def select_ridge(grid, y, seed: int, Phi=None, K=None, holdout: float = 0.2) -> tuple[float, list[dict]]:
    """Pick the ridge from a user grid by validation MSE on a seeded random subset of the training rows.

    Pass either explicit features ``Phi`` or a training Gram matrix ``K``.
    """
    grid = [_check_ridge(v) for v in grid]
    if not grid:
        raise DomainError("ridge grid is empty")
    if (Phi is None) == (K is None):
        raise DomainError("select_ridge needs exactly one of Phi or K")
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    n_val = max(1, int(round(holdout * n)))
    if n - n_val < 1:
        raise DataError("too few rows to hold out a validation subset")
    perm = RngStream(int(seed)).child("ridge-holdout").generator().permutation(n)
    val, fit = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    scores = []
    for lam in grid:
        if Phi is not None:
            r = ridge_solve(Phi[fit], y[fit], lam, Phi[val], y[val])
        else:
            r = kernel_ridge_result(K[np.ix_(fit, fit)], y[fit], lam, K[np.ix_(val, fit)], y[val])
        scores.append({"ridge": lam, "validation_mse": r.test_mse})
    best = min(scores, key=lambda s: s["validation_mse"])["ridge"]
    return best, scores

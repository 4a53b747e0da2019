"""Truncated Taylor polynomials for the arc-cosine kernels and degree selection."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError
from .kernels_exact import kappa0, kappa1

__all__ = [
    "DEFAULT_DEGREE_CAP",
    "PolynomialApprox",
    "build_p_relu",
    "build_pdot_relu",
    "select_degrees",
    "kappa1_degree_rule",
    "kappa0_degree_rule",
    "eval_poly",
    "grid_error",
]

DEFAULT_DEGREE_CAP = 2000


@dataclass(frozen=True)
class PolynomialApprox:
    kind: str  # "kappa1" or "kappa0"
    degree: int
    coeffs: np.ndarray

    def __call__(self, alpha):
        return eval_poly(self, alpha)


def _central_ratio(i: np.ndarray) -> np.ndarray:
    # (2i)! / (2^{2i} (i!)^2), in log space so large i does not overflow
    return np.exp(gammaln(2 * i + 1) - 2 * i * math.log(2.0) - 2 * gammaln(i + 1))


def build_p_relu(p: int) -> PolynomialApprox:
    """Polynomial of degree 2p+2 approximating kappa1; coefficient j multiplies alpha^j."""
    if p < 0:
        raise ConfigError(f"degree parameter must be >= 0, got {p}")
    c = np.zeros(2 * p + 3)
    c[0] = 1.0 / math.pi
    c[1] = 0.5
    i = np.arange(p + 1, dtype=np.float64)
    c[2::2][: p + 1] = _central_ratio(i) / ((2 * i + 1) * (2 * i + 2)) / math.pi
    return PolynomialApprox("kappa1", p, c)


def build_pdot_relu(p: int) -> PolynomialApprox:
    """Polynomial of degree 2p+1 approximating kappa0."""
    if p < 0:
        raise ConfigError(f"degree parameter must be >= 0, got {p}")
    b = np.zeros(2 * p + 2)
    b[0] = 0.5
    i = np.arange(p + 1, dtype=np.float64)
    b[1::2] = _central_ratio(i) / (2 * i + 1) / math.pi
    return PolynomialApprox("kappa0", p, b)


def eval_poly(poly: PolynomialApprox, alpha):
    """Horner evaluation; works elementwise on arrays."""
    a = np.asarray(alpha, dtype=np.float64)
    acc = np.zeros_like(a)
    for coef in poly.coeffs[::-1]:
        acc = acc * a + coef
    return acc if acc.ndim else float(acc)


def _check_eps(eps: float) -> None:
    if not (0.0 < eps < 1.0) and eps != 1.0:
        raise ConfigError(f"error target must lie in (0, 1], got {eps}")


def _cap(value: int, cap: int | None, what: str) -> int:
    if cap is not None and value > cap:
        warnings.warn(f"{what}={value} exceeds the degree cap {cap}; using {cap}", stacklevel=3)
        return cap
    return value


def select_degrees(eps: float, depth: int, cap: int | None = DEFAULT_DEGREE_CAP) -> tuple[int, int]:
    """Degrees (p, p') used inside the sketch: ceil(2L^2/eps^(4/3)), ceil(9L^2/eps^2)."""
    _check_eps(eps)
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    p = math.ceil(2 * depth**2 / eps ** (4.0 / 3.0))
    pd = math.ceil(9 * depth**2 / eps**2)
    return _cap(p, cap, "p"), _cap(pd, cap, "p'")


def kappa1_degree_rule(eps: float) -> int:
    """Degree parameter giving uniform error <= eps for the kappa1 polynomial on its own."""
    _check_eps(eps)
    return math.ceil(1.0 / (9.0 * eps ** (2.0 / 3.0)))


def kappa0_degree_rule(eps: float) -> int:
    """Degree parameter giving uniform error <= eps for the kappa0 polynomial on its own."""
    _check_eps(eps)
    return math.ceil(1.0 / (26.0 * eps**2))


def grid_error(poly: PolynomialApprox, points: int = 10_001) -> float:
    """max |poly(a) - kappa(a)| over an evenly spaced grid on [-1, 1]."""
    grid = np.linspace(-1.0, 1.0, points)
    exact = kappa1(grid) if poly.kind == "kappa1" else kappa0(grid)
    return float(np.max(np.abs(eval_poly(poly, grid) - exact)))

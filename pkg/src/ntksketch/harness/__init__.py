"""Command line and batch engine: data files, ridge regression, spectral audits and benchmark reports."""
from __future__ import annotations

from .data import Dataset, RegressionResult, planted_relu_dataset, random_image_dataset
from .io import load_csv, load_image_tensor, read_tensor, save_csv, write_tensor
from .ridge import kernel_ridge, ridge_solve

__all__ = [
    "Dataset",
    "RegressionResult",
    "planted_relu_dataset",
    "random_image_dataset",
    "load_csv",
    "save_csv",
    "load_image_tensor",
    "read_tensor",
    "write_tensor",
    "ridge_solve",
    "kernel_ridge",
]

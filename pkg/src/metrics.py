"""Completion-quality metrics."""

from __future__ import annotations

import math

import numpy as np

from src.tensor_core import DenseTensor


def _difference(truth: DenseTensor, estimate: DenseTensor) -> np.ndarray:
    if truth.dims != estimate.dims:
        raise ValueError(f"dims mismatch: {list(truth.dims)} != {list(estimate.dims)}")
    return truth.data - estimate.data


def rse(truth: DenseTensor, estimate: DenseTensor) -> float:
    """Relative standard error ||truth - estimate||_F / ||truth||_F."""
    scale = truth.norm()
    if scale == 0.0:
        raise ValueError("rse is undefined for an all-zero reference tensor")
    return float(np.linalg.norm(_difference(truth, estimate)) / scale)


def psnr(truth: DenseTensor, estimate: DenseTensor, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; `math.inf` for an exact estimate.

    MSE is the squared Frobenius norm of the error divided by the element count.
    """
    if max_value <= 0:
        raise ValueError(f"max_value must be > 0, got {max_value}")
    difference = _difference(truth, estimate)
    mse = float(np.dot(difference, difference)) / difference.size
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(max_value) - 10.0 * math.log10(mse)


def observed_residual(predictions: np.ndarray, values: np.ndarray) -> float:
    """||predictions - y||_2 / ||y||_2 over observed entries (absolute norm when y = 0)."""
    difference = np.asarray(predictions, dtype=np.float64) - np.asarray(values, dtype=np.float64)
    scale = float(np.linalg.norm(values))
    error = float(np.linalg.norm(difference))
    return error / scale if scale > 0.0 else error

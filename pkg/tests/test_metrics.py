"""Tests for RSE, PSNR and the observed residual."""

from __future__ import annotations

import math

import numpy as np
import pytest

from src.metrics import observed_residual, psnr, rse
from src.tensor_core import DenseTensor


def _vec(values) -> DenseTensor:
    return DenseTensor.from_array(np.asarray(values, dtype=float))


@pytest.mark.required
@pytest.mark.light
def test_rse_known_value():
    assert rse(_vec([1, 2, 3]), _vec([1, 2, 4])) == pytest.approx(1.0 / math.sqrt(14.0), rel=1e-12)


@pytest.mark.light
def test_rse_is_scale_invariant(rng):
    for _ in range(100):
        truth = _vec(rng.standard_normal(12))
        estimate = _vec(rng.standard_normal(12))
        scale = float(rng.uniform(0.1, 10.0))
        scaled = rse(_vec(scale * truth.data), _vec(scale * estimate.data))
        assert scaled == pytest.approx(rse(truth, estimate), rel=1e-10)


@pytest.mark.light
def test_rse_of_all_zero_truth_is_rejected():
    with pytest.raises(ValueError):
        rse(_vec([0.0, 0.0]), _vec([1.0, 0.0]))


@pytest.mark.required
@pytest.mark.light
def test_psnr_known_values():
    truth = _vec(np.zeros(4))
    assert psnr(truth, _vec(np.ones(4)), max_value=255.0) == pytest.approx(48.1308, abs=1e-4)
    assert psnr(truth, truth) == math.inf


@pytest.mark.light
def test_psnr_decreases_as_error_grows(rng):
    truth = _vec(rng.random(50))
    noise = rng.standard_normal(50)
    values = [psnr(truth, _vec(truth.data + scale * noise)) for scale in (0.01, 0.1, 1.0)]
    assert values[0] > values[1] > values[2]


@pytest.mark.light
def test_metrics_reject_mismatched_dims():
    with pytest.raises(ValueError):
        rse(_vec([1.0, 2.0]), _vec([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        psnr(_vec([1.0]), _vec([1.0]), max_value=0.0)


@pytest.mark.light
def test_observed_residual_is_relative_to_observed_norm():
    assert observed_residual(np.array([3.0, 0.0]), np.array([0.0, 4.0])) == pytest.approx(5.0 / 4.0)
    assert observed_residual(np.array([1.0]), np.array([0.0])) == pytest.approx(1.0)

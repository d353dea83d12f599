"""Initial tensor trains for completion.

The interpolation initializer averages the observed entries over h x h
boxes of the resized modes, upsamples that coarse image back with a cubic
kernel, and compresses the result with TT-SVD. Channel and frame modes are
never resized.
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from src.sampling import ObservationSet, observation_mask
from src.tensor_core import DenseTensor, mode_product, reshape
from src.tt_format import TensorTrain, tt_svd

LOGGER = logging.getLogger(__name__)

CUBIC_A = -0.5
DEFAULT_RESIZED_MODES = (1, 2)


def default_box_factor(observed_fraction: float) -> int:
    """max(2, round(sqrt(1/p))): each coarse cell expects about one observation."""
    if not 0.0 < observed_fraction <= 1.0:
        raise ValueError(f"observed fraction must lie in (0, 1], got {observed_fraction}")
    return max(2, int(math.floor(math.sqrt(1.0 / observed_fraction) + 0.5)))


def _cell_matrix(size: int, h: int) -> np.ndarray:
    """Box assignment (cells x size); the remainder joins the last cell."""
    cells = size // h
    assignment = np.minimum(np.arange(size) // h, cells - 1)
    matrix = np.zeros((cells, size))
    matrix[assignment, np.arange(size)] = 1.0
    return matrix


def _keys_weight(distance: np.ndarray) -> np.ndarray:
    s = np.abs(distance)
    a = CUBIC_A
    near = (a + 2.0) * s**3 - (a + 3.0) * s**2 + 1.0
    far = a * s**3 - 5.0 * a * s**2 + 8.0 * a * s - 4.0 * a
    return np.where(s <= 1.0, near, np.where(s < 2.0, far, 0.0))


def _cubic_matrix(target: int, source: int) -> np.ndarray:
    """Keys cubic resampling (target x source) with clamped edges."""
    matrix = np.zeros((target, source))
    centres = (np.arange(target) + 0.5) * source / target - 0.5
    base = np.floor(centres).astype(np.int64)
    for offset in (-1, 0, 1, 2):
        taps = base + offset
        weights = _keys_weight(centres - taps)
        np.add.at(matrix, (np.arange(target), np.clip(taps, 0, source - 1)), weights)
    return matrix


def _check_modes(dims: Sequence[int], modes: Sequence[int], h: int) -> list[int]:
    modes = [int(mode) for mode in modes]
    for mode in modes:
        if not 1 <= mode <= len(dims):
            raise ValueError(f"resized mode {mode} out of range 1..{len(dims)}")
        if dims[mode - 1] // h < 2:
            raise ValueError(
                f"box factor h={h} leaves fewer than 2 cells along mode {mode} "
                f"(dim {dims[mode - 1]})"
            )
    return modes


def box_downscale(
    t: DenseTensor,
    mask: np.ndarray,
    h: int,
    modes: Sequence[int] = DEFAULT_RESIZED_MODES,
) -> DenseTensor:
    """Average the observed entries over h-boxes of each resized mode.

    Cells without any observed entry take the global observed mean.
    """
    if h < 1:
        raise ValueError(f"box factor h must be >= 1, got {h}")
    modes = _check_modes(t.dims, modes, h)
    observed = np.asarray(mask, dtype=bool)
    if observed.shape != t.dims:
        raise ValueError(f"mask shape {observed.shape} does not match tensor dims {t.dims}")

    weights = DenseTensor.from_array(observed.astype(np.float64))
    sums = DenseTensor.from_array(np.where(observed, t.to_array(), 0.0))
    for mode in modes:
        cells = _cell_matrix(t.dims[mode - 1], h)
        sums = mode_product(sums, cells, mode)
        weights = mode_product(weights, cells, mode)

    fallback = float(t.to_array()[observed].mean()) if observed.any() else 0.0
    empty = weights.data == 0.0
    if empty.any():
        LOGGER.debug("box downscale: %s empty cells filled with %s", int(empty.sum()), fallback)
    averaged = np.where(empty, fallback, sums.data / np.where(empty, 1.0, weights.data))
    return DenseTensor(dims=sums.dims, data=averaged)


def cubic_upscale(
    t: DenseTensor,
    target_dims: Sequence[int],
    modes: Sequence[int] = DEFAULT_RESIZED_MODES,
) -> DenseTensor:
    """Resample each listed mode of `t` to its size in `target_dims`."""
    target_dims = [int(dim) for dim in target_dims]
    if len(target_dims) != t.ndim:
        raise ValueError(f"target dims {target_dims} do not match a {t.ndim}-way tensor")
    result = t
    for mode in modes:
        result = mode_product(result, _cubic_matrix(target_dims[mode - 1], t.dims[mode - 1]), mode)
    if list(result.dims) != target_dims:
        raise ValueError(f"upscaled dims {list(result.dims)} differ from target {target_dims}")
    return result


def interp_dense(
    obs: ObservationSet,
    h: int,
    resized_modes: Sequence[int] = DEFAULT_RESIZED_MODES,
) -> DenseTensor:
    """Dense interpolation estimate over the original dims of `obs`."""
    coarse = box_downscale(zero_fill_dense(obs), observation_mask(obs), h, resized_modes)
    return cubic_upscale(coarse, obs.dims, resized_modes)


def zero_fill_dense(obs: ObservationSet) -> DenseTensor:
    """Observed values in place, zeros elsewhere."""
    data = np.zeros(int(np.prod(obs.dims)))
    data[obs.linear() - 1] = obs.values
    return DenseTensor(dims=obs.dims, data=data)


def _compress(t: DenseTensor, ranks: Sequence[int], factored_dims: Sequence[int] | None) -> TensorTrain:
    target = t if factored_dims is None else reshape(t, factored_dims)
    return tt_svd(target, ranks)


def interp_init(
    obs: ObservationSet,
    dims: Sequence[int],
    h: int,
    ranks: Sequence[int],
    factored_dims: Sequence[int] | None = None,
    resized_modes: Sequence[int] = DEFAULT_RESIZED_MODES,
) -> TensorTrain:
    """Interpolation initializer; `dims` are the original (unfactored) dims.

    `factored_dims` is the flat factor list the train is built over; the
    column-major reshape maps the original layout onto it unchanged.
    """
    if tuple(int(dim) for dim in dims) != obs.dims:
        raise ValueError(f"dims {list(dims)} do not match observation dims {list(obs.dims)}")
    estimate = interp_dense(obs, h, resized_modes)
    LOGGER.info("interp init: h=%s resized_modes=%s", h, list(resized_modes))
    return _compress(estimate, ranks, factored_dims)


def zero_fill_init(
    obs: ObservationSet,
    dims: Sequence[int],
    ranks: Sequence[int],
    factored_dims: Sequence[int] | None = None,
) -> TensorTrain:
    if tuple(int(dim) for dim in dims) != obs.dims:
        raise ValueError(f"dims {list(dims)} do not match observation dims {list(obs.dims)}")
    return _compress(zero_fill_dense(obs), ranks, factored_dims)

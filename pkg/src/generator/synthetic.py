"""Seeded synthetic completion instances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.masks import make_mask, observe
from src.sampling import ObservationSet
from src.tensor_core import DenseTensor
from src.tt_format import TensorTrain, contract_full, random_tt

MAX_IMAGE_COMPONENTS = 5


@dataclass(frozen=True)
class SyntheticInstance:
    """Ground truth plus its observed entries."""

    truth: DenseTensor
    observations: ObservationSet
    train: TensorTrain | None = None


def low_rank_instance(
    dims: Sequence[int],
    ranks: Sequence[int],
    observed_fraction: float,
    seed: int,
) -> SyntheticInstance:
    """Random TT of the given ranks with iid observed entries."""
    rng = np.random.default_rng(seed)
    train = random_tt(dims, ranks, rng)
    truth = contract_full(train)
    skeleton = make_mask(truth.dims, observed_fraction, mode="iid", seed=seed + 1)
    return SyntheticInstance(truth=truth, observations=observe(truth, skeleton), train=train)


def band_limited_image(
    height: int,
    width: int,
    seed: int,
    components: int = MAX_IMAGE_COMPONENTS,
    channels: int = 3,
) -> DenseTensor:
    """Sum of low-frequency sinusoid products per channel, kept inside [0.05, 0.95]."""
    if not 1 <= components <= MAX_IMAGE_COMPONENTS:
        raise ValueError(f"components must lie in 1..{MAX_IMAGE_COMPONENTS}, got {components}")
    rng = np.random.default_rng(seed)
    rows = np.arange(height)[:, None] / height
    cols = np.arange(width)[None, :] / width
    image = np.empty((height, width, channels))
    for channel in range(channels):
        amplitudes = rng.uniform(0.2, 1.0, size=components)
        amplitudes *= 0.45 / amplitudes.sum()
        layer = np.full((height, width), 0.5)
        for amplitude in amplitudes:
            fy, fx = rng.integers(1, 4, size=2)
            py, px = rng.uniform(0.0, 2.0 * np.pi, size=2)
            layer += amplitude * np.sin(2 * np.pi * fy * rows + py) * np.cos(2 * np.pi * fx * cols + px)
        image[:, :, channel] = layer
    return DenseTensor.from_array(image)


def image_instance(
    height: int,
    width: int,
    observed_fraction: float,
    seed: int,
    components: int = MAX_IMAGE_COMPONENTS,
) -> SyntheticInstance:
    """Band-limited colour image with pixels observed iid (all channels together)."""
    truth = band_limited_image(height, width, seed, components)
    skeleton = make_mask(truth.dims, observed_fraction, mode="iid", seed=seed + 1, channel_modes=1)
    return SyntheticInstance(truth=truth, observations=observe(truth, skeleton))


def video_instance(
    height: int,
    width: int,
    frames: int,
    channels: int,
    observed_fraction: float,
    seed: int,
) -> SyntheticInstance:
    """Smooth frames drifting in time, observed through one sensor mask."""
    rng = np.random.default_rng(seed)
    base = band_limited_image(height, width, seed, components=3, channels=channels).to_array()
    drift = rng.uniform(0.02, 0.08)
    stack = np.stack(
        [np.clip(base + drift * np.sin(2 * np.pi * frame / max(frames, 1)), 0.0, 1.0) for frame in range(frames)],
        axis=2,
    )
    truth = DenseTensor.from_array(stack)
    skeleton = make_mask(truth.dims, observed_fraction, mode="sensor", seed=seed + 1)
    return SyntheticInstance(truth=truth, observations=observe(truth, skeleton))

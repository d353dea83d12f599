"""Mask generation and observation file IO.

Observation files are CSV with one record per entry, `i_1,...,i_d,value`
(1-based indices), preceded by a header row. Dense masks are `.npy`
boolean arrays or PGM/PPM images whose nonzero pixels mark observations.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from src.image_io import load_image
from src.sampling import ObservationSet, observation_mask, observations_from_dense
from src.tensor_core import DenseTensor, dims_product, multi_indices

LOGGER = logging.getLogger(__name__)

MASK_MODES = ("iid", "sensor")


def _validate_fraction(observed_fraction: float) -> float:
    fraction = float(observed_fraction)
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"observed fraction must lie in (0, 1], got {observed_fraction}")
    return fraction


def _sample_positions(count: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    keep = int(np.floor(fraction * count + 0.5))
    keep = max(1, min(count, keep))
    if keep == count:
        return np.arange(count)
    return np.sort(rng.choice(count, size=keep, replace=False))


def make_mask(
    dims: Sequence[int],
    observed_fraction: float,
    mode: str = "iid",
    seed: int = 0,
    channel_modes: int = 0,
) -> ObservationSet:
    """Seeded observation skeleton (values all zero) over `dims`.

    iid: positions over the leading `d - channel_modes` modes are sampled
    without replacement and keep every entry of the trailing channel modes.
    sensor: one mask over the first two (spatial) modes, replicated over all
    remaining modes (frames and channels).
    """
    dims = tuple(int(dim) for dim in dims)
    fraction = _validate_fraction(observed_fraction)
    if mode not in MASK_MODES:
        raise ValueError(f"unknown mask mode: {mode!r} (expected one of {MASK_MODES})")

    if mode == "sensor":
        if len(dims) < 3:
            raise ValueError(f"sensor masks need spatial modes plus grouped modes, got dims {list(dims)}")
        shared = len(dims) - 2
    else:
        shared = int(channel_modes)
        if not 0 <= shared < len(dims):
            raise ValueError(f"channel_modes must lie in 0..{len(dims) - 1}, got {channel_modes}")

    lead_dims = dims[: len(dims) - shared]
    trail_dims = dims[len(dims) - shared :]
    rng = np.random.default_rng(seed)
    positions = _sample_positions(dims_product(lead_dims), fraction, rng) + 1
    lead = multi_indices(positions, lead_dims)
    if trail_dims:
        trail = multi_indices(np.arange(1, dims_product(trail_dims) + 1), trail_dims)
        # Trailing modes vary slowest, matching column-major order of the full index.
        lead_rep = np.tile(lead, (trail.shape[0], 1))
        trail_rep = np.repeat(trail, lead.shape[0], axis=0)
        indices = np.concatenate([lead_rep, trail_rep], axis=1)
    else:
        indices = lead
    LOGGER.info(
        "mask %s: %s of %s positions observed (%s entries)",
        mode,
        lead.shape[0],
        dims_product(lead_dims),
        indices.shape[0],
    )
    return ObservationSet(dims=dims, indices=indices, values=np.zeros(indices.shape[0]))


def observe(t: DenseTensor, skeleton: ObservationSet) -> ObservationSet:
    """Fill a mask skeleton with the entries of `t`."""
    return observations_from_dense(t, observation_mask(skeleton))


def write_observations_csv(path: str | Path, obs: ObservationSet) -> None:
    header = [f"i_{k}" for k in range(1, obs.ndim + 1)] + ["value"]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as file_obj:
        writer = csv.writer(file_obj)
        writer.writerow(header)
        for index, value in zip(obs.indices, obs.values):
            writer.writerow([*(int(component) for component in index), repr(float(value))])


def read_observations_csv(path: str | Path, dims: Sequence[int]) -> ObservationSet:
    """Read `i_1,...,i_d,value` records; a non-numeric first row is a header."""
    dims = tuple(int(dim) for dim in dims)
    indices: list[list[int]] = []
    values: list[float] = []
    try:
        with open(path, "r", encoding="utf-8-sig", newline="") as file_obj:
            for line_number, row in enumerate(csv.reader(file_obj), start=1):
                if not row or not any(cell.strip() for cell in row):
                    continue
                if line_number == 1 and not row[0].strip().lstrip("-").isdigit():
                    continue
                if len(row) != len(dims) + 1:
                    raise RuntimeError(
                        f"observation CSV row {line_number} has {len(row)} fields, "
                        f"expected {len(dims) + 1}: {path}"
                    )
                indices.append([int(cell) for cell in row[:-1]])
                values.append(float(row[-1]))
    except RuntimeError:
        raise
    except (OSError, UnicodeDecodeError, csv.Error, ValueError) as exc:
        raise RuntimeError(f"Failed to read observation CSV: {path}") from exc

    return ObservationSet(
        dims=dims,
        indices=np.array(indices, dtype=np.int64).reshape(-1, len(dims)),
        values=np.array(values, dtype=np.float64),
    )


def save_mask(path: str | Path, obs: ObservationSet) -> None:
    """Write a mask by extension: `.csv` records or a dense `.npy` boolean array."""
    target = Path(path)
    if target.suffix.lower() == ".csv":
        write_observations_csv(target, obs)
        return
    if target.suffix.lower() == ".npy":
        target.parent.mkdir(parents=True, exist_ok=True)
        np.save(target, observation_mask(obs))
        return
    raise ValueError(f"unsupported mask file extension: {target.suffix}")


def load_mask(path: str | Path, t: DenseTensor) -> ObservationSet:
    """Load observations of `t` from a mask file chosen by extension.

    CSV records carry their own values. Dense masks (`.npy`, `.pgm`, `.ppm`)
    may cover only the leading modes; they are broadcast over trailing modes,
    and a pixel counts as observed only if every channel is set.
    """
    source = Path(path)
    if not source.exists():
        raise FileNotFoundError(f"mask file not found: {source}")

    suffix = source.suffix.lower()
    if suffix == ".csv":
        return read_observations_csv(source, t.dims)
    if suffix == ".npy":
        try:
            dense = np.load(source, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise RuntimeError(f"Failed to read mask array: {source}") from exc
    elif suffix in (".pgm", ".ppm"):
        image = load_image(source)
        dense = np.all(image.to_array() > 0.0, axis=2)
    else:
        raise ValueError(f"unsupported mask file extension: {suffix}")

    return observations_from_dense(t, _broadcast_mask(np.asarray(dense, dtype=bool), t.dims))


def _broadcast_mask(dense: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    if dense.shape == dims:
        # Colour images and videos: every channel of a pixel must be present.
        if len(dims) >= 3 and dims[-1] == 3:
            return np.repeat(np.all(dense, axis=-1, keepdims=True), 3, axis=-1)
        return dense
    if dense.shape != dims[: dense.ndim]:
        raise ValueError(f"mask shape {dense.shape} is not a prefix of tensor dims {dims}")
    expanded = dense.reshape(dense.shape + (1,) * (len(dims) - dense.ndim))
    return np.broadcast_to(expanded, dims).copy()

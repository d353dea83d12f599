"""Observed-entry bookkeeping and factored selection matrices."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from src.tensor_core import (
    DenseTensor,
    dims_product,
    khatri_rao_chain,
    linear_indices,
    multi_indices,
)

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservationSet:
    """N observed entries of a tensor with dimensions `dims`.

    `indices` is an (N, d) int array of 1-based multi-indices and `values`
    the matching observed values y.
    """

    dims: tuple[int, ...]
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dims = tuple(int(value) for value in self.dims)
        if not dims or any(value < 1 for value in dims):
            raise ValueError(f"invalid dims for observation set: {list(self.dims)}")
        indices = np.asarray(self.indices, dtype=np.int64).reshape(-1, len(dims))
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if indices.shape[0] != values.size:
            raise ValueError(
                f"observation count mismatch: {indices.shape[0]} indices vs {values.size} values"
            )
        # Validates ranges as a side effect.
        linear = linear_indices(indices, dims)
        if np.unique(linear).size != linear.size:
            raise ValueError("duplicate multi-indices in observation set")
        if not np.all(np.isfinite(values)):
            raise ValueError("observed values must be finite")
        indices.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_entries(
        cls,
        dims: Sequence[int],
        entries: Iterable[tuple[Sequence[int], float]],
    ) -> "ObservationSet":
        rows = list(entries)
        indices = np.array([list(m) for m, _ in rows], dtype=np.int64).reshape(-1, len(dims))
        values = np.array([value for _, value in rows], dtype=np.float64)
        return cls(dims=tuple(dims), indices=indices, values=values)

    @property
    def count(self) -> int:
        return int(self.values.size)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def linear(self) -> np.ndarray:
        """1-based column-major linear indices of the observations."""
        return linear_indices(self.indices, self.dims)

    def subset(self, rows: np.ndarray) -> "ObservationSet":
        rows = np.asarray(rows, dtype=np.int64)
        return ObservationSet(dims=self.dims, indices=self.indices[rows], values=self.values[rows])

    def with_values(self, values: np.ndarray) -> "ObservationSet":
        return ObservationSet(dims=self.dims, indices=self.indices, values=values)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class FactoredSelection:
    """Per-mode selection factors S^(k) stored as 1-based row positions.

    Column n of S^(k) is e_{rows[k][n]}; the dense binary matrices are only
    materialised on request.
    """

    dims: tuple[int, ...]
    rows: tuple[np.ndarray, ...]

    @property
    def count(self) -> int:
        return int(self.rows[0].size) if self.rows else 0

    def matrix(self, k: int) -> np.ndarray:
        """Dense I_k x N binary view of S^(k) (1-based k)."""
        if not 1 <= k <= len(self.dims):
            raise ValueError(f"mode {k} out of range 1..{len(self.dims)}")
        dense = np.zeros((self.dims[k - 1], self.count))
        dense[self.rows[k - 1] - 1, np.arange(self.count)] = 1.0
        return dense


def build_selection(obs: ObservationSet) -> FactoredSelection:
    rows = tuple(obs.indices[:, k].copy() for k in range(obs.ndim))
    return FactoredSelection(dims=obs.dims, rows=rows)


def assemble_selection(selection: FactoredSelection) -> np.ndarray:
    """Dense S = S^(d) ⊙ ... ⊙ S^(1), shape prod(dims) x N. Small instances only."""
    factors = [selection.matrix(k) for k in range(len(selection.dims), 0, -1)]
    return khatri_rao_chain(factors)


def gather(t: DenseTensor, obs: ObservationSet) -> np.ndarray:
    """Entries of `t` at the observed multi-indices."""
    if t.dims != obs.dims:
        raise ValueError(f"tensor dims {list(t.dims)} do not match observations {list(obs.dims)}")
    return t.data[obs.linear() - 1]


def observations_from_dense(t: DenseTensor, mask: np.ndarray) -> ObservationSet:
    """Observations of `t` wherever the boolean `mask` (shape dims) is set."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != t.dims:
        raise ValueError(f"mask shape {mask.shape} does not match tensor dims {t.dims}")
    linear = np.flatnonzero(mask.reshape(-1, order="F")) + 1
    return ObservationSet(dims=t.dims, indices=multi_indices(linear, t.dims), values=t.data[linear - 1])


def observation_mask(obs: ObservationSet) -> np.ndarray:
    """Boolean array of shape dims marking the observed entries."""
    flat = np.zeros(dims_product(obs.dims), dtype=bool)
    flat[obs.linear() - 1] = True
    return flat.reshape(obs.dims, order="F")


def split_factored_dims(dims: Sequence[int], factored_dims: Sequence) -> list[list[int]]:
    """Normalise a per-mode or flat factor list into per-mode lists.

    A flat list is consumed left to right; each original mode takes factors
    until their product equals its dimension.
    """
    dims = [int(dim) for dim in dims]
    items = list(factored_dims)
    if items and all(isinstance(item, (list, tuple)) for item in items):
        grouped = [[int(value) for value in item] for item in items]
        if len(grouped) != len(dims):
            raise ValueError(f"expected {len(dims)} factor groups, got {len(grouped)}")
        for position, (dim, factors) in enumerate(zip(dims, grouped), start=1):
            if not factors or dims_product(factors) != dim:
                raise ValueError(f"factors {factors} do not multiply to mode {position} dim {dim}")
        return grouped

    flat = [int(value) for value in items]
    grouped = []
    cursor = 0
    for position, dim in enumerate(dims, start=1):
        factors: list[int] = []
        product = 1
        while product < dim and cursor < len(flat):
            factors.append(flat[cursor])
            product *= flat[cursor]
            cursor += 1
        if dim == 1 and not factors:
            if cursor < len(flat) and flat[cursor] == 1:
                cursor += 1
            factors = [1]
            product = 1
        if product != dim:
            raise ValueError(
                f"factorization {flat} does not refine dims {dims} (mode {position}, dim {dim})"
            )
        grouped.append(factors)
    if cursor != len(flat):
        raise ValueError(f"factorization {flat} has leftover factors for dims {dims}")
    return grouped


def remap_observations(obs: ObservationSet, factored_dims: Sequence) -> ObservationSet:
    """Re-express observations over the refined (factored) mode list."""
    groups = split_factored_dims(obs.dims, factored_dims)
    columns = []
    for k, factors in enumerate(groups):
        columns.append(multi_indices(obs.indices[:, k], factors))
    flat_dims = tuple(factor for factors in groups for factor in factors)
    indices = np.concatenate(columns, axis=1) if columns else obs.indices
    return ObservationSet(dims=flat_dims, indices=indices, values=obs.values)


def coarsen_observations(
    obs: ObservationSet,
    original_dims: Sequence[int],
    factored_dims: Sequence,
) -> ObservationSet:
    """Inverse of `remap_observations`."""
    groups = split_factored_dims(original_dims, factored_dims)
    flat_dims = tuple(factor for factors in groups for factor in factors)
    if flat_dims != obs.dims:
        raise ValueError(f"observations are over {list(obs.dims)}, expected {list(flat_dims)}")
    columns = []
    cursor = 0
    for factors in groups:
        block = obs.indices[:, cursor : cursor + len(factors)]
        columns.append(linear_indices(block, factors).reshape(-1, 1))
        cursor += len(factors)
    return ObservationSet(
        dims=tuple(int(dim) for dim in original_dims),
        indices=np.concatenate(columns, axis=1),
        values=obs.values,
    )


def holdout_split(
    obs: ObservationSet,
    fraction: float,
    seed: int,
) -> tuple[ObservationSet, ObservationSet]:
    """Seeded split into (train, validate); round(fraction*N) entries are held out."""
    if not 0.0 < float(fraction) < 1.0:
        raise ValueError(f"holdout fraction must lie in (0, 1), got {fraction}")
    held = int(np.floor(float(fraction) * obs.count + 0.5))
    permutation = np.random.default_rng(seed).permutation(obs.count)
    validate_rows = np.sort(permutation[:held])
    train_rows = np.sort(permutation[held:])
    if train_rows.size == 0:
        raise ValueError("holdout split leaves no training observations")
    LOGGER.debug("holdout split: train=%s validate=%s", train_rows.size, validate_rows.size)
    return obs.subset(train_rows), obs.subset(validate_rows)

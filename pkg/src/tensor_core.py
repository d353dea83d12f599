"""Dense d-way tensors, index arithmetic and Kronecker/Khatri-Rao primitives.

All linearisation is column-major (first index fastest) and every index at the
API surface is 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np


def _as_dims(dims: Sequence[int]) -> tuple[int, ...]:
    values = tuple(int(value) for value in dims)
    if not values:
        raise ValueError("dims must contain at least one mode")
    for position, value in enumerate(values, start=1):
        if value < 1:
            raise ValueError(f"dims[{position}] must be >= 1 (value={value})")
    return values


def dims_product(dims: Sequence[int]) -> int:
    """Number of entries addressed by `dims`."""
    return int(np.prod([int(value) for value in dims], dtype=np.int64))


@dataclass(frozen=True)
class DenseTensor:
    """A d-way real array stored as a flat column-major vector."""

    dims: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        dims = _as_dims(self.dims)
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64).reshape(-1))
        if data.size != dims_product(dims):
            raise ValueError(
                f"data length {data.size} does not match prod(dims)={dims_product(dims)}"
            )
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "DenseTensor":
        """Wrap an n-d numpy array, keeping its axis order."""
        values = np.asarray(array, dtype=np.float64)
        if values.ndim == 0:
            values = values.reshape(1)
        return cls(dims=values.shape, data=values.reshape(-1, order="F"))

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "DenseTensor":
        dims = _as_dims(dims)
        return cls(dims=dims, data=np.zeros(dims_product(dims)))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def to_array(self) -> np.ndarray:
        """Return an n-d view with shape `dims`."""
        return self.data.reshape(self.dims, order="F")

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))


def linear_index(m: Sequence[int], dims: Sequence[int]) -> int:
    """Map a 1-based multi-index to its 1-based column-major linear index."""
    dims = _as_dims(dims)
    indices = [int(value) for value in m]
    if len(indices) != len(dims):
        raise ValueError(f"multi-index has {len(indices)} components, dims has {len(dims)}")

    linear = 0
    stride = 1
    for position, (index, dim) in enumerate(zip(indices, dims), start=1):
        if not 1 <= index <= dim:
            raise ValueError(f"index component {position} out of range: {index} not in 1..{dim}")
        linear += (index - 1) * stride
        stride *= dim
    return linear + 1


def multi_index(i: int, dims: Sequence[int]) -> tuple[int, ...]:
    """Inverse of `linear_index`."""
    dims = _as_dims(dims)
    total = dims_product(dims)
    if not 1 <= int(i) <= total:
        raise ValueError(f"linear index out of range: {i} not in 1..{total}")

    remainder = int(i) - 1
    indices = []
    for dim in dims:
        indices.append(remainder % dim + 1)
        remainder //= dim
    return tuple(indices)


def linear_indices(indices: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Vectorised `linear_index` over the rows of an (N, d) array of 1-based indices."""
    dims = _as_dims(dims)
    rows = np.asarray(indices, dtype=np.int64).reshape(-1, len(dims))
    if rows.size and (np.any(rows < 1) or np.any(rows > np.asarray(dims))):
        raise ValueError("multi-index array contains out-of-range components")
    return np.ravel_multi_index(tuple((rows - 1).T), dims, order="F").astype(np.int64) + 1


def multi_indices(linear: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Vectorised `multi_index`; returns an (N, d) array of 1-based indices."""
    dims = _as_dims(dims)
    values = np.asarray(linear, dtype=np.int64).reshape(-1)
    total = dims_product(dims)
    if values.size and (np.any(values < 1) or np.any(values > total)):
        raise ValueError(f"linear indices must lie in 1..{total}")
    unravelled = np.unravel_index(values - 1, dims, order="F")
    return np.stack(unravelled, axis=1).astype(np.int64) + 1


def reshape(t: DenseTensor, new_dims: Sequence[int]) -> DenseTensor:
    """MATLAB-style reshape: the flat column-major data is kept as is."""
    new_dims = _as_dims(new_dims)
    if dims_product(new_dims) != t.size:
        raise ValueError(
            f"cannot reshape {list(t.dims)} ({t.size} entries) into {list(new_dims)}"
        )
    return DenseTensor(dims=new_dims, data=t.data.copy())


def mode_product(t: DenseTensor, U: np.ndarray, k: int) -> DenseTensor:
    """k-mode product `t x_k U` with `U` of shape (J, I_k); `k` is 1-based."""
    matrix = np.atleast_2d(np.asarray(U, dtype=np.float64))
    if not 1 <= k <= t.ndim:
        raise ValueError(f"mode {k} out of range for a {t.ndim}-way tensor")
    if matrix.shape[1] != t.dims[k - 1]:
        raise ValueError(
            f"matrix has {matrix.shape[1]} columns but mode {k} has dimension {t.dims[k - 1]}"
        )
    product = np.tensordot(matrix, t.to_array(), axes=([1], [k - 1]))
    return DenseTensor.from_array(np.moveaxis(product, 0, k - 1))


def khatri_rao(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product of (N1, M) and (N2, M) matrices."""
    left = np.atleast_2d(np.asarray(A, dtype=np.float64))
    right = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if left.shape[1] != right.shape[1]:
        raise ValueError(
            f"khatri_rao needs equal column counts: {left.shape[1]} != {right.shape[1]}"
        )
    columns = left.shape[1]
    return (left[:, None, :] * right[None, :, :]).reshape(-1, columns)


def khatri_rao_chain(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Khatri-Rao product of several matrices, left to right."""
    if not matrices:
        raise ValueError("khatri_rao_chain needs at least one matrix")
    return reduce(khatri_rao, matrices)


def kron(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Standard Kronecker product."""
    return np.kron(np.atleast_2d(A), np.atleast_2d(C))


def kron_chain(matrices: Sequence[np.ndarray]) -> np.ndarray:
    if not matrices:
        raise ValueError("kron_chain needs at least one matrix")
    return reduce(kron, matrices)

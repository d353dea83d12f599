"""Tensor trains and TT-matrices.

Core k of a tensor train has shape (R_k, I_k, R_{k+1}) and is vectorised
column-major, so `vec(core)[r + R_k*i + R_k*I_k*s]` is `core[r, i, s]`.
Sites (`canonical_site`) are 1-based.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from src.tensor_core import DenseTensor, dims_product

LOGGER = logging.getLogger(__name__)

TT_CONTAINER_VERSION = 1


@dataclass
class TensorTrain:
    """A chain of 3-way cores with R_1 = R_{d+1} = 1."""

    cores: list[np.ndarray]
    canonical_site: int | None = None

    def __post_init__(self):
        cores = [np.asarray(core, dtype=np.float64) for core in self.cores]
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        for position, core in enumerate(cores, start=1):
            if core.ndim != 3:
                raise ValueError(f"core {position} must be 3-way, got shape {core.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1 (R_1 = R_{d+1} = 1)")
        for position in range(len(cores) - 1):
            if cores[position].shape[2] != cores[position + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {position + 1} and {position + 2}: "
                    f"{cores[position].shape[2]} != {cores[position + 1].shape[0]}"
                )
        if self.canonical_site is not None and not 1 <= self.canonical_site <= len(cores):
            raise ValueError(f"canonical_site {self.canonical_site} out of range 1..{len(cores)}")
        self.cores = cores

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(core.shape[1] for core in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        """All TT-ranks R_1..R_{d+1}."""
        return tuple(core.shape[0] for core in self.cores) + (1,)

    @property
    def inner_ranks(self) -> tuple[int, ...]:
        """The free ranks R_2..R_d."""
        return self.ranks[1:-1]

    def copy(self) -> "TensorTrain":
        return TensorTrain([core.copy() for core in self.cores], self.canonical_site)

    def parameter_count(self) -> int:
        return int(sum(core.size for core in self.cores))


@dataclass
class TTMatrix:
    """TT representation of a (prod J_k) x (prod I_k) matrix; cores are (R_k, J_k, I_k, R_{k+1})."""

    cores: list[np.ndarray]
    row_dims: tuple[int, ...] = field(init=False)
    col_dims: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        cores = [np.asarray(core, dtype=np.float64) for core in self.cores]
        if not cores:
            raise ValueError("a TT-matrix needs at least one core")
        for position, core in enumerate(cores, start=1):
            if core.ndim != 4:
                raise ValueError(f"TT-matrix core {position} must be 4-way, got {core.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise ValueError("TT-matrix boundary ranks must be 1")
        for position in range(len(cores) - 1):
            if cores[position].shape[3] != cores[position + 1].shape[0]:
                raise ValueError(f"TT-matrix rank mismatch after core {position + 1}")
        self.cores = cores
        self.row_dims = tuple(core.shape[1] for core in cores)
        self.col_dims = tuple(core.shape[2] for core in cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(core.shape[0] for core in self.cores) + (1,)

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "TTMatrix":
        return cls([np.eye(int(dim)).reshape(1, int(dim), int(dim), 1) for dim in dims])


def _left_matrix(core: np.ndarray) -> np.ndarray:
    rank_left, dim, rank_right = core.shape
    return core.reshape(rank_left * dim, rank_right, order="F")


def _right_matrix(core: np.ndarray) -> np.ndarray:
    rank_left, dim, rank_right = core.shape
    return core.reshape(rank_left, dim * rank_right, order="F")


def feasible_ranks(dims: Sequence[int], ranks: Sequence[int]) -> list[int]:
    """Clamp R_2..R_d to min(requested, prod of left dims, prod of right dims)."""
    dims = [int(dim) for dim in dims]
    if len(ranks) != len(dims) - 1:
        raise ValueError(f"expected {len(dims) - 1} ranks for {len(dims)} modes, got {len(ranks)}")
    clamped = []
    for position, rank in enumerate(ranks, start=1):
        if int(rank) < 1:
            raise ValueError(f"ranks must be positive (R_{position + 1}={rank})")
        bound = min(dims_product(dims[:position]), dims_product(dims[position:]))
        clamped.append(min(int(rank), bound))
    return clamped


def tt_svd(t: DenseTensor, ranks: Sequence[int]) -> TensorTrain:
    """TT-SVD truncated to the prescribed ranks R_2..R_d; the result is site-d canonical."""
    if t.size == 0:
        raise ValueError("cannot decompose an empty tensor")
    dims = list(t.dims)
    target = feasible_ranks(dims, ranks)
    if list(target) != [int(rank) for rank in ranks]:
        LOGGER.warning("tt_svd clamped ranks %s to %s", list(ranks), target)

    cores: list[np.ndarray] = []
    remainder = t.data.reshape(1, -1)
    rank_left = 1
    for position, dim in enumerate(dims[:-1]):
        unfolding = remainder.reshape(rank_left * dim, -1, order="F")
        u, s, vt = scipy.linalg.svd(unfolding, full_matrices=False, lapack_driver="gesvd")
        keep = min(target[position], s.size)
        cores.append(u[:, :keep].reshape(rank_left, dim, keep, order="F"))
        remainder = s[:keep, None] * vt[:keep, :]
        rank_left = keep
    cores.append(remainder.reshape(rank_left, dims[-1], 1, order="F"))
    return TensorTrain(cores, canonical_site=len(dims))


def contract_full(tt: TensorTrain) -> DenseTensor:
    """Sum the train over its auxiliary indices."""
    partial = tt.cores[0].reshape(tt.cores[0].shape[1], -1, order="F")
    for core in tt.cores[1:]:
        rank_left, dim, rank_right = core.shape
        partial = partial @ core.reshape(rank_left, dim * rank_right, order="F")
        partial = partial.reshape(-1, rank_right, order="F")
    return DenseTensor(dims=tt.dims, data=partial.reshape(-1, order="F"))


def tt_entry(tt: TensorTrain, m: Sequence[int]) -> float:
    """Evaluate one entry by multiplying core slices."""
    indices = [int(value) for value in m]
    if len(indices) != tt.d:
        raise ValueError(f"multi-index has {len(indices)} components, train has {tt.d} cores")
    row = np.ones((1, 1))
    for position, (index, core) in enumerate(zip(indices, tt.cores), start=1):
        if not 1 <= index <= core.shape[1]:
            raise ValueError(f"index component {position} out of range: {index}")
        row = row @ core[:, index - 1, :]
    return float(row[0, 0])


def shift_canonical(tt: TensorTrain, direction: str) -> TensorTrain:
    """Move the canonical site one core left or right by a thin QR step."""
    if tt.canonical_site is None:
        raise ValueError("shift_canonical needs a tracked canonical_site")
    site = tt.canonical_site
    cores = [core.copy() for core in tt.cores]
    position = site - 1

    if direction == "right":
        if site == tt.d:
            raise ValueError(f"cannot shift right past the last core (site={site})")
        rank_left, dim, _ = cores[position].shape
        q, r = scipy.linalg.qr(_left_matrix(cores[position]), mode="economic")
        new_rank = q.shape[1]
        cores[position] = q.reshape(rank_left, dim, new_rank, order="F")
        nxt = cores[position + 1]
        merged = r @ _right_matrix(nxt)
        cores[position + 1] = merged.reshape(new_rank, nxt.shape[1], nxt.shape[2], order="F")
        return TensorTrain(cores, canonical_site=site + 1)

    if direction == "left":
        if site == 1:
            raise ValueError("cannot shift left past the first core (site=1)")
        _, dim, rank_right = cores[position].shape
        q, r = scipy.linalg.qr(_right_matrix(cores[position]).T, mode="economic")
        new_rank = q.shape[1]
        cores[position] = q.T.reshape(new_rank, dim, rank_right, order="F")
        prev = cores[position - 1]
        merged = _left_matrix(prev) @ r.T
        cores[position - 1] = merged.reshape(prev.shape[0], prev.shape[1], new_rank, order="F")
        return TensorTrain(cores, canonical_site=site - 1)

    raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")


def orthogonalize(tt: TensorTrain, site: int) -> TensorTrain:
    """Bring any train into site-`site` mixed-canonical form."""
    if not 1 <= site <= tt.d:
        raise ValueError(f"site {site} out of range 1..{tt.d}")
    current = TensorTrain([core.copy() for core in tt.cores], canonical_site=1)
    # Left-orthogonalise everything, then walk back to the requested site.
    for _ in range(tt.d - 1):
        current = shift_canonical(current, "right")
    while current.canonical_site > site:
        current = shift_canonical(current, "left")
    return current


def tt_norm(tt: TensorTrain) -> float:
    """Frobenius norm, read off the canonical core."""
    if tt.canonical_site is None:
        raise ValueError("tt_norm needs a tracked canonical_site")
    return float(np.linalg.norm(tt.cores[tt.canonical_site - 1]))


def random_tt(dims: Sequence[int], ranks: Sequence[int], rng: np.random.Generator) -> TensorTrain:
    """Gaussian cores with the given (clamped) ranks, returned site-d canonical."""
    dims = [int(dim) for dim in dims]
    full = [1] + feasible_ranks(dims, ranks) + [1]
    cores = [
        rng.standard_normal((full[position], dim, full[position + 1]))
        for position, dim in enumerate(dims)
    ]
    return orthogonalize(TensorTrain(cores), len(dims))


def ttm_from_matrix(
    M: np.ndarray,
    row_dims: Sequence[int],
    col_dims: Sequence[int],
    tol: float = 1e-12,
) -> TTMatrix:
    """TT-SVD of a matrix whose row/column indices are split per core.

    Row index j and column index i are both column-major over their factor
    lists; core k carries the pair (j_k, i_k). Singular values below
    `tol` times the largest one of each unfolding are dropped.
    """
    matrix = np.atleast_2d(np.asarray(M, dtype=np.float64))
    row_dims = [int(dim) for dim in row_dims]
    col_dims = [int(dim) for dim in col_dims]
    if len(row_dims) != len(col_dims):
        raise ValueError("row_dims and col_dims must have the same number of cores")
    if dims_product(row_dims) != matrix.shape[0] or dims_product(col_dims) != matrix.shape[1]:
        raise ValueError(
            f"matrix of shape {matrix.shape} does not match row_dims={row_dims} col_dims={col_dims}"
        )

    d = len(row_dims)
    tensor = matrix.reshape(row_dims + col_dims, order="F")
    interleaved = [axis for pair in zip(range(d), range(d, 2 * d)) for axis in pair]
    paired = np.transpose(tensor, interleaved)
    pair_dims = [row * col for row, col in zip(row_dims, col_dims)]

    cores: list[np.ndarray] = []
    remainder = paired.reshape(1, -1, order="F")
    rank_left = 1
    for position in range(d - 1):
        unfolding = remainder.reshape(rank_left * pair_dims[position], -1, order="F")
        u, s, vt = scipy.linalg.svd(unfolding, full_matrices=False, lapack_driver="gesvd")
        if s.size == 0 or s[0] == 0.0:
            keep = 1
        else:
            keep = max(1, int(np.count_nonzero(s > tol * s[0])))
        cores.append(
            u[:, :keep].reshape(rank_left, row_dims[position], col_dims[position], keep, order="F")
        )
        remainder = s[:keep, None] * vt[:keep, :]
        rank_left = keep
    cores.append(remainder.reshape(rank_left, row_dims[-1], col_dims[-1], 1, order="F"))
    return TTMatrix(cores)


def ttm_full(W: TTMatrix) -> np.ndarray:
    """Dense matrix of a TT-matrix (small sizes only)."""
    partial = W.cores[0].reshape(W.row_dims[0], W.col_dims[0], -1, order="F")
    rows, cols = W.row_dims[0], W.col_dims[0]
    for core in W.cores[1:]:
        partial = np.einsum("jia,abcs->jbics", partial, core)
        rows *= core.shape[1]
        cols *= core.shape[2]
        partial = partial.reshape(rows, cols, core.shape[3], order="F")
    return partial[:, :, 0]


def ttm_apply(W: TTMatrix, tt: TensorTrain) -> TensorTrain:
    """Core-by-core product of a TT-matrix with a tensor train."""
    if W.col_dims != tt.dims:
        raise ValueError(f"TT-matrix columns {W.col_dims} do not match train dims {tt.dims}")
    cores = []
    for w_core, a_core in zip(W.cores, tt.cores):
        merged = np.einsum("ajib,ris->arjbs", w_core, a_core)
        ra, rr, rows, rb, rs = merged.shape
        cores.append(merged.reshape(ra * rr, rows, rb * rs))
    return TensorTrain(cores)


def save_tt(path: str | Path, tt: TensorTrain) -> None:
    """Write a versioned flat container: dims, ranks and column-major core data."""
    flat = np.concatenate([core.reshape(-1, order="F") for core in tt.cores])
    np.savez(
        path,
        format_version=np.array([TT_CONTAINER_VERSION], dtype=np.int64),
        dims=np.asarray(tt.dims, dtype=np.int64),
        ranks=np.asarray(tt.ranks, dtype=np.int64),
        canonical_site=np.array([tt.canonical_site or 0], dtype=np.int64),
        data=flat,
    )


def load_tt(path: str | Path) -> TensorTrain:
    """Read a container written by `save_tt`."""
    try:
        with np.load(path) as payload:
            version = int(payload["format_version"][0])
            dims = [int(value) for value in payload["dims"]]
            ranks = [int(value) for value in payload["ranks"]]
            site = int(payload["canonical_site"][0])
            flat = np.asarray(payload["data"], dtype=np.float64)
    except (OSError, KeyError, ValueError) as exc:
        raise RuntimeError(f"failed to read tensor train container: {path}") from exc

    if version != TT_CONTAINER_VERSION:
        raise RuntimeError(f"unsupported tensor train container version: {version}")
    if len(ranks) != len(dims) + 1:
        raise RuntimeError(f"tensor train container has inconsistent ranks: {ranks}")

    cores = []
    offset = 0
    for position, dim in enumerate(dims):
        shape = (ranks[position], dim, ranks[position + 1])
        count = int(np.prod(shape))
        cores.append(flat[offset : offset + count].reshape(shape, order="F"))
        offset += count
    if offset != flat.size:
        raise RuntimeError("tensor train container data length mismatch")
    return TensorTrain(cores, canonical_site=site or None)

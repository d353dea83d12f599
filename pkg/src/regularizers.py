"""Total-variation operators and their core-local Gram terms.

A TV operator acts on one original mode p. Over the factored chain it is the
TT-matrix W_p = I ⊗ ... ⊗ D_p ⊗ ... ⊗ I, where the D_p block spans the cores
that mode p was split into and every other core carries an identity.

Environments are 4-way arrays E[a, r, b, q]: (a, b) index the operator's
TT-matrix rank on the two copies and (r, q) the tensor train rank.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.tensor_core import dims_product
from src.tt_format import TensorTrain, TTMatrix, ttm_from_matrix

LOGGER = logging.getLogger(__name__)

TV_TT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TVOperator:
    mode: int
    dense: np.ndarray
    tt_matrix: TTMatrix
    weight: float = 1.0
    first_core: int = 1

    @property
    def last_core(self) -> int:
        return self.first_core + len(self.tt_matrix.cores) - 1

    def with_weight(self, weight: float) -> "TVOperator":
        return TVOperator(self.mode, self.dense, self.tt_matrix, float(weight), self.first_core)


def difference_matrix(size: int) -> np.ndarray:
    """Forward differences with a zero bottom row."""
    if size < 1:
        raise ValueError(f"difference operator size must be >= 1, got {size}")
    matrix = np.eye(size) - np.eye(size, k=1)
    matrix[-1, :] = 0.0
    return matrix


def build_tv(
    mode_dim: int,
    factored_dims_for_mode: Sequence[int] | None = None,
    mode: int = 1,
    weight: float = 1.0,
    first_core: int = 1,
) -> TVOperator:
    factors = [int(value) for value in (factored_dims_for_mode or [mode_dim])]
    if dims_product(factors) != int(mode_dim):
        raise ValueError(f"factors {factors} do not multiply to mode dimension {mode_dim}")
    if weight < 0:
        raise ValueError(f"TV weight must be >= 0, got {weight}")
    dense = difference_matrix(int(mode_dim))
    tt_matrix = ttm_from_matrix(dense, factors, factors, tol=TV_TT_TOLERANCE)
    LOGGER.debug("TV operator for mode %s: factors=%s ranks=%s", mode, factors, tt_matrix.ranks)
    return TVOperator(
        mode=int(mode),
        dense=dense,
        tt_matrix=tt_matrix,
        weight=float(weight),
        first_core=int(first_core),
    )


def build_tv_operators(
    mode_factors: Sequence[Sequence[int]],
    modes: Sequence[int],
    weights: Sequence[float] | float = 1.0,
) -> list[TVOperator]:
    """One operator per regularized original mode, placed in the global core chain."""
    groups = [[int(value) for value in factors] for factors in mode_factors]
    modes = [int(mode) for mode in modes]
    if isinstance(weights, (int, float)):
        weights = [float(weights)] * len(modes)
    if len(weights) != len(modes):
        raise ValueError(f"got {len(weights)} TV weights for {len(modes)} modes")

    operators = []
    for mode, weight in zip(modes, weights):
        if not 1 <= mode <= len(groups):
            raise ValueError(f"TV mode {mode} out of range 1..{len(groups)}")
        first_core = 1 + sum(len(factors) for factors in groups[: mode - 1])
        operators.append(
            build_tv(
                dims_product(groups[mode - 1]),
                groups[mode - 1],
                mode=mode,
                weight=float(weight),
                first_core=first_core,
            )
        )
    return operators


def operator_cores(op: TVOperator, dims: Sequence[int]) -> list[np.ndarray]:
    """Cores of the operator over the full chain `dims`."""
    dims = [int(dim) for dim in dims]
    block = list(op.tt_matrix.col_dims)
    start = op.first_core - 1
    if dims[start : start + len(block)] != block:
        raise ValueError(
            f"operator for mode {op.mode} spans dims {block} at core {op.first_core}, "
            f"train has {dims}"
        )
    cores = [np.eye(dim).reshape(1, dim, dim, 1) for dim in dims]
    cores[start : start + len(block)] = op.tt_matrix.cores
    return cores


def _identity_environment(rank: int) -> np.ndarray:
    return np.eye(rank).reshape(1, rank, 1, rank)


def extend_left(env: np.ndarray, w_core: np.ndarray, a_core: np.ndarray) -> np.ndarray:
    return np.einsum("arbq,axic,rit,bxje,qju->cteu", env, w_core, a_core, w_core, a_core, optimize=True)


def extend_right(env: np.ndarray, w_core: np.ndarray, a_core: np.ndarray) -> np.ndarray:
    return np.einsum("axic,rit,bxje,qju,cteu->arbq", w_core, a_core, w_core, a_core, env, optimize=True)


def _local_gram(left: np.ndarray, w_core: np.ndarray, right: np.ndarray) -> np.ndarray:
    block = np.einsum("arbq,axic,bxje,cteu->ritqju", left, w_core, w_core, right, optimize=True)
    size = block.shape[0] * block.shape[1] * block.shape[2]
    return block.reshape(size, size, order="F")


def gram_term(
    tt: TensorTrain,
    op: TVOperator,
    k: int,
    exploit_canonical: bool = True,
) -> np.ndarray:
    """W_p^T W_p restricted to core k, of size (R_k I_k R_{k+1})^2.

    With `exploit_canonical` the train must be site-k canonical, and the
    identity stretches on either side collapse to identity environments.
    """
    if not 1 <= k <= tt.d:
        raise ValueError(f"core {k} out of range 1..{tt.d}")
    if exploit_canonical and tt.canonical_site != k:
        raise ValueError(f"gram_term needs a site-{k} canonical train, got {tt.canonical_site}")

    w_cores = operator_cores(op, tt.dims)
    ranks = tt.ranks

    left_start = 1
    left = np.ones((1, 1, 1, 1))
    if exploit_canonical and op.first_core > 1:
        left_start = min(op.first_core, k)
        left = _identity_environment(ranks[left_start - 1])
    for j in range(left_start, k):
        left = extend_left(left, w_cores[j - 1], tt.cores[j - 1])

    right_stop = tt.d
    right = np.ones((1, 1, 1, 1))
    if exploit_canonical and op.last_core < tt.d:
        right_stop = max(op.last_core, k)
        right = _identity_environment(ranks[right_stop])
    for j in range(right_stop, k, -1):
        right = extend_right(right, w_cores[j - 1], tt.cores[j - 1])

    return _local_gram(left, w_cores[k - 1], right)


def tv_value(tt: TensorTrain, op: TVOperator) -> float:
    """||A x_p D_p||_F^2 by full network contraction."""
    env = np.ones((1, 1, 1, 1))
    for w_core, a_core in zip(operator_cores(op, tt.dims), tt.cores):
        env = extend_left(env, w_core, a_core)
    return max(float(env.reshape(-1)[0]), 0.0)


def adapt_lambda(weights: Sequence[float], relative_observed_error: float) -> list[float]:
    """Scale every TV weight by the current relative error on observed entries."""
    error = float(relative_observed_error)
    if error < 0 or not np.isfinite(error):
        raise ValueError(f"relative error must be finite and >= 0, got {relative_observed_error}")
    return [float(weight) * error for weight in weights]


class TVEnvironment:
    """Per-operator left/right environment cache reused across a sweep.

    `left[k]` contracts cores 1..k-1 and `right[k]` cores k+1..d. The cache
    follows the same incremental pattern as the solver's interface vectors:
    left environments are extended after forward steps and right
    environments after backward steps.
    """

    def __init__(self, op: TVOperator, tt: TensorTrain):
        self.op = op
        self.w_cores = operator_cores(op, tt.dims)
        self.left: dict[int, np.ndarray] = {}
        self.right: dict[int, np.ndarray] = {}
        self.rebuild(tt)

    def rebuild(self, tt: TensorTrain) -> None:
        """Recompute everything for a train canonical at its last site."""
        site = tt.canonical_site or tt.d
        self.left = {1: np.ones((1, 1, 1, 1))}
        for j in range(1, site):
            self.push_left(tt, j)
        self.right = {tt.d: np.ones((1, 1, 1, 1))}
        for j in range(tt.d, site, -1):
            self.push_right(tt, j)

    def push_left(self, tt: TensorTrain, j: int) -> None:
        """Extend past core j, which is now left-orthogonal."""
        if j < self.op.first_core:
            self.left[j + 1] = _identity_environment(tt.ranks[j])
            return
        self.left[j + 1] = extend_left(self.left[j], self.w_cores[j - 1], tt.cores[j - 1])

    def push_right(self, tt: TensorTrain, j: int) -> None:
        """Extend past core j, which is now right-orthogonal."""
        if j > self.op.last_core:
            self.right[j - 1] = _identity_environment(tt.ranks[j - 1])
            return
        self.right[j - 1] = extend_right(self.right[j], self.w_cores[j - 1], tt.cores[j - 1])

    def gram(self, k: int) -> np.ndarray:
        return _local_gram(self.left[k], self.w_cores[k - 1], self.right[k])

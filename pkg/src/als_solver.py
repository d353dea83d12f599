"""Tensor completion in tensor-train form by alternating core updates.

One sweep updates cores d..2 (moving the canonical site left after each
update) and then cores 1..d-1 (moving it right). Every core update solves
the regularized normal equations

    (B^T B + sum_p lambda_p W_p^T W_p + gamma I + eps I) x = B^T y

where row l of B is a_{>k,l}^T ⊗ s_l^(k)T ⊗ a_{<k,l}^T.

In the grouped formulation the trailing original modes (frames, channels)
are folded into the mode of core 1 and every observed pixel carries all of
its grouped entries, so core 1 is solved with a matrix right-hand side.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from src.initializer import (
    DEFAULT_RESIZED_MODES,
    default_box_factor,
    interp_dense,
    zero_fill_dense,
)
from src.metrics import observed_residual
from src.regularizers import TVEnvironment, TVOperator, adapt_lambda, build_tv_operators, tv_value
from src.sampling import ObservationSet, remap_observations, split_factored_dims
from src.tensor_core import DenseTensor, dims_product, multi_indices, reshape
from src.tt_format import (
    TensorTrain,
    contract_full,
    feasible_ranks,
    orthogonalize,
    shift_canonical,
    tt_norm,
    tt_svd,
)

LOGGER = logging.getLogger(__name__)

RIDGE_SCALE = 1e-10
CONDITION_LIMIT = 1e8
INIT_MODES = ("interp", "zero")


class NumericalFailure(RuntimeError):
    """Raised when the iteration produces non-finite values."""


class SingularSystemError(RuntimeError):
    """Raised by `solve_core` when the regularized local system is singular."""


@dataclass(frozen=True)
class SolverOptions:
    max_sweeps: int = 10
    residual_tolerance: float = 1e-8
    residual_threshold: float | None = None
    adapt_lambda: bool = True

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if self.residual_tolerance < 0:
            raise ValueError(f"residual_tolerance must be >= 0, got {self.residual_tolerance}")


@dataclass(frozen=True)
class CompletionProblem:
    """Everything one completion run needs, expressed over the factored chain.

    `observations` live on `dims`. `source_observations` keep the original
    layout for the interpolation initializer; `group_size` > 1 marks the
    grouped formulation, where the first entry of `dims` is I_1 * group_size.
    """

    dims: tuple[int, ...]
    observations: ObservationSet
    ranks: tuple[int, ...]
    tv_operators: tuple[TVOperator, ...] = ()
    gamma: float = 0.0
    options: SolverOptions = field(default_factory=SolverOptions)
    init: str | TensorTrain = "zero"
    source_observations: ObservationSet | None = None
    box_factor: int | None = None
    resized_modes: tuple[int, ...] = DEFAULT_RESIZED_MODES
    validation: ObservationSet | None = None
    truth: DenseTensor | None = None
    group_size: int = 1

    def __post_init__(self):
        dims = tuple(int(dim) for dim in self.dims)
        if self.observations.dims != dims:
            raise ValueError(
                f"observations are over {list(self.observations.dims)}, problem dims are {list(dims)}"
            )
        if self.observations.count == 0:
            raise ValueError("completion needs at least one observation")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if isinstance(self.init, str) and self.init not in INIT_MODES:
            raise ValueError(f"unknown init mode: {self.init!r} (expected one of {INIT_MODES})")
        if self.init == "interp" and self.source_observations is None:
            raise ValueError("interp init needs the observations in their original layout")
        if self.group_size > 1 and self.tv_operators:
            raise ValueError("TV regularization is not supported in the grouped formulation")
        if self.validation is not None and self.validation.dims != dims:
            raise ValueError("validation observations must live on the problem dims")
        if self.truth is not None and self.truth.dims != dims:
            raise ValueError("truth tensor must live on the problem dims")

        ranks = feasible_ranks(dims, self.ranks)
        if list(ranks) != [int(rank) for rank in self.ranks]:
            LOGGER.warning("requested ranks %s clamped to %s", list(self.ranks), ranks)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "ranks", tuple(ranks))
        object.__setattr__(self, "tv_operators", tuple(self.tv_operators))


@dataclass
class SweepState:
    """Train plus cached interface vectors.

    `left[k]` is (N, R_k), the contraction of cores 1..k-1 with each
    observation's index selectors; `right[k]` is (N, R_{k+1}) for cores
    k+1..d. Indices in `rows` are 0-based.
    """

    tt: TensorTrain
    rows: np.ndarray
    left: dict[int, np.ndarray] = field(default_factory=dict)
    right: dict[int, np.ndarray] = field(default_factory=dict)
    residual_history: list[float] = field(default_factory=list)
    environments: list[TVEnvironment] = field(default_factory=list)


@dataclass(frozen=True)
class HalfSweepRecord:
    sweep: int
    half: str
    residual: float
    rse_train: float
    lambdas: tuple[float, ...]
    seconds: float


@dataclass
class CompletionDiagnostics:
    records: list[HalfSweepRecord] = field(default_factory=list)
    core_residuals: list[float] = field(default_factory=list)
    lambda_history: list[tuple[float, ...]] = field(default_factory=list)
    validation_rse: list[float] = field(default_factory=list)
    truth_rse: list[float] = field(default_factory=list)
    sweep_seconds: list[float] = field(default_factory=list)
    sweeps_run: int = 0
    stop_reason: str = "max_sweeps"
    skipped_updates: int = 0
    lstsq_fallbacks: int = 0
    underdetermined: bool = False

    def residual_history(self) -> list[float]:
        return [record.rse_train for record in self.records]

    @property
    def final_residual(self) -> float:
        return self.records[-1].rse_train if self.records else float("nan")


def evaluate_at(tt: TensorTrain, indices: np.ndarray) -> np.ndarray:
    """Train entries at an (N, d) array of 1-based multi-indices."""
    rows = np.asarray(indices, dtype=np.int64).reshape(-1, tt.d) - 1
    partial = np.ones((rows.shape[0], 1))
    for position, core in enumerate(tt.cores):
        partial = np.einsum("nr,rns->ns", partial, core[:, rows[:, position], :])
    return partial[:, 0]


def compute_interfaces(
    tt: TensorTrain,
    rows: np.ndarray,
) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """All left and right interface vectors, from scratch."""
    count = rows.shape[0]
    left = {1: np.ones((count, 1))}
    for k in range(1, tt.d):
        left[k + 1] = np.einsum("nr,rns->ns", left[k], tt.cores[k - 1][:, rows[:, k - 1], :])
    right = {tt.d: np.ones((count, 1))}
    for k in range(tt.d, 1, -1):
        right[k - 1] = np.einsum("rns,ns->nr", tt.cores[k - 1][:, rows[:, k - 1], :], right[k])
    return left, right


def init_state(
    tt: TensorTrain,
    observations: ObservationSet,
    operators: Sequence[TVOperator] = (),
) -> SweepState:
    if tt.canonical_site is None:
        raise ValueError("the initial train must carry a canonical site")
    if tt.dims != observations.dims:
        raise ValueError(f"train dims {tt.dims} do not match observations {observations.dims}")
    rows = observations.indices - 1
    left, right = compute_interfaces(tt, rows)
    environments = [TVEnvironment(op, tt) for op in operators]
    return SweepState(tt=tt, rows=rows, left=left, right=right, environments=environments)


def build_local_matrix(state: SweepState, k: int) -> np.ndarray:
    """B with B @ vec(core k) equal to the model at every observation."""
    rank_left, dim, rank_right = state.tt.cores[k - 1].shape
    left = state.left[k]
    right = state.right[k]
    count = state.rows.shape[0]
    local = np.zeros((count, rank_left, dim, rank_right))
    local[np.arange(count), :, state.rows[:, k - 1], :] = left[:, :, None] * right[:, None, :]
    return local.reshape(count, rank_left * dim * rank_right, order="F")


def _solve_regularized(
    B: np.ndarray,
    y: np.ndarray,
    gram_terms: Sequence[np.ndarray],
    lambdas: Sequence[float],
    gamma: float,
    size: int | None,
) -> tuple[np.ndarray, bool]:
    """Return (solution, used_least_squares)."""
    unknowns = B.shape[1]
    size = unknowns if size is None else int(size)
    normal = B.T @ B
    rhs = B.T @ y
    ridge = RIDGE_SCALE * float(np.trace(normal)) / size
    system = normal.copy()
    for weight, gram in zip(lambdas, gram_terms):
        if weight:
            system += float(weight) * gram
    system[np.diag_indices(unknowns)] += float(gamma) + ridge

    try:
        factor, lower = scipy.linalg.cho_factor(system, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"local system of size {unknowns} is not positive definite") from exc

    plain = float(gamma) == 0.0 and not any(weight for weight in lambdas)
    pivots = np.abs(np.diag(factor))
    if plain and pivots.min() > 0.0 and pivots.max() / pivots.min() > CONDITION_LIMIT:
        solution, *_ = scipy.linalg.lstsq(B, y, check_finite=False)
        return solution, True
    if pivots.min() == 0.0:
        raise SingularSystemError(f"local system of size {unknowns} has a zero pivot")
    return scipy.linalg.cho_solve((factor, lower), rhs, check_finite=False), False


def solve_core(
    B: np.ndarray,
    y: np.ndarray,
    gram_terms: Sequence[np.ndarray] = (),
    lambdas: Sequence[float] = (),
    gamma: float = 0.0,
    size: int | None = None,
) -> np.ndarray:
    """Solve one core's regularized normal equations.

    `y` may be a matrix, one column per right-hand side. The numerical ridge
    is eps = 1e-10 * trace(B^T B) / size with `size` defaulting to B's
    column count. When lambda = gamma = 0 and the Cholesky pivots indicate a
    condition number above 1e8 the plain least-squares problem is solved
    directly instead.
    """
    if len(gram_terms) != len(lambdas):
        raise ValueError(f"got {len(gram_terms)} Gram terms for {len(lambdas)} weights")
    if B.shape[0] != np.asarray(y).shape[0]:
        raise ValueError(f"B has {B.shape[0]} rows but y has {np.asarray(y).shape[0]}")
    solution, _ = _solve_regularized(B, y, gram_terms, lambdas, gamma, size)
    return solution


def _update_core(
    state: SweepState,
    problem: CompletionProblem,
    k: int,
    lambdas: Sequence[float],
    diagnostics: CompletionDiagnostics,
) -> float:
    """Replace core k by its local solution; returns the new relative residual."""
    tt = state.tt
    rank_left, dim, rank_right = tt.cores[k - 1].shape
    values = problem.observations.values

    if k == 1 and problem.group_size > 1:
        return _update_grouped_first_core(state, problem, diagnostics)

    B = build_local_matrix(state, k)
    grams = [env.gram(k) for env in state.environments]
    try:
        solution, fallback = _solve_regularized(B, values, grams, lambdas, problem.gamma, None)
        diagnostics.lstsq_fallbacks += int(fallback)
        tt.cores[k - 1] = solution.reshape(rank_left, dim, rank_right, order="F")
    except SingularSystemError as exc:
        LOGGER.warning("core %s update skipped: %s", k, exc)
        diagnostics.skipped_updates += 1
        solution = tt.cores[k - 1].reshape(-1, order="F")

    return observed_residual(B @ solution, values)


def _update_grouped_first_core(
    state: SweepState,
    problem: CompletionProblem,
    diagnostics: CompletionDiagnostics,
) -> float:
    tt = state.tt
    group = problem.group_size
    _, merged_dim, rank_right = tt.cores[0].shape
    dim = merged_dim // group
    pixels = state.rows.shape[0] // group

    # Rows n + pixels*g share their spatial index and right interface.
    spatial_rows = state.rows[:pixels, 0]
    right = state.right[1][:pixels]
    local = np.zeros((pixels, dim, rank_right))
    local[np.arange(pixels), spatial_rows, :] = right
    B = local.reshape(pixels, dim * rank_right, order="F")
    targets = problem.observations.values.reshape(pixels, group, order="F")

    try:
        solution, fallback = _solve_regularized(B, targets, [], [], problem.gamma, None)
        diagnostics.lstsq_fallbacks += int(fallback)
        blocks = solution.reshape(dim, rank_right, group, order="F").transpose(0, 2, 1)
        tt.cores[0] = blocks.reshape(1, merged_dim, rank_right, order="F")
    except SingularSystemError as exc:
        LOGGER.warning("grouped core 1 update skipped: %s", exc)
        diagnostics.skipped_updates += 1
        solution = (
            tt.cores[0].reshape(dim, group, rank_right, order="F").transpose(0, 2, 1)
        ).reshape(dim * rank_right, group, order="F")

    predictions = (B @ solution).reshape(-1, order="F")
    return observed_residual(predictions, problem.observations.values)


def _shift_left(state: SweepState, k: int) -> None:
    state.tt = shift_canonical(state.tt, "left")
    core = state.tt.cores[k - 1]
    state.right[k - 1] = np.einsum("rns,ns->nr", core[:, state.rows[:, k - 1], :], state.right[k])
    for env in state.environments:
        env.push_right(state.tt, k)


def _shift_right(state: SweepState, k: int) -> None:
    state.tt = shift_canonical(state.tt, "right")
    core = state.tt.cores[k - 1]
    state.left[k + 1] = np.einsum("nr,rns->ns", state.left[k], core[:, state.rows[:, k - 1], :])
    for env in state.environments:
        env.push_left(state.tt, k)


def sweep(
    state: SweepState,
    problem: CompletionProblem,
    lambdas: Sequence[float] | None = None,
    diagnostics: CompletionDiagnostics | None = None,
    sweep_index: int = 0,
) -> SweepState:
    """One backward half-sweep (cores d..2) followed by one forward half-sweep (cores 1..d-1)."""
    if state.tt.canonical_site != state.tt.d:
        raise ValueError(f"a sweep starts at site {state.tt.d}, got {state.tt.canonical_site}")
    weights = [op.weight for op in problem.tv_operators] if lambdas is None else list(lambdas)
    trace = CompletionDiagnostics() if diagnostics is None else diagnostics
    y_norm = problem.observations.norm()
    d = state.tt.d

    def close_half(half: str, residual: float, started: float) -> None:
        state.residual_history.append(residual)
        trace.records.append(
            HalfSweepRecord(
                sweep=sweep_index,
                half=half,
                residual=residual * y_norm if y_norm > 0 else residual,
                rse_train=residual,
                lambdas=tuple(weights),
                seconds=time.perf_counter() - started,
            )
        )

    if d == 1:
        started = time.perf_counter()
        residual = _update_core(state, problem, 1, weights, trace)
        trace.core_residuals.append(residual)
        close_half("single", residual, started)
        return state

    started = time.perf_counter()
    for k in range(d, 1, -1):
        residual = _update_core(state, problem, k, weights, trace)
        trace.core_residuals.append(residual)
        _shift_left(state, k)
    close_half("backward", residual, started)

    started = time.perf_counter()
    for k in range(1, d):
        residual = _update_core(state, problem, k, weights, trace)
        trace.core_residuals.append(residual)
        _shift_right(state, k)
    close_half("forward", residual, started)
    return state


def initial_train(problem: CompletionProblem) -> TensorTrain:
    """Site-d canonical starting point for `problem`."""
    if isinstance(problem.init, TensorTrain):
        if problem.init.dims != problem.dims:
            raise ValueError(f"initial train dims {problem.init.dims} differ from {problem.dims}")
        return orthogonalize(problem.init, problem.init.d)

    if problem.init == "zero":
        return tt_svd(zero_fill_dense(problem.observations), problem.ranks)

    source = problem.source_observations
    fraction = source.count / dims_product(source.dims)
    h = problem.box_factor or default_box_factor(fraction)
    estimate = interp_dense(source, h, problem.resized_modes)
    LOGGER.info("interp init: h=%s resized_modes=%s", h, list(problem.resized_modes))
    if problem.group_size > 1:
        layout = group_dense(estimate, problem.dims, problem.group_size)
    else:
        layout = reshape(estimate, problem.dims)
    return tt_svd(layout, problem.ranks)


def objective(
    tt: TensorTrain,
    problem: CompletionProblem,
    lambdas: Sequence[float] | None = None,
) -> float:
    """||S^T vec(A) - y||^2 + sum_p lambda_p ||A x_p D_p||^2 + gamma ||A||^2."""
    weights = [op.weight for op in problem.tv_operators] if lambdas is None else list(lambdas)
    residual = evaluate_at(tt, problem.observations.indices) - problem.observations.values
    value = float(residual @ residual)
    for weight, op in zip(weights, problem.tv_operators):
        value += float(weight) * tv_value(tt, op)
    if problem.gamma:
        value += problem.gamma * tt_norm(orthogonalize(tt, tt.d)) ** 2
    return value


def _smallest_local_size(problem: CompletionProblem) -> int:
    full = (1,) + problem.ranks + (1,)
    sizes = [full[k] * dim * full[k + 1] for k, dim in enumerate(problem.dims)]
    if problem.group_size > 1:
        sizes[0] //= problem.group_size
    return min(sizes)


def _rse_on(tt: TensorTrain, observations: ObservationSet) -> float:
    return observed_residual(evaluate_at(tt, observations.indices), observations.values)


def complete(problem: CompletionProblem) -> tuple[TensorTrain, CompletionDiagnostics]:
    """Initialise, then sweep until max_sweeps, convergence or the residual threshold."""
    options = problem.options
    diagnostics = CompletionDiagnostics()
    observations = problem.observations

    rows_needed = _smallest_local_size(problem)
    rows_available = observations.count // max(problem.group_size, 1)
    if rows_available < rows_needed:
        diagnostics.underdetermined = True
        LOGGER.warning(
            "only %s observations for local systems of size %s; relying on regularization",
            rows_available,
            rows_needed,
        )

    tt = initial_train(problem)
    state = init_state(tt, observations, problem.tv_operators)
    lambdas = [op.weight for op in problem.tv_operators]

    previous = _rse_on(tt, observations)
    if not np.isfinite(previous):
        raise NumericalFailure("initial residual is not finite")
    diagnostics.records.append(
        HalfSweepRecord(
            sweep=0,
            half="init",
            residual=previous * observations.norm(),
            rse_train=previous,
            lambdas=tuple(lambdas),
            seconds=0.0,
        )
    )
    LOGGER.info("init residual=%.6e ranks=%s dims=%s", previous, list(problem.ranks), list(problem.dims))

    for sweep_index in range(1, options.max_sweeps + 1):
        started = time.perf_counter()
        diagnostics.lambda_history.append(tuple(lambdas))
        sweep(state, problem, lambdas, diagnostics, sweep_index)
        current = state.residual_history[-1]
        if not np.isfinite(current) or not all(np.all(np.isfinite(core)) for core in state.tt.cores):
            raise NumericalFailure(f"non-finite residual after sweep {sweep_index}")

        diagnostics.sweeps_run = sweep_index
        diagnostics.sweep_seconds.append(time.perf_counter() - started)
        if problem.validation is not None:
            diagnostics.validation_rse.append(_rse_on(state.tt, problem.validation))
        if problem.truth is not None:
            diagnostics.truth_rse.append(
                float(
                    np.linalg.norm(contract_full(state.tt).data - problem.truth.data)
                    / max(problem.truth.norm(), np.finfo(float).tiny)
                )
            )
        LOGGER.info(
            "sweep %s: residual=%.6e lambdas=%s seconds=%.3f",
            sweep_index,
            current,
            [round(value, 6) for value in lambdas],
            diagnostics.sweep_seconds[-1],
        )

        if options.adapt_lambda and lambdas:
            lambdas = adapt_lambda(lambdas, current)

        if options.residual_threshold is not None and current <= options.residual_threshold:
            diagnostics.stop_reason = "threshold"
            break
        if previous == 0.0 or abs(previous - current) < options.residual_tolerance * previous:
            diagnostics.stop_reason = "converged"
            break
        previous = current

    if diagnostics.lstsq_fallbacks:
        LOGGER.warning(
            "%s core updates fell back to least squares (condition limit %.0e)",
            diagnostics.lstsq_fallbacks,
            CONDITION_LIMIT,
        )
    return state.tt, diagnostics


def build_problem(
    observations: ObservationSet,
    mode_factors: Sequence,
    ranks: Sequence[int],
    tv_modes: Sequence[int] = (),
    tv_weight: float | Sequence[float] = 1.0,
    gamma: float = 0.0,
    options: SolverOptions | None = None,
    init: str | TensorTrain = "interp",
    box_factor: int | None = None,
    resized_modes: Sequence[int] = DEFAULT_RESIZED_MODES,
    validation: ObservationSet | None = None,
    truth: DenseTensor | None = None,
) -> CompletionProblem:
    """Remap original-layout inputs onto the factored chain."""
    groups = split_factored_dims(observations.dims, mode_factors)
    flat_dims = tuple(factor for factors in groups for factor in factors)
    operators = build_tv_operators(groups, tv_modes, tv_weight) if tv_modes else []
    return CompletionProblem(
        dims=flat_dims,
        observations=remap_observations(observations, groups),
        ranks=tuple(ranks),
        tv_operators=tuple(operators),
        gamma=gamma,
        options=options or SolverOptions(),
        init=init,
        source_observations=observations,
        box_factor=box_factor,
        resized_modes=tuple(resized_modes),
        validation=None if validation is None else remap_observations(validation, groups),
        truth=None if truth is None else reshape(truth, flat_dims),
    )


def group_dense(t: DenseTensor, merged_dims: Sequence[int], group_size: int) -> DenseTensor:
    """Original layout (spatial..., grouped...) to the merged layout (I_1*G, I_2, ...)."""
    merged_dims = tuple(int(dim) for dim in merged_dims)
    first = merged_dims[0] // group_size
    rest = t.size // (first * group_size)
    blocks = t.data.reshape(first, rest, group_size, order="F").transpose(0, 2, 1)
    return DenseTensor(dims=merged_dims, data=blocks.reshape(-1, order="F"))


def ungroup_dense(t: DenseTensor, original_dims: Sequence[int], group_size: int) -> DenseTensor:
    """Inverse of `group_dense`."""
    first = t.dims[0] // group_size
    rest = t.size // (first * group_size)
    blocks = t.data.reshape(first, group_size, rest, order="F").transpose(0, 2, 1)
    return DenseTensor(dims=tuple(original_dims), data=blocks.reshape(-1, order="F"))


def build_grouped_problem(
    observations: ObservationSet,
    spatial_factors: Sequence,
    group_ndim: int,
    ranks: Sequence[int],
    gamma: float = 0.0,
    options: SolverOptions | None = None,
    init: str | TensorTrain = "interp",
    box_factor: int | None = None,
    resized_modes: Sequence[int] = DEFAULT_RESIZED_MODES,
    truth: DenseTensor | None = None,
) -> CompletionProblem:
    """Grouped formulation: the trailing `group_ndim` modes join core 1.

    Every observed spatial position must be observed in all of its grouped
    entries (a sensor mask).
    """
    dims = observations.dims
    if not 1 <= group_ndim < len(dims):
        raise ValueError(f"group_ndim must lie in 1..{len(dims) - 1}, got {group_ndim}")
    spatial_dims = dims[: len(dims) - group_ndim]
    group_size = dims_product(dims[len(dims) - group_ndim :])
    groups = split_factored_dims(spatial_dims, spatial_factors)
    flat_spatial = [factor for factors in groups for factor in factors]
    spatial_size = dims_product(spatial_dims)

    linear = observations.linear() - 1
    position = linear % spatial_size
    group = linear // spatial_size
    pixels, slot, counts = np.unique(position, return_inverse=True, return_counts=True)
    if np.any(counts != group_size):
        raise ValueError(
            "grouped completion needs every observed pixel in all "
            f"{group_size} grouped entries (sensor mask)"
        )

    targets = np.zeros((pixels.size, group_size))
    targets[slot, group] = observations.values
    spatial_index = multi_indices(pixels + 1, flat_spatial)
    group_column = np.repeat(np.arange(group_size), pixels.size)
    indices = np.tile(spatial_index, (group_size, 1))
    indices[:, 0] = indices[:, 0] + flat_spatial[0] * group_column
    merged_dims = (flat_spatial[0] * group_size, *flat_spatial[1:])

    return CompletionProblem(
        dims=merged_dims,
        observations=ObservationSet(
            dims=merged_dims,
            indices=indices,
            values=targets.reshape(-1, order="F"),
        ),
        ranks=tuple(ranks),
        gamma=gamma,
        options=options or SolverOptions(),
        init=init,
        source_observations=observations,
        box_factor=box_factor,
        resized_modes=tuple(resized_modes),
        truth=None if truth is None else group_dense(truth, merged_dims, group_size),
        group_size=group_size,
    )


def complete_grouped(problem: CompletionProblem) -> tuple[TensorTrain, CompletionDiagnostics]:
    """`complete` for a problem built by `build_grouped_problem`."""
    if problem.group_size < 1:
        raise ValueError(f"group_size must be >= 1, got {problem.group_size}")
    return complete(problem)

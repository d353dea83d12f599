"""Dimension factorization, TT-rank schedules and cross-validated rank selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.als_solver import SolverOptions, build_problem, complete, evaluate_at
from src.initializer import DEFAULT_RESIZED_MODES
from src.metrics import observed_residual
from src.sampling import ObservationSet, holdout_split, split_factored_dims
from src.tensor_core import DenseTensor
from src.tt_format import feasible_ranks

LOGGER = logging.getLogger(__name__)

DEFAULT_MAX_FACTOR = 10
DEFAULT_PROBLEM_CAP = 4000


def prime_factors(n: int) -> list[int]:
    """Prime factors of n in ascending order (with multiplicity)."""
    value = int(n)
    if value < 1:
        raise ValueError(f"cannot factor {n}")
    factors = []
    divisor = 2
    while divisor * divisor <= value:
        while value % divisor == 0:
            factors.append(divisor)
            value //= divisor
        divisor += 1
    if value > 1:
        factors.append(value)
    return factors


def _merge_primes(dim: int, max_factor: int) -> list[int]:
    """First-fit-decreasing packing of the primes of `dim` into factors <= max_factor."""
    bins: list[int] = []
    for prime in sorted(prime_factors(dim), reverse=True):
        for position, product in enumerate(bins):
            if product * prime <= max_factor:
                bins[position] = product * prime
                break
        else:
            bins.append(prime)
    return sorted(bins, reverse=True) or [1]


def factorize_dims(
    dims: Sequence[int],
    max_factor: int = DEFAULT_MAX_FACTOR,
    target_problem_cap: int = DEFAULT_PROBLEM_CAP,
) -> list[list[int]]:
    """Split every dimension into factors <= max_factor, using as few cores as the greedy merge finds.

    `target_problem_cap` is advisory here: a factor above it cannot meet
    R_k I_k R_{k+1} <= cap even at unit ranks, so it is logged and kept. The
    cap is checked against actual ranks by `rank_schedule`.
    """
    if max_factor < 2:
        raise ValueError(f"max_factor must be >= 2, got {max_factor}")
    result = []
    for position, dim in enumerate(dims, start=1):
        dim = int(dim)
        factors = [dim] if dim <= max_factor else _merge_primes(dim, max_factor)
        oversized = [factor for factor in factors if factor > max_factor]
        if oversized:
            LOGGER.warning(
                "mode %s (dim %s) has prime factors %s above max_factor=%s; "
                "consider padding it with the pad_to setting",
                position,
                dim,
                oversized,
                max_factor,
            )
        if any(factor > target_problem_cap for factor in factors):
            LOGGER.warning("mode %s has a factor exceeding the problem cap %s", position, target_problem_cap)
        result.append(factors)
    return result


def group_factorization(
    dims: Sequence[int],
    flat_factors: Sequence[int],
    max_factor: int | None = None,
) -> list[list[int]]:
    """Validate a user-given flat split such as 9,8,5,4,4,5,8,4,6,6,3 and group it per mode."""
    groups = split_factored_dims(dims, flat_factors)
    if max_factor is not None:
        oversized = [factor for factors in groups for factor in factors if factor > max_factor]
        if oversized:
            LOGGER.warning("factorization uses factors %s above max_factor=%s", oversized, max_factor)
    return groups


def flatten_factors(groups: Sequence[Sequence[int]]) -> list[int]:
    return [int(factor) for factors in groups for factor in factors]


def pad_dims(dims: Sequence[int], pad_to: Sequence[int | None]) -> list[int]:
    """Target dims for explicit zero-padding; None keeps a mode as is."""
    if len(pad_to) != len(dims):
        raise ValueError(f"pad_to has {len(pad_to)} entries for {len(dims)} modes")
    padded = []
    for position, (dim, target) in enumerate(zip(dims, pad_to), start=1):
        if target is None:
            padded.append(int(dim))
            continue
        if int(target) < int(dim):
            raise ValueError(f"pad_to[{position}]={target} is smaller than dim {dim}")
        padded.append(int(target))
    return padded


def crop_dense(t: DenseTensor, dims: Sequence[int]) -> DenseTensor:
    """Leading block of `t` with the given dims (undoes padding)."""
    window = tuple(slice(0, int(dim)) for dim in dims)
    return DenseTensor.from_array(t.to_array()[window])


def rank_schedule(
    factored_dims: Sequence[int],
    r2: int,
    r_mid: int,
    r_dm1: int | None = None,
    r_d: int | None = None,
    problem_cap: int = DEFAULT_PROBLEM_CAP,
) -> list[int]:
    """Plateau schedule R_2..R_d.

    R_2 = r2 and R_{k+1} = min(R_k I_k, r_mid); R_{d-1} and R_d are then
    overridden when given, and the chain is clamped to feasibility.
    """
    dims = [int(dim) for dim in factored_dims]
    d = len(dims)
    if d < 2:
        return []
    for name, value in (("r2", r2), ("r_mid", r_mid), ("r_dm1", r_dm1), ("r_d", r_d)):
        if value is not None and int(value) < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")

    # full[k] holds R_{k+1} (0-based), so full[0] = R_1 = 1 and full[d] = R_{d+1} = 1.
    full = [1] * (d + 1)
    full[1] = int(r2)
    for k in range(2, d):
        full[k] = min(full[k - 1] * dims[k - 1], int(r_mid))
    if r_dm1 is not None and d - 2 >= 1:
        full[d - 2] = int(r_dm1)
    if r_d is not None:
        full[d - 1] = int(r_d)

    changed = True
    while changed:
        changed = False
        for k in range(1, d):
            bound = full[k - 1] * dims[k - 1]
            if full[k] > bound:
                full[k], changed = bound, True
        for k in range(d - 1, 0, -1):
            bound = dims[k] * full[k + 1]
            if full[k] > bound:
                full[k], changed = bound, True

    ranks = feasible_ranks(dims, full[1:d])
    for k, size in enumerate(problem_sizes(dims, ranks), start=1):
        if size > problem_cap:
            LOGGER.warning("core %s local problem size %s exceeds cap %s", k, size, problem_cap)
    return ranks


def problem_sizes(dims: Sequence[int], ranks: Sequence[int]) -> list[int]:
    """R_k I_k R_{k+1} per core."""
    full = [1, *(int(rank) for rank in ranks), 1]
    return [full[k] * int(dim) * full[k + 1] for k, dim in enumerate(dims)]


def parameter_count(dims: Sequence[int], ranks: Sequence[int]) -> int:
    return int(sum(problem_sizes(dims, ranks)))


@dataclass(frozen=True)
class RankCandidate:
    """(R2, Rmid, R_{d-1}, R_d) tuple, as written in the config."""

    r2: int
    r_mid: int
    r_dm1: int | None = None
    r_d: int | None = None

    @classmethod
    def parse(cls, value: Sequence[int | None] | dict) -> "RankCandidate":
        if isinstance(value, dict):
            return cls(
                r2=int(value["r2"]),
                r_mid=int(value["r_mid"]),
                r_dm1=value.get("r_dm1"),
                r_d=value.get("r_d"),
            )
        items = list(value)
        if not 2 <= len(items) <= 4:
            raise ValueError(f"rank candidate needs 2 to 4 entries, got {items}")
        items += [None] * (4 - len(items))
        return cls(*items)

    def ranks(self, factored_dims: Sequence[int]) -> list[int]:
        return rank_schedule(factored_dims, self.r2, self.r_mid, self.r_dm1, self.r_d)

    def label(self) -> str:
        return f"{self.r2}/{self.r_mid}/{self.r_dm1 or '-'}/{self.r_d or '-'}"


@dataclass(frozen=True)
class CandidateScore:
    candidate: RankCandidate
    ranks: tuple[int, ...]
    mean_rse: float
    trial_rse: tuple[float, ...]
    parameter_count: int


@dataclass(frozen=True)
class CrossValidationResult:
    selected: CandidateScore
    scores: tuple[CandidateScore, ...]


def cross_validate(
    obs: ObservationSet,
    mode_factors: Sequence[Sequence[int]],
    candidate_schedules: Sequence[RankCandidate],
    trials: int = 10,
    holdout: float = 0.1,
    seed: int = 0,
    options: SolverOptions | None = None,
    init: str = "zero",
    tv_modes: Sequence[int] = (),
    tv_weight: float = 1.0,
    gamma: float = 0.0,
    box_factor: int | None = None,
    resized_modes: Sequence[int] = DEFAULT_RESIZED_MODES,
) -> CrossValidationResult:
    """Average held-out RSE over seeded trials; every candidate sees the same splits.

    Scores are sorted ascending; ties go to the smaller parameter count.
    """
    candidates = list(candidate_schedules)
    if not candidates:
        raise ValueError("cross_validate needs at least one candidate schedule")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")

    flat_dims = flatten_factors(mode_factors)
    splits = [holdout_split(obs, holdout, seed + trial) for trial in range(trials)]
    scores = []
    for candidate in candidates:
        ranks = candidate.ranks(flat_dims)
        trial_rse = []
        for trial, (train, validate) in enumerate(splits):
            problem = build_problem(
                train,
                mode_factors,
                ranks,
                tv_modes=tv_modes,
                tv_weight=tv_weight,
                gamma=gamma,
                options=options,
                init=init,
                box_factor=box_factor,
                resized_modes=resized_modes,
                validation=validate,
            )
            tt, _ = complete(problem)
            score = observed_residual(
                evaluate_at(tt, problem.validation.indices), problem.validation.values
            )
            trial_rse.append(score)
            LOGGER.debug("candidate %s trial %s: held-out rse=%.6e", candidate.label(), trial, score)
        scores.append(
            CandidateScore(
                candidate=candidate,
                ranks=tuple(ranks),
                mean_rse=float(np.mean(trial_rse)),
                trial_rse=tuple(trial_rse),
                parameter_count=parameter_count(flat_dims, ranks),
            )
        )
        LOGGER.info("candidate %s: mean held-out rse=%.6e", candidate.label(), scores[-1].mean_rse)

    ordered = tuple(sorted(scores, key=lambda score: (score.mean_rse, score.parameter_count)))
    return CrossValidationResult(selected=ordered[0], scores=ordered)

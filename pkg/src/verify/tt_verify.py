"""Post-condition checks for tensor trains and solver caches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.als_solver import SweepState, compute_interfaces
from src.tt_format import TensorTrain

ORTHOGONALITY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class CanonicalVerificationSummary:
    """Result of a site-k mixed-canonical check."""

    canonical_site: int
    left_orthogonal_cores: int
    right_orthogonal_cores: int
    max_deviation: float


@dataclass(frozen=True)
class InterfaceVerificationSummary:
    checked_left: int
    checked_right: int
    max_deviation: float


def verify_canonical_form(
    tt: TensorTrain,
    tol: float = ORTHOGONALITY_TOLERANCE,
) -> CanonicalVerificationSummary:
    """Cores left of the site must be left-orthogonal, cores right of it right-orthogonal."""
    site = tt.canonical_site
    if site is None:
        raise RuntimeError("train has no canonical site to verify")

    worst = 0.0
    for position in range(1, site):
        core = tt.cores[position - 1]
        rank_left, dim, rank_right = core.shape
        unfolding = core.reshape(rank_left * dim, rank_right, order="F")
        deviation = float(np.max(np.abs(unfolding.T @ unfolding - np.eye(rank_right))))
        if deviation > tol:
            raise RuntimeError(
                f"core {position} is not left-orthogonal: deviation={deviation:.3e} (site={site})"
            )
        worst = max(worst, deviation)
    for position in range(site + 1, tt.d + 1):
        core = tt.cores[position - 1]
        rank_left, dim, rank_right = core.shape
        unfolding = core.reshape(rank_left, dim * rank_right, order="F")
        deviation = float(np.max(np.abs(unfolding @ unfolding.T - np.eye(rank_left))))
        if deviation > tol:
            raise RuntimeError(
                f"core {position} is not right-orthogonal: deviation={deviation:.3e} (site={site})"
            )
        worst = max(worst, deviation)

    return CanonicalVerificationSummary(
        canonical_site=site,
        left_orthogonal_cores=site - 1,
        right_orthogonal_cores=tt.d - site,
        max_deviation=worst,
    )


def verify_interfaces(state: SweepState, tol: float = 1e-12) -> InterfaceVerificationSummary:
    """Compare the cached interface vectors with a from-scratch recomputation.

    Only interfaces that are valid at the current canonical site are checked:
    left[k] for k <= site and right[k] for k >= site.
    """
    site = state.tt.canonical_site or state.tt.d
    left, right = compute_interfaces(state.tt, state.rows)

    worst = 0.0
    for k in range(1, site + 1):
        scale = max(1.0, float(np.max(np.abs(left[k]))))
        deviation = float(np.max(np.abs(state.left[k] - left[k]))) / scale
        if deviation > tol:
            raise RuntimeError(f"left interface {k} drifted: deviation={deviation:.3e}")
        worst = max(worst, deviation)
    for k in range(site, state.tt.d + 1):
        scale = max(1.0, float(np.max(np.abs(right[k]))))
        deviation = float(np.max(np.abs(state.right[k] - right[k]))) / scale
        if deviation > tol:
            raise RuntimeError(f"right interface {k} drifted: deviation={deviation:.3e}")
        worst = max(worst, deviation)

    return InterfaceVerificationSummary(
        checked_left=site,
        checked_right=state.tt.d - site + 1,
        max_deviation=worst,
    )

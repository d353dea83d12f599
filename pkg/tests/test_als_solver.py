"""Tests for local systems, core solves, sweeps and the completion driver."""

from __future__ import annotations

import numpy as np
import pytest

from src.als_solver import (
    CompletionProblem,
    SingularSystemError,
    SolverOptions,
    build_grouped_problem,
    build_local_matrix,
    build_problem,
    complete,
    complete_grouped,
    evaluate_at,
    init_state,
    initial_train,
    objective,
    solve_core,
    sweep,
)
from src.generator.synthetic import image_instance, low_rank_instance
from src.masks import make_mask, observe
from src.metrics import rse
from src.rank_planner import rank_schedule
from src.sampling import observations_from_dense
from src.tensor_core import DenseTensor
from src.tt_format import TensorTrain, contract_full, orthogonalize, random_tt, tt_entry
from src.verify.tt_verify import verify_canonical_form, verify_interfaces


def _random_observations(rng, dims, fraction):
    t = DenseTensor.from_array(rng.standard_normal(dims))
    mask = rng.random(dims) < fraction
    mask.reshape(-1)[0] = True
    return t, observations_from_dense(t, mask)


@pytest.mark.required
@pytest.mark.light
def test_local_matrix_reproduces_train_entries_for_every_core(rng):
    """どのコアでも局所行列とコアの積が TT の観測値に一致する。"""
    for _ in range(10):
        dims = [int(dim) for dim in rng.integers(2, 5, size=int(rng.integers(2, 5)))]
        tt = random_tt(dims, [int(rank) for rank in rng.integers(1, 4, size=len(dims) - 1)], rng)
        _, obs = _random_observations(rng, dims, 0.5)
        state = init_state(tt, obs)
        expected = np.array([tt_entry(tt, m) for m in obs.indices])
        for k in range(1, tt.d + 1):
            B = build_local_matrix(state, k)
            assert B.shape == (obs.count, tt.cores[k - 1].size)
            np.testing.assert_allclose(
                B @ tt.cores[k - 1].reshape(-1, order="F"), expected, atol=1e-12
            )


@pytest.mark.light
def test_single_core_local_matrix_is_the_selection_transpose(rng):
    """1 コアでは局所行列が選択行列の転置そのもの。"""
    tt = random_tt([5], [], rng)
    _, obs = _random_observations(rng, [5], 0.6)
    B = build_local_matrix(init_state(tt, obs), 1)
    expected = np.zeros((obs.count, 5))
    expected[np.arange(obs.count), obs.indices[:, 0] - 1] = 1.0
    np.testing.assert_array_equal(B, expected)


@pytest.mark.light
def test_evaluate_at_matches_contraction(rng):
    """evaluate_at が全体縮約の該当要素と一致する。"""
    tt = random_tt([3, 4, 2], [2, 2], rng)
    _, obs = _random_observations(rng, [3, 4, 2], 0.7)
    np.testing.assert_allclose(
        evaluate_at(tt, obs.indices), contract_full(tt).data[obs.linear() - 1], atol=1e-12
    )


@pytest.mark.light
def test_solve_core_with_identity_returns_targets(rng):
    y = rng.standard_normal(6)
    np.testing.assert_allclose(solve_core(np.eye(6), y), y, atol=1e-9)


@pytest.mark.light
def test_solve_core_matches_least_squares_when_overdetermined(rng):
    """過剰決定系では最小二乗解と一致する。"""
    B = rng.standard_normal((40, 6))
    y = rng.standard_normal(40)
    expected, *_ = np.linalg.lstsq(B, y, rcond=None)
    np.testing.assert_allclose(solve_core(B, y), expected, atol=1e-8)


@pytest.mark.light
def test_solve_core_handles_matrix_right_hand_sides(rng):
    """行列右辺は列ごとの解と同じ。"""
    B = rng.standard_normal((30, 5))
    Y = rng.standard_normal((30, 3))
    solution = solve_core(B, Y)
    assert solution.shape == (5, 3)
    for column in range(3):
        np.testing.assert_allclose(solution[:, column], solve_core(B, Y[:, column]), atol=1e-12)


@pytest.mark.required
@pytest.mark.light
def test_huge_tikhonov_weight_shrinks_the_solution(rng):
    """巨大な Tikhonov 重みで解がほぼ 0 に縮む。"""
    B = rng.standard_normal((20, 8))
    y = rng.standard_normal(20)
    plain = solve_core(B, y)
    shrunk = solve_core(B, y, gamma=1e12)
    assert np.linalg.norm(shrunk) <= 1e-6 * np.linalg.norm(plain)


@pytest.mark.light
def test_all_zero_local_matrix_is_singular():
    """全ゼロの局所行列は特異として扱う。"""
    with pytest.raises(SingularSystemError):
        solve_core(np.zeros((4, 3)), np.ones(4))


@pytest.mark.light
def test_solve_core_rejects_mismatched_inputs(rng):
    """行数や重み数の不一致は ValueError。"""
    with pytest.raises(ValueError):
        solve_core(np.eye(3), np.ones(4))
    with pytest.raises(ValueError):
        solve_core(np.eye(3), np.ones(3), gram_terms=[np.eye(3)], lambdas=[])


@pytest.mark.light
def test_exact_train_is_a_fixed_point_of_the_sweep(rng):
    """正解 TT から始めるとスイープで動かない。"""
    dims = [3, 4, 3]
    truth_tt = random_tt(dims, [2, 2], rng)
    truth = contract_full(truth_tt)
    obs = observations_from_dense(truth, np.ones(dims, dtype=bool))
    problem = CompletionProblem(dims=tuple(dims), observations=obs, ranks=(2, 2), init=truth_tt)
    _, diagnostics = complete(problem)
    assert max(diagnostics.core_residuals) <= 1e-9


@pytest.mark.required
@pytest.mark.light
def test_observed_residual_never_increases_across_core_updates():
    """正則化なしではコア更新ごとに観測残差が増えない。"""
    rng = np.random.default_rng(7)
    truth = DenseTensor.from_array(rng.standard_normal((6, 6, 6)))
    obs = observe(truth, make_mask(truth.dims, 0.3, seed=8))
    problem = CompletionProblem(
        dims=truth.dims,
        observations=obs,
        ranks=(3, 3),
        init="zero",
        options=SolverOptions(max_sweeps=10, residual_tolerance=0.0),
    )
    _, diagnostics = complete(problem)
    trace = [diagnostics.records[0].rse_train] + diagnostics.core_residuals
    assert len(diagnostics.core_residuals) == 10 * 4
    # Residuals are relative to ||y||, so the slack is absolute here.
    for before, after in zip(trace, trace[1:]):
        assert after <= before + 1e-12


@pytest.mark.required
@pytest.mark.light
def test_exact_rank_train_is_recovered_from_forty_percent_of_entries():
    """正解ランクなら 40% 観測から復元できる。"""
    instance = low_rank_instance([5, 6, 6, 5], [2, 3, 2], 0.4, seed=11)
    problem = CompletionProblem(
        dims=instance.truth.dims,
        observations=instance.observations,
        ranks=(2, 3, 2),
        init="zero",
        options=SolverOptions(max_sweeps=25, residual_tolerance=0.0, residual_threshold=1e-12),
        truth=instance.truth,
    )
    tt, diagnostics = complete(problem)
    assert diagnostics.sweeps_run <= 25
    assert rse(instance.truth, contract_full(tt)) <= 1e-6


@pytest.mark.light
def test_interfaces_stay_consistent_with_recomputation(rng):
    """インターフェースのキャッシュが再計算と一致し続ける。"""
    truth, obs = _random_observations(rng, [4, 3, 4, 3], 0.5)
    problem = CompletionProblem(dims=truth.dims, observations=obs, ranks=(2, 3, 2), init="zero")
    state = init_state(initial_train(problem), obs)
    for index in range(1, 4):
        sweep(state, problem, sweep_index=index)
        verify_interfaces(state, tol=1e-10)
        verify_canonical_form(state.tt, tol=1e-10)
        assert state.tt.canonical_site == state.tt.d


@pytest.mark.required
@pytest.mark.light
def test_zero_weight_regularizers_reproduce_the_plain_path():
    """重み 0 の正則化は正則化なしと同じコアを返す。"""
    instance = image_instance(16, 16, 0.3, seed=2)
    factors = [[4, 4], [4, 4], [3]]
    options = SolverOptions(max_sweeps=2, residual_tolerance=0.0)
    plain = build_problem(instance.observations, factors, [3, 4, 4, 3], options=options, init="zero")
    weighted = build_problem(
        instance.observations,
        factors,
        [3, 4, 4, 3],
        tv_modes=[1, 2],
        tv_weight=0.0,
        gamma=0.0,
        options=options,
        init="zero",
    )
    plain_tt, _ = complete(plain)
    weighted_tt, _ = complete(weighted)
    for left, right in zip(plain_tt.cores, weighted_tt.cores):
        np.testing.assert_allclose(left, right, atol=1e-12)


@pytest.mark.light
def test_regularized_objective_does_not_increase_per_sweep():
    """λ 固定なら正則化付き目的関数がスイープごとに増えない。"""
    instance = image_instance(16, 16, 0.3, seed=4)
    problem = build_problem(
        instance.observations,
        [[4, 4], [4, 4], [3]],
        [3, 4, 4, 3],
        tv_modes=[1, 2],
        tv_weight=0.5,
        gamma=1e-3,
        options=SolverOptions(adapt_lambda=False),
        init="zero",
    )
    state = init_state(initial_train(problem), problem.observations, problem.tv_operators)
    values = [objective(state.tt, problem)]
    for index in range(1, 5):
        sweep(state, problem, sweep_index=index)
        values.append(objective(state.tt, problem))
    for before, after in zip(values, values[1:]):
        assert after <= before + 1e-8 * values[0]


@pytest.mark.light
def test_single_mode_completion_fills_observed_entries_only(rng):
    """1 モードでは観測値だけが埋まり残りは 0。"""
    truth, obs = _random_observations(rng, [7], 0.5)
    problem = CompletionProblem(dims=(7,), observations=obs, ranks=(), init="zero")
    tt, diagnostics = complete(problem)
    estimate = contract_full(tt).data
    observed = obs.linear() - 1
    np.testing.assert_allclose(estimate[observed], truth.data[observed], atol=1e-8)
    unobserved = np.setdiff1d(np.arange(7), observed)
    np.testing.assert_allclose(estimate[unobserved], 0.0, atol=1e-12)
    assert diagnostics.records[-1].half == "single"


@pytest.mark.light
def test_too_few_observations_are_flagged_but_still_solved(rng):
    """観測不足は記録しつつ有限な解を返す。"""
    truth = DenseTensor.from_array(rng.standard_normal((4, 4, 4)))
    obs = observe(truth, make_mask(truth.dims, 3 / 64, seed=1))
    problem = CompletionProblem(
        dims=truth.dims,
        observations=obs,
        ranks=(4, 4),
        gamma=1e-3,
        init="zero",
        options=SolverOptions(max_sweeps=2),
    )
    tt, diagnostics = complete(problem)
    assert diagnostics.underdetermined is True
    assert np.all(np.isfinite(contract_full(tt).data))


@pytest.mark.light
def test_convergence_stops_early_and_records_reason(rng):
    """収束したら早期終了し理由を残す。"""
    instance = low_rank_instance([4, 5, 4], [2, 2], 0.8, seed=5)
    problem = CompletionProblem(
        dims=instance.truth.dims,
        observations=instance.observations,
        ranks=(2, 2),
        init="zero",
        options=SolverOptions(max_sweeps=50, residual_threshold=1e-9),
    )
    _, diagnostics = complete(problem)
    assert diagnostics.stop_reason in ("threshold", "converged")
    assert diagnostics.sweeps_run < 50
    assert [record.half for record in diagnostics.records[:3]] == ["init", "backward", "forward"]


@pytest.mark.light
def test_lambda_adaptation_multiplies_by_training_residual():
    """λ は毎スイープ学習 RSE 倍される。"""
    instance = image_instance(16, 16, 0.3, seed=6)
    problem = build_problem(
        instance.observations,
        [[4, 4], [4, 4], [3]],
        [3, 4, 4, 3],
        tv_modes=[1],
        tv_weight=2.0,
        options=SolverOptions(max_sweeps=3, residual_tolerance=0.0),
        init="zero",
    )
    _, diagnostics = complete(problem)
    history = diagnostics.lambda_history
    assert history[0] == (2.0,)
    forward = [record for record in diagnostics.records if record.half == "forward"]
    assert history[1][0] == pytest.approx(2.0 * forward[0].rse_train, rel=1e-12)
    assert history[2][0] == pytest.approx(history[1][0] * forward[1].rse_train, rel=1e-12)


@pytest.mark.light
def test_problem_rejects_inconsistent_inputs(rng):
    """不整合な問題設定は ValueError。"""
    _, obs = _random_observations(rng, [3, 3], 0.5)
    with pytest.raises(ValueError):
        CompletionProblem(dims=(3, 4), observations=obs, ranks=(2,))
    with pytest.raises(ValueError):
        CompletionProblem(dims=(3, 3), observations=obs, ranks=(2,), init="interp")
    with pytest.raises(ValueError):
        CompletionProblem(dims=(3, 3), observations=obs, ranks=(2,), init="svd")
    with pytest.raises(ValueError):
        CompletionProblem(dims=(3, 3), observations=obs, ranks=(2,), gamma=-1.0)


RECOVERY_RSE = 1e-4


def _truth_sweeps_to_reach(diagnostics, target: float) -> int | None:
    for sweep_index, value in enumerate(diagnostics.truth_rse, start=1):
        if value <= target:
            return sweep_index
    return None


@pytest.mark.full
def test_interpolation_init_converges_no_slower_than_zero_fill():
    """補間初期化は RSE 1e-4 到達までのスイープ数がゼロ埋め以下。"""
    # One sinusoid per channel keeps the 96x96 image exactly representable at these ranks.
    instance = image_instance(96, 96, 0.1, seed=0, components=1)
    factors = [[6, 4, 4], [6, 4, 4], [3]]
    ranks = rank_schedule([6, 4, 4, 6, 4, 4, 3], 6, 9, 9, 3)
    options = SolverOptions(max_sweeps=30, residual_tolerance=0.0, residual_threshold=1e-12)

    runs = {}
    for init in ("zero", "interp"):
        problem = build_problem(
            instance.observations, factors, ranks, options=options, init=init, truth=instance.truth
        )
        _, runs[init] = complete(problem)

    interp_sweeps = _truth_sweeps_to_reach(runs["interp"], RECOVERY_RSE)
    zero_sweeps = _truth_sweeps_to_reach(runs["zero"], RECOVERY_RSE)
    assert interp_sweeps is not None
    if zero_sweeps is not None:
        assert interp_sweeps <= zero_sweeps


def _dense_local_basis(tt: TensorTrain, k: int) -> np.ndarray:
    """Column j is vec(A) with core k replaced by the j-th unit core."""
    shape = tt.cores[k - 1].shape
    size = int(np.prod(shape))
    columns = []
    for position in range(size):
        unit = np.zeros(size)
        unit[position] = 1.0
        cores = list(tt.cores)
        cores[k - 1] = unit.reshape(shape, order="F")
        columns.append(contract_full(TensorTrain(cores)).data)
    return np.stack(columns, axis=1)


@pytest.mark.required
@pytest.mark.light
def test_one_sweep_matches_dense_least_squares_reference():
    """3 コアの 1 スイープが密な最小二乗の逐次解と一致する。"""
    rng = np.random.default_rng(21)
    dims = [3, 4, 3]
    truth, obs = _random_observations(rng, dims, 0.8)
    start = random_tt(dims, [2, 2], rng)
    problem = CompletionProblem(dims=truth.dims, observations=obs, ranks=(2, 2), init=start)

    state = init_state(initial_train(problem), obs)
    sweep(state, problem, sweep_index=1)

    observed = obs.linear() - 1
    reference = start
    for k in (3, 2, 1, 2):
        reference = orthogonalize(reference, k)
        basis = _dense_local_basis(reference, k)[observed]
        solution, *_ = np.linalg.lstsq(basis, obs.values, rcond=None)
        reference.cores[k - 1] = solution.reshape(reference.cores[k - 1].shape, order="F")

    np.testing.assert_allclose(
        contract_full(state.tt).data, contract_full(reference).data, rtol=1e-7, atol=1e-9
    )


@pytest.mark.required
@pytest.mark.light
def test_fully_observed_full_rank_tensor_is_recovered_within_two_sweeps(rng):
    """全観測かつフルランクなら 2 スイープ以内に RSE 1e-8 以下。"""
    truth = DenseTensor.from_array(rng.standard_normal((3, 4, 5)))
    obs = observations_from_dense(truth, np.ones(truth.dims, dtype=bool))
    problem = CompletionProblem(
        dims=truth.dims,
        observations=obs,
        ranks=(3, 5),
        init="zero",
        options=SolverOptions(max_sweeps=2, residual_tolerance=0.0),
        truth=truth,
    )
    tt, diagnostics = complete(problem)
    assert diagnostics.sweeps_run <= 2
    assert diagnostics.truth_rse[-1] <= 1e-8
    assert rse(truth, contract_full(tt)) <= 1e-8


@pytest.mark.required
@pytest.mark.light
def test_grouped_completion_with_a_single_column_reduces_to_plain_completion():
    """グループサイズ 1 の grouped 補完は通常の complete と同じ結果。"""
    rng = np.random.default_rng(13)
    image = rng.standard_normal((8, 8))
    mask = rng.random((8, 8)) < 0.6
    grouped_obs = observations_from_dense(DenseTensor.from_array(image[:, :, None]), mask[:, :, None])
    plain_obs = observations_from_dense(DenseTensor.from_array(image), mask)
    factors = [[2, 4], [2, 4]]
    options = SolverOptions(max_sweeps=3, residual_tolerance=0.0)

    grouped = build_grouped_problem(grouped_obs, factors, 1, [2, 3, 2], options=options, init="zero")
    plain = build_problem(plain_obs, factors, [2, 3, 2], options=options, init="zero")
    assert grouped.group_size == 1
    assert grouped.dims == plain.dims

    grouped_tt, grouped_diagnostics = complete_grouped(grouped)
    plain_tt, plain_diagnostics = complete(plain)
    np.testing.assert_allclose(
        contract_full(grouped_tt).data, contract_full(plain_tt).data, rtol=1e-8, atol=1e-10
    )
    assert grouped_diagnostics.sweeps_run == plain_diagnostics.sweeps_run

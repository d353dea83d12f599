"""Tests for dimension factorization, rank schedules and rank cross-validation."""

from __future__ import annotations

import numpy as np
import pytest

from src.als_solver import SolverOptions
from src.generator.synthetic import low_rank_instance
from src.rank_planner import (
    RankCandidate,
    crop_dense,
    cross_validate,
    factorize_dims,
    flatten_factors,
    group_factorization,
    pad_dims,
    parameter_count,
    prime_factors,
    problem_sizes,
    rank_schedule,
)
from src.tensor_core import DenseTensor

VIDEO_DIMS = (360, 640, 144, 3)
VIDEO_SPLIT = [9, 8, 5, 4, 4, 5, 8, 4, 6, 6, 3]


@pytest.mark.light
def test_prime_factors_of_360():
    """360 の素因数分解。"""
    assert prime_factors(360) == [2, 2, 2, 3, 3, 5]
    assert prime_factors(1) == []
    assert prime_factors(97) == [97]


@pytest.mark.light
def test_factorize_merges_primes_under_the_cap():
    """素因数を上限以下にまとめる。"""
    groups = factorize_dims([360, 7, 256])
    assert groups[0] == [10, 9, 4]
    assert groups[1] == [7]
    assert int(np.prod(groups[2])) == 256
    assert all(factor <= 10 for factor in groups[2])


@pytest.mark.light
def test_large_prime_dimension_is_kept_with_a_warning(caplog):
    """大きな素数次元は警告付きでそのまま残す。"""
    with caplog.at_level("WARNING"):
        groups = factorize_dims([97])
    assert groups == [[97]]
    assert "pad_to" in caplog.text


@pytest.mark.light
def test_problem_cap_only_warns_about_oversized_factors(caplog):
    """分解時の問題サイズ上限は警告のみで、因子はそのまま返す。"""
    with caplog.at_level("WARNING", logger="src.rank_planner"):
        groups = factorize_dims([97, 8], max_factor=10, target_problem_cap=50)
    assert groups == [[97], [8]]
    assert "problem cap 50" in caplog.text
    assert "mode 2" not in caplog.text


@pytest.mark.light
def test_user_split_of_video_dims_is_grouped_per_mode():
    """ユーザー指定の分解をモードごとにまとめる。"""
    groups = group_factorization(VIDEO_DIMS, VIDEO_SPLIT)
    assert groups == [[9, 8, 5], [4, 4, 5, 8], [4, 6, 6], [3]]
    assert flatten_factors(groups) == VIDEO_SPLIT
    with pytest.raises(ValueError):
        group_factorization(VIDEO_DIMS, [9, 8, 5, 4])


@pytest.mark.required
@pytest.mark.light
def test_rank_schedule_reproduces_the_video_plateau():
    """動画チェーンの台形ランク列を再現する。"""
    ranks = rank_schedule(VIDEO_SPLIT, r2=5, r_mid=5, r_dm1=5, r_d=3)
    assert len(ranks) == 10
    assert ranks[0] == 5
    assert ranks[1:8] == [5] * 7
    assert ranks[8:] == [5, 3]


@pytest.mark.light
def test_rank_schedule_for_image_chain():
    """画像チェーンのランク列。"""
    assert rank_schedule([6, 4, 4, 6, 4, 4, 3], 4, 8, 8, 3) == [4, 8, 8, 8, 8, 3]


@pytest.mark.light
def test_rank_schedule_with_unit_plateau():
    assert rank_schedule([4, 4, 4, 4], 1, 1) == [1, 1, 1]


@pytest.mark.light
def test_rank_schedule_clamps_to_feasible_ranks():
    """実現不能なランクは丸める。"""
    assert rank_schedule([2, 2, 2], 5, 5) == [2, 2]
    assert rank_schedule([3, 2, 2], 8, 8, r_d=8) == [3, 2]
    assert rank_schedule([5], 3, 3) == []
    with pytest.raises(ValueError):
        rank_schedule([2, 2, 2], 0, 2)


@pytest.mark.light
def test_problem_sizes_and_parameter_count():
    """局所問題のサイズとパラメータ数。"""
    assert problem_sizes([2, 3, 2], [2, 2]) == [4, 12, 4]
    assert parameter_count([2, 3, 2], [2, 2]) == 20


@pytest.mark.light
def test_padding_and_cropping_round_trip(rng):
    """パディングと切り取りは互いに逆。"""
    assert pad_dims([100, 50, 3], [128, None, None]) == [128, 50, 3]
    with pytest.raises(ValueError):
        pad_dims([100, 50], [64, None])
    t = DenseTensor.from_array(rng.random((4, 5)))
    padded = np.zeros((6, 5))
    padded[:4] = t.to_array()
    np.testing.assert_array_equal(crop_dense(DenseTensor.from_array(padded), [4, 5]).data, t.data)


@pytest.mark.light
def test_rank_candidate_parsing():
    """ランク候補の文字列を解釈する。"""
    assert RankCandidate.parse([4, 8, 8, 3]) == RankCandidate(4, 8, 8, 3)
    assert RankCandidate.parse([2, 4]) == RankCandidate(2, 4)
    assert RankCandidate.parse({"r2": 3, "r_mid": 6}).label() == "3/6/-/-"
    with pytest.raises(ValueError):
        RankCandidate.parse([1])


@pytest.mark.light
def test_cross_validation_prefers_the_true_rank():
    """交差検証は真のランクを選ぶ。"""
    instance = low_rank_instance([4, 5, 4], [2, 2], 0.6, seed=9)
    candidates = [RankCandidate(1, 1), RankCandidate(2, 2)]
    options = SolverOptions(max_sweeps=8)
    result = cross_validate(
        instance.observations, [[4], [5], [4]], candidates, trials=3, holdout=0.1, seed=1, options=options
    )
    assert result.selected.candidate == RankCandidate(2, 2)
    assert result.selected.ranks == (2, 2)
    assert [score.mean_rse for score in result.scores] == sorted(score.mean_rse for score in result.scores)
    assert all(len(score.trial_rse) == 3 for score in result.scores)

    again = cross_validate(
        instance.observations, [[4], [5], [4]], candidates, trials=3, holdout=0.1, seed=1, options=options
    )
    assert again.selected.trial_rse == result.selected.trial_rse


@pytest.mark.light
def test_cross_validation_needs_candidates():
    """候補が空なら ValueError。"""
    instance = low_rank_instance([3, 3], [1], 0.8, seed=0)
    with pytest.raises(ValueError):
        cross_validate(instance.observations, [[3], [3]], [])

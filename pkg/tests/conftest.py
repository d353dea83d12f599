"""テスト共通fixture（乱数生成器と小さな合成テンソル）を定義する。"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.tensor_core import DenseTensor  # pylint: disable=wrong-import-position


@pytest.fixture
def rng() -> np.random.Generator:
    """テストごとに固定シードの乱数生成器を返す。"""
    return np.random.default_rng(20240611)


@pytest.fixture
def small_dense(rng: np.random.Generator) -> DenseTensor:
    """3x4x2 のランダムな密テンソル。"""
    return DenseTensor.from_array(rng.standard_normal((3, 4, 2)))


@pytest.fixture(autouse=True)
def _no_discord_webhook(monkeypatch: pytest.MonkeyPatch):
    """テスト中は実際の Discord 通知を送らない。"""
    monkeypatch.delenv("DISCORD_WEBHOOK_URL", raising=False)

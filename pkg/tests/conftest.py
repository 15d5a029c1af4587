#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
テスト共通のフィクスチャ
"""

import pytest

from src.model.scenario import generate_scenario
from src.optimization.algorithms import SolveOptions
from src.utils.config import ScenarioConfig


@pytest.fixture
def make_scenario():
    """小規模シナリオを作る関数のフィクスチャ"""
    def factory(num_bs=2, antennas=3, groups=1, users=1, rate_mbps=1.0, seed=0, **kwargs):
        config = ScenarioConfig(
            num_bs=num_bs,
            antennas_per_bs=antennas,
            groups_per_bs=groups,
            users_per_group=users,
            rate_target_mbps=rate_mbps,
            **kwargs,
        )
        return generate_scenario(config, seed)
    return factory


@pytest.fixture
def fast_options():
    """反復数を抑えた求解オプションのフィクスチャ"""
    return SolveOptions(max_iter=15, rel_tol=1e-4, oracle_restarts=1)

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
全探索オラクルと SINR 行の活性検査のテスト
"""

from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from src.model.performance import sinr_all
from src.optimization.algorithms import run_no_as_baseline
from src.utils.errors import ConfigurationError
from src.verification.oracle import (
    TABLE_COLUMNS,
    OracleReport,
    admissible_subsets,
    check_sinr_activity,
    exhaustive_antenna_search,
    subset_mask,
)


@pytest.fixture
def single_cell(make_scenario):
    """B=1, N=3, U=1, L=1"""
    return make_scenario(num_bs=1, antennas=3, groups=1, users=1, rate_mbps=1.0, seed=2)


class TestSubsets:
    """部分集合の列挙のテスト"""

    def test_single_cell_count(self, single_cell):
        """B=1, N=3 なら空でない部分集合は7個"""
        assert list(admissible_subsets(single_cell)) == list(range(1, 8))

    def test_per_bs_minimum(self, make_scenario):
        """各基地局で X_b=1 以上: (2³−1)² = 49 個"""
        scenario = make_scenario(num_bs=2, antennas=3, rate_mbps=1.0)
        assert len(list(admissible_subsets(scenario))) == 49

    def test_subset_mask(self, make_scenario):
        """ビット j は通し番号 j のアンテナ"""
        scenario = make_scenario(num_bs=2, antennas=3)
        mask = subset_mask(0b100101, scenario)
        assert mask[0].tolist() == [True, False, True]
        assert mask[1].tolist() == [False, False, True]


class TestExhaustiveSearch:
    """全探索のテスト"""

    def test_size_cap(self, make_scenario, fast_options):
        """アンテナ総数が12を超えると設定エラー"""
        scenario = make_scenario(num_bs=2, antennas=7)
        with pytest.raises(ConfigurationError):
            exhaustive_antenna_search(scenario, fast_options)

    def test_table_covers_subsets(self, single_cell, fast_options):
        """表は列挙した部分集合を全て含み、最良値は表の最大値"""
        report = exhaustive_antenna_search(single_cell, fast_options)
        assert report.table["subset"].tolist() == list(range(1, 8))
        assert list(report.table.columns) == TABLE_COLUMNS
        assert report.best_ee == pytest.approx(report.table["ee_bits_per_joule"].max())
        assert sum(int(np.count_nonzero(m)) for m in report.best_mask) == int(
            report.table.loc[report.table["subset"] == report.best_subset, "active_antennas"].iloc[0]
        )

    def test_all_on_matches_baseline(self, single_cell, fast_options):
        """全アンテナの部分集合はアンテナ選択なしのベースラインと一致"""
        report = exhaustive_antenna_search(single_cell, fast_options)
        baseline = run_no_as_baseline(single_cell, fast_options)
        all_on = report.table.loc[report.table["subset"] == 7, "ee_bits_per_joule"].iloc[0]
        assert all_on == pytest.approx(baseline.ee, rel=1e-5)
        assert report.best_ee >= baseline.ee * (1 - 1e-6)


class TestOracleReport:
    """オラクルレポートのテスト"""

    @pytest.fixture
    def report(self, single_cell):
        table = pd.DataFrame(
            [[1, 1, 1.0e6, 2.0e6, 2.0, "converged"], [3, 2, 2.0e6, 4.0e6, 2.0, "converged"]],
            columns=TABLE_COLUMNS,
        )
        return OracleReport(subset_mask(3, single_cell), 3, 2.0e6, table)

    def test_gap_and_ratio(self, report):
        """ギャップと比"""
        result = SimpleNamespace(ee=1.5e6)
        assert report.gap(result) == pytest.approx(0.25)
        assert report.ratio(result) == pytest.approx(0.75)

    def test_to_csv(self, report, tmp_path):
        """CSV に書き出して読み戻せる"""
        path = report.to_csv(tmp_path / "oracle" / "table.csv")
        loaded = pd.read_csv(path)
        assert loaded["subset"].tolist() == [1, 3]
        assert list(loaded.columns) == TABLE_COLUMNS


class TestSinrActivity:
    """SINR 行の活性検査のテスト"""

    @pytest.fixture
    def result(self, make_scenario, fast_options):
        scenario = make_scenario(num_bs=2, antennas=3, groups=1, users=2, rate_mbps=1.0, seed=4)
        return scenario, run_no_as_baseline(scenario, fast_options)

    def test_exact_gamma_is_active(self, result):
        """γ が実際の SINR と一致すれば全グループ活性"""
        scenario, run = result
        exact = replace(run, gamma=sinr_all(run.w, scenario))
        report = check_sinr_activity(exact, scenario)
        assert report.all_active
        assert len(report.groups) == scenario.num_groups

    def test_worst_user_selected(self, result):
        """各グループで SINR 最小のユーザーを検査する"""
        scenario, run = result
        actual = sinr_all(run.w, scenario)
        report = check_sinr_activity(replace(run, gamma=actual), scenario)
        for activity, group in zip(report.groups, scenario.groups):
            assert activity.sinr == pytest.approx(min(actual[list(group.users)]))

    def test_scaled_beamformer_violates(self, result):
        """w を縮小すると γ の行が非活性になる"""
        scenario, run = result
        exact = replace(run, gamma=sinr_all(run.w, scenario))
        shrunk = replace(exact, w=exact.w.scaled(1e-3))
        report = check_sinr_activity(shrunk, scenario)
        assert not report.all_active
        assert report.inactive_groups == list(range(scenario.num_groups))

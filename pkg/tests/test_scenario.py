#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ネットワークシナリオのテスト
"""

import numpy as np
import pytest

from src.model.scenario import (
    BeamformerSet,
    MulticastGroup,
    PowerModel,
    Scenario,
    SelectionState,
    generate_scenario,
    load_scenario,
    path_loss_db,
    perturb_channels,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from src.utils.config import PowerConfig, ScenarioConfig
from src.utils.errors import ConfigurationError


@pytest.fixture
def table_config():
    """シミュレーション既定値のシナリオ設定"""
    return ScenarioConfig()


class TestPowerModel:
    """電力モデルのテスト"""

    def test_noise_power_conversion(self):
        """-125 dBW は約 3.1623e-13 W"""
        pm = PowerModel.from_config(PowerConfig())
        assert pm.n0_linear == pytest.approx(3.1623e-13, rel=1e-4)

    def test_fixed_power(self):
        """P0 = B·P_sta + K·P_UE"""
        pm = PowerModel.from_config(PowerConfig())
        assert pm.p0(2, 8) == pytest.approx(9.8)

    def test_invalid_efficiency(self):
        """η が (0,1] の外ならエラー"""
        with pytest.raises(ConfigurationError):
            PowerModel(eta=1.5, p_rf=0.4, p_sta=4.5, p_ue=0.1, p_max=1.0, n0_dbw=-125, bandwidth_hz=20e6)

    def test_nonpositive_power(self):
        """電力定数が0以下ならエラー"""
        with pytest.raises(ConfigurationError):
            PowerModel(eta=0.35, p_rf=0.0, p_sta=4.5, p_ue=0.1, p_max=1.0, n0_dbw=-125, bandwidth_hz=20e6)


class TestGenerateScenario:
    """シナリオ生成のテスト"""

    def test_dimensions(self, table_config):
        """B=2, U=2, L=2 なら K=8、グループ4つ"""
        scenario = generate_scenario(table_config, seed=0)
        assert scenario.num_bs == 2
        assert scenario.num_groups == 4
        assert scenario.num_users == 8
        assert scenario.total_antennas == 32
        assert all(h.shape == (8, 16) for h in scenario.channels)

    def test_disjoint_groups(self, table_config):
        """グループのメンバーは互いに素で全ユーザーを覆う"""
        scenario = generate_scenario(table_config, seed=0)
        members = [k for g in scenario.groups for k in g.users]
        assert sorted(members) == list(range(scenario.num_users))
        assert scenario.groups_of_bs(0) == [0, 1]
        assert scenario.groups_of_bs(1) == [2, 3]

    def test_deterministic(self, table_config):
        """同じシードなら同じチャネル"""
        first = generate_scenario(table_config, seed=7)
        second = generate_scenario(table_config, seed=7)
        for h1, h2 in zip(first.channels, second.channels):
            np.testing.assert_array_equal(h1, h2)

    def test_seed_changes_channels(self, table_config):
        """シードが違えばチャネルも違う"""
        first = generate_scenario(table_config, seed=1)
        second = generate_scenario(table_config, seed=2)
        assert not np.allclose(first.channels[0], second.channels[0])

    def test_path_loss_at_250m(self):
        """d=250m のパスロスは約 106.94 dB"""
        assert path_loss_db(250.0) == pytest.approx(106.94, abs=0.01)

    def test_channel_gain_scale(self, table_config):
        """チャネルの平均利得はパスロスの逆数程度"""
        scenario = generate_scenario(table_config, seed=0)
        gain = np.mean(np.abs(np.concatenate(scenario.channels, axis=1)) ** 2)
        expected = 10 ** (-path_loss_db(250.0) / 10)
        assert 0.5 * expected < gain < 2.0 * expected

    def test_random_placement_distances(self):
        """ランダム配置でも距離は最小距離以上"""
        config = ScenarioConfig(placement="random", distance_m=250.0, min_distance_m=35.0)
        scenario = generate_scenario(config, seed=3)
        assert scenario.distances_m.shape == (2, 8)
        assert np.all(scenario.distances_m >= 35.0)

    def test_fewer_antennas_than_groups(self):
        """N < U は設定エラー"""
        with pytest.raises(ConfigurationError):
            generate_scenario(ScenarioConfig(antennas_per_bs=1, groups_per_bs=2), seed=0)

    def test_antenna_list_length(self):
        """基地局ごとのアンテナ数リストの長さが B と違えばエラー"""
        with pytest.raises(ConfigurationError):
            generate_scenario(ScenarioConfig(antennas_per_bs=[4, 4, 4]), seed=0)

    def test_heterogeneous_antennas(self):
        """基地局ごとにアンテナ数を変えられる"""
        scenario = generate_scenario(ScenarioConfig(antennas_per_bs=[4, 6], groups_per_bs=1), seed=0)
        assert scenario.antennas_per_bs == (4, 6)
        assert scenario.group_antennas(1) == 6


class TestScenarioValidation:
    """シナリオの整合性検証のテスト"""

    def _power(self):
        return PowerModel.from_config(PowerConfig())

    def test_overlapping_groups(self):
        """メンバーが重複するグループはエラー"""
        with pytest.raises(ConfigurationError):
            Scenario(
                power=self._power(),
                antennas_per_bs=(2,),
                groups=(MulticastGroup(0, (0, 1)), MulticastGroup(0, (1,))),
                channels=(np.ones((2, 2)),),
                rate_targets_bps=np.zeros(2),
            )

    def test_channel_shape_mismatch(self):
        """チャネル行列の形状が合わなければエラー"""
        with pytest.raises(ConfigurationError):
            Scenario(
                power=self._power(),
                antennas_per_bs=(3,),
                groups=(MulticastGroup(0, (0,)),),
                channels=(np.ones((1, 2)),),
                rate_targets_bps=np.zeros(1),
            )

    def test_channels_are_read_only(self, make_scenario):
        """チャネルは変更できない"""
        scenario = make_scenario()
        with pytest.raises(ValueError):
            scenario.channels[0][0, 0] = 1.0


class TestPerturbChannels:
    """不完全CSIのテスト"""

    def test_zero_variance_returns_input(self, make_scenario):
        """σ_e²=0 なら入力そのもの"""
        scenario = make_scenario()
        assert perturb_channels(scenario, 0.0, seed=1) is scenario

    def test_per_element_error_variance(self, make_scenario):
        """要素ごとの誤差分散は σ_e²（10⁴ 要素で ±5%）"""
        scenario = make_scenario(num_bs=2, antennas=50, groups=2, users=25)
        sigma_e2 = 1e-2
        noisy = perturb_channels(scenario, sigma_e2, seed=0)
        errors = np.concatenate([
            (h_hat - h).ravel() for h_hat, h in zip(noisy.channels, scenario.channels)
        ])
        assert errors.size == 10_000
        assert np.mean(np.abs(errors) ** 2) == pytest.approx(sigma_e2, rel=0.05)
        assert abs(np.mean(errors)) < 0.05 * np.sqrt(sigma_e2)
        assert noisy.groups == scenario.groups

    def test_fixed_seed_is_deterministic(self, make_scenario):
        """同じシードなら同じ誤差"""
        scenario = make_scenario()
        first = perturb_channels(scenario, 0.1, seed=3)
        second = perturb_channels(scenario, 0.1, seed=3)
        for h1, h2 in zip(first.channels, second.channels):
            np.testing.assert_array_equal(h1, h2)

    def test_negative_variance(self, make_scenario):
        """負の分散はエラー"""
        with pytest.raises(ConfigurationError):
            perturb_channels(make_scenario(), -0.1, seed=0)


class TestScenarioSerialization:
    """シナリオのJSON入出力のテスト"""

    def test_save_and_load(self, make_scenario, tmp_path):
        """保存したシナリオを読み込むと同じチャネル"""
        scenario = make_scenario(seed=4)
        path = save_scenario(scenario, tmp_path / "scenario.json")
        loaded = load_scenario(path)
        assert loaded.antennas_per_bs == scenario.antennas_per_bs
        assert loaded.groups == scenario.groups
        np.testing.assert_allclose(loaded.rate_targets_bps, scenario.rate_targets_bps)
        for h1, h2 in zip(loaded.channels, scenario.channels):
            np.testing.assert_allclose(h1, h2)

    def test_regenerate_without_channels(self, make_scenario):
        """チャネル省略時は距離とシードから再生成"""
        scenario = make_scenario(seed=5)
        rebuilt = scenario_from_dict(scenario_to_dict(scenario, include_channels=False))
        for h1, h2 in zip(rebuilt.channels, scenario.channels):
            np.testing.assert_allclose(h1, h2)

    def test_missing_file(self, tmp_path):
        """存在しないファイルはエラー"""
        with pytest.raises(FileNotFoundError):
            load_scenario(tmp_path / "missing.json")

    def test_malformed_document(self):
        """必須キーが欠けた文書はエラー"""
        with pytest.raises(ConfigurationError):
            scenario_from_dict({"antennas_per_bs": [2]})


class TestBeamformerSet:
    """ビームフォーマとアンテナ選択状態のテスト"""

    def test_antenna_powers(self, make_scenario):
        """アンテナ電力は同じ基地局の全グループの和"""
        scenario = make_scenario(num_bs=1, antennas=3, groups=2)
        w = BeamformerSet((np.array([1.0, 0.0, 1j]), np.array([1.0, 2.0, 0.0])))
        powers = w.antenna_powers(scenario)[0]
        np.testing.assert_allclose(powers, [2.0, 4.0, 1.0])
        assert w.transmit_power() == pytest.approx(7.0)

    def test_masked_rows_are_zero(self, make_scenario):
        """マスクでオフの行は厳密にゼロ"""
        scenario = make_scenario(num_bs=1, antennas=3, groups=2)
        w = BeamformerSet((np.ones(3), np.ones(3)))
        masked = w.masked(scenario, (np.array([True, False, True]),))
        assert masked.vectors[0][1] == 0
        assert masked.vectors[1][1] == 0
        assert masked.vectors[0][0] == 1

    def test_non_finite_entries(self):
        """非有限値はエラー"""
        with pytest.raises(ValueError):
            BeamformerSet((np.array([np.nan, 1.0]),))

    def test_selection_bounds(self, make_scenario):
        """a が [0,1] の外ならエラー"""
        scenario = make_scenario()
        with pytest.raises(ValueError):
            SelectionState(
                a=tuple(np.full(n, 1.5) for n in scenario.antennas_per_bs),
                v=tuple(np.zeros(n) for n in scenario.antennas_per_bs),
                mask=tuple(np.ones(n, dtype=bool) for n in scenario.antennas_per_bs),
            )

    def test_selection_counts(self, make_scenario):
        """選択数と連続緩和の和"""
        scenario = make_scenario()
        state = SelectionState.all_on(scenario)
        assert state.active_count == 6
        assert state.active_per_bs == (3, 3)
        assert state.relaxed_count == pytest.approx(6.0)
        assert SelectionState.all_off(scenario).active_count == 0

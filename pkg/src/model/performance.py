#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
性能評価
SINR・グループレート・総消費電力・エネルギー効率の解析的評価
"""

from typing import Sequence

import numpy as np

from .scenario import BeamformerSet, Scenario, SelectionState


LN2 = float(np.log(2.0))


def received_powers(w: BeamformerSet, scenario: Scenario) -> np.ndarray:
    """
    受信電力行列 |h_{b_g,k}^H w_g|²

    Args:
        w: ビームフォーマ
        scenario: シナリオ

    Returns:
        形状 (K, G) の行列（行がユーザー、列がグループ）
    """
    w.check_dimensions(scenario)
    powers = np.empty((scenario.num_users, scenario.num_groups))
    for g, group in enumerate(scenario.groups):
        powers[:, g] = np.abs(scenario.channels[group.bs].conj() @ w.vectors[g]) ** 2
    return powers


def interference_plus_noise(w: BeamformerSet, scenario: Scenario) -> np.ndarray:
    """ユーザーごとの N0 + 他グループ干渉 [W]"""
    powers = received_powers(w, scenario)
    own = powers[np.arange(scenario.num_users), scenario.user_group]
    return scenario.n0_linear + powers.sum(axis=1) - own


def sinr_all(w: BeamformerSet, scenario: Scenario) -> np.ndarray:
    """全ユーザーのSINR"""
    powers = received_powers(w, scenario)
    own = powers[np.arange(scenario.num_users), scenario.user_group]
    return own / (scenario.n0_linear + powers.sum(axis=1) - own)


def sinr(w: BeamformerSet, scenario: Scenario, k: int) -> float:
    """ユーザー k のSINR"""
    return float(sinr_all(w, scenario)[k])


def group_rates_nats(w: BeamformerSet, scenario: Scenario) -> np.ndarray:
    """グループレート log(1 + min SINR) [nat/s/Hz]"""
    gamma = sinr_all(w, scenario)
    return np.array([np.log1p(np.min(gamma[list(g.users)])) for g in scenario.groups])


def group_rates(w: BeamformerSet, scenario: Scenario) -> np.ndarray:
    """グループレート W·log2(1 + min SINR) [bit/s]"""
    return nats_to_bps(group_rates_nats(w, scenario), scenario)


def sum_rate(w: BeamformerSet, scenario: Scenario) -> float:
    """総レート [bit/s]"""
    return float(np.sum(group_rates(w, scenario)))


def nats_to_bps(rates_nats, scenario: Scenario):
    return np.asarray(rates_nats) * scenario.power.bandwidth_hz / LN2


def bps_to_nats(rates_bps, scenario: Scenario):
    return np.asarray(rates_bps) * LN2 / scenario.power.bandwidth_hz


def group_rate_targets_nats(scenario: Scenario) -> np.ndarray:
    """グループごとの要求レート max_{k∈K_g} R̄_k [nat/s/Hz]"""
    targets = bps_to_nats(scenario.rate_targets_bps, scenario)
    return np.array([np.max(targets[list(g.users)]) for g in scenario.groups])


def total_power(w: BeamformerSet, state: SelectionState, scenario: Scenario) -> float:
    """
    総消費電力

    P_tot = (1/η)Σ||w_g||² + P_RF·(選択アンテナ数) + B·P_sta + K·P_UE

    Args:
        w: ビームフォーマ
        state: アンテナ選択状態（マスクのみ使用）
        scenario: シナリオ

    Returns:
        総消費電力 [W]
    """
    pm = scenario.power
    return w.transmit_power() / pm.eta + pm.p_rf * state.active_count + scenario.p0


def energy_efficiency(w: BeamformerSet, state: SelectionState, scenario: Scenario) -> float:
    """エネルギー効率 [bit/J]"""
    return sum_rate(w, scenario) / total_power(w, state, scenario)


def relaxed_power(v: Sequence[np.ndarray], a: Sequence[np.ndarray], scenario: Scenario, kappa: float = 1.0) -> float:
    """
    緩和問題で用いる電力 κ·g(v,a) + P0、g(v,a) = (1/η)Σv + P_RF·Σa

    Args:
        v: 基地局ごとのソフト電力
        a: 基地局ごとの連続選択変数
        scenario: シナリオ
        kappa: 電力重み

    Returns:
        電力 [W]
    """
    pm = scenario.power
    adjustable = sum(float(np.sum(vb)) for vb in v) / pm.eta + pm.p_rf * sum(float(np.sum(ab)) for ab in a)
    return kappa * adjustable + scenario.p0


def min_active_antennas(scenario: Scenario) -> np.ndarray:
    """
    基地局ごとの最小アクティブアンテナ数 X_b

    要求レートが正のユーザーを含むグループの数
    """
    counts = np.zeros(scenario.num_bs, dtype=int)
    for group in scenario.groups:
        if np.any(scenario.rate_targets_bps[list(group.users)] > 0):
            counts[group.bs] += 1
    return counts


def minimum_power(scenario: Scenario) -> float:
    """P_min = P0 + P_RF·Σ_b X_b"""
    return scenario.p0 + scenario.power.p_rf * float(np.sum(min_active_antennas(scenario)))

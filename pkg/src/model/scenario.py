#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ネットワークシナリオ
マルチセル・マルチグループマルチキャストMISO下りリンクのチャネル・グループ構成・電力定数
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.config import PowerConfig, ScenarioConfig
from ..utils.errors import ConfigurationError
from ..utils.logger import log


def _frozen(array: np.ndarray, dtype=None) -> np.ndarray:
    """読み取り専用のコピーを返す"""
    copied = np.array(array, dtype=dtype, copy=True)
    copied.setflags(write=False)
    return copied


@dataclass(frozen=True)
class PowerModel:
    """電力消費モデルと物理定数"""
    eta: float
    p_rf: float
    p_sta: float
    p_ue: float
    p_max: float
    n0_dbw: float
    bandwidth_hz: float

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ConfigurationError(f"eta must lie in (0, 1], got {self.eta}")
        for name in ("p_rf", "p_sta", "p_ue", "p_max", "bandwidth_hz"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0, got {getattr(self, name)}")

    @classmethod
    def from_config(cls, config: PowerConfig) -> "PowerModel":
        return cls(
            eta=float(config.eta),
            p_rf=float(config.p_rf_w),
            p_sta=float(config.p_sta_w),
            p_ue=float(config.p_ue_w),
            p_max=float(config.p_max_w),
            n0_dbw=float(config.n0_dbw),
            bandwidth_hz=float(config.bandwidth_hz),
        )

    @property
    def n0_linear(self) -> float:
        """雑音電力 [W]"""
        return float(10.0 ** (self.n0_dbw / 10.0))

    def p0(self, num_bs: int, num_users: int) -> float:
        """
        固定電力 P0 = B·P_sta + K·P_UE

        Args:
            num_bs: 基地局数
            num_users: ユーザー数

        Returns:
            固定電力 [W]
        """
        return num_bs * self.p_sta + num_users * self.p_ue

    def to_dict(self) -> Dict[str, float]:
        return {
            "eta": self.eta,
            "p_rf": self.p_rf,
            "p_sta": self.p_sta,
            "p_ue": self.p_ue,
            "p_max": self.p_max,
            "n0_dbw": self.n0_dbw,
            "bandwidth_hz": self.bandwidth_hz,
        }


@dataclass(frozen=True)
class MulticastGroup:
    """マルチキャストグループ（送信基地局とメンバーユーザー）"""
    bs: int
    users: Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    1つのネットワークインスタンス

    channels[b] は形状 (K, N_b) の複素行列で、行 k が h_{b,k}（パスロス込み）
    """
    power: PowerModel
    antennas_per_bs: Tuple[int, ...]
    groups: Tuple[MulticastGroup, ...]
    channels: Tuple[np.ndarray, ...]
    rate_targets_bps: np.ndarray
    seed: int = 0
    distances_m: Optional[np.ndarray] = None
    placement: str = "fixed"

    def __post_init__(self):
        antennas = tuple(int(n) for n in self.antennas_per_bs)
        object.__setattr__(self, "antennas_per_bs", antennas)
        groups = tuple(MulticastGroup(int(g.bs), tuple(int(k) for k in g.users)) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        num_bs = len(antennas)
        if num_bs < 1:
            raise ConfigurationError("Scenario needs at least one BS")

        members: List[int] = [k for g in groups for k in g.users]
        if len(members) != len(set(members)):
            raise ConfigurationError("Group member sets must be pairwise disjoint")
        num_users = len(members)
        if sorted(members) != list(range(num_users)):
            raise ConfigurationError("Users must be indexed 0..K-1 and belong to exactly one group")
        for g, group in enumerate(groups):
            if not 0 <= group.bs < num_bs:
                raise ConfigurationError(f"Group {g} served by unknown BS {group.bs}")
            if not group.users:
                raise ConfigurationError(f"Group {g} has no users")

        if len(self.channels) != num_bs:
            raise ConfigurationError(f"Expected channels for {num_bs} BSs, got {len(self.channels)}")
        channels = []
        for b, h in enumerate(self.channels):
            h = np.asarray(h, dtype=complex)
            if h.shape != (num_users, antennas[b]):
                raise ConfigurationError(
                    f"Channel block of BS {b} has shape {h.shape}, expected {(num_users, antennas[b])}"
                )
            channels.append(_frozen(h, complex))
        object.__setattr__(self, "channels", tuple(channels))

        targets = np.asarray(self.rate_targets_bps, dtype=float)
        if targets.shape != (num_users,) or np.any(targets < 0):
            raise ConfigurationError("rate_targets_bps must hold one nonnegative value per user")
        object.__setattr__(self, "rate_targets_bps", _frozen(targets, float))
        if self.distances_m is not None:
            object.__setattr__(self, "distances_m", _frozen(self.distances_m, float))

    @property
    def num_bs(self) -> int:
        return len(self.antennas_per_bs)

    @property
    def num_users(self) -> int:
        return int(self.rate_targets_bps.shape[0])

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    @property
    def total_antennas(self) -> int:
        return int(sum(self.antennas_per_bs))

    @property
    def n0_linear(self) -> float:
        return self.power.n0_linear

    @property
    def p0(self) -> float:
        return self.power.p0(self.num_bs, self.num_users)

    @property
    def user_group(self) -> np.ndarray:
        """ユーザー k が属するグループ番号"""
        owner = np.empty(self.num_users, dtype=int)
        for g, group in enumerate(self.groups):
            owner[list(group.users)] = g
        return owner

    def groups_of_bs(self, b: int) -> List[int]:
        """基地局 b が送信するグループ番号のリスト（G_b）"""
        return [g for g, group in enumerate(self.groups) if group.bs == b]

    def group_antennas(self, g: int) -> int:
        """グループ g のビームフォーマ長 N_{b_g}"""
        return self.antennas_per_bs[self.groups[g].bs]

    def channel(self, b: int, k: int) -> np.ndarray:
        """チャネルベクトル h_{b,k}"""
        return self.channels[b][k]

    def with_channels(self, channels: Sequence[np.ndarray]) -> "Scenario":
        """チャネルだけを差し替えたシナリオを返す"""
        return Scenario(
            power=self.power,
            antennas_per_bs=self.antennas_per_bs,
            groups=self.groups,
            channels=tuple(channels),
            rate_targets_bps=self.rate_targets_bps,
            seed=self.seed,
            distances_m=self.distances_m,
            placement=self.placement,
        )


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    """グループごとの複素ビームフォーミングベクトル w_g"""
    vectors: Tuple[np.ndarray, ...]

    def __post_init__(self):
        vectors = []
        for g, w in enumerate(self.vectors):
            w = np.asarray(w, dtype=complex).reshape(-1)
            if not np.all(np.isfinite(w)):
                raise ValueError(f"Beamformer of group {g} has non-finite entries")
            vectors.append(_frozen(w, complex))
        object.__setattr__(self, "vectors", tuple(vectors))

    @classmethod
    def zeros(cls, scenario: Scenario) -> "BeamformerSet":
        return cls(tuple(np.zeros(scenario.group_antennas(g), dtype=complex) for g in range(scenario.num_groups)))

    @classmethod
    def random(cls, scenario: Scenario, rng: np.random.Generator, antenna_power: float) -> "BeamformerSet":
        """
        各アンテナの期待送信電力が antenna_power となる乱数ビームフォーマ

        Args:
            scenario: シナリオ
            rng: 乱数生成器
            antenna_power: アンテナあたりの期待電力 [W]

        Returns:
            ビームフォーマ
        """
        vectors = []
        for g in range(scenario.num_groups):
            b = scenario.groups[g].bs
            share = antenna_power / len(scenario.groups_of_bs(b))
            n = scenario.group_antennas(g)
            draw = rng.standard_normal((n, 2))
            vectors.append(np.sqrt(share / 2.0) * (draw[:, 0] + 1j * draw[:, 1]))
        return cls(tuple(vectors))

    def check_dimensions(self, scenario: Scenario) -> None:
        if len(self.vectors) != scenario.num_groups:
            raise ValueError(f"Expected {scenario.num_groups} beamformers, got {len(self.vectors)}")
        for g, w in enumerate(self.vectors):
            if w.shape[0] != scenario.group_antennas(g):
                raise ValueError(f"Beamformer of group {g} has length {w.shape[0]}")

    def antenna_row(self, scenario: Scenario, b: int, i: int) -> np.ndarray:
        """アンテナ行 ŵ_{b,i}（基地局 b の全グループにおけるアンテナ i の係数）"""
        return np.array([self.vectors[g][i] for g in scenario.groups_of_bs(b)], dtype=complex)

    def antenna_powers(self, scenario: Scenario) -> Tuple[np.ndarray, ...]:
        """基地局ごとのアンテナ送信電力 ||ŵ_{b,i}||²"""
        powers = []
        for b in range(scenario.num_bs):
            total = np.zeros(scenario.antennas_per_bs[b])
            for g in scenario.groups_of_bs(b):
                total = total + np.abs(self.vectors[g]) ** 2
            powers.append(total)
        return tuple(powers)

    def antenna_norms(self, scenario: Scenario) -> Tuple[np.ndarray, ...]:
        """基地局ごとのアンテナ行ノルム ||ŵ_{b,i}||₂"""
        return tuple(np.sqrt(p) for p in self.antenna_powers(scenario))

    def transmit_power(self) -> float:
        """Σ_g ||w_g||²"""
        return float(sum(np.vdot(w, w).real for w in self.vectors))

    def scaled(self, factor: float) -> "BeamformerSet":
        return BeamformerSet(tuple(factor * w for w in self.vectors))

    def scaled_group(self, g: int, factor: float) -> "BeamformerSet":
        return BeamformerSet(tuple(factor * w if u == g else w for u, w in enumerate(self.vectors)))

    def masked(self, scenario: Scenario, mask: Sequence[np.ndarray]) -> "BeamformerSet":
        """マスクがオフのアンテナ行を厳密にゼロにする"""
        vectors = []
        for g, w in enumerate(self.vectors):
            keep = np.asarray(mask[scenario.groups[g].bs], dtype=bool)
            vectors.append(np.where(keep, w, 0.0 + 0.0j))
        return BeamformerSet(tuple(vectors))


@dataclass(frozen=True, eq=False)
class SelectionState:
    """アンテナ選択側の決定変数（連続値 a・ソフト電力 v・ブールマスク）"""
    a: Tuple[np.ndarray, ...]
    v: Tuple[np.ndarray, ...]
    mask: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if not (len(self.a) == len(self.v) == len(self.mask)):
            raise ValueError("a, v and mask must cover the same BSs")
        a_blocks, v_blocks, m_blocks = [], [], []
        for a, v, m in zip(self.a, self.v, self.mask):
            a = np.asarray(a, dtype=float)
            v = np.asarray(v, dtype=float)
            if np.any(a < -1e-6) or np.any(a > 1 + 1e-6):
                raise ValueError(f"Selection variables must lie in [0, 1], got range [{a.min()}, {a.max()}]")
            if np.any(v < -1e-6):
                raise ValueError("Soft antenna powers must be nonnegative")
            a_blocks.append(_frozen(np.clip(a, 0.0, 1.0), float))
            v_blocks.append(_frozen(np.maximum(v, 0.0), float))
            m_blocks.append(_frozen(m, bool))
        object.__setattr__(self, "a", tuple(a_blocks))
        object.__setattr__(self, "v", tuple(v_blocks))
        object.__setattr__(self, "mask", tuple(m_blocks))

    @classmethod
    def all_on(cls, scenario: Scenario, beamformers: Optional[BeamformerSet] = None) -> "SelectionState":
        """全アンテナ選択（a=1、v は実電力）"""
        if beamformers is None:
            v = tuple(np.zeros(n) for n in scenario.antennas_per_bs)
        else:
            v = beamformers.antenna_powers(scenario)
        return cls(
            a=tuple(np.ones(n) for n in scenario.antennas_per_bs),
            v=v,
            mask=tuple(np.ones(n, dtype=bool) for n in scenario.antennas_per_bs),
        )

    @classmethod
    def all_off(cls, scenario: Scenario) -> "SelectionState":
        return cls(
            a=tuple(np.zeros(n) for n in scenario.antennas_per_bs),
            v=tuple(np.zeros(n) for n in scenario.antennas_per_bs),
            mask=tuple(np.zeros(n, dtype=bool) for n in scenario.antennas_per_bs),
        )

    @property
    def active_count(self) -> int:
        return int(sum(int(np.count_nonzero(m)) for m in self.mask))

    @property
    def active_per_bs(self) -> Tuple[int, ...]:
        return tuple(int(np.count_nonzero(m)) for m in self.mask)

    @property
    def relaxed_count(self) -> float:
        """Σ a（連続緩和でのアクティブアンテナ数の推定値）"""
        return float(sum(float(np.sum(a)) for a in self.a))


def _user_distances(config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """
    ユーザー配置から基地局-ユーザー間距離を求める

    Args:
        config: シナリオ設定
        rng: 乱数生成器

    Returns:
        形状 (B, K) の距離行列 [m]
    """
    num_bs, num_users = config.num_bs, config.num_users
    if config.placement == "fixed":
        return np.full((num_bs, num_users), float(config.distance_m))

    # 基地局は間隔 2d の直線上、ユーザーは隣接基地局へ向かう区間に一様配置
    spacing = 2.0 * config.distance_m
    positions = spacing * np.arange(num_bs)
    users_per_bs = config.groups_per_bs * config.users_per_group
    offsets = rng.uniform(config.min_distance_m, spacing - config.min_distance_m, size=num_users)
    user_positions = np.empty(num_users)
    for k in range(num_users):
        b = k // users_per_bs
        direction = 1.0 if b < num_bs - 1 or num_bs == 1 else -1.0
        user_positions[k] = positions[b] + direction * offsets[k]
    distances = np.abs(positions[:, None] - user_positions[None, :])
    return np.maximum(distances, config.min_distance_m)


def path_loss_db(distance_m, slope_db: float = 30.0, offset_db: float = 35.0):
    """パスロス [dB] = slope·log10(d) + offset"""
    return slope_db * np.log10(distance_m) + offset_db


def _draw_channels(rng: np.random.Generator,
                   distances: np.ndarray,
                   antennas: Sequence[int],
                   slope_db: float,
                   offset_db: float) -> List[np.ndarray]:
    """単位分散の複素ガウス・フェージングにパスロスの振幅を掛ける"""
    attenuation = 10.0 ** (-path_loss_db(distances, slope_db, offset_db) / 10.0)
    num_users = distances.shape[1]
    channels = []
    for b, n in enumerate(antennas):
        draw = rng.standard_normal((num_users, n, 2))
        fading = (draw[..., 0] + 1j * draw[..., 1]) / np.sqrt(2.0)
        channels.append(np.sqrt(attenuation[b])[:, None] * fading)
    return channels


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """
    レイリーフェージングのシナリオを生成

    Args:
        config: シナリオ設定
        seed: 乱数シード

    Returns:
        シナリオ（同じ設定・シードなら同一）
    """
    config.validate()
    rng = np.random.default_rng(seed)
    antennas = config.antenna_counts()

    groups = []
    for b in range(config.num_bs):
        for u in range(config.groups_per_bs):
            g = b * config.groups_per_bs + u
            first = g * config.users_per_group
            groups.append(MulticastGroup(b, tuple(range(first, first + config.users_per_group))))

    distances = _user_distances(config, rng)
    channels = _draw_channels(rng, distances, antennas, config.path_loss_slope_db, config.path_loss_offset_db)

    scenario = Scenario(
        power=PowerModel.from_config(config.power),
        antennas_per_bs=antennas,
        groups=tuple(groups),
        channels=tuple(channels),
        rate_targets_bps=np.asarray(config.rate_targets_bps()),
        seed=int(seed),
        distances_m=distances,
        placement=config.placement,
    )
    log.debug(
        f"Generated scenario seed={seed}: B={scenario.num_bs}, N={antennas}, "
        f"G={scenario.num_groups}, K={scenario.num_users}, placement={config.placement}"
    )
    return scenario


def perturb_channels(scenario: Scenario, sigma_e2: float, seed: int) -> Scenario:
    """
    チャネル推定誤差を加えたシナリオを返す

    各要素に平均0・分散 sigma_e2 の複素ガウス雑音を加える

    Args:
        scenario: 真のチャネルを持つシナリオ
        sigma_e2: 要素ごとの誤差分散
        seed: 乱数シード

    Returns:
        誤差付きチャネルのシナリオ
    """
    if sigma_e2 < 0:
        raise ConfigurationError(f"Channel error variance must be >= 0, got {sigma_e2}")
    if sigma_e2 == 0:
        return scenario
    rng = np.random.default_rng(seed)
    noisy = []
    for h in scenario.channels:
        draw = rng.standard_normal(h.shape + (2,))
        noisy.append(h + np.sqrt(sigma_e2 / 2.0) * (draw[..., 0] + 1j * draw[..., 1]))
    return scenario.with_channels(noisy)


def scenario_to_dict(scenario: Scenario, include_channels: bool = True) -> Dict:
    """
    シナリオをJSON互換の辞書に変換

    チャネルは (b,k) ごとに [Re, Im, Re, Im, ...] と交互に並べる
    """
    data = {
        "num_bs": scenario.num_bs,
        "antennas_per_bs": list(scenario.antennas_per_bs),
        "groups": [{"bs": g.bs, "users": list(g.users)} for g in scenario.groups],
        "seed": scenario.seed,
        "power": scenario.power.to_dict(),
        "rate_targets_bps": scenario.rate_targets_bps.tolist(),
        "distances_m": None if scenario.distances_m is None else scenario.distances_m.tolist(),
        "placement": scenario.placement,
    }
    if include_channels:
        data["channels"] = [
            [np.column_stack([h[k].real, h[k].imag]).reshape(-1).tolist() for k in range(scenario.num_users)]
            for h in scenario.channels
        ]
    return data


def scenario_from_dict(data: Dict, path_loss_slope_db: float = 30.0, path_loss_offset_db: float = 35.0) -> Scenario:
    """
    辞書からシナリオを復元

    チャネルが省略されている場合は距離とシードから同じ手順で再生成する
    """
    try:
        antennas = tuple(int(n) for n in data["antennas_per_bs"])
        groups = tuple(MulticastGroup(int(g["bs"]), tuple(g["users"])) for g in data["groups"])
        power = PowerModel(**data["power"])
        targets = np.asarray(data["rate_targets_bps"], dtype=float)
        seed = int(data.get("seed", 0))
    except (KeyError, TypeError) as e:
        raise ConfigurationError(f"Malformed scenario document: {e}") from e
    distances = data.get("distances_m")
    distances = None if distances is None else np.asarray(distances, dtype=float)

    if data.get("channels") is not None:
        channels = []
        for b, rows in enumerate(data["channels"]):
            block = np.asarray(rows, dtype=float).reshape(len(rows), antennas[b], 2)
            channels.append(block[..., 0] + 1j * block[..., 1])
    else:
        if distances is None:
            raise ConfigurationError("Scenario document without channels needs distances_m")
        rng = np.random.default_rng(seed)
        if data.get("placement") == "random":
            # 配置抽選で消費した乱数列を読み飛ばす
            rng.uniform(size=targets.shape[0])
        channels = _draw_channels(rng, distances, antennas, path_loss_slope_db, path_loss_offset_db)

    return Scenario(
        power=power,
        antennas_per_bs=antennas,
        groups=groups,
        channels=tuple(channels),
        rate_targets_bps=targets,
        seed=seed,
        distances_m=distances,
        placement=str(data.get("placement", "fixed")),
    )


def save_scenario(scenario: Scenario, path: str) -> Path:
    """シナリオをJSONファイルに保存"""
    output_path = Path(path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as f:
        json.dump(scenario_to_dict(scenario), f, indent=2)
    return output_path


def load_scenario(path: str) -> Scenario:
    """JSONファイルからシナリオを読み込む"""
    input_path = Path(path)
    if not input_path.exists():
        raise FileNotFoundError(f"Scenario file not found: {input_path}")
    with open(input_path, "r", encoding="utf-8") as f:
        return scenario_from_dict(json.load(f))

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
設定管理ユーティリティ
YAML（またはJSON）ファイルから実験設定を読み込み、ハーネス全体で使用
"""

import dataclasses
import hashlib
import json
import os
import yaml
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union
from dataclasses import dataclass, field

from .errors import ConfigurationError


ALGORITHM_NAMES = ("alg1", "alg1-simple", "alg2-f1", "alg2-f2", "alg2-f3", "pwee", "alg3", "no-as")
BACKEND_PATHS = ("socp", "generic")
PLACEMENT_MODES = ("fixed", "random")

# スイープ可能なパラメータ -> (セクション, フィールド)
SWEEPABLE_PARAMETERS = {
    "algorithm": ("algorithm", "name"),
    "chi": ("algorithm", "chi"),
    "rho": ("algorithm", "rho"),
    "varsigma": ("algorithm", "varsigma"),
    "kappa": ("algorithm", "kappa"),
    "varrho": ("algorithm", "varrho"),
    "epsilon": ("algorithm", "epsilon"),
    "antennas_per_bs": ("scenario", "antennas_per_bs"),
    "rate_target_mbps": ("scenario", "rate_target_mbps"),
    "users_per_group": ("scenario", "users_per_group"),
    "groups_per_bs": ("scenario", "groups_per_bs"),
    "distance_m": ("scenario", "distance_m"),
    "csi_error_variance": ("scenario", "csi_error_variance"),
}


@dataclass
class PowerConfig:
    """電力モデル・物理定数設定"""
    eta: float = 0.35
    p_rf_w: float = 0.4
    p_sta_w: float = 4.5
    p_ue_w: float = 0.1
    p_max_w: float = 1.0
    n0_dbw: float = -125.0
    bandwidth_hz: float = 20e6


@dataclass
class ScenarioConfig:
    """ネットワークシナリオ設定"""
    num_bs: int = 2
    antennas_per_bs: Union[int, List[int]] = 16
    groups_per_bs: int = 2
    users_per_group: int = 2
    placement: str = "fixed"
    distance_m: float = 250.0
    min_distance_m: float = 35.0
    path_loss_slope_db: float = 30.0
    path_loss_offset_db: float = 35.0
    rate_target_mbps: Union[float, List[float]] = 20.0
    csi_error_variance: float = 0.0
    power: PowerConfig = field(default_factory=PowerConfig)

    def antenna_counts(self) -> Tuple[int, ...]:
        """基地局ごとのアンテナ数"""
        if isinstance(self.antennas_per_bs, (list, tuple)):
            return tuple(int(n) for n in self.antennas_per_bs)
        return (int(self.antennas_per_bs),) * int(self.num_bs)

    @property
    def num_groups(self) -> int:
        return int(self.num_bs) * int(self.groups_per_bs)

    @property
    def num_users(self) -> int:
        return self.num_groups * int(self.users_per_group)

    def rate_targets_bps(self) -> List[float]:
        """ユーザーごとの最小レート要求 [bit/s]"""
        if isinstance(self.rate_target_mbps, (list, tuple)):
            targets = [float(r) * 1e6 for r in self.rate_target_mbps]
            if len(targets) != self.num_users:
                raise ConfigurationError(
                    f"rate_target_mbps has {len(targets)} entries, expected {self.num_users}"
                )
            return targets
        return [float(self.rate_target_mbps) * 1e6] * self.num_users

    def validate(self) -> None:
        """
        次元・物理定数の妥当性を検証

        Raises:
            ConfigurationError: 不正な設定値
        """
        if self.num_bs < 1:
            raise ConfigurationError(f"num_bs must be >= 1, got {self.num_bs}")
        if self.groups_per_bs < 1 or self.users_per_group < 1:
            raise ConfigurationError("groups_per_bs and users_per_group must be >= 1")
        counts = self.antenna_counts()
        if len(counts) != self.num_bs:
            raise ConfigurationError(f"antennas_per_bs has {len(counts)} entries, expected {self.num_bs}")
        for b, n in enumerate(counts):
            if n < self.groups_per_bs:
                raise ConfigurationError(
                    f"BS {b}: {n} antennas cannot serve {self.groups_per_bs} groups (need N >= U)"
                )
        if self.placement not in PLACEMENT_MODES:
            raise ConfigurationError(f"Unknown placement mode: {self.placement}")
        if self.distance_m <= 0 or self.min_distance_m <= 0:
            raise ConfigurationError("distances must be > 0")
        if self.placement == "random" and self.min_distance_m >= self.distance_m:
            raise ConfigurationError("min_distance_m must be smaller than distance_m for random placement")
        if self.csi_error_variance < 0:
            raise ConfigurationError(f"csi_error_variance must be >= 0, got {self.csi_error_variance}")
        if any(r < 0 for r in self.rate_targets_bps()):
            raise ConfigurationError("rate targets must be >= 0")
        p = self.power
        if not 0 < p.eta <= 1:
            raise ConfigurationError(f"eta must lie in (0, 1], got {p.eta}")
        if min(p.p_rf_w, p.p_sta_w, p.p_ue_w, p.p_max_w, p.bandwidth_hz) <= 0:
            raise ConfigurationError("power constants and bandwidth must be > 0")


@dataclass
class AlgorithmConfig:
    """アルゴリズム設定"""
    name: str = "alg1"
    chi: float = 2.0
    rho: float = 0.0
    varsigma: float = 2.0
    kappa: float = 1.0
    varrho: float = 0.0
    epsilon: float = 1e-3
    max_iter: int = 50
    rel_tol: float = 1e-4
    backend_path: str = "socp"
    remark1: bool = True
    lambda_penalty: float = 10.0
    slack_tol: float = 1e-6
    feasibility_max_iter: int = 100
    oracle_restarts: int = 3


@dataclass
class SolverConfig:
    """錐計画ソルバー設定"""
    solver: str = "CLARABEL"
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iter: int = 200
    # 数値的失敗時に緩めた許容誤差で試すソルバー
    fallback_solvers: List[str] = field(default_factory=lambda: ["SCS"])
    fallback_tol: float = 1e-6

    def validate(self) -> None:
        if self.tol_feas <= 0 or self.tol_gap <= 0 or self.fallback_tol <= 0:
            raise ConfigurationError("solver tolerances must be positive")
        if self.max_iter < 1:
            raise ConfigurationError(f"solver.max_iter must be >= 1, got {self.max_iter}")


@dataclass
class SweepAxis:
    """スイープ軸（パラメータ名と値リスト）"""
    parameter: str
    values: List[Any] = field(default_factory=list)


@dataclass
class SeedConfig:
    """乱数シード設定"""
    values: List[int] = field(default_factory=list)
    count: int = 20
    base: int = 0

    def resolve(self) -> List[int]:
        """
        使用するシード列を返す

        Returns:
            シードのリスト（明示リストが優先）
        """
        if self.values:
            return [int(s) for s in self.values]
        return list(range(int(self.base), int(self.base) + int(self.count)))


@dataclass
class ExecutionConfig:
    """並列実行設定"""
    workers: int = 1
    dump_programs: bool = False
    write_scenarios: bool = False
    oracle: bool = False


@dataclass
class LoggingConfig:
    """ロギング設定"""
    level: str = "INFO"
    file: Optional[str] = "./logs/experiment.log"
    format: Optional[str] = "{time:YYYY-MM-DD HH:mm:ss} | {level} | {message}"


@dataclass
class OutputConfig:
    """出力設定"""
    results_dir: str = "./results"


@dataclass
class ExperimentConfig:
    """全体設定"""
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: List[SweepAxis] = field(default_factory=list)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> None:
        """
        設定全体の整合性を検証

        Raises:
            ConfigurationError: 不正な設定値
        """
        self.scenario.validate()
        self.solver.validate()
        alg = self.algorithm
        if alg.name not in ALGORITHM_NAMES:
            raise ConfigurationError(f"Unknown algorithm: {alg.name} (choose from {ALGORITHM_NAMES})")
        if alg.backend_path not in BACKEND_PATHS:
            raise ConfigurationError(f"Unknown backend path: {alg.backend_path}")
        if not self.seeds.resolve():
            raise ConfigurationError("Seed list is empty")
        for axis in self.sweep:
            if axis.parameter not in SWEEPABLE_PARAMETERS:
                raise ConfigurationError(f"Sweep parameter does not exist: {axis.parameter}")
            if not axis.values:
                raise ConfigurationError(f"Sweep axis '{axis.parameter}' has no values")
            for value in axis.values:
                if axis.parameter == "algorithm" and value not in ALGORITHM_NAMES:
                    raise ConfigurationError(f"Unknown algorithm in sweep: {value}")
                self.with_parameter(axis.parameter, value).scenario.validate()
        if self.execution.workers < 0:
            raise ConfigurationError("workers must be >= 0 (0 = one per physical core)")

    def with_parameter(self, parameter: str, value: Any) -> "ExperimentConfig":
        """
        1つのパラメータを差し替えた設定を返す

        Args:
            parameter: スイープ可能なパラメータ名
            value: 新しい値

        Returns:
            新しい設定オブジェクト
        """
        if parameter not in SWEEPABLE_PARAMETERS:
            raise ConfigurationError(f"Sweep parameter does not exist: {parameter}")
        section_name, field_name = SWEEPABLE_PARAMETERS[parameter]
        section = getattr(self, section_name)
        return dataclasses.replace(self, **{section_name: dataclasses.replace(section, **{field_name: value})})

    def config_hash(self) -> str:
        """設定全体の正規化JSONのSHA-256"""
        canonical = json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _build_section(cls, data: Optional[Dict[str, Any]], path: str):
    """
    辞書から設定セクションを作成（未知のキーは拒否）

    Args:
        cls: データクラス
        data: 設定辞書
        path: エラーメッセージ用のセクション名

    Returns:
        データクラスのインスタンス
    """
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"Section '{path}' must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"Unknown keys in '{path}': {unknown}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigurationError(f"Invalid section '{path}': {e}") from e


class ConfigLoader:
    """設定ファイルローダー"""

    @staticmethod
    def load_config(config_path: str) -> ExperimentConfig:
        """
        YAML/JSONファイルから設定を読み込む

        Args:
            config_path: 設定ファイルパス

        Returns:
            設定オブジェクト
        """
        config_path = Path(config_path)

        if not config_path.exists():
            raise FileNotFoundError(f"Config file not found: {config_path}")

        with open(config_path, 'r', encoding='utf-8') as f:
            try:
                config_dict = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigurationError(f"Could not parse {config_path}: {e}") from e

        # 環境変数の展開
        config_dict = ConfigLoader._expand_env_vars(config_dict)

        return ConfigLoader._create_config_object(config_dict)

    @staticmethod
    def _expand_env_vars(config_dict: Dict[str, Any]) -> Dict[str, Any]:
        """
        設定値中の環境変数を展開

        Args:
            config_dict: 設定辞書

        Returns:
            環境変数展開後の設定辞書
        """
        def expand_value(value):
            if isinstance(value, str) and value.startswith("${") and value.endswith("}"):
                env_var = value[2:-1]
                return os.environ.get(env_var, value)
            elif isinstance(value, dict):
                return {k: expand_value(v) for k, v in value.items()}
            elif isinstance(value, list):
                return [expand_value(v) for v in value]
            else:
                return value

        return expand_value(config_dict)

    @staticmethod
    def _create_config_object(config_dict: Dict[str, Any]) -> ExperimentConfig:
        """
        辞書から設定オブジェクトを作成

        Args:
            config_dict: 設定辞書

        Returns:
            検証済みの設定オブジェクト
        """
        if not isinstance(config_dict, dict):
            raise ConfigurationError("Top level of the config file must be a mapping")
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = sorted(set(config_dict) - known)
        if unknown:
            raise ConfigurationError(f"Unknown top-level keys: {unknown}")

        # シナリオ設定（電力定数はネスト）
        scenario_dict = dict(config_dict.get('scenario') or {})
        power_config = _build_section(PowerConfig, scenario_dict.pop('power', None), "scenario.power")
        scenario_config = _build_section(ScenarioConfig, scenario_dict, "scenario")
        scenario_config.power = power_config

        sweep_list = config_dict.get('sweep') or []
        if isinstance(sweep_list, dict):
            sweep_list = [sweep_list]
        sweep = [_build_section(SweepAxis, axis, f"sweep[{i}]") for i, axis in enumerate(sweep_list)]

        config = ExperimentConfig(
            scenario=scenario_config,
            algorithm=_build_section(AlgorithmConfig, config_dict.get('algorithm'), "algorithm"),
            solver=_build_section(SolverConfig, config_dict.get('solver'), "solver"),
            sweep=sweep,
            seeds=_build_section(SeedConfig, config_dict.get('seeds'), "seeds"),
            execution=_build_section(ExecutionConfig, config_dict.get('execution'), "execution"),
            logging=_build_section(LoggingConfig, config_dict.get('logging'), "logging"),
            output=_build_section(OutputConfig, config_dict.get('output'), "output"),
        )
        config.validate()
        return config

    @staticmethod
    def save_config(config: ExperimentConfig, output_path: str) -> None:
        """
        設定オブジェクトをYAMLファイルに保存

        Args:
            config: 設定オブジェクト
            output_path: 出力パス
        """
        config_dict = dataclasses.asdict(config)

        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)

        with open(output_path, 'w', encoding='utf-8') as f:
            yaml.dump(config_dict, f, default_flow_style=False, allow_unicode=True, sort_keys=False)


def load_config(config_path: str = "config/config.yaml") -> ExperimentConfig:
    """
    設定ファイルを読み込む便利関数

    Args:
        config_path: 設定ファイルパス

    Returns:
        設定オブジェクト
    """
    return ConfigLoader.load_config(config_path)

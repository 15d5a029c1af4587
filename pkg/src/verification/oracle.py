#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
アンテナ部分集合の全探索オラクル
小規模インスタンスで全ての許容アンテナ部分集合について固定選択 SCA を実行し、EE 最大の集合を求める。
SCA 結果の活性条件（各グループ最悪ユーザーの γ 行が等号で成立すること）の検査も行う
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..model.performance import min_active_antennas, sinr_all
from ..model.scenario import Scenario
from ..optimization.algorithms import JbasResult, SolveOptions, run_fixed_selection
from ..utils.errors import ConfigurationError, InfeasibleInstanceError, SolverFailureError
from ..utils.logger import LogContext, log, log_execution


# 全探索を許すアンテナ総数の上限（4096 部分集合）
MAX_ORACLE_ANTENNAS = 12

TABLE_COLUMNS = ["subset", "active_antennas", "ee_bits_per_joule", "sum_rate_bps", "power_w", "status"]


@dataclass(frozen=True, eq=False)
class OracleReport:
    """全探索の結果"""
    best_mask: Tuple[np.ndarray, ...]
    best_subset: int
    best_ee: float
    table: pd.DataFrame

    def gap(self, result: JbasResult) -> float:
        """(オラクル EE − 結果の EE) / オラクル EE"""
        return (self.best_ee - result.ee) / self.best_ee

    def ratio(self, result: JbasResult) -> float:
        return result.ee / self.best_ee

    def to_csv(self, path) -> Path:
        output_path = Path(path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        self.table.to_csv(output_path, index=False)
        return output_path


def subset_mask(subset: int, scenario: Scenario) -> Tuple[np.ndarray, ...]:
    """ビットマスク（ビット j が通し番号 j のアンテナ）を基地局ごとのマスクに変換"""
    bits = np.array([(subset >> j) & 1 for j in range(scenario.total_antennas)], dtype=bool)
    offsets = np.concatenate([[0], np.cumsum(scenario.antennas_per_bs)])
    return tuple(bits[offsets[b]:offsets[b + 1]] for b in range(scenario.num_bs))


def admissible_subsets(scenario: Scenario) -> Iterator[int]:
    """空でなく、基地局ごとの選択数が X_b 以上の部分集合"""
    required = min_active_antennas(scenario)
    for subset in range(1, 2 ** scenario.total_antennas):
        counts = [int(np.count_nonzero(m)) for m in subset_mask(subset, scenario)]
        if all(c >= x for c, x in zip(counts, required)):
            yield subset


def _evaluate_subset(args) -> dict:
    """1つの部分集合を複数の初期点から評価（プロセスプールから呼ばれる）"""
    scenario, subset, opts = args
    mask = subset_mask(subset, scenario)
    best: Optional[JbasResult] = None
    status = "infeasible"
    for restart in range(opts.oracle_restarts):
        try:
            result = run_fixed_selection(scenario, mask, opts, restart=restart, algorithm="oracle")
        except (InfeasibleInstanceError, SolverFailureError) as e:
            log.debug(f"subset {subset:#x} restart {restart}: {e}")
            continue
        if best is None or result.ee > best.ee:
            best = result
            status = result.status
    return {
        "subset": subset,
        "active_antennas": int(sum(int(np.count_nonzero(m)) for m in mask)),
        "ee_bits_per_joule": best.ee if best is not None else float("nan"),
        "sum_rate_bps": best.sum_rate if best is not None else float("nan"),
        "power_w": best.power_w if best is not None else float("nan"),
        "status": status,
    }


@log_execution
def exhaustive_antenna_search(scenario: Scenario, opts: SolveOptions, workers: int = 1) -> OracleReport:
    """
    全ての許容アンテナ部分集合を評価し、EE 最大の集合を返す

    各部分集合では oracle_restarts 個の初期点から固定選択 SCA を実行し最良値を採る。
    最初の初期点はベースラインと同じ決定的な初期点

    Args:
        scenario: シナリオ（アンテナ総数 12 以下）
        opts: 求解オプション
        workers: 並列プロセス数（1 なら逐次）

    Returns:
        オラクルレポート

    Raises:
        ConfigurationError: アンテナ総数が上限を超える、または実行可能な部分集合がない
    """
    if scenario.total_antennas > MAX_ORACLE_ANTENNAS:
        raise ConfigurationError(
            f"Exhaustive search is limited to {MAX_ORACLE_ANTENNAS} antennas, "
            f"scenario has {scenario.total_antennas}"
        )
    subsets = list(admissible_subsets(scenario))
    tasks = [(scenario, subset, opts) for subset in subsets]

    with LogContext(f"exhaustive search over {len(subsets)} subsets"):
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                rows: List[dict] = list(executor.map(_evaluate_subset, tasks))
        else:
            rows = [_evaluate_subset(task) for task in tasks]

    table = pd.DataFrame(rows, columns=TABLE_COLUMNS).sort_values("subset").reset_index(drop=True)
    feasible = table.dropna(subset=["ee_bits_per_joule"])
    if feasible.empty:
        raise ConfigurationError("No admissible antenna subset admits a feasible beamformer")
    best_row = feasible.loc[feasible["ee_bits_per_joule"].idxmax()]
    best_subset = int(best_row["subset"])
    log.info(f"Oracle best subset {best_subset:#x}: {best_row['ee_bits_per_joule'] / 1e6:.4f} Mbit/J")
    return OracleReport(
        best_mask=subset_mask(best_subset, scenario),
        best_subset=best_subset,
        best_ee=float(best_row["ee_bits_per_joule"]),
        table=table,
    )


@dataclass(frozen=True)
class GroupActivity:
    """グループごとの最悪ユーザーの活性状況"""
    group: int
    user: int
    gamma: float
    sinr: float
    relative_gap: float
    active: bool


@dataclass(frozen=True)
class ActivityReport:
    groups: Tuple[GroupActivity, ...]

    @property
    def all_active(self) -> bool:
        return all(g.active for g in self.groups)

    @property
    def inactive_groups(self) -> List[int]:
        return [g.group for g in self.groups if not g.active]


def check_sinr_activity(result: JbasResult, scenario: Scenario, tol: float = 1e-5) -> ActivityReport:
    """
    各グループの最悪ユーザーについて、部分問題の γ が実際の SINR と一致するか検査

    Args:
        result: ドライバーの結果（γ は最後の部分問題の値）
        scenario: シナリオ
        tol: 相対許容誤差

    Returns:
        グループごとの活性レポート
    """
    actual = sinr_all(result.w, scenario)
    rows = []
    for g, group in enumerate(scenario.groups):
        users = list(group.users)
        k = users[int(np.argmin(actual[users]))]
        gap = abs(float(result.gamma[k]) - actual[k]) / max(actual[k], 1e-12)
        rows.append(GroupActivity(g, k, float(result.gamma[k]), float(actual[k]), gap, gap <= tol))
    report = ActivityReport(tuple(rows))
    if not report.all_active:
        log.warning(f"Inactive SINR rows in groups {report.inactive_groups}")
    return report

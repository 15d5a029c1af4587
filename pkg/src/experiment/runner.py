#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
実験ハーネス
スイープ軸の直積でグリッド点を作り、グリッド点×シードをワーカープールで実行して結果を出力する
"""

import itertools
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import psutil

from .report import ORACLE_METRICS, emit_tradeoff_curve, summarize, write_csv, write_manifest
from ..model.scenario import Scenario, generate_scenario, path_loss_db, perturb_channels, save_scenario
from ..optimization.algorithms import SolveOptions, run_algorithm
from ..utils.config import ExperimentConfig
from ..utils.errors import ConfigurationError, InfeasibleInstanceError, SolverFailureError
from ..utils.logger import LogContext, log, log_execution
from ..verification.oracle import MAX_ORACLE_ANTENNAS, check_sinr_activity, exhaustive_antenna_search


EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER_FAILURE = 4


@dataclass(frozen=True)
class GridPoint:
    """スイープの1点（パラメータ割り当てと対応する設定）"""
    label: str
    assignment: Tuple[Tuple[str, object], ...]
    config: ExperimentConfig


@dataclass(frozen=True)
class SeedTask:
    point: GridPoint
    seed: int
    dump_programs: bool
    output_dir: str


@dataclass
class SeedOutcome:
    """1シードの結果"""
    point: str
    seed: int
    status: str
    metrics: Dict[str, float]
    trace: Optional[pd.DataFrame] = None
    fractional_share: float = float("nan")
    oracle_table: Optional[pd.DataFrame] = None


@dataclass
class ExperimentOutcome:
    """実験全体の結果"""
    summary: pd.DataFrame
    tradeoff: Optional[pd.DataFrame]
    files: List[Path] = field(default_factory=list)
    infeasible: int = 0
    solver_failures: int = 0

    @property
    def exit_code(self) -> int:
        if self.infeasible:
            return EXIT_INFEASIBLE
        if self.solver_failures:
            return EXIT_SOLVER_FAILURE
        return EXIT_OK


def _label_value(value) -> str:
    if isinstance(value, (list, tuple)):
        return "-".join(str(v) for v in value)
    return str(value)


def point_label(assignment: Tuple[Tuple[str, object], ...]) -> str:
    """ファイル名に使えるグリッド点のラベル"""
    if not assignment:
        return "base"
    text = "_".join(f"{name}-{_label_value(value)}" for name, value in assignment)
    return re.sub(r"[^A-Za-z0-9.\-_]", "", text)


def build_grid(config: ExperimentConfig) -> List[GridPoint]:
    """
    スイープ軸の直積からグリッド点を作る

    Args:
        config: 実験設定

    Returns:
        グリッド点のリスト（軸の記述順）
    """
    axes = config.sweep
    points = []
    for values in itertools.product(*(axis.values for axis in axes)):
        assignment = tuple((axis.parameter, value) for axis, value in zip(axes, values))
        point_config = config
        for name, value in assignment:
            point_config = point_config.with_parameter(name, value)
        points.append(GridPoint(point_label(assignment), assignment, point_config))
    return points


def design_scenario(scenario: Scenario, config: ExperimentConfig, seed: int) -> Scenario:
    """
    アルゴリズムが設計に使う推定チャネルのシナリオ

    csi_error_variance はリンクのパスロス利得に対する相対値として扱い、
    パスロスで正規化したチャネルに誤差を加えてから元の尺度に戻す
    """
    sigma_e2 = config.scenario.csi_error_variance
    if sigma_e2 == 0 or scenario.distances_m is None:
        return scenario
    gain = 10.0 ** (-path_loss_db(scenario.distances_m, config.scenario.path_loss_slope_db,
                                  config.scenario.path_loss_offset_db) / 10.0)
    amplitude = np.sqrt(gain)
    unit = scenario.with_channels([h / amplitude[b][:, None] for b, h in enumerate(scenario.channels)])
    noisy = perturb_channels(unit, sigma_e2, seed)
    return scenario.with_channels([h * amplitude[b][:, None] for b, h in enumerate(noisy.channels)])


def _run_seed(task: SeedTask) -> SeedOutcome:
    """1つのグリッド点・シードを実行（プロセスプールから呼ばれる）"""
    config = task.point.config
    output_dir = Path(task.output_dir)
    scenario = generate_scenario(config.scenario, task.seed)
    if config.execution.write_scenarios:
        save_scenario(scenario, output_dir / "scenarios" / f"scenario_{task.point.label}_seed{task.seed}.json")
    # 不完全CSI: 推定チャネルで設計し、真のチャネルで評価
    design = design_scenario(scenario, config, task.seed)

    dump_dir = output_dir / "programs" / task.point.label if task.dump_programs else None
    opts = SolveOptions.from_config(config, dump_dir=dump_dir)
    nan_metrics = {name: float("nan") for name in
                   ("ee_bits_per_joule", "sum_rate_bps", "power_w", "active_antennas", "iterations")}
    try:
        result = run_algorithm(config.algorithm.name, design, opts)
    except InfeasibleInstanceError as e:
        log.warning(f"[{task.point.label}] seed {task.seed}: infeasible (groups {list(e.violated_groups)})")
        return SeedOutcome(task.point.label, task.seed, "infeasible", nan_metrics)
    except SolverFailureError as e:
        log.warning(f"[{task.point.label}] seed {task.seed}: {e}")
        return SeedOutcome(task.point.label, task.seed, "solver_failure", nan_metrics)
    oracle_table = None
    oracle_metrics = {}
    if config.execution.oracle:
        # 比は設計チャネル上で比較する
        try:
            report = exhaustive_antenna_search(design, opts)
        except ConfigurationError as e:
            log.warning(f"[{task.point.label}] seed {task.seed}: oracle skipped ({e})")
            oracle_metrics = {name: float("nan") for name in ORACLE_METRICS}
        else:
            oracle_table = report.table
            oracle_metrics = {
                "oracle_ee_bits_per_joule": report.best_ee,
                "oracle_ratio": report.ratio(result),
                "sinr_rows_active": float(check_sinr_activity(result, design).all_active),
            }
    if design is not scenario:
        result = result.evaluate_on(scenario)

    metrics = {
        "ee_bits_per_joule": result.ee,
        "sum_rate_bps": result.sum_rate,
        "power_w": result.power_w,
        "active_antennas": float(result.active_antennas),
        "iterations": float(result.trace.iterations()),
        **oracle_metrics,
    }
    return SeedOutcome(
        point=task.point.label,
        seed=task.seed,
        status=result.status,
        metrics=metrics,
        trace=result.trace.to_frame(task.seed),
        fractional_share=result.fractional_share(opts.epsilon),
        oracle_table=oracle_table,
    )


def resolve_workers(requested: int) -> int:
    """0 なら物理コア数"""
    if requested > 0:
        return requested
    return psutil.cpu_count(logical=False) or 1


class ExperimentRunner:
    """実験ハーネス本体"""

    def __init__(self, config: ExperimentConfig):
        config.validate()
        self.config = config
        self.output_dir = Path(config.output.results_dir)
        self.seeds = config.seeds.resolve()
        self.grid = build_grid(config)
        self.workers = resolve_workers(config.execution.workers)
        if config.execution.oracle:
            for point in self.grid:
                total = sum(point.config.scenario.antenna_counts())
                if total > MAX_ORACLE_ANTENNAS:
                    raise ConfigurationError(
                        f"[{point.label}] oracle needs at most {MAX_ORACLE_ANTENNAS} antennas, got {total}"
                    )
        log.info(f"Experiment: {len(self.grid)} grid points x {len(self.seeds)} seeds, {self.workers} workers")

    def _tasks(self) -> List[SeedTask]:
        tasks = []
        for point in self.grid:
            for i, seed in enumerate(self.seeds):
                # プログラムのダンプは各グリッド点の最初のシードのみ
                dump = self.config.execution.dump_programs and i == 0
                tasks.append(SeedTask(point, seed, dump, str(self.output_dir)))
        return tasks

    def _execute(self, tasks: List[SeedTask]) -> List[SeedOutcome]:
        if self.workers <= 1:
            outcomes = []
            for n, task in enumerate(tasks, 1):
                outcomes.append(_run_seed(task))
                log.info(f"Progress: {n}/{len(tasks)} ({task.point.label}, seed {task.seed})")
            return outcomes
        with ProcessPoolExecutor(max_workers=self.workers) as executor:
            return list(executor.map(_run_seed, tasks))

    def run(self) -> ExperimentOutcome:
        """
        全グリッド点・全シードを実行し、ファイルを書き出す

        Returns:
            実験結果（終了コードを含む）
        """
        with LogContext("experiment"):
            outcomes = self._execute(self._tasks())
            return self._save_results(outcomes)

    def _runs_frame(self, outcomes: List[SeedOutcome]) -> Tuple[pd.DataFrame, List[str]]:
        by_label = {point.label: point for point in self.grid}
        swept = [axis.parameter for axis in self.config.sweep]
        point_columns = ["algorithm", "kappa", "varrho"] + [p for p in swept if p not in ("algorithm", "kappa", "varrho")]
        rows = []
        for outcome in outcomes:
            point = by_label[outcome.point]
            alg = point.config.algorithm
            row = {
                "point": outcome.point,
                "seed": outcome.seed,
                "status": outcome.status,
                "algorithm": alg.name,
                "kappa": alg.kappa,
                "varrho": alg.varrho,
                "fractional_share": outcome.fractional_share,
            }
            for name, value in point.assignment:
                if name not in row:
                    row[name] = _label_value(value)
            row.update(outcome.metrics)
            rows.append(row)
        return pd.DataFrame(rows), point_columns

    def _save_results(self, outcomes: List[SeedOutcome]) -> ExperimentOutcome:
        files: List[Path] = []
        for outcome in outcomes:
            if outcome.trace is not None:
                path = self.output_dir / "traces" / f"trace_{outcome.point}_seed{outcome.seed}.csv"
                files.append(write_csv(outcome.trace, path))
            if outcome.oracle_table is not None:
                path = self.output_dir / "oracle" / f"oracle_{outcome.point}_seed{outcome.seed}.csv"
                files.append(write_csv(outcome.oracle_table, path))

        runs, point_columns = self._runs_frame(outcomes)
        summary = summarize(runs, point_columns)
        files.append(write_csv(summary, self.output_dir / "summary.csv"))

        tradeoff = None
        if any(axis.parameter in ("kappa", "varrho") for axis in self.config.sweep):
            tradeoff = emit_tradeoff_curve(summary)
            files.append(write_csv(tradeoff, self.output_dir / "tradeoff.csv"))

        if self.config.execution.write_scenarios:
            files.extend(sorted((self.output_dir / "scenarios").glob("*.json")))
        if self.config.execution.dump_programs:
            files.extend(sorted((self.output_dir / "programs").rglob("*.txt")))

        outcome = ExperimentOutcome(
            summary=summary,
            tradeoff=tradeoff,
            files=files,
            infeasible=int(summary["infeasible"].sum()),
            solver_failures=int(summary["solver_failures"].sum()),
        )
        manifest = self.output_dir / "manifest.json"
        write_manifest(manifest, self.config, summary, files, len(self.seeds), self.workers)
        outcome.files.append(manifest)
        share = runs["fractional_share"].dropna()
        if len(share):
            log.info(f"Mean fractional selection share: {float(np.mean(share)):.3f}")
        return outcome


@log_execution
def run_experiment(config: ExperimentConfig) -> ExperimentOutcome:
    """
    設定に従って実験を実行

    Args:
        config: 実験設定

    Returns:
        実験結果

    Raises:
        ConfigurationError: 設定が不正（ファイルは書き出さない）
    """
    return ExperimentRunner(config).run()

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
実験ハーネス（グリッド・集計・ファイル出力・終了コード）のテスト
"""

import json

import numpy as np
import pandas as pd
import pytest

from src.experiment import runner
from src.experiment.runner import (
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_SOLVER_FAILURE,
    ExperimentOutcome,
    build_grid,
    design_scenario,
    point_label,
    resolve_workers,
    run_experiment,
)
from src.experiment.report import emit_tradeoff_curve, summarize
from src.model.scenario import generate_scenario, path_loss_db
from src.utils.config import ExperimentConfig, ScenarioConfig, SweepAxis
from src.utils.errors import ConfigurationError


def tiny_config(results_dir, **algorithm) -> ExperimentConfig:
    """B=2, N=3, U=1, L=1 の2シード構成"""
    config = ExperimentConfig(
        scenario=ScenarioConfig(num_bs=2, antennas_per_bs=3, groups_per_bs=1, users_per_group=1,
                                rate_target_mbps=1.0),
    )
    config.algorithm.name = "no-as"
    config.algorithm.max_iter = 5
    config.algorithm.oracle_restarts = 1
    for key, value in algorithm.items():
        setattr(config.algorithm, key, value)
    config.seeds.values = [0, 1]
    config.logging.file = None
    config.output.results_dir = str(results_dir)
    return config


class TestGrid:
    """スイープグリッドのテスト"""

    def test_no_sweep(self):
        """スイープなしなら base の1点"""
        grid = build_grid(ExperimentConfig())
        assert [p.label for p in grid] == ["base"]

    def test_cartesian_product(self):
        """軸の直積を記述順に作る"""
        config = ExperimentConfig(sweep=[
            SweepAxis("algorithm", ["alg1", "no-as"]),
            SweepAxis("antennas_per_bs", [4, 8]),
        ])
        grid = build_grid(config)
        assert [p.label for p in grid] == [
            "algorithm-alg1_antennas_per_bs-4", "algorithm-alg1_antennas_per_bs-8",
            "algorithm-no-as_antennas_per_bs-4", "algorithm-no-as_antennas_per_bs-8",
        ]
        assert grid[3].config.algorithm.name == "no-as"
        assert grid[3].config.scenario.antennas_per_bs == 8

    def test_label_sanitized(self):
        """ファイル名に使えない文字は除く"""
        assert point_label((("antennas_per_bs", [4, 6]), ("kappa", 0.5))) == "antennas_per_bs-4-6_kappa-0.5"
        assert "/" not in point_label((("algorithm", "a/b"),))

    def test_workers(self):
        """0 なら物理コア数（1以上）"""
        assert resolve_workers(3) == 3
        assert resolve_workers(0) >= 1


class TestDesignScenario:
    """推定チャネル（不完全CSI）のテスト"""

    def test_perfect_csi(self, tmp_path):
        """誤差分散0なら真のシナリオそのもの"""
        config = tiny_config(tmp_path)
        scenario = generate_scenario(config.scenario, 0)
        assert design_scenario(scenario, config, 0) is scenario

    def test_error_relative_to_path_loss(self, tmp_path):
        """誤差はパスロス利得に対する相対分散"""
        config = tiny_config(tmp_path)
        config.scenario = ScenarioConfig(num_bs=2, antennas_per_bs=50, groups_per_bs=2, users_per_group=25,
                                         csi_error_variance=0.1)
        scenario = generate_scenario(config.scenario, 0)
        design = design_scenario(scenario, config, 0)
        gain = 10.0 ** (-path_loss_db(config.scenario.distance_m) / 10.0)
        errors = np.concatenate([(d - h).ravel() for d, h in zip(design.channels, scenario.channels)])
        assert np.mean(np.abs(errors) ** 2) / gain == pytest.approx(0.1, rel=0.05)


class TestSummaries:
    """集計のテスト"""

    @pytest.fixture
    def runs(self):
        return pd.DataFrame({
            "point": ["p", "p", "p", "q"],
            "seed": [0, 1, 2, 0],
            "status": ["converged", "max_iter", "infeasible", "converged"],
            "algorithm": ["pwee", "pwee", "pwee", "pwee"],
            "kappa": [0.5, 0.5, 0.5, 1.0],
            "varrho": [0.0] * 4,
            "ee_bits_per_joule": [1.0e6, 3.0e6, np.nan, 2.0e6],
            "sum_rate_bps": [1.0e7, 3.0e7, np.nan, 4.0e7],
            "power_w": [10.0, 10.0, np.nan, 20.0],
            "active_antennas": [4.0, 6.0, np.nan, 8.0],
            "iterations": [5.0, 7.0, np.nan, 3.0],
        })

    def test_mean_and_stderr(self, runs):
        """実行不能シードを除いた平均と標準誤差"""
        summary = summarize(runs, ["algorithm", "kappa", "varrho"])
        p = summary.iloc[0]
        assert p["seeds"] == 3
        assert p["completed"] == 2
        assert p["infeasible"] == 1
        assert p["ee_bits_per_joule_mean"] == pytest.approx(2.0e6)
        assert p["ee_bits_per_joule_stderr"] == pytest.approx(1.0e6)
        assert p["note"] == "1 infeasible seeds excluded"
        assert summary.iloc[1]["ee_bits_per_joule_stderr"] == 0.0

    def test_solver_failure_excluded(self, runs):
        """ソルバー失敗で終わったシードは最後の反復点があっても平均に含めない"""
        runs.loc[1, "status"] = "solver_failure"
        p = summarize(runs, ["algorithm", "kappa", "varrho"]).iloc[0]
        assert p["completed"] == 1
        assert p["solver_failures"] == 1
        assert p["ee_bits_per_joule_mean"] == pytest.approx(1.0e6)

    def test_tradeoff_curve(self, runs):
        """κ の昇順の EE-総レート曲線"""
        curve = emit_tradeoff_curve(summarize(runs, ["algorithm", "kappa", "varrho"]))
        assert curve["curve"].tolist() == ["pwee", "pwee"]
        assert curve["value"].tolist() == [0.5, 1.0]
        assert curve["sum_rate_mean"].tolist() == pytest.approx([2.0e7, 4.0e7])

    def test_tradeoff_empty(self, runs):
        """PWEE・alg3 がなければ空の表"""
        runs = runs.assign(algorithm="alg1")
        assert emit_tradeoff_curve(summarize(runs, ["algorithm", "kappa", "varrho"])).empty


class TestExitCode:
    """終了コードのテスト"""

    def _outcome(self, infeasible, failures):
        return ExperimentOutcome(pd.DataFrame(), None, infeasible=infeasible, solver_failures=failures)

    def test_codes(self):
        """成功・実行不能・ソルバー失敗"""
        assert self._outcome(0, 0).exit_code == EXIT_OK
        assert self._outcome(2, 0).exit_code == EXIT_INFEASIBLE
        assert self._outcome(0, 1).exit_code == EXIT_SOLVER_FAILURE

    def test_infeasible_takes_precedence(self):
        """両方あれば実行不能を優先"""
        assert self._outcome(1, 1).exit_code == EXIT_INFEASIBLE


class TestRunExperiment:
    """実験実行のテスト"""

    def test_writes_files(self, tmp_path):
        """トレース・集計・マニフェストを書き出す"""
        outcome = run_experiment(tiny_config(tmp_path))
        assert outcome.exit_code == EXIT_OK
        assert (tmp_path / "summary.csv").exists()
        assert (tmp_path / "traces" / "trace_base_seed0.csv").exists()
        assert (tmp_path / "traces" / "trace_base_seed1.csv").exists()
        assert not (tmp_path / "tradeoff.csv").exists()

        manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["seed_count"] == 2
        assert manifest["config_hash"] == tiny_config(tmp_path).config_hash()
        assert "summary.csv" in manifest["files"]
        assert manifest["grid_points"][0]["infeasible"] == 0

        summary = pd.read_csv(tmp_path / "summary.csv")
        assert summary["completed"].tolist() == [2]
        assert summary["active_antennas_mean"].tolist() == [6.0]

    def test_deterministic_outputs(self, tmp_path):
        """同じ設定なら solve_ms 以外の出力は一致"""
        run_experiment(tiny_config(tmp_path / "a"))
        run_experiment(tiny_config(tmp_path / "b"))
        for name in ("summary.csv", "traces/trace_base_seed1.csv"):
            first = pd.read_csv(tmp_path / "a" / name)
            second = pd.read_csv(tmp_path / "b" / name)
            first = first.drop(columns=["solve_ms"], errors="ignore")
            second = second.drop(columns=["solve_ms"], errors="ignore")
            pd.testing.assert_frame_equal(first, second)

    def test_tradeoff_sweep(self, tmp_path):
        """κ をスイープすると tradeoff.csv を書く"""
        config = tiny_config(tmp_path, name="pwee")
        config.seeds.values = [0]
        config.sweep = [SweepAxis("kappa", [0.0, 1.0])]
        outcome = run_experiment(config)
        assert (tmp_path / "tradeoff.csv").exists()
        assert outcome.tradeoff["value"].tolist() == [0.0, 1.0]

    def test_infeasible_seeds(self, tmp_path):
        """実行不能シードは数えて終了コード3"""
        config = tiny_config(tmp_path)
        config.scenario = ScenarioConfig(num_bs=1, antennas_per_bs=1, groups_per_bs=1, users_per_group=2,
                                         rate_target_mbps=300.0)
        config.seeds.values = [0]
        outcome = run_experiment(config)
        assert outcome.infeasible == 1
        assert outcome.exit_code == EXIT_INFEASIBLE
        assert pd.read_csv(tmp_path / "summary.csv")["note"].tolist() == ["1 infeasible seeds excluded"]

    def test_scenario_and_program_dumps(self, tmp_path):
        """シナリオと部分問題のダンプ"""
        config = tiny_config(tmp_path)
        config.execution.write_scenarios = True
        config.execution.dump_programs = True
        run_experiment(config)
        assert (tmp_path / "scenarios" / "scenario_base_seed0.json").exists()
        assert list((tmp_path / "programs" / "base").glob("*.txt"))

    def test_oracle_columns(self, tmp_path):
        """オラクル比較の列と部分集合表"""
        config = tiny_config(tmp_path, name="alg1")
        config.seeds.values = [0]
        config.scenario = ScenarioConfig(num_bs=1, antennas_per_bs=3, groups_per_bs=1, users_per_group=1,
                                         rate_target_mbps=0.0)
        config.execution.oracle = True
        outcome = run_experiment(config)
        assert (tmp_path / "oracle" / "oracle_base_seed0.csv").exists()
        ratio = outcome.summary["oracle_ratio_mean"].iloc[0]
        assert np.isfinite(ratio) and ratio > 0.0
        assert outcome.summary["sinr_rows_active_mean"].iloc[0] in (0.0, 1.0)

    def test_oracle_size_cap(self, tmp_path):
        """オラクル比較はアンテナ総数12まで"""
        config = tiny_config(tmp_path)
        config.scenario.antennas_per_bs = 7
        config.execution.oracle = True
        with pytest.raises(ConfigurationError):
            run_experiment(config)
        assert not (tmp_path / "summary.csv").exists()

    def test_oracle_error_is_per_seed(self, tmp_path, monkeypatch):
        """オラクルが設定エラーを出してもそのシードの比較列が NaN になるだけ"""
        def refuse(scenario, opts):
            raise ConfigurationError("oracle needs at most 12 antennas")

        monkeypatch.setattr(runner, "exhaustive_antenna_search", refuse)
        config = tiny_config(tmp_path)
        config.execution.workers = 1
        config.execution.oracle = True
        outcome = run_experiment(config)
        assert outcome.exit_code == EXIT_OK
        assert not (tmp_path / "oracle").exists()
        summary = outcome.summary.iloc[0]
        assert summary["completed"] == 2
        assert np.isnan(summary["oracle_ratio_mean"])
        assert np.isnan(summary["oracle_ee_bits_per_joule_mean"])
        assert np.isfinite(summary["ee_bits_per_joule_mean"])

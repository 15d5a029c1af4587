#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
マルチセル・マルチグループマルチキャストの省エネルギー同時ビームフォーミング・アンテナ選択
メインエントリーポイント
"""

import argparse
import dataclasses
import sys
from datetime import datetime
from pathlib import Path
from typing import List, Optional

import pandas as pd

# プロジェクトルートをパスに追加
sys.path.append(str(Path(__file__).parent))

from src.experiment.runner import EXIT_CONFIG_ERROR, run_experiment
from src.utils.config import ALGORITHM_NAMES, BACKEND_PATHS, ExperimentConfig, load_config
from src.utils.errors import ConfigurationError
from src.utils.logger import ExperimentLogger, log
from src.verification.bound_checks import check_bounds, check_power_ordering


def setup_logging(config: Optional[ExperimentConfig], level_override: Optional[str] = None) -> None:
    """ロギングの設定（設定ファイルを読めなかったときはコンソールだけ）"""
    ExperimentLogger(config.logging if config is not None else None).configure(level_override)


def print_banner() -> None:
    """バナー表示"""
    banner = """
    ╔═══════════════════════════════════════════════════════════╗
    ║   省エネルギー同時ビームフォーミング・アンテナ選択 v1.0      ║
    ║   Energy-Efficient Joint Beamforming & Antenna Selection  ║
    ╚═══════════════════════════════════════════════════════════╝
    """
    print(banner)


def print_config_summary(config: ExperimentConfig) -> None:
    """設定サマリーを表示"""
    sc, alg = config.scenario, config.algorithm
    print("\n【実験設定】")
    print(f"  基地局数: {sc.num_bs}  アンテナ数: {sc.antennas_per_bs}")
    print(f"  グループ/基地局: {sc.groups_per_bs}  ユーザー/グループ: {sc.users_per_group}")
    print(f"  要求レート: {sc.rate_target_mbps} Mbit/s  配置: {sc.placement}")
    print(f"  アルゴリズム: {alg.name}  χ={alg.chi:g}  ε={alg.epsilon:g}  経路: {alg.backend_path}")
    print(f"  シード数: {len(config.seeds.resolve())}")
    for axis in config.sweep:
        print(f"  スイープ: {axis.parameter} = {axis.values}")
    print()


def parse_seeds(text: str) -> List[int]:
    """'0,1,5' または '0:20'（終端を含まない範囲）"""
    try:
        if ":" in text:
            start, stop = (int(v) for v in text.split(":", 1))
            return list(range(start, stop))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Invalid seed list '{text}'") from e


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """
    コマンドライン引数で設定を上書き

    Args:
        config: 読み込んだ設定
        args: 解析済み引数

    Returns:
        上書き後の設定
    """
    algorithm_fields = {
        "algorithm": "name",
        "chi": "chi",
        "rho": "rho",
        "varsigma": "varsigma",
        "kappa": "kappa",
        "varrho": "varrho",
        "epsilon": "epsilon",
        "max_iter": "max_iter",
        "tol": "rel_tol",
        "backend": "backend_path",
    }
    changes = {field: getattr(args, arg) for arg, field in algorithm_fields.items() if getattr(args, arg) is not None}
    if changes:
        config = dataclasses.replace(config, algorithm=dataclasses.replace(config.algorithm, **changes))

    if args.seed is not None:
        config = dataclasses.replace(config, seeds=dataclasses.replace(config.seeds, values=[args.seed]))
    elif args.seeds is not None:
        config = dataclasses.replace(config, seeds=dataclasses.replace(config.seeds, values=parse_seeds(args.seeds)))

    execution = {}
    if args.workers is not None:
        execution["workers"] = args.workers
    if args.dump_programs:
        execution["dump_programs"] = True
    if args.scenario_dump:
        execution["write_scenarios"] = True
    if args.oracle:
        execution["oracle"] = True
    if execution:
        config = dataclasses.replace(config, execution=dataclasses.replace(config.execution, **execution))

    if args.out:
        config = dataclasses.replace(config, output=dataclasses.replace(config.output, results_dir=args.out))
    config.validate()
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="省エネルギー同時ビームフォーミング・アンテナ選択の実験ハーネス",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
使用例:
  # 既定設定（2セル・16アンテナのシナリオ、alg1、20シード）
  python main.py

  # アンテナ数×アルゴリズムのスイープ
  python main.py --config config/antenna_sweep.yaml --workers 0

  # χ を変えて1シードだけ実行し、部分問題をダンプ
  python main.py --chi 1.5 --seed 3 --dump-programs --out results/debug

  # 小規模構成で全探索オラクルと比較
  python main.py --config config/oracle.yaml --oracle

  # 凸近似の性質検査（1000サンプル）
  python main.py --check-bounds 1000
        """,
    )
    parser.add_argument("--config", type=str, default="config/config.yaml", help="設定ファイルパス")
    parser.add_argument("--algorithm", choices=ALGORITHM_NAMES, help="実行するアルゴリズム")
    parser.add_argument("--seed", type=int, help="単一シード")
    parser.add_argument("--seeds", type=str, help="シード列（'0,1,2' または '0:20'）")
    parser.add_argument("--chi", type=float, help="選択変数の指数 χ")
    parser.add_argument("--rho", type=float, help="スパース化の重み ρ")
    parser.add_argument("--varsigma", type=float, help="平滑化の急峻さ ς")
    parser.add_argument("--kappa", type=float, help="PWEE の電力重み κ")
    parser.add_argument("--varrho", type=float, help="スカラー化の総レート重み ϱ")
    parser.add_argument("--epsilon", type=float, help="丸めのしきい値 ε")
    parser.add_argument("--max-iter", dest="max_iter", type=int, help="SCA の最大反復数")
    parser.add_argument("--tol", type=float, help="SCA の相対収束判定値")
    parser.add_argument("--backend", choices=BACKEND_PATHS, help="レート行の形式")
    parser.add_argument("--out", type=str, help="出力ディレクトリ")
    parser.add_argument("--workers", type=int, help="ワーカー数（0 は物理コア数）")
    parser.add_argument("--dump-programs", action="store_true", help="部分問題を疎トリプレット形式で出力")
    parser.add_argument("--scenario-dump", action="store_true", help="シナリオ（チャネル込み）をJSONで出力")
    parser.add_argument("--oracle", action="store_true", help="アンテナ部分集合の全探索と比較（アンテナ総数12以下）")
    parser.add_argument("--check-bounds", dest="check_bounds", type=int, metavar="N",
                        help="凸近似の性質をNサンプルで検査して終了")
    parser.add_argument("--log-level", type=str, choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="ログレベル")
    return parser


def run_bound_checks(sample_count: int, output_dir: Path) -> int:
    """凸近似と電力順序の検査を実行し、違反がなければ 0"""
    reports = [check_bounds(sample_count), check_power_ordering(sample_count)]
    summary = pd.concat([r.summary() for r in reports], ignore_index=True)
    output_dir.mkdir(parents=True, exist_ok=True)
    summary.to_csv(output_dir / "bound_checks.csv", index=False)
    print("\n【近似の検査】")
    print(summary.to_string(index=False))
    violations = sum(len(r.violations) for r in reports)
    if violations:
        log.error(f"{violations} bound violations, see {output_dir / 'bound_checks.csv'}")
        return 1
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """メイン関数"""
    args = build_parser().parse_args(argv)

    print_banner()

    try:
        config = apply_overrides(load_config(args.config), args)
    except (ConfigurationError, FileNotFoundError) as e:
        setup_logging(None, args.log_level)
        log.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR

    setup_logging(config, args.log_level)
    if args.check_bounds is not None:
        return run_bound_checks(args.check_bounds, Path(config.output.results_dir))
    print_config_summary(config)

    start_time = datetime.now()
    try:
        outcome = run_experiment(config)
    except ConfigurationError as e:
        log.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except KeyboardInterrupt:
        print("\n\n処理が中断されました。")
        return 1

    elapsed = (datetime.now() - start_time).total_seconds()
    print(f"\n実験完了！ (実行時間: {elapsed:.1f}秒)")
    print(f"  出力先: {config.output.results_dir}")
    print(f"  実行不能シード: {outcome.infeasible}  ソルバー失敗: {outcome.solver_failures}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())

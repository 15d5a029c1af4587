#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
実験結果の出力
シードごとのトレースCSV、グリッド点ごとの集計CSV、EE-総レートのトレードオフCSV、マニフェストJSON
"""

import json
import platform
import sys
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
import psutil

from ..utils.config import ExperimentConfig
from ..utils.logger import log


SUMMARY_METRICS = ("ee_bits_per_joule", "sum_rate_bps", "power_w", "active_antennas", "iterations")
# --oracle 指定時のみ存在する指標
ORACLE_METRICS = ("oracle_ee_bits_per_joule", "oracle_ratio", "sinr_rows_active")
TRADEOFF_CONTROLS = {"pwee": "kappa", "alg3": "varrho"}
TRADEOFF_COLUMNS = ["curve", "control", "value", "ee_mean", "sum_rate_mean", "active_mean"]

# マニフェストに記録するパッケージ
TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "cvxpy", "clarabel", "loguru", "pyyaml", "psutil")


def _stderr(values: pd.Series) -> float:
    """標準誤差（サンプル1個なら0）"""
    n = int(values.count())
    if n < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(n))


def summarize(runs: pd.DataFrame, point_columns: Sequence[str]) -> pd.DataFrame:
    """
    グリッド点ごとに平均と標準誤差を集計

    実行不能・例外で終わったシードは件数だけ数え、平均からは除外する

    Args:
        runs: シードごとの結果（列 point, seed, status, 各指標, グリッドのパラメータ列）
        point_columns: グリッド点を表すパラメータ列

    Returns:
        集計表（グリッド点の順序を保持）
    """
    rows = []
    for point, group in runs.groupby("point", sort=False):
        row: Dict = {"point": point}
        for column in point_columns:
            row[column] = group[column].iloc[0]
        completed = group[group["status"].isin(["converged", "max_iter", "phase2_fallback"])]
        completed = completed.dropna(subset=["ee_bits_per_joule"])
        row["seeds"] = int(len(group))
        row["completed"] = int(len(completed))
        row["infeasible"] = int((group["status"] == "infeasible").sum())
        row["solver_failures"] = int((group["status"] == "solver_failure").sum())
        metrics = SUMMARY_METRICS + tuple(m for m in ORACLE_METRICS if m in group.columns)
        for metric in metrics:
            row[f"{metric}_mean"] = float(completed[metric].mean()) if len(completed) else float("nan")
            row[f"{metric}_stderr"] = _stderr(completed[metric])
        if row["infeasible"]:
            row["note"] = f"{row['infeasible']} infeasible seeds excluded"
        else:
            row["note"] = ""
        rows.append(row)
    return pd.DataFrame(rows)


def emit_tradeoff_curve(summary: pd.DataFrame) -> pd.DataFrame:
    """
    PWEE（κ）と alg3（ϱ）の EE-総レート曲線

    Args:
        summary: summarize の出力（列 algorithm, kappa, varrho を含む）

    Returns:
        列 curve, control, value, ee_mean, sum_rate_mean, active_mean（曲線・制御値の昇順）
    """
    frames = []
    for curve, control in TRADEOFF_CONTROLS.items():
        part = summary[summary["algorithm"] == curve]
        if part.empty:
            continue
        grouped = part.groupby(control, sort=True).agg(
            ee_mean=("ee_bits_per_joule_mean", "mean"),
            sum_rate_mean=("sum_rate_bps_mean", "mean"),
            active_mean=("active_antennas_mean", "mean"),
        ).reset_index().rename(columns={control: "value"})
        grouped.insert(0, "control", control)
        grouped.insert(0, "curve", curve)
        frames.append(grouped)
    if not frames:
        return pd.DataFrame(columns=TRADEOFF_COLUMNS)
    return pd.concat(frames, ignore_index=True)[TRADEOFF_COLUMNS].sort_values(["curve", "value"]).reset_index(drop=True)


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    log.debug(f"Wrote {path}")
    return path


def _package_versions() -> Dict[str, str]:
    versions = {"python": sys.version.split()[0], "platform": platform.platform()}
    for package in TRACKED_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "not installed"
    try:
        versions["jbas-energy-efficiency"] = metadata.version("jbas-energy-efficiency")
    except metadata.PackageNotFoundError:
        versions["jbas-energy-efficiency"] = "source"
    return versions


def write_manifest(path: Path, config: ExperimentConfig, summary: pd.DataFrame, files: List[Path],
                   seed_count: int, workers: int) -> Path:
    """
    実行マニフェストを書き出す

    Args:
        path: 出力パス
        config: 実験設定
        summary: 集計表
        files: 書き出したファイル
        seed_count: グリッド点あたりのシード数
        workers: 使用したワーカー数

    Returns:
        出力パス
    """
    manifest = {
        "config_hash": config.config_hash(),
        "versions": _package_versions(),
        "host": {
            "physical_cores": psutil.cpu_count(logical=False),
            "logical_cores": psutil.cpu_count(logical=True),
            "memory_gb": round(psutil.virtual_memory().total / 1024 ** 3, 1),
        },
        "workers": workers,
        "seed_count": seed_count,
        "grid_points": [
            {
                "point": row["point"],
                "infeasible": int(row["infeasible"]),
                "solver_failures": int(row["solver_failures"]),
                "note": row["note"],
            }
            for _, row in summary.iterrows()
        ],
        "files": sorted(str(f.relative_to(path.parent)) for f in files),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, default=str)
    log.info(f"Manifest saved to {path}")
    return path

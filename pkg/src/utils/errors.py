#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
例外定義
設定エラー・近似関数の定義域エラー・実行不能インスタンス・ソルバー失敗
"""

from typing import Sequence


class ConfigurationError(ValueError):
    """設定値・シナリオ次元が不正な場合の例外（CLI終了コード2）"""


class BoundDomainError(ValueError):
    """近似関数を定義域外の展開点で構成しようとした場合の例外"""


class InfeasibleInstanceError(RuntimeError):
    """実行可能点が見つからない場合の例外（CLI終了コード3）"""

    def __init__(self, violated_groups: Sequence[int], message: str = ""):
        self.violated_groups = tuple(int(g) for g in violated_groups)
        text = message or f"No feasible point found; violated groups: {list(self.violated_groups)}"
        super().__init__(text)


class SolverFailureError(RuntimeError):
    """利用可能な反復点が得られる前にソルバーが失敗した場合の例外（CLI終了コード4）"""

    def __init__(self, status: str, message: str = ""):
        self.status = status
        super().__init__(message or f"Conic solver failed with status: {status}")

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ロギングユーティリティ
loguru のシンクを実験設定（LoggingConfig）から組み立てる
"""

import functools
import sys
import time
from pathlib import Path
from typing import Optional

from loguru import logger

from .config import LoggingConfig


CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{line}</cyan> | "
    "<level>{message}</level>"
)

log = logger


class ExperimentLogger:
    """コンソールとログファイルのシンクを管理する"""

    def __init__(self, config: Optional[LoggingConfig] = None):
        self.config = config or LoggingConfig(file=None)

    def configure(self, level_override: Optional[str] = None) -> None:
        """
        既存のシンクを外して設定どおりに付け直す

        ファイルシンクは enqueue するのでワーカープロセスからの書き込みも混ざらない

        Args:
            level_override: コマンドラインで指定したログレベル
        """
        level = (level_override or self.config.level).upper()
        logger.remove()
        logger.add(sys.stderr, format=self.config.format or CONSOLE_FORMAT, level=level, colorize=True)
        if self.config.file:
            path = Path(self.config.file)
            path.parent.mkdir(parents=True, exist_ok=True)
            logger.add(
                path,
                format=self.config.format or "{time:YYYY-MM-DD HH:mm:ss} | {level} | {name}:{line} | {message}",
                level=level,
                rotation="10 MB",
                retention=5,
                encoding="utf-8",
                enqueue=True,
            )


def _describe(value) -> str:
    """引数を型名と形状だけで表す（チャネル行列を丸ごと出さない）"""
    shape = getattr(value, "shape", None)
    if shape is not None:
        return f"{type(value).__name__}{tuple(shape)}"
    return type(value).__name__


def log_execution(func):
    """呼び出しと失敗をログに残すデコレーター"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        log.debug(f"Executing {func.__name__}({', '.join(_describe(a) for a in args)}) kwargs={sorted(kwargs)}")
        try:
            return func(*args, **kwargs)
        except Exception as e:
            log.error(f"{func.__name__} failed: {e}")
            raise
    return wrapper


class LogContext:
    """処理の開始・終了と所要時間を記録するコンテキストマネージャー"""

    def __init__(self, context_name: str, level: str = "INFO"):
        self.context_name = context_name
        self.level = level
        self._start = 0.0

    def __enter__(self):
        self._start = time.perf_counter()
        log.log(self.level, f"Starting {self.context_name}")
        return self

    @property
    def elapsed_s(self) -> float:
        return time.perf_counter() - self._start

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None:
            log.log(self.level, f"Completed {self.context_name} in {self.elapsed_s:.2f}s")
        else:
            log.error(f"Failed {self.context_name} after {self.elapsed_s:.2f}s: {exc_val}")
        return False

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
実行可能初期点の探索
スラック付き凸問題を逐次解き、全スラックがゼロになる点（SCA の開始点）を求める
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .bounds import ExpansionPoint
from .subproblems import build_feasibility_subproblem, recover_slacks, recover_unlifted
from ..conic.program import dump_program
from ..conic.solver import solve
from ..model.performance import group_rate_targets_nats, group_rates_nats
from ..model.scenario import BeamformerSet, Scenario
from ..utils.errors import InfeasibleInstanceError, SolverFailureError
from ..utils.logger import log

if TYPE_CHECKING:
    from .algorithms import SolveOptions


# 実行可能点探索で要求レートに掛ける相対マージン
TARGET_MARGIN = 1e-6
# スラック停滞の判定（この回数だけ1%以上改善しなければ λ を増やす）
STALL_ITERATIONS = 5
STALL_IMPROVEMENT = 0.01
MAX_ESCALATIONS = 3
# 部分問題が解けないときに試す別の乱数初期点の数
MAX_SOLVE_RETRIES = 3


@dataclass(frozen=True, eq=False)
class InitializationResult:
    """初期点探索の結果"""
    w: BeamformerSet
    point: ExpansionPoint
    iterations: int
    max_slack: float
    lam: float


def is_feasible_point(w: BeamformerSet, scenario: Scenario, mask: Optional[Sequence[np.ndarray]] = None,
                      power_tol: float = 1e-9) -> bool:
    """
    元問題の制約（アンテナ電力上限・要求レート・マスク）を満たすか

    Args:
        w: ビームフォーマ
        scenario: シナリオ
        mask: アンテナ選択（オフの行はゼロであること）
        power_tol: 電力上限の許容誤差 [W]

    Returns:
        満たせば True
    """
    p_max = scenario.power.p_max
    for b, powers in enumerate(w.antenna_powers(scenario)):
        if np.any(powers > p_max + power_tol):
            return False
        if mask is not None and np.any(powers[~np.asarray(mask[b], dtype=bool)] > 0):
            return False
    return bool(np.all(group_rates_nats(w, scenario) >= group_rate_targets_nats(scenario)))


def _violated_groups(w: BeamformerSet, scenario: Scenario) -> list:
    shortfall = group_rates_nats(w, scenario) < group_rate_targets_nats(scenario)
    return [int(g) for g in np.flatnonzero(shortfall)]


def _random_start(scenario: Scenario, opts: "SolveOptions", mask, restart: int, retry: int = 0) -> BeamformerSet:
    """アンテナあたり P_max/2 の乱数ビームフォーマ（上限を超えるアンテナがあれば全体を縮小）"""
    if retry:
        seed = [scenario.seed, restart, retry]
    else:
        seed = scenario.seed if restart == 0 else [scenario.seed, restart]
    rng = np.random.default_rng(seed)
    w = BeamformerSet.random(scenario, rng, scenario.power.p_max / 2.0)
    if mask is not None:
        w = w.masked(scenario, mask)
    peak = max(float(np.max(p)) for p in w.antenna_powers(scenario))
    if peak > scenario.power.p_max:
        w = w.scaled(np.sqrt(scenario.power.p_max / peak))
    return w


def initialize_feasible(scenario: Scenario,
                        opts: "SolveOptions",
                        mask: Optional[Sequence[np.ndarray]] = None,
                        restart: int = 0) -> InitializationResult:
    """
    SCA 用の実行可能な展開点を求める

    乱数初期点が既に実行可能ならそのまま返す。そうでなければスラック付き問題を解き、
    スラックが停滞したら λ を10倍にする（最大3回）。
    部分問題が解けなければ別の乱数初期点からやり直す（最大 MAX_SOLVE_RETRIES 回）

    Args:
        scenario: シナリオ
        opts: 求解オプション（λ・slack_tol・反復上限を使用）
        mask: アンテナ選択（省略時は全アンテナ）
        restart: 乱数初期点の番号（0 はシナリオのシードそのもの）

    Returns:
        初期化結果（a は全て1）

    Raises:
        InfeasibleInstanceError: スラックがゼロにならない
        SolverFailureError: どの初期点からも部分問題が解けない
    """
    w = _random_start(scenario, opts, mask, restart)
    a = None if mask is None else tuple(np.asarray(m, dtype=float) for m in mask)
    if is_feasible_point(w, scenario, mask):
        log.debug("Random start is already feasible")
        return InitializationResult(w, ExpansionPoint.from_beamformers(w, scenario, a=a), 0, 0.0, opts.lambda_penalty)

    sub_options = opts.subproblem_options()
    lam = opts.lambda_penalty
    best_slack = float("inf")
    stall = 0
    escalations = 0
    retries = 0
    slacks = None
    for iteration in range(1, opts.feasibility_max_iter + 1):
        ep = ExpansionPoint.from_beamformers(w, scenario, a=a)
        program = build_feasibility_subproblem(scenario, ep, lam, sub_options, mask, target_margin=TARGET_MARGIN)
        if opts.dump_dir is not None:
            dump_program(program, opts.dump_dir / f"feasibility_{iteration:03d}.txt")
        solution = solve(program, opts.tolerance)
        if not solution.is_optimal:
            retries += 1
            if retries > MAX_SOLVE_RETRIES:
                raise SolverFailureError(solution.status.value, "feasibility subproblem could not be solved")
            log.debug(f"feasibility iter {iteration}: {solution.status.value}, new random start ({retries})")
            w = _random_start(scenario, opts, mask, restart, retry=retries)
            if is_feasible_point(w, scenario, mask):
                return InitializationResult(w, ExpansionPoint.from_beamformers(w, scenario, a=a), iteration, 0.0, lam)
            best_slack = float("inf")
            stall = 0
            continue

        w = recover_unlifted(program, solution, scenario, mask).w
        slacks = recover_slacks(program, solution, scenario, mask)
        current = slacks.max_slack()
        log.debug(f"feasibility iter {iteration}: max slack {current:.3e}, lambda {lam:g}")
        if slacks.is_feasible(opts.slack_tol) and is_feasible_point(w, scenario, mask):
            log.debug(f"Feasible start found after {iteration} iterations")
            return InitializationResult(w, ExpansionPoint.from_beamformers(w, scenario, a=a), iteration, current, lam)

        if current < best_slack * (1.0 - STALL_IMPROVEMENT):
            best_slack = current
            stall = 0
        else:
            stall += 1
        if stall >= STALL_ITERATIONS:
            if escalations >= MAX_ESCALATIONS:
                break
            lam *= 10.0
            escalations += 1
            stall = 0
            best_slack = current
            log.debug(f"Slack stalled, lambda raised to {lam:g}")

    if slacks is None:
        raise SolverFailureError("numerical_failure", "feasibility subproblem could not be solved")
    violated = _violated_groups(w, scenario)
    if not violated:
        violated = slacks.violated_groups(opts.slack_tol)
    raise InfeasibleInstanceError(violated, "no feasible starting point")

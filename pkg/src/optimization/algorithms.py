#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
SCA ドライバー
混合ブール緩和（alg1 とその簡易版・PWEE）、スパース化（alg2）、
EE-総レートのスカラー化（alg3）、アンテナ選択なしのベースライン、固定選択の再最適化
"""

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .bounds import SMOOTHING_KINDS, ExpansionPoint, normalized_norms, smoothing_value
from .initialization import InitializationResult, initialize_feasible, is_feasible_point
from .subproblems import (
    SubproblemOptions,
    build_cc_subproblem,
    build_refit_subproblem,
    build_scalarization_subproblem,
    build_sparsity_subproblem,
    recover_lifted,
    recover_unlifted,
)
from ..conic.program import ConicProgram, dump_program
from ..conic.solver import ConicSolution, SolverTolerance, solve, supports_exponential_cone
from ..model.performance import (
    group_rates,
    group_rates_nats,
    min_active_antennas,
    minimum_power,
    sum_rate,
    total_power,
)
from ..model.scenario import BeamformerSet, Scenario, SelectionState
from ..utils.config import ALGORITHM_NAMES, BACKEND_PATHS, ExperimentConfig
from ..utils.errors import ConfigurationError, InfeasibleInstanceError, SolverFailureError
from ..utils.logger import log


STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_SOLVER_FAILURE = "solver_failure"
STATUS_PHASE2_FALLBACK = "phase2_fallback"

# 丸め後に第2フェーズが実行不能なとき戻すアンテナ数の上限
MAX_RESTORATIONS = 3

Mask = Tuple[np.ndarray, ...]


@dataclass(frozen=True)
class SolveOptions:
    """SCA ドライバーのオプション"""
    chi: float = 2.0
    epsilon: float = 1e-3
    max_iter: int = 50
    rel_tol: float = 1e-4
    backend_path: str = "socp"
    remark1: bool = True
    kappa: float = 1.0
    varrho: float = 0.0
    rho: float = 0.0
    varsigma: float = 2.0
    lambda_penalty: float = 10.0
    slack_tol: float = 1e-6
    feasibility_max_iter: int = 100
    oracle_restarts: int = 3
    tolerance: SolverTolerance = field(default_factory=SolverTolerance)
    dump_dir: Optional[Path] = None

    def __post_init__(self):
        if self.chi < 1:
            raise ConfigurationError(f"chi must be >= 1, got {self.chi}")
        if not 0 < self.epsilon < 0.5:
            raise ConfigurationError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if self.max_iter < 0:
            raise ConfigurationError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.rel_tol <= 0:
            raise ConfigurationError(f"rel_tol must be > 0, got {self.rel_tol}")
        if self.backend_path not in BACKEND_PATHS:
            raise ConfigurationError(f"Unknown backend path: {self.backend_path}")
        if not 0 <= self.kappa <= 1:
            raise ConfigurationError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.varrho < 0 or self.rho < 0:
            raise ConfigurationError("varrho and rho must be >= 0")
        if self.varsigma < 1:
            raise ConfigurationError(f"varsigma must be >= 1, got {self.varsigma}")
        if self.lambda_penalty <= 0:
            raise ConfigurationError(f"lambda_penalty must be > 0, got {self.lambda_penalty}")
        if self.oracle_restarts < 1:
            raise ConfigurationError(f"oracle_restarts must be >= 1, got {self.oracle_restarts}")
        if self.dump_dir is not None:
            object.__setattr__(self, "dump_dir", Path(self.dump_dir))

    @classmethod
    def from_config(cls, config: ExperimentConfig, dump_dir: Optional[Path] = None) -> "SolveOptions":
        alg = config.algorithm
        return cls(
            chi=float(alg.chi),
            epsilon=float(alg.epsilon),
            max_iter=int(alg.max_iter),
            rel_tol=float(alg.rel_tol),
            backend_path=alg.backend_path,
            remark1=bool(alg.remark1),
            kappa=float(alg.kappa),
            varrho=float(alg.varrho),
            rho=float(alg.rho),
            varsigma=float(alg.varsigma),
            lambda_penalty=float(alg.lambda_penalty),
            slack_tol=float(alg.slack_tol),
            feasibility_max_iter=int(alg.feasibility_max_iter),
            oracle_restarts=int(alg.oracle_restarts),
            tolerance=SolverTolerance.from_config(config.solver),
            dump_dir=dump_dir,
        )

    def rate_rows(self) -> str:
        """レート行の形式（generic 指定でもバックエンドが指数錐を扱えなければ Ξ 行）"""
        if self.backend_path == "generic":
            if supports_exponential_cone(self.tolerance):
                return "exponential"
            log.warning(f"{self.tolerance.solver} has no exponential cone support, using SOCP rate rows")
        return "xi"

    def subproblem_options(self, kappa: Optional[float] = None) -> SubproblemOptions:
        return SubproblemOptions(
            chi=self.chi,
            kappa=self.kappa if kappa is None else kappa,
            remark1=self.remark1,
            rate_rows=self.rate_rows(),
        )


@dataclass(frozen=True)
class TraceRecord:
    """1反復の記録"""
    iteration: int
    phase: int
    objective: float
    ee_bits_per_joule: float
    sum_rate_bps: float
    power_w: float
    active_antennas: float
    solve_ms: float


@dataclass(frozen=True)
class RejectedStep:
    """受理しなかった反復（目的関数値が前回を下回った）"""
    iteration: int
    phase: int
    objective: float
    previous: float

    @property
    def relative_change(self) -> float:
        return (self.objective - self.previous) / max(abs(self.previous), 1e-12)


@dataclass
class RunTrace:
    """反復履歴と最終ステータス"""
    records: List[TraceRecord] = field(default_factory=list)
    status: str = ""
    rejected: List[RejectedStep] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def objectives(self, phase: Optional[int] = None) -> np.ndarray:
        return np.array([r.objective for r in self.records if phase is None or r.phase == phase])

    def is_monotone(self, phase: int = 1, tol: float = 1e-9) -> bool:
        """指定フェーズの目的関数値が非減少か"""
        values = self.objectives(phase)
        return bool(np.all(np.diff(values) >= -tol))

    def worst_rejection(self, phase: Optional[int] = None) -> float:
        """受理しなかった反復の相対変化の最小値（なければ0）"""
        changes = [r.relative_change for r in self.rejected if phase is None or r.phase == phase]
        return min(changes, default=0.0)

    def iterations(self, phase: Optional[int] = None) -> int:
        return len(self.objectives(phase))

    def to_frame(self, seed: Optional[int] = None) -> pd.DataFrame:
        """
        トレースを DataFrame に変換

        Args:
            seed: 先頭列に付けるシード

        Returns:
            列 seed, iter, phase, objective, ee_bits_per_joule, sum_rate_bps, power_w, active_antennas, solve_ms
        """
        rows = [{
            "seed": seed,
            "iter": r.iteration,
            "phase": r.phase,
            "objective": r.objective,
            "ee_bits_per_joule": r.ee_bits_per_joule,
            "sum_rate_bps": r.sum_rate_bps,
            "power_w": r.power_w,
            "active_antennas": r.active_antennas,
            "solve_ms": r.solve_ms,
        } for r in self.records]
        columns = ["seed", "iter", "phase", "objective", "ee_bits_per_joule", "sum_rate_bps",
                   "power_w", "active_antennas", "solve_ms"]
        return pd.DataFrame(rows, columns=columns)


@dataclass(frozen=True, eq=False)
class JbasResult:
    """
    ドライバーの最終結果

    EE・総レート・電力は解析式で再評価した値（部分問題の目的関数値ではない）
    """
    algorithm: str
    w: BeamformerSet
    state: SelectionState
    ee: float
    sum_rate: float
    group_rates: np.ndarray
    power_w: float
    gamma: np.ndarray
    status: str
    trace: RunTrace
    relaxed_a: Optional[Tuple[np.ndarray, ...]] = None

    @property
    def active_antennas(self) -> int:
        return self.state.active_count

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED

    def fractional_share(self, epsilon: float) -> float:
        """第1フェーズの連続変数 a のうち (ε, 1−ε) にある割合"""
        a = np.concatenate(self.state.a if self.relaxed_a is None else self.relaxed_a)
        return float(np.mean((a > epsilon) & (a < 1.0 - epsilon))) if a.size else 0.0

    def evaluate_on(self, scenario: Scenario) -> "JbasResult":
        """同じビームフォーマ・選択を別のチャネル（真のチャネル）で再評価"""
        return _finalize(self.algorithm, scenario, self.w, self.state, self.gamma, self.status, self.trace,
                         self.relaxed_a)


def _finalize(algorithm: str, scenario: Scenario, w: BeamformerSet, state: SelectionState,
              gamma: np.ndarray, status: str, trace: RunTrace,
              relaxed_a: Optional[Sequence[np.ndarray]] = None) -> JbasResult:
    w = w.masked(scenario, state.mask)
    power = total_power(w, state, scenario)
    rate = sum_rate(w, scenario)
    trace.status = status
    return JbasResult(
        algorithm=algorithm,
        w=w,
        state=state,
        ee=rate / power,
        sum_rate=rate,
        group_rates=group_rates(w, scenario),
        power_w=power,
        gamma=np.array(gamma, dtype=float),
        status=status,
        trace=trace,
        relaxed_a=None if relaxed_a is None else tuple(np.asarray(a, dtype=float) for a in relaxed_a),
    )


@dataclass(frozen=True, eq=False)
class _Iterate:
    """1回の部分問題から得た受理候補"""
    objective: float
    w: BeamformerSet
    state: SelectionState
    gamma: np.ndarray
    next_point: ExpansionPoint
    power_w: float
    active_estimate: float


def round_selection(values: Sequence[np.ndarray], epsilon: float, required: Sequence[int]) -> Mask:
    """
    値が ε 未満のアンテナをオフにする（基地局ごとの最小数 X_b を下回れば値の大きい順に戻す）

    Args:
        values: 基地局ごとの a（alg2 では正規化ノルム）
        epsilon: 丸めのしきい値
        required: 基地局ごとの最小アクティブアンテナ数

    Returns:
        ブールマスク
    """
    mask = []
    for vb, need in zip(values, required):
        vb = np.asarray(vb, dtype=float)
        mb = vb >= epsilon
        shortfall = int(need) - int(np.count_nonzero(mb))
        if shortfall > 0:
            off = np.flatnonzero(~mb)
            mb[off[np.argsort(-vb[off], kind="stable")[:shortfall]]] = True
        mask.append(mb)
    return tuple(mask)


def _mask_as_selection(mask: Mask) -> Tuple[np.ndarray, ...]:
    return tuple(np.asarray(m, dtype=float) for m in mask)


class ScaRunner:
    """部分問題を逐次解き、単調性と収束を管理する"""

    def __init__(self, scenario: Scenario, opts: SolveOptions, trace: RunTrace, label: str):
        self.scenario = scenario
        self.opts = opts
        self.trace = trace
        self.label = label
        self._dumps = 0

    def solve(self, program: ConicProgram) -> ConicSolution:
        if self.opts.dump_dir is not None:
            self._dumps += 1
            dump_program(program, self.opts.dump_dir / f"{self.label}_{self._dumps:03d}_{program.name}.txt")
        return solve(program, self.opts.tolerance)

    def run(self, phase: int, point: ExpansionPoint,
            step: Callable[[ExpansionPoint], Optional[_Iterate]]) -> Tuple[Optional[_Iterate], str]:
        """
        SCA ループ

        目的関数値が前回を下回った反復は受理せず、収束として終了する

        Args:
            phase: 1（連続緩和）または 2（固定選択）
            point: 初期展開点
            step: 展開点から次の反復を作る関数（求解失敗時は None）

        Returns:
            (最後に受理した反復, ステータス)
        """
        best: Optional[_Iterate] = None
        status = STATUS_MAX_ITER
        for iteration in range(1, self.opts.max_iter + 1):
            start = time.perf_counter()
            try:
                iterate = step(point)
            except ValueError as e:
                log.warning(f"{self.label} phase {phase} iter {iteration}: {e}")
                iterate = None
            elapsed_ms = 1000.0 * (time.perf_counter() - start)
            if iterate is None:
                status = STATUS_SOLVER_FAILURE
                break
            if best is not None and iterate.objective < best.objective:
                self.trace.rejected.append(RejectedStep(iteration, phase, iterate.objective, best.objective))
                log.debug(f"{self.label} phase {phase} iter {iteration}: objective decreased "
                          f"({iterate.objective:.9g} < {best.objective:.9g}), iterate rejected")
                status = STATUS_CONVERGED
                break

            rate = sum_rate(iterate.w, self.scenario)
            self.trace.append(TraceRecord(
                iteration=iteration,
                phase=phase,
                objective=iterate.objective,
                ee_bits_per_joule=rate / iterate.power_w,
                sum_rate_bps=rate,
                power_w=iterate.power_w,
                active_antennas=iterate.active_estimate,
                solve_ms=elapsed_ms,
            ))
            log.debug(
                f"{self.label} phase {phase} iter {iteration}: objective {iterate.objective:.6g}, "
                f"EE {rate / iterate.power_w:.4g} bit/J, active {iterate.active_estimate:.2f}"
            )
            previous = best
            best = iterate
            point = iterate.next_point
            if previous is not None:
                change = abs(iterate.objective - previous.objective)
                if change <= self.opts.rel_tol * max(abs(previous.objective), 1e-12):
                    status = STATUS_CONVERGED
                    break
        return best, status

    def cc_step(self, kappa: float) -> Callable[[ExpansionPoint], Optional[_Iterate]]:
        """Charnes-Cooper 部分問題（alg1・PWEE の第1フェーズ）"""
        scenario, pm = self.scenario, self.scenario.power
        options = self.opts.subproblem_options(kappa)

        def step(point: ExpansionPoint) -> Optional[_Iterate]:
            program = build_cc_subproblem(scenario, point, options)
            solution = self.solve(program)
            if not solution.is_optimal:
                return None
            p = recover_lifted(program, solution, scenario).point
            mask = tuple(a >= self.opts.epsilon for a in p.a)
            state = SelectionState(a=p.a, v=p.v, mask=mask)
            return _Iterate(
                objective=solution.objective,
                w=p.w,
                state=state,
                gamma=p.gamma,
                next_point=ExpansionPoint.from_beamformers(p.w, scenario, a=p.a),
                power_w=p.w.transmit_power() / pm.eta + pm.p_rf * state.relaxed_count + scenario.p0,
                active_estimate=state.relaxed_count,
            )
        return step

    def refit_step(self, mask: Mask, kappa: float) -> Callable[[ExpansionPoint], Optional[_Iterate]]:
        """アンテナ固定のビームフォーミングのみの部分問題"""
        scenario = self.scenario
        options = self.opts.subproblem_options(kappa)
        selection = _mask_as_selection(mask)

        def step(point: ExpansionPoint) -> Optional[_Iterate]:
            program = build_refit_subproblem(scenario, point, mask, options)
            solution = self.solve(program)
            if not solution.is_optimal:
                return None
            p = recover_lifted(program, solution, scenario, mask).point
            state = SelectionState(a=selection, v=p.w.antenna_powers(scenario), mask=mask)
            return _Iterate(
                objective=solution.objective,
                w=p.w,
                state=state,
                gamma=p.gamma,
                next_point=ExpansionPoint.from_beamformers(p.w, scenario, a=selection),
                power_w=total_power(p.w, state, scenario),
                active_estimate=float(state.active_count),
            )
        return step

    def sparsity_step(self, kind: str) -> Callable[[ExpansionPoint], Optional[_Iterate]]:
        """平滑化アンテナ数のスパース化部分問題（alg2 の第1フェーズ）"""
        scenario, pm, opts = self.scenario, self.scenario.power, self.opts
        options = opts.subproblem_options()

        def step(point: ExpansionPoint) -> Optional[_Iterate]:
            program = build_sparsity_subproblem(scenario, point, kind, opts.rho, opts.varsigma, options)
            solution = self.solve(program)
            if not solution.is_optimal:
                return None
            p = recover_lifted(program, solution, scenario).point
            norms = normalized_norms(p.w, scenario)
            state = SelectionState(
                a=tuple(np.clip(u, 0.0, 1.0) for u in norms),
                v=p.w.antenna_powers(scenario),
                mask=tuple(u >= opts.epsilon for u in norms),
            )
            count = smoothing_value(p.w, scenario, kind, opts.varsigma)
            return _Iterate(
                objective=solution.objective,
                w=p.w,
                state=state,
                gamma=p.gamma,
                next_point=ExpansionPoint.from_beamformers(p.w, scenario),
                power_w=p.w.transmit_power() / pm.eta + pm.p_rf * count + scenario.p0,
                active_estimate=count,
            )
        return step

    def scalarization_step(self, p_min: float, mask: Optional[Mask] = None
                           ) -> Callable[[ExpansionPoint], Optional[_Iterate]]:
        """EE-総レートのスカラー化部分問題（alg3、mask 指定で第2フェーズ）"""
        scenario, pm, opts = self.scenario, self.scenario.power, self.opts
        options = opts.subproblem_options()

        def step(point: ExpansionPoint) -> Optional[_Iterate]:
            program = build_scalarization_subproblem(scenario, point, opts.varrho, p_min, options, mask)
            solution = self.solve(program)
            if not solution.is_optimal:
                return None
            p = recover_unlifted(program, solution, scenario, mask)
            if mask is None:
                state = SelectionState(a=p.a, v=p.v, mask=tuple(a >= opts.epsilon for a in p.a))
                adjustable = sum(float(np.sum(v)) for v in p.v) / pm.eta + pm.p_rf * state.relaxed_count
                estimate = state.relaxed_count
            else:
                selection = _mask_as_selection(mask)
                state = SelectionState(a=selection, v=p.w.antenna_powers(scenario), mask=mask)
                adjustable = p.w.transmit_power() / pm.eta + pm.p_rf * state.active_count
                estimate = float(state.active_count)
            return _Iterate(
                objective=solution.objective,
                w=p.w,
                state=state,
                gamma=p.gamma,
                next_point=_scalarization_point(p.w, scenario, state.a, adjustable),
                power_w=adjustable + scenario.p0,
                active_estimate=estimate,
            )
        return step


def _scalarization_point(w: BeamformerSet, scenario: Scenario, a: Sequence[np.ndarray],
                         adjustable: float) -> ExpansionPoint:
    """r = √(Σr_g)、x = Σr_g/(g(v,a)+P0) で密着させた展開点"""
    total = max(float(np.sum(group_rates_nats(w, scenario))), 1e-12)
    return ExpansionPoint.from_beamformers(
        w, scenario, a=a, r=float(np.sqrt(total)), x=total / (adjustable + scenario.p0),
    )


def _initial_iterate(scenario: Scenario, init: InitializationResult, mask: Optional[Mask] = None) -> _Iterate:
    """初期点を反復として扱う（反復予算ゼロや初回の求解失敗時の結果）"""
    if mask is None:
        mask = tuple(np.ones(n, dtype=bool) for n in scenario.antennas_per_bs)
    state = SelectionState(a=_mask_as_selection(mask), v=init.w.antenna_powers(scenario), mask=mask)
    return _Iterate(
        objective=float("nan"),
        w=init.w,
        state=state,
        gamma=init.point.gamma,
        next_point=init.point,
        power_w=total_power(init.w, state, scenario),
        active_estimate=float(state.active_count),
    )


def _start_for_mask(scenario: Scenario, mask: Mask, opts: SolveOptions, initial: Optional[BeamformerSet],
                    restart: int = 0) -> InitializationResult:
    """固定選択 SCA の開始点（与えた初期点がマスク下で実行可能ならそれを使う）"""
    if initial is not None:
        w = initial.masked(scenario, mask)
        if is_feasible_point(w, scenario, mask):
            point = ExpansionPoint.from_beamformers(w, scenario, a=_mask_as_selection(mask))
            return InitializationResult(w, point, 0, 0.0, opts.lambda_penalty)
    return initialize_feasible(scenario, opts, mask=mask, restart=restart)


def _fixed_selection(scenario: Scenario, mask: Mask, opts: SolveOptions, runner: ScaRunner, phase: int,
                     initial: Optional[BeamformerSet], kappa: float, restart: int = 0) -> Tuple[_Iterate, str]:
    start = _start_for_mask(scenario, mask, opts, initial, restart)
    iterate, status = runner.run(phase, start.point, runner.refit_step(mask, kappa))
    return iterate or _initial_iterate(scenario, start, mask), status


def run_fixed_selection(scenario: Scenario,
                        mask: Sequence[np.ndarray],
                        opts: SolveOptions,
                        initial: Optional[BeamformerSet] = None,
                        restart: int = 0,
                        algorithm: str = "fixed") -> JbasResult:
    """
    アンテナ選択を固定したビームフォーミングのみの SCA

    Args:
        scenario: シナリオ
        mask: 基地局ごとのアンテナ選択
        opts: 求解オプション
        initial: 開始ビームフォーマ（マスク下で実行不能なら初期点探索を行う）
        restart: 初期点探索の乱数番号
        algorithm: 結果に記録するアルゴリズム名

    Returns:
        結果

    Raises:
        InfeasibleInstanceError: マスク下で実行可能点がない
    """
    mask = tuple(np.asarray(m, dtype=bool) for m in mask)
    trace = RunTrace()
    runner = ScaRunner(scenario, opts, trace, algorithm)
    iterate, status = _fixed_selection(scenario, mask, opts, runner, 1, initial, opts.kappa, restart)
    return _finalize(algorithm, scenario, iterate.w, iterate.state, iterate.gamma, status, trace)


def _phase_one(scenario: Scenario, opts: SolveOptions, runner: ScaRunner,
               step: Callable[[ExpansionPoint], Optional[_Iterate]]) -> Tuple[_Iterate, str, InitializationResult]:
    init = initialize_feasible(scenario, opts)
    iterate, status = runner.run(1, init.point, step)
    if iterate is None:
        return _initial_iterate(scenario, init), status, init
    return iterate, status, init


def _refit_with_restoration(scenario: Scenario, opts: SolveOptions, runner: ScaRunner, values: Sequence[np.ndarray],
                            phase_one: _Iterate, refit: Callable[[Mask, BeamformerSet], Tuple[_Iterate, str]]
                            ) -> Optional[Tuple[_Iterate, str]]:
    """
    第1フェーズの値を丸めて第2フェーズを実行

    実行不能なら除外したアンテナのうち値が最大のものを戻して再試行する（最大3回）
    """
    mask = [m.copy() for m in round_selection(values, opts.epsilon, min_active_antennas(scenario))]
    removed = sorted(
        ((float(values[b][i]), b, i) for b in range(scenario.num_bs) for i in np.flatnonzero(~mask[b])),
        key=lambda item: -item[0],
    )
    for attempt in range(MAX_RESTORATIONS + 1):
        try:
            return refit(tuple(mask), phase_one.w)
        except (InfeasibleInstanceError, SolverFailureError) as e:
            if attempt == MAX_RESTORATIONS or attempt >= len(removed):
                log.warning(f"Phase 2 gave up after {attempt} restorations: {e}")
                return None
            _, b, i = removed[attempt]
            mask[b][i] = True
            log.debug(f"Phase 2 infeasible, restoring antenna ({b}, {i})")
    return None


def _simple_from(algorithm: str, scenario: Scenario, iterate: _Iterate, opts: SolveOptions, status: str,
                 trace: RunTrace, values: Optional[Sequence[np.ndarray]] = None) -> JbasResult:
    """第1フェーズの点を丸めてそのまま送信する結果（RF 電力は選択アンテナ数で計上）"""
    values = iterate.state.a if values is None else values
    mask = round_selection(values, opts.epsilon, min_active_antennas(scenario))
    state = SelectionState(a=iterate.state.a, v=iterate.state.v, mask=mask)
    return _finalize(algorithm, scenario, iterate.w, state, iterate.gamma, status, trace, values)


def _run_relaxation(algorithm: str, scenario: Scenario, opts: SolveOptions, kappa: float) -> JbasResult:
    trace = RunTrace()
    runner = ScaRunner(scenario, opts, trace, algorithm)
    iterate, status, _ = _phase_one(scenario, opts, runner, runner.cc_step(kappa))
    if status == STATUS_SOLVER_FAILURE:
        return _simple_from(algorithm, scenario, iterate, opts, status, trace)

    def refit(mask: Mask, initial: BeamformerSet) -> Tuple[_Iterate, str]:
        return _fixed_selection(scenario, mask, opts, runner, 2, initial, kappa)

    refitted = _refit_with_restoration(scenario, opts, runner, iterate.state.a, iterate, refit)
    if refitted is None:
        return _simple_from(algorithm, scenario, iterate, opts, STATUS_PHASE2_FALLBACK, trace)
    final, final_status = refitted
    log.info(f"{algorithm}: {final_status}, {final.state.active_count} active antennas")
    return _finalize(algorithm, scenario, final.w, final.state, final.gamma, final_status, trace,
                     iterate.state.a)


def run_algorithm1(scenario: Scenario, opts: SolveOptions) -> JbasResult:
    """
    混合ブール緩和による同時ビームフォーミング・アンテナ選択

    第1フェーズで連続緩和を SCA で解き、a < ε のアンテナをオフにして第2フェーズで再最適化する

    Args:
        scenario: シナリオ
        opts: 求解オプション

    Returns:
        結果

    Raises:
        InfeasibleInstanceError: 初期点が見つからない
    """
    return _run_relaxation("alg1", scenario, replace(opts, kappa=1.0), 1.0)


def run_pwee(scenario: Scenario, kappa: float, opts: SolveOptions) -> JbasResult:
    """電力重み付き EE（分母の g(·) に κ を掛けた alg1）"""
    opts = replace(opts, kappa=float(kappa))
    return _run_relaxation("pwee", scenario, opts, opts.kappa)


def run_algorithm1_simple(scenario: Scenario, opts: SolveOptions) -> JbasResult:
    """
    alg1 の簡易版（第2フェーズなし）

    連続緩和のビームフォーマをそのまま使い、a < ε の行をゼロにして選択アンテナ数で RF 電力を計上する
    """
    opts = replace(opts, kappa=1.0)
    trace = RunTrace()
    runner = ScaRunner(scenario, opts, trace, "alg1-simple")
    iterate, status, _ = _phase_one(scenario, opts, runner, runner.cc_step(1.0))
    log.info(f"alg1-simple: {status}")
    return _simple_from("alg1-simple", scenario, iterate, opts, status, trace)


def run_algorithm2(scenario: Scenario, kind: str, opts: SolveOptions) -> JbasResult:
    """
    スパース化による同時ビームフォーミング・アンテナ選択

    Args:
        scenario: シナリオ
        kind: 平滑化関数 f1 / f2 / f3
        opts: 求解オプション（ρ・ς を使用）

    Returns:
        結果
    """
    if kind not in SMOOTHING_KINDS:
        raise ConfigurationError(f"Unknown smoothing kind: {kind}")
    algorithm = f"alg2-{kind}"
    opts = replace(opts, kappa=1.0)
    trace = RunTrace()
    runner = ScaRunner(scenario, opts, trace, algorithm)
    iterate, status, _ = _phase_one(scenario, opts, runner, runner.sparsity_step(kind))
    norms = normalized_norms(iterate.w, scenario)
    if status == STATUS_SOLVER_FAILURE:
        return _simple_from(algorithm, scenario, iterate, opts, status, trace, norms)

    def refit(mask: Mask, initial: BeamformerSet) -> Tuple[_Iterate, str]:
        return _fixed_selection(scenario, mask, opts, runner, 2, initial, 1.0)

    refitted = _refit_with_restoration(scenario, opts, runner, norms, iterate, refit)
    if refitted is None:
        return _simple_from(algorithm, scenario, iterate, opts, STATUS_PHASE2_FALLBACK, trace, norms)
    final, final_status = refitted
    log.info(f"{algorithm}: {final_status}, {final.state.active_count} active antennas")
    return _finalize(algorithm, scenario, final.w, final.state, final.gamma, final_status, trace, norms)


def run_algorithm3(scenario: Scenario, varrho: float, opts: SolveOptions) -> JbasResult:
    """
    EE と総レートのトレードオフ（x + ϱ·Σr_g/P_min の最大化）

    Args:
        scenario: シナリオ
        varrho: 総レートの重み ϱ（0以上）
        opts: 求解オプション

    Returns:
        結果
    """
    opts = replace(opts, varrho=float(varrho), kappa=1.0)
    pm = scenario.power
    p_min = minimum_power(scenario)
    trace = RunTrace()
    runner = ScaRunner(scenario, opts, trace, "alg3")

    init = initialize_feasible(scenario, opts)
    ones = tuple(np.ones(n) for n in scenario.antennas_per_bs)
    adjustable = init.w.transmit_power() / pm.eta + pm.p_rf * scenario.total_antennas
    start = _scalarization_point(init.w, scenario, ones, adjustable)
    iterate, status = runner.run(1, start, runner.scalarization_step(p_min))
    if iterate is None:
        return _simple_from("alg3", scenario, _initial_iterate(scenario, init), opts, status, trace)
    if status == STATUS_SOLVER_FAILURE:
        return _simple_from("alg3", scenario, iterate, opts, status, trace)

    def refit(mask: Mask, initial: BeamformerSet) -> Tuple[_Iterate, str]:
        begin = _start_for_mask(scenario, mask, opts, initial)
        selection = _mask_as_selection(mask)
        active = sum(int(np.count_nonzero(m)) for m in mask)
        point = _scalarization_point(begin.w, scenario, selection,
                                     begin.w.transmit_power() / pm.eta + pm.p_rf * active)
        result, refit_status = runner.run(2, point, runner.scalarization_step(p_min, mask))
        return result or _initial_iterate(scenario, begin, mask), refit_status

    refitted = _refit_with_restoration(scenario, opts, runner, iterate.state.a, iterate, refit)
    if refitted is None:
        return _simple_from("alg3", scenario, iterate, opts, STATUS_PHASE2_FALLBACK, trace)
    final, final_status = refitted
    log.info(f"alg3 (varrho={varrho:g}): {final_status}, {final.state.active_count} active antennas")
    return _finalize("alg3", scenario, final.w, final.state, final.gamma, final_status, trace,
                     iterate.state.a)


def run_no_as_baseline(scenario: Scenario, opts: SolveOptions) -> JbasResult:
    """アンテナ選択なし（全アンテナ使用）のビームフォーミングのみの SCA"""
    opts = replace(opts, kappa=1.0)
    init = initialize_feasible(scenario, opts)
    mask = tuple(np.ones(n, dtype=bool) for n in scenario.antennas_per_bs)
    return run_fixed_selection(scenario, mask, opts, initial=init.w, algorithm="no-as")


def run_algorithm(name: str, scenario: Scenario, opts: SolveOptions) -> JbasResult:
    """
    アルゴリズム名で実行するドライバーを選ぶ

    Args:
        name: alg1 / alg1-simple / alg2-f1 / alg2-f2 / alg2-f3 / pwee / alg3 / no-as
        scenario: シナリオ
        opts: 求解オプション

    Returns:
        結果
    """
    dispatch: Dict[str, Callable[[], JbasResult]] = {
        "alg1": lambda: run_algorithm1(scenario, opts),
        "alg1-simple": lambda: run_algorithm1_simple(scenario, opts),
        "alg2-f1": lambda: run_algorithm2(scenario, "f1", opts),
        "alg2-f2": lambda: run_algorithm2(scenario, "f2", opts),
        "alg2-f3": lambda: run_algorithm2(scenario, "f3", opts),
        "pwee": lambda: run_pwee(scenario, opts.kappa, opts),
        "alg3": lambda: run_algorithm3(scenario, opts.varrho, opts),
        "no-as": lambda: run_no_as_baseline(scenario, opts),
    }
    if name not in dispatch:
        raise ConfigurationError(f"Unknown algorithm: {name} (choose from {ALGORITHM_NAMES})")
    return dispatch[name]()

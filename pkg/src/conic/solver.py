#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
錐計画ソルバーアダプター
ConicProgram を cvxpy 経由で内点法ソルバー（既定は Clarabel）に渡し、結果を ConicSolution に変換
"""

import time
from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .program import ConeKind, ConeMembership, ConicProgram
from ..utils.config import SolverConfig
from ..utils.logger import log


class ConicStatus(Enum):
    """求解ステータス"""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"
    ITERATION_LIMIT = "iteration_limit"


# 指数錐を扱えるソルバー
EXPONENTIAL_CONE_SOLVERS = {"CLARABEL", "SCS", "ECOS", "MOSEK"}


@dataclass(frozen=True)
class SolverTolerance:
    """ソルバー許容誤差"""
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iter: int = 200
    solver: str = "CLARABEL"
    fallback_solvers: Tuple[str, ...] = ("SCS",)
    fallback_tol: float = 1e-6

    @classmethod
    def from_config(cls, config: SolverConfig) -> "SolverTolerance":
        return cls(
            tol_feas=float(config.tol_feas),
            tol_gap=float(config.tol_gap),
            max_iter=int(config.max_iter),
            solver=str(config.solver).upper(),
            fallback_solvers=tuple(str(name).upper() for name in config.fallback_solvers),
            fallback_tol=float(config.fallback_tol),
        )

    def solver_options(self) -> Dict[str, float]:
        """ソルバー固有の設定キーに変換"""
        if self.solver == "CLARABEL":
            return {
                "tol_feas": self.tol_feas,
                "tol_gap_abs": self.tol_gap,
                "tol_gap_rel": self.tol_gap,
                "max_iter": self.max_iter,
            }
        if self.solver == "ECOS":
            return {"feastol": self.tol_feas, "abstol": self.tol_gap, "reltol": self.tol_gap, "max_iters": self.max_iter}
        if self.solver == "SCS":
            return {"eps_abs": self.tol_feas, "eps_rel": self.tol_gap, "max_iters": 100 * self.max_iter}
        return {}

    def attempts(self) -> List["SolverTolerance"]:
        """
        数値的失敗時に順に試す設定

        元の設定、許容誤差を緩めた同じソルバー、インストール済みの代替ソルバーの順
        """
        relaxed = max(self.fallback_tol, self.tol_feas, self.tol_gap)
        sequence = [self]
        if relaxed > min(self.tol_feas, self.tol_gap):
            sequence.append(replace(self, tol_feas=relaxed, tol_gap=relaxed, max_iter=2 * self.max_iter,
                                    fallback_solvers=()))
        installed = set(cp.installed_solvers())
        for name in self.fallback_solvers:
            if name != self.solver and name in installed:
                sequence.append(replace(self, solver=name, tol_feas=relaxed, tol_gap=relaxed, fallback_solvers=()))
        return sequence


@dataclass(frozen=True, eq=False)
class ConicSolution:
    """求解結果"""
    status: ConicStatus
    x: Optional[np.ndarray]
    objective: float
    solve_time_s: float
    max_violation: float = float("nan")

    @property
    def is_optimal(self) -> bool:
        return self.status == ConicStatus.OPTIMAL


def supports_exponential_cone(tolerance: Optional[SolverTolerance] = None) -> bool:
    """指数錐を扱えるバックエンドが利用可能か"""
    solver = (tolerance or SolverTolerance()).solver
    return solver in EXPONENTIAL_CONE_SOLVERS and solver in cp.installed_solvers()


def _stack(cones: List[ConeMembership], rows: slice, n: int):
    """各錐の指定行を錐順に積み重ねた (A, b)"""
    matrices = [c.matrix[rows] for c in cones]
    offsets = [c.offset[rows] for c in cones]
    return sp.vstack(matrices, format="csr") if matrices else sp.csr_matrix((0, n)), np.concatenate(offsets)


def _to_cvxpy(program: ConicProgram, x: cp.Variable) -> List[cp.Constraint]:
    """錐制約を種類・次元ごとにまとめて cvxpy 制約に変換"""
    n = program.num_variables
    by_kind: Dict[ConeKind, List[ConeMembership]] = defaultdict(list)
    soc_by_dim: Dict[int, List[ConeMembership]] = defaultdict(list)
    for cone in program.constraints:
        if cone.kind in (ConeKind.SECOND_ORDER, ConeKind.ROTATED_SECOND_ORDER):
            standard = cone.to_standard()
            soc_by_dim[standard.dim].append(standard)
        else:
            by_kind[cone.kind].append(cone)

    constraints: List[cp.Constraint] = []
    if by_kind[ConeKind.ZERO]:
        A, b = _stack(by_kind[ConeKind.ZERO], slice(None), n)
        constraints.append(A @ x + b == 0)
    if by_kind[ConeKind.NONNEGATIVE]:
        A, b = _stack(by_kind[ConeKind.NONNEGATIVE], slice(None), n)
        constraints.append(A @ x + b >= 0)
    for dim in sorted(soc_by_dim):
        cones = soc_by_dim[dim]
        At, bt = _stack(cones, slice(0, 1), n)
        Ax, bx = _stack(cones, slice(1, dim), n)
        # 列 j が j 番目の錐の成分になるよう列優先で並べ替える
        body = cp.reshape(Ax @ x + bx, (dim - 1, len(cones)), order="F")
        constraints.append(cp.SOC(At @ x + bt, body, axis=0))
    if by_kind[ConeKind.EXPONENTIAL]:
        cones = by_kind[ConeKind.EXPONENTIAL]
        parts = [_stack(cones, slice(i, i + 1), n) for i in range(3)]
        constraints.append(cp.constraints.ExpCone(*(A @ x + b for A, b in parts)))
    return constraints


def _map_status(status: str) -> ConicStatus:
    if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return ConicStatus.OPTIMAL
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return ConicStatus.INFEASIBLE
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return ConicStatus.UNBOUNDED
    if status == cp.USER_LIMIT:
        return ConicStatus.ITERATION_LIMIT
    return ConicStatus.NUMERICAL_FAILURE


# 別の設定で再試行するステータス
RETRYABLE = (ConicStatus.NUMERICAL_FAILURE, ConicStatus.ITERATION_LIMIT)


def _solve_once(program: ConicProgram, tolerance: SolverTolerance) -> ConicSolution:
    """1つのソルバー設定で解く"""
    x = cp.Variable(program.num_variables)
    problem = cp.Problem(
        cp.Maximize(program.objective @ x + program.objective_offset),
        _to_cvxpy(program, x),
    )

    start = time.perf_counter()
    try:
        problem.solve(solver=tolerance.solver, **tolerance.solver_options())
    except cp.error.SolverError as e:
        elapsed = time.perf_counter() - start
        log.debug(f"{tolerance.solver} error on {program.name or 'program'}: {e}")
        return ConicSolution(ConicStatus.NUMERICAL_FAILURE, None, float("nan"), elapsed)
    elapsed = time.perf_counter() - start

    status = _map_status(problem.status)
    if status != ConicStatus.OPTIMAL or x.value is None:
        if status == ConicStatus.OPTIMAL:
            status = ConicStatus.NUMERICAL_FAILURE
        log.debug(f"{program.name or 'program'}: {tolerance.solver} status {problem.status}")
        return ConicSolution(status, None, float("nan"), elapsed)

    values = np.array(x.value, dtype=float)
    violation = program.max_violation(values)
    if problem.status == cp.OPTIMAL_INACCURATE and violation > max(1e-6, 100.0 * tolerance.tol_feas):
        log.debug(f"{program.name or 'program'}: inaccurate solution rejected (violation {violation:.2e})")
        return ConicSolution(ConicStatus.NUMERICAL_FAILURE, None, float("nan"), elapsed, violation)
    return ConicSolution(
        status=ConicStatus.OPTIMAL,
        x=values,
        objective=program.objective_value(values),
        solve_time_s=elapsed,
        max_violation=violation,
    )


def solve(program: ConicProgram, tolerance: Optional[SolverTolerance] = None) -> ConicSolution:
    """
    錐計画を解く

    実行不能・非有界はステータスで返し、例外にはしない。
    数値的失敗・反復上限のときは SolverTolerance.attempts の順に再試行する

    Args:
        program: 錐計画
        tolerance: ソルバー許容誤差

    Returns:
        求解結果（solve_time_s は全試行の合計）
    """
    tolerance = tolerance or SolverTolerance()
    elapsed = 0.0
    for attempt in tolerance.attempts():
        solution = _solve_once(program, attempt)
        elapsed += solution.solve_time_s
        if solution.status not in RETRYABLE:
            if attempt is not tolerance:
                log.debug(f"{program.name or 'program'}: {solution.status.value} with fallback {attempt.solver} "
                          f"(tol {attempt.tol_feas:.0e})")
            break
    else:
        log.warning(f"{program.name or 'program'}: every solver attempt failed ({solution.status.value})")
    return replace(solution, solve_time_s=elapsed)

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
錐計画の中間表現とソルバーアダプターのテスト
"""

import cvxpy as cp
import numpy as np
import pytest

from src.conic import solver as solver_module
from src.conic.program import (
    AffineExpression,
    ConeKind,
    ProgramBuilder,
    dump_program,
    in_rotated_cone,
    in_second_order_cone,
    rotated_to_standard_map,
    validate,
)
from src.conic.solver import ConicSolution, ConicStatus, SolverTolerance, solve, supports_exponential_cone
from src.utils.config import SolverConfig


class TestAffineExpression:
    """1次式のテスト"""

    def test_arithmetic(self):
        """加減算・スカラー倍で係数と定数項が合う"""
        x0 = AffineExpression.variable(0)
        x1 = AffineExpression.variable(1, 2.0)
        expr = 3 * (x0 + x1) - 1.0
        assert expr.terms == {0: 3.0, 1: 6.0}
        assert expr.constant == -1.0
        assert expr.value(np.array([1.0, 1.0])) == pytest.approx(8.0)

    def test_linear_skips_placeholder(self):
        """インデックス -1 は定数ゼロ扱い"""
        expr = AffineExpression.linear([0, -1, 2], [1.0, 5.0, 2.0])
        assert expr.terms == {0: 1.0, 2: 2.0}

    def test_rsub(self):
        """定数から1次式を引く"""
        expr = 1.0 - AffineExpression.variable(0)
        assert expr.value(np.array([0.25])) == pytest.approx(0.75)


class TestConeMembership:
    """錐所属判定のテスト"""

    def test_rotated_unit_case(self):
        """y2=y3=1 なら ||y1|| ≤ 1 と同値"""
        assert in_rotated_cone(np.array([1.0, 1.0, 0.6, 0.8]), tol=1e-12)
        assert not in_rotated_cone(np.array([1.0, 1.0, 0.7, 0.8]))

    def test_rotated_and_standard_agree(self):
        """回転二次錐と標準形への写像は同じ点集合を受け入れる"""
        rng = np.random.default_rng(0)
        transform = rotated_to_standard_map(5)
        for _ in range(500):
            y = rng.standard_normal(5)
            y[:2] = np.abs(y[:2]) * rng.uniform(0.0, 3.0)
            rotated = in_rotated_cone(y)
            standard = in_second_order_cone(transform @ y)
            margin = abs(float(np.dot(y[2:], y[2:])) - y[0] * y[1])
            if margin > 1e-9:
                assert rotated == standard

    def test_violation_zero_inside(self):
        """錐の内部なら違反量0"""
        builder = ProgramBuilder()
        x = builder.add_block("x", 3)
        builder.add_soc(builder.var(x[0]), [builder.var(x[1]), builder.var(x[2])])
        builder.set_objective(builder.var(x[0]))
        program = builder.build()
        assert program.max_violation(np.array([5.0, 3.0, 4.0])) == pytest.approx(0.0)
        assert program.max_violation(np.array([4.0, 3.0, 4.0])) == pytest.approx(1.0)


class TestProgramBuilder:
    """錐計画ビルダーのテスト"""

    def test_blocks(self):
        """ブロックは連続したインデックスを持つ"""
        builder = ProgramBuilder("demo")
        first = builder.add_block("a", 2)
        second = builder.add_block("b", 3)
        assert first.tolist() == [0, 1]
        assert second.tolist() == [2, 3, 4]
        assert builder.num_variables == 5

    def test_duplicate_block(self):
        """同名のブロックはエラー"""
        builder = ProgramBuilder()
        builder.add_block("a", 1)
        with pytest.raises(ValueError):
            builder.add_block("a", 1)

    def test_late_blocks_widen_matrices(self):
        """後から追加した変数に合わせて行列の列数が揃う"""
        builder = ProgramBuilder()
        x = builder.add_block("x", 1)
        builder.add_nonnegative(builder.var(x[0]))
        y = builder.add_block("y", 2)
        builder.add_nonnegative(1.0 - builder.var(y[1]))
        builder.set_objective(builder.var(x[0]))
        program = builder.build()
        assert all(c.matrix.shape[1] == 3 for c in program.constraints)
        assert validate(program) == []

    def test_validate_reports_empty_objective(self):
        """目的関数が空なら欠陥として報告"""
        builder = ProgramBuilder()
        x = builder.add_block("x", 1)
        builder.add_nonnegative(builder.var(x[0]))
        defects = validate(builder.build())
        assert any("objective" in d for d in defects)

    def test_dump_program(self, tmp_path):
        """疎トリプレット形式で書き出す"""
        builder = ProgramBuilder("dumped")
        x = builder.add_block("x", 2)
        builder.add_nonnegative(1.0 - builder.var(x[0]), "cap")
        builder.set_objective(builder.var(x[0]) + builder.var(x[1]))
        path = dump_program(builder.build(), tmp_path / "p.txt")
        text = path.read_text(encoding="utf-8")
        assert text.startswith("# program dumped\n# variables 2\n")
        assert "[constraint 0 nonnegative dim=1 label=cap]" in text
        assert "A 0 0 -1" in text
        assert "b 0 1" in text

    def test_count_cones(self):
        """錐の種類ごとの個数"""
        builder = ProgramBuilder()
        x = builder.add_block("x", 3)
        builder.add_rotated(builder.var(x[0]), builder.var(x[1]), [builder.var(x[2])])
        builder.add_nonnegative(builder.var(x[0]))
        builder.set_objective(builder.var(x[2]))
        program = builder.build()
        assert program.count(ConeKind.ROTATED_SECOND_ORDER) == 1
        assert program.count(ConeKind.NONNEGATIVE) == 1
        assert not program.uses_exponential_cone


class TestSolve:
    """ソルバーアダプターのテスト"""

    def test_box(self):
        """maximize x s.t. 0 ≤ x ≤ 1 → x=1"""
        builder = ProgramBuilder("box")
        x = builder.add_block("x", 1)[0]
        builder.add_nonnegative(builder.var(x))
        builder.add_nonnegative(1.0 - builder.var(x))
        builder.set_objective(builder.var(x))
        solution = solve(builder.build())
        assert solution.is_optimal
        assert solution.objective == pytest.approx(1.0, abs=1e-7)

    def test_soc_epigraph(self):
        """minimize t s.t. ||y|| ≤ t, y = c → ||c||"""
        c = np.array([3.0, 4.0])
        builder = ProgramBuilder("epigraph")
        t = builder.add_block("t", 1)[0]
        y = builder.add_block("y", 2)
        builder.add_soc(builder.var(t), [builder.var(y[0]), builder.var(y[1])])
        for j in range(2):
            builder.add_equality(builder.var(y[j]) - c[j])
        builder.set_objective(-builder.var(t))
        solution = solve(builder.build())
        assert solution.is_optimal
        assert -solution.objective == pytest.approx(5.0, rel=1e-6)

    def test_rotated_cone(self):
        """maximize y s.t. y² ≤ 2·1 → √2"""
        builder = ProgramBuilder("rotated")
        y = builder.add_block("y", 1)[0]
        builder.add_rotated(2.0, 1.0, [builder.var(y)])
        builder.set_objective(builder.var(y))
        solution = solve(builder.build())
        assert solution.is_optimal
        assert solution.objective == pytest.approx(np.sqrt(2.0), rel=1e-6)
        assert solution.max_violation < 1e-7

    def test_infeasible(self):
        """実行不能はステータスで返る"""
        builder = ProgramBuilder("infeasible")
        x = builder.add_block("x", 1)[0]
        builder.add_nonnegative(builder.var(x) - 2.0)
        builder.add_nonnegative(1.0 - builder.var(x))
        builder.set_objective(builder.var(x))
        solution = solve(builder.build())
        assert solution.status == ConicStatus.INFEASIBLE
        assert solution.x is None

    def test_unbounded(self):
        """非有界はステータスで返る"""
        builder = ProgramBuilder("unbounded")
        x = builder.add_block("x", 1)[0]
        builder.add_nonnegative(builder.var(x))
        builder.set_objective(builder.var(x))
        assert solve(builder.build()).status == ConicStatus.UNBOUNDED

    def test_exponential_cone(self):
        """maximize r s.t. exp(r) ≤ 1 + 1 → log 2"""
        if not supports_exponential_cone():
            pytest.skip("no exponential cone backend")
        builder = ProgramBuilder("exp")
        r = builder.add_block("r", 1)[0]
        builder.add_exponential(builder.var(r), 1.0, 2.0)
        builder.set_objective(builder.var(r))
        solution = solve(builder.build())
        assert solution.is_optimal
        assert solution.objective == pytest.approx(np.log(2.0), rel=1e-6)

    def test_deterministic(self):
        """同じ入力なら同じ解"""
        builder = ProgramBuilder("repeat")
        x = builder.add_block("x", 2)
        builder.add_soc(1.0, [builder.var(x[0]), builder.var(x[1])])
        builder.set_objective(builder.var(x[0]) + 2.0 * builder.var(x[1]))
        program = builder.build()
        first, second = solve(program), solve(program)
        np.testing.assert_allclose(first.x, second.x, rtol=0, atol=1e-12)

    def test_tolerance_from_config(self):
        """設定からソルバー固有キーへの変換"""
        tolerance = SolverTolerance.from_config(SolverConfig(solver="clarabel", tol_feas=1e-7))
        options = tolerance.solver_options()
        assert tolerance.solver == "CLARABEL"
        assert options["tol_feas"] == 1e-7
        assert options["max_iter"] == 200

    def test_attempt_order(self):
        """元の設定 → 緩めた同じソルバー → 代替ソルバーの順"""
        attempts = SolverTolerance().attempts()
        assert attempts[0] == SolverTolerance()
        assert attempts[1].solver == "CLARABEL"
        assert attempts[1].tol_feas == attempts[1].tol_gap == 1e-6
        assert attempts[1].max_iter == 400
        if "SCS" in cp.installed_solvers():
            assert attempts[2].solver == "SCS"
            assert attempts[2].tol_feas == 1e-6
            assert len(attempts) == 3
        else:
            assert len(attempts) == 2

    def test_fallback_after_numerical_failure(self, monkeypatch):
        """初回が数値的失敗でも次の設定で最適解が得られる"""
        calls = []
        original = solver_module._solve_once

        def flaky(program, tolerance):
            calls.append(tolerance)
            if len(calls) == 1:
                return ConicSolution(ConicStatus.NUMERICAL_FAILURE, None, float("nan"), 0.5)
            return original(program, tolerance)

        monkeypatch.setattr(solver_module, "_solve_once", flaky)

        builder = ProgramBuilder("box")
        x = builder.add_block("x", 1)[0]
        builder.add_nonnegative(builder.var(x))
        builder.add_nonnegative(1.0 - builder.var(x))
        builder.set_objective(builder.var(x))
        solution = solve(builder.build())
        assert solution.is_optimal
        assert solution.objective == pytest.approx(1.0, abs=1e-5)
        assert len(calls) == 2
        assert calls[1].tol_feas == 1e-6
        assert solution.solve_time_s >= 0.5

    def test_infeasible_not_retried(self, monkeypatch):
        """実行不能は再試行しない"""
        calls = []
        original = solver_module._solve_once

        def counted(program, tolerance):
            calls.append(tolerance)
            return original(program, tolerance)

        monkeypatch.setattr(solver_module, "_solve_once", counted)
        builder = ProgramBuilder("infeasible")
        x = builder.add_block("x", 1)[0]
        builder.add_nonnegative(builder.var(x) - 2.0)
        builder.add_nonnegative(1.0 - builder.var(x))
        builder.set_objective(builder.var(x))
        assert solve(builder.build()).status == ConicStatus.INFEASIBLE
        assert len(calls) == 1

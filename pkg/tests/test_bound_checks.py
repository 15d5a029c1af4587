#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
凸近似の乱数検査のテスト
"""

from src.verification.bound_checks import BoundCheckReport, check_bounds, check_power_ordering


class TestBoundChecks:
    """近似の性質検査のテスト"""

    def test_no_violations(self):
        """全ての近似で違反なし"""
        report = check_bounds(200, seed=0)
        assert report.passed, report.violations[:5]

    def test_summary_covers_every_bound(self):
        """サマリーに全ての近似が現れる"""
        summary = check_bounds(20, seed=1).summary()
        assert list(summary.columns) == ["bound", "check", "samples", "violations"]
        bounds = set(summary["bound"])
        assert {"psi", "upsilon", "xi", "delta"} <= bounds
        assert any(b.startswith("smoothing_") for b in bounds)
        assert int(summary["violations"].sum()) == 0

    def test_deterministic(self):
        """同じシードなら同じ検査数"""
        assert check_bounds(10, seed=3).checks == check_bounds(10, seed=3).checks


class TestPowerOrdering:
    """選択変数による電力の順序のテスト"""

    def test_holds(self):
        """a ∈ (0,1)、m ≥ 1 で順序が成り立つ"""
        report = check_power_ordering(1000)
        assert report.passed
        assert report.checks["power_ordering:chi_m_vs_chi_1"] == 1000


class TestBoundCheckReport:
    """検査レポートのテスト"""

    def test_record_violation(self):
        """許容誤差を超えたギャップは違反として残る"""
        report = BoundCheckReport(sample_count=1)
        report.record("xi", "lower", 0, 1e-3, 1e-10)
        report.record("xi", "lower", 1, 0.0, 1e-10)
        assert not report.passed
        assert len(report.violations) == 1
        row = report.summary().iloc[0]
        assert (row["samples"], row["violations"]) == (2, 1)

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
凸近似の性質検査
乱数サンプルで Ψ・Υ・Ξ・Δ・平滑化関数の上界について、片側性・展開点での一致・
1次の一致（中心差分）を検査する。電力モデルの順序 ||ŵ||²/a^m ≥ ||ŵ||²/a ≥ ||ŵ||² も検査する
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np
import pandas as pd

from ..optimization.bounds import delta, psi, smoothing_tangent, smoothing_terms, upsilon, xi
from ..utils.logger import LogContext, log


VALUE_TOL = 1e-10
GRADIENT_TOL = 1e-5
FD_STEP = 1e-5



@dataclass(frozen=True)
class BoundViolation:
    bound: str
    check: str
    sample: int
    gap: float


@dataclass
class BoundCheckReport:
    """検査結果（違反は列挙し、例外にはしない）"""
    sample_count: int
    checks: Dict[str, int] = field(default_factory=dict)
    violations: List[BoundViolation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def record(self, bound: str, check: str, sample: int, gap: float, tol: float) -> None:
        key = f"{bound}:{check}"
        self.checks[key] = self.checks.get(key, 0) + 1
        if gap > tol:
            self.violations.append(BoundViolation(bound, check, sample, gap))

    def summary(self) -> pd.DataFrame:
        """上界・検査種別ごとの検査数と違反数"""
        rows = []
        for key, count in sorted(self.checks.items()):
            bound, check = key.split(":")
            failures = sum(1 for v in self.violations if v.bound == bound and v.check == check)
            rows.append({"bound": bound, "check": check, "samples": count, "violations": failures})
        return pd.DataFrame(rows, columns=["bound", "check", "samples", "violations"])


def _scale(value: float) -> float:
    return max(1.0, abs(value))


def _check_scalar(report: BoundCheckReport, name: str, sample: int,
                  exact: Callable[[float], float], surrogate: Callable[[float], float],
                  at: float, expansion: float, lower: bool = True) -> None:
    """1変数の片側性・一致・微分一致（lower=False なら上界として検査）"""
    f, s = exact(at), surrogate(at)
    one_sided = s - f if lower else f - s
    report.record(name, "one_sided", sample, one_sided / _scale(f), VALUE_TOL)
    f0, s0 = exact(expansion), surrogate(expansion)
    report.record(name, "tight", sample, abs(f0 - s0) / _scale(f0), VALUE_TOL)
    d_exact = (exact(expansion + FD_STEP) - exact(expansion - FD_STEP)) / (2 * FD_STEP)
    d_surrogate = (surrogate(expansion + FD_STEP) - surrogate(expansion - FD_STEP)) / (2 * FD_STEP)
    report.record(name, "gradient", sample, abs(d_exact - d_surrogate) / _scale(d_surrogate), GRADIENT_TOL)


def _check_psi(report: BoundCheckReport, rng: np.random.Generator, sample: int) -> None:
    n = int(rng.integers(1, 6))
    draw = lambda: rng.standard_normal(n) + 1j * rng.standard_normal(n)  # noqa: E731
    h, w_n, w, direction = draw(), draw(), draw(), draw()
    beta_n, beta = rng.uniform(0.1, 10.0, size=2)
    d_beta = rng.standard_normal()
    coeffs = psi(h, w_n, beta_n)

    def exact(t: float) -> float:
        return abs(np.vdot(h, w_n + t * direction)) ** 2 / (beta_n + t * d_beta)

    def surrogate(t: float) -> float:
        return coeffs.evaluate(w_n + t * direction, beta_n + t * d_beta)

    f, s = abs(np.vdot(h, w)) ** 2 / beta, coeffs.evaluate(w, beta)
    report.record("psi", "one_sided", sample, (s - f) / _scale(f), VALUE_TOL)
    f0, s0 = exact(0.0), surrogate(0.0)
    report.record("psi", "tight", sample, abs(f0 - s0) / _scale(f0), VALUE_TOL)
    d_exact = (exact(FD_STEP) - exact(-FD_STEP)) / (2 * FD_STEP)
    d_surrogate = (surrogate(FD_STEP) - surrogate(-FD_STEP)) / (2 * FD_STEP)
    report.record("psi", "gradient", sample, abs(d_exact - d_surrogate) / _scale(d_surrogate), GRADIENT_TOL)


def _check_upsilon(report: BoundCheckReport, rng: np.random.Generator, sample: int) -> None:
    chi = float(rng.uniform(1.0, 4.0))
    a_n, a = rng.uniform(0.05, 0.95), rng.uniform(0.0, 1.0)
    coeffs = upsilon(a_n, chi)
    _check_scalar(report, "upsilon", sample, lambda t: t ** chi, coeffs.evaluate, a, a_n)


def _check_xi(report: BoundCheckReport, rng: np.random.Generator, sample: int) -> None:
    gamma_n, gamma = 10.0 ** rng.uniform(-2.0, 2.0, size=2)
    coeffs = xi(gamma_n)
    _check_scalar(report, "xi", sample, np.log1p, coeffs.evaluate, gamma, gamma_n)


def _check_delta(report: BoundCheckReport, rng: np.random.Generator, sample: int) -> None:
    r_n, x_n, r, x = rng.uniform(0.1, 5.0, size=4)
    coeffs = delta(r_n, x_n)
    d_r, d_x = rng.standard_normal(2)

    def exact(t: float) -> float:
        return (r_n + t * d_r) ** 2 / (x_n + t * d_x)

    def surrogate(t: float) -> float:
        return coeffs.evaluate(r_n + t * d_r, x_n + t * d_x)

    f, s = r ** 2 / x, coeffs.evaluate(r, x)
    report.record("delta", "one_sided", sample, (s - f) / _scale(f), VALUE_TOL)
    report.record("delta", "tight", sample, abs(exact(0.0) - surrogate(0.0)) / _scale(exact(0.0)), VALUE_TOL)
    d_exact = (exact(FD_STEP) - exact(-FD_STEP)) / (2 * FD_STEP)
    d_surrogate = (surrogate(FD_STEP) - surrogate(-FD_STEP)) / (2 * FD_STEP)
    report.record("delta", "gradient", sample, abs(d_exact - d_surrogate) / _scale(d_surrogate), GRADIENT_TOL)


def _check_smoothing(report: BoundCheckReport, rng: np.random.Generator, sample: int) -> None:
    varsigma = float(rng.uniform(1.0, 4.0))
    u_n, u = rng.uniform(0.05, 1.0), rng.uniform(0.0, 1.0)
    for kind in ("f2", "f3"):
        constant, slope = (float(v) for v in smoothing_tangent(u_n, kind, varsigma))

        def exact(t: float, kind=kind) -> float:
            return float(smoothing_terms(np.array([max(t, 0.0)]), kind, varsigma)[0])

        _check_scalar(report, f"smoothing_{kind}", sample, exact, lambda t, c=constant, s=slope: c + s * t,
                      u, u_n, lower=False)


def check_bounds(sample_count: int = 1000, seed: int = 0) -> BoundCheckReport:
    """
    全ての凸近似の性質を乱数サンプルで検査

    Args:
        sample_count: 近似ごとのサンプル数
        seed: 乱数シード

    Returns:
        検査レポート（値の許容誤差 1e-10、勾配の許容誤差 1e-5）
    """
    rng = np.random.default_rng(seed)
    report = BoundCheckReport(sample_count)
    with LogContext(f"bound checks ({sample_count} samples)"):
        for sample in range(sample_count):
            _check_psi(report, rng, sample)
            _check_upsilon(report, rng, sample)
            _check_xi(report, rng, sample)
            _check_delta(report, rng, sample)
            _check_smoothing(report, rng, sample)
    if report.violations:
        log.warning(f"{len(report.violations)} bound violations found")
    return report


def check_power_ordering(sample_count: int = 1000, seed: int = 0, max_exponent: float = 4.0) -> BoundCheckReport:
    """
    a ∈ (0,1)、m ≥ 1 で ||ŵ||²/a^m ≥ ||ŵ||²/a ≥ ||ŵ||² が成り立つか検査

    Args:
        sample_count: サンプル数
        seed: 乱数シード
        max_exponent: m の上限

    Returns:
        検査レポート
    """
    rng = np.random.default_rng(seed)
    report = BoundCheckReport(sample_count)
    for sample in range(sample_count):
        power = float(rng.exponential(1.0))
        a = float(rng.uniform(1e-3, 1.0 - 1e-3))
        m = float(rng.uniform(1.0, max_exponent))
        modeled_m, modeled_one = power / a ** m, power / a
        report.record("power_ordering", "chi_m_vs_chi_1", sample, (modeled_one - modeled_m) / _scale(modeled_m), 1e-12)
        report.record("power_ordering", "chi_1_vs_actual", sample, (power - modeled_one) / _scale(modeled_one), 1e-12)
    return report

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
凸近似（Ψ・Υ・Ξ・Δ・平滑化関数）のテスト
"""

import numpy as np
import pytest

from src.model.performance import interference_plus_noise, sinr_all
from src.model.scenario import BeamformerSet
from src.optimization.bounds import (
    NORM_FLOOR,
    ExpansionPoint,
    delta,
    psi,
    smoothing_majorant,
    smoothing_tangent,
    smoothing_terms,
    smoothing_value,
    upsilon,
    xi,
)
from src.utils.errors import BoundDomainError


class TestPsi:
    """|h^H w|²/β の下界のテスト"""

    def test_tight_at_expansion(self):
        """展開点では元の関数と一致"""
        h = np.array([1.0 + 1j, 0.5 - 2j])
        w_n = np.array([0.3 - 0.1j, 1.2 + 0.4j])
        coeffs = psi(h, w_n, 2.0)
        assert coeffs.evaluate(w_n, 2.0) == pytest.approx(abs(np.vdot(h, w_n)) ** 2 / 2.0)

    def test_lower_bound(self):
        """任意の点で元の関数以下"""
        rng = np.random.default_rng(1)
        h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        coeffs = psi(h, rng.standard_normal(3) + 0j, 1.5)
        for _ in range(100):
            w = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            beta = rng.uniform(0.1, 5.0)
            assert coeffs.evaluate(w, beta) <= abs(np.vdot(h, w)) ** 2 / beta + 1e-12

    def test_zero_expansion(self):
        """w_n=0 なら Ψ ≡ 0"""
        coeffs = psi(np.array([1.0, 2.0]), np.zeros(2), 1.0)
        assert coeffs.evaluate(np.array([3.0, -1.0]), 4.0) == pytest.approx(0.0)

    def test_nonpositive_beta(self):
        """β_n ≤ 0 は定義域エラー"""
        with pytest.raises(BoundDomainError):
            psi(np.ones(2), np.ones(2), 0.0)


class TestUpsilon:
    """a^χ の下界のテスト"""

    def test_unit_expansion(self):
        """a_n=1, χ=2 なら Υ(a)=2a−1"""
        coeffs = upsilon(1.0, 2.0)
        assert coeffs.constant == pytest.approx(-1.0)
        assert coeffs.slope == pytest.approx(2.0)
        assert coeffs.evaluate(1.0) == pytest.approx(1.0)

    def test_identity_at_chi_one(self):
        """χ=1 なら恒等写像"""
        coeffs = upsilon(np.array([0.2, 0.7]), 1.0)
        np.testing.assert_allclose(coeffs.constant, [0.0, 0.0])
        np.testing.assert_allclose(coeffs.slope, [1.0, 1.0])

    def test_arithmetic_example(self):
        """a_n=0.5, χ=2: Υ(0.8) = 0.55 ≤ 0.64"""
        value = upsilon(0.5, 2.0).evaluate(0.8)
        assert value == pytest.approx(0.55)
        assert value <= 0.8 ** 2

    def test_domain(self):
        """χ < 1 や a_n ∉ [0,1] はエラー"""
        with pytest.raises(BoundDomainError):
            upsilon(0.5, 0.5)
        with pytest.raises(BoundDomainError):
            upsilon(1.5, 2.0)


class TestXi:
    """log(1+γ) の下界のテスト"""

    def test_unit_expansion(self):
        """γ_n=1 なら ν1=0.5, ν2=ln2+0.5, Ξ(1)=ln2"""
        coeffs = xi(1.0)
        assert coeffs.nu1 == pytest.approx(0.5)
        assert coeffs.nu2 == pytest.approx(np.log(2.0) + 0.5)
        assert coeffs.evaluate(1.0) == pytest.approx(np.log(2.0))

    def test_derivative_matches(self):
        """展開点での微分は 1/(1+γ_n)"""
        gamma_n, step = 2.5, 1e-6
        coeffs = xi(gamma_n)
        derivative = (coeffs.evaluate(gamma_n + step) - coeffs.evaluate(gamma_n - step)) / (2 * step)
        assert derivative == pytest.approx(1.0 / (1.0 + gamma_n), abs=1e-6)

    def test_lower_bound(self):
        """正の γ で log(1+γ) 以下"""
        coeffs = xi(0.8)
        gamma = np.logspace(-3, 3, 50)
        assert np.all(coeffs.evaluate(gamma) <= np.log1p(gamma) + 1e-12)

    def test_nonpositive(self):
        """γ_n ≤ 0 は定義域エラー"""
        with pytest.raises(BoundDomainError):
            xi(0.0)


class TestDelta:
    """r²/x の下界のテスト"""

    def test_tight(self):
        """(r_n, x_n) = (2, 1) で Δ = 4"""
        assert delta(2.0, 1.0).evaluate(2.0, 1.0) == pytest.approx(4.0)

    def test_lower_bound(self):
        """Δ(3,1) = 8 ≤ 9"""
        assert delta(2.0, 1.0).evaluate(3.0, 1.0) == pytest.approx(8.0)

    def test_zero_rate(self):
        """r=0 なら Δ ≤ 0"""
        assert delta(2.0, 1.0).evaluate(0.0, 1.0) <= 0.0

    def test_domain(self):
        """r_n, x_n は正"""
        with pytest.raises(BoundDomainError):
            delta(0.0, 1.0)


class TestSmoothing:
    """アンテナ数の平滑化関数のテスト"""

    def test_zero_beamformer(self, make_scenario):
        """w=0 なら全て0"""
        scenario = make_scenario()
        w = BeamformerSet.zeros(scenario)
        for kind in ("f1", "f2", "f3"):
            assert smoothing_value(w, scenario, kind) == pytest.approx(0.0)

    def test_f2_equals_f1_at_varsigma_one(self):
        """ς=1 なら f2 ≡ f1"""
        norms = np.array([0.0, 0.1, 0.5, 1.0])
        np.testing.assert_allclose(smoothing_terms(norms, "f2", 1.0), smoothing_terms(norms, "f1", 1.0))

    def test_f3_counts_full_antenna(self):
        """φ=1 のアンテナの f3 項は1"""
        assert smoothing_terms(np.array([1.0]), "f3", 2.0)[0] == pytest.approx(1.0)

    def test_unknown_kind(self):
        """未知の平滑化関数はエラー"""
        with pytest.raises(ValueError):
            smoothing_terms(np.ones(2), "f4", 2.0)

    def test_varsigma_domain(self):
        """ς < 1 はエラー"""
        with pytest.raises(BoundDomainError):
            smoothing_terms(np.ones(2), "f2", 0.5)

    def test_tangent_is_upper_bound(self):
        """凹関数の接線は大域的な上界"""
        u = np.linspace(0.0, 1.0, 41)
        for kind in ("f2", "f3"):
            constant, slope = smoothing_tangent(0.3, kind, 2.0)
            assert np.all(constant + slope * u >= smoothing_terms(u, kind, 2.0) - 1e-12)

    def test_tangent_f1(self):
        """f1 の接線は (0, 1)"""
        constant, slope = smoothing_tangent(np.array([0.0, 0.4]), "f1")
        np.testing.assert_array_equal(constant, [0.0, 0.0])
        np.testing.assert_array_equal(slope, [1.0, 1.0])

    def test_zero_norm_clamped(self):
        """ゼロノルムの傾きは NORM_FLOOR で抑えた有限値"""
        _, slope = smoothing_tangent(0.0, "f2", 2.0)
        assert np.isfinite(slope)
        assert float(slope) == pytest.approx(0.5 * NORM_FLOOR ** -0.5)

    def test_majorant_tight(self, make_scenario):
        """展開点で f̂ = f"""
        scenario = make_scenario(antennas=4)
        w = BeamformerSet.random(scenario, np.random.default_rng(0), 0.3)
        for kind in ("f1", "f2", "f3"):
            majorant = smoothing_majorant(w, scenario, kind, 2.0)
            assert majorant.evaluate(w, scenario) == pytest.approx(smoothing_value(w, scenario, kind, 2.0))

    def test_majorant_f2_matches_f1_at_varsigma_one(self, make_scenario):
        """ς=1 の f2 上界は f1 と一致"""
        scenario = make_scenario(antennas=4)
        rng = np.random.default_rng(2)
        w_n = BeamformerSet.random(scenario, rng, 0.3)
        w = BeamformerSet.random(scenario, rng, 0.3)
        majorant = smoothing_majorant(w_n, scenario, "f2", 1.0)
        assert majorant.evaluate(w, scenario) == pytest.approx(smoothing_value(w, scenario, "f1"))


class TestExpansionPoint:
    """展開点のテスト"""

    def test_from_beamformers_is_tight(self, make_scenario):
        """β と γ は実際の干渉+雑音と SINR"""
        scenario = make_scenario()
        w = BeamformerSet.random(scenario, np.random.default_rng(0), 0.5)
        point = ExpansionPoint.from_beamformers(w, scenario)
        np.testing.assert_allclose(point.beta, interference_plus_noise(w, scenario))
        np.testing.assert_allclose(point.gamma, sinr_all(w, scenario))
        assert all(np.all(a == 1.0) for a in point.a)

    def test_nonpositive_beta(self, make_scenario):
        """β ≤ 0 の展開点はエラー"""
        scenario = make_scenario()
        with pytest.raises(BoundDomainError):
            ExpansionPoint(
                w=BeamformerSet.zeros(scenario),
                beta=np.zeros(scenario.num_users),
                gamma=np.zeros(scenario.num_users),
                a=tuple(np.ones(n) for n in scenario.antennas_per_bs),
            )

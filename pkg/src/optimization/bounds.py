#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
凸近似（逐次凸近似で用いる下界・上界）
Ψ（quad-over-lin の1次下界）・Υ（a^χ の1次下界）・Ξ（log(1+γ) の下界）・Δ（r²/x の1次下界）、
アンテナ数の平滑化関数 f1/f2/f3 とそのアフィン上界
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..model.performance import interference_plus_noise, sinr_all
from ..model.scenario import BeamformerSet, Scenario
from ..utils.errors import BoundDomainError


# Ξ の展開点 γ_n の下限
GAMMA_FLOOR = 1e-9
# f2/f3 の上界構成で正規化アンテナノルムを下から抑える値
NORM_FLOOR = 1e-6

SMOOTHING_KINDS = ("f1", "f2", "f3")

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class ExpansionPoint:
    """SCA の展開点（w, β [W], γ, a, r, x）"""
    w: BeamformerSet
    beta: np.ndarray
    gamma: np.ndarray
    a: Tuple[np.ndarray, ...]
    r: float = float("nan")
    x: float = float("nan")

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        gamma = np.array(self.gamma, dtype=float)
        if np.any(beta <= 0):
            raise BoundDomainError("Expansion point needs beta > 0 for every user")
        if np.any(gamma < 0):
            raise BoundDomainError("Expansion point needs gamma >= 0 for every user")
        a = tuple(np.clip(np.array(ab, dtype=float), 0.0, 1.0) for ab in self.a)
        for arr in (beta, gamma, *a):
            arr.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "a", a)

    @classmethod
    def from_beamformers(cls,
                         w: BeamformerSet,
                         scenario: Scenario,
                         a: Optional[Sequence[np.ndarray]] = None,
                         r: float = float("nan"),
                         x: float = float("nan")) -> "ExpansionPoint":
        """
        ビームフォーマから密着した展開点を作る（β は実際の干渉+雑音、γ は実際のSINR）

        Args:
            w: ビームフォーマ
            scenario: シナリオ
            a: 連続選択変数（省略時は全て1）
            r: √(Σr_g) の展開値
            x: EE変数の展開値

        Returns:
            展開点
        """
        if a is None:
            a = tuple(np.ones(n) for n in scenario.antennas_per_bs)
        return cls(
            w=w,
            beta=interference_plus_noise(w, scenario),
            gamma=sinr_all(w, scenario),
            a=tuple(a),
            r=r,
            x=x,
        )


@dataclass(frozen=True, eq=False)
class PsiCoefficients:
    """Ψ(w, β) = Re(gradient^H w) − beta_coef·β"""
    gradient: np.ndarray
    beta_coef: float

    def evaluate(self, w: np.ndarray, beta: ArrayLike) -> ArrayLike:
        return float(np.vdot(self.gradient, w).real) - self.beta_coef * beta


def psi(h: np.ndarray, w_n: np.ndarray, beta_n: float) -> PsiCoefficients:
    """
    |h^H w|²/β の1次テイラー下界

    Ψ(w,β) = 2Re(w_n^H h h^H w)/β_n − (|h^H w_n|/β_n)²·β

    Args:
        h: チャネルベクトル
        w_n: 展開点のビームフォーマ
        beta_n: 展開点の干渉+雑音（正）

    Returns:
        Ψ の係数
    """
    if not beta_n > 0:
        raise BoundDomainError(f"psi needs beta_n > 0, got {beta_n}")
    c = np.vdot(h, w_n)
    return PsiCoefficients(gradient=2.0 * c * np.asarray(h, dtype=complex) / beta_n,
                           beta_coef=float(abs(c) ** 2 / beta_n ** 2))


@dataclass(frozen=True, eq=False)
class UpsilonCoefficients:
    """Υ(a) = constant + slope·a"""
    constant: ArrayLike
    slope: ArrayLike

    def evaluate(self, a: ArrayLike) -> ArrayLike:
        return self.constant + self.slope * a


def upsilon(a_n: ArrayLike, chi: float) -> UpsilonCoefficients:
    """
    a^χ の1次下界 Υ(a) = (1−χ)a_n^χ + χ·a_n^{χ−1}·a

    Args:
        a_n: 展開点（[0,1]、配列可）
        chi: 指数（1以上）

    Returns:
        Υ の係数
    """
    if chi < 1:
        raise BoundDomainError(f"upsilon needs chi >= 1, got {chi}")
    a_n = np.asarray(a_n, dtype=float)
    if np.any(a_n < 0) or np.any(a_n > 1):
        raise BoundDomainError("upsilon needs a_n in [0, 1]")
    constant = (1.0 - chi) * a_n ** chi
    slope = chi * a_n ** (chi - 1.0)
    if constant.ndim == 0:
        return UpsilonCoefficients(float(constant), float(slope))
    return UpsilonCoefficients(constant, slope)


@dataclass(frozen=True, eq=False)
class XiCoefficients:
    """Ξ(γ) = −nu1/γ + nu2"""
    nu1: ArrayLike
    nu2: ArrayLike

    def evaluate(self, gamma: ArrayLike) -> ArrayLike:
        return -self.nu1 / gamma + self.nu2


def xi(gamma_n: ArrayLike) -> XiCoefficients:
    """
    log(1+γ) の下界

    ν1 = γ_n²/(1+γ_n)、ν2 = log(1+γ_n) + γ_n/(1+γ_n)

    Args:
        gamma_n: 展開点のSINR（正、配列可）

    Returns:
        Ξ の係数
    """
    gamma_n = np.asarray(gamma_n, dtype=float)
    if np.any(gamma_n <= 0):
        raise BoundDomainError("xi needs gamma_n > 0")
    nu1 = gamma_n ** 2 / (1.0 + gamma_n)
    nu2 = np.log1p(gamma_n) + gamma_n / (1.0 + gamma_n)
    if nu1.ndim == 0:
        return XiCoefficients(float(nu1), float(nu2))
    return XiCoefficients(nu1, nu2)


@dataclass(frozen=True)
class DeltaCoefficients:
    """Δ(r, x) = r_coef·r − x_coef·x"""
    r_coef: float
    x_coef: float

    def evaluate(self, r: ArrayLike, x: ArrayLike) -> ArrayLike:
        return self.r_coef * r - self.x_coef * x


def delta(r_n: float, x_n: float) -> DeltaCoefficients:
    """
    r²/x の1次下界 Δ(r,x) = (2r_n/x_n)·r − (r_n/x_n)²·x

    Args:
        r_n: 展開点の r（正）
        x_n: 展開点の x（正）

    Returns:
        Δ の係数
    """
    if not (r_n > 0 and x_n > 0):
        raise BoundDomainError(f"delta needs r_n, x_n > 0, got ({r_n}, {x_n})")
    ratio = r_n / x_n
    return DeltaCoefficients(r_coef=2.0 * ratio, x_coef=ratio ** 2)


def _check_smoothing(kind: str, varsigma: float) -> None:
    if kind not in SMOOTHING_KINDS:
        raise ValueError(f"Unknown smoothing kind: {kind}")
    if varsigma < 1:
        raise BoundDomainError(f"varsigma must be >= 1, got {varsigma}")


def smoothing_terms(norms: np.ndarray, kind: str, varsigma: float) -> np.ndarray:
    """
    正規化アンテナノルム φ = ||ŵ||/√P_max ごとの平滑化項

    f1: φ、f2: φ^{1/ς}、f3: log2(1+φ^{1/ς})
    """
    _check_smoothing(kind, varsigma)
    norms = np.asarray(norms, dtype=float)
    if kind == "f1":
        return norms
    powered = norms ** (1.0 / varsigma)
    if kind == "f2":
        return powered
    return np.log2(1.0 + powered)


def normalized_norms(w: BeamformerSet, scenario: Scenario) -> Tuple[np.ndarray, ...]:
    """基地局ごとの ||ŵ_{b,i}||₂/√P_max"""
    scale = np.sqrt(scenario.power.p_max)
    return tuple(n / scale for n in w.antenna_norms(scenario))


def smoothing_value(w: BeamformerSet, scenario: Scenario, kind: str, varsigma: float = 2.0) -> float:
    """平滑化されたアクティブアンテナ数 f(w)"""
    return float(sum(np.sum(smoothing_terms(u, kind, varsigma)) for u in normalized_norms(w, scenario)))


@dataclass(frozen=True, eq=False)
class SmoothingMajorant:
    """
    f̂(w) = Σ_{b,i} (constants[b][i] + slopes[b][i]·φ_{b,i})、φ は正規化アンテナノルム
    """
    constants: Tuple[np.ndarray, ...]
    slopes: Tuple[np.ndarray, ...]

    def evaluate_norms(self, norms: Sequence[np.ndarray]) -> float:
        return float(sum(np.sum(c + s * u) for c, s, u in zip(self.constants, self.slopes, norms)))

    def evaluate(self, w: BeamformerSet, scenario: Scenario) -> float:
        return self.evaluate_norms(normalized_norms(w, scenario))


def smoothing_tangent(u_n: ArrayLike, kind: str, varsigma: float = 2.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    正規化ノルム u_n における平滑化項の接線 (切片, 傾き)

    f1 は (0, 1)。f2/f3 は u_n を NORM_FLOOR で下から抑える
    """
    _check_smoothing(kind, varsigma)
    u = np.asarray(u_n, dtype=float)
    if kind == "f1":
        return np.zeros_like(u), np.ones_like(u)
    u = np.maximum(u, NORM_FLOOR)
    exponent = 1.0 / varsigma
    derivative = exponent * u ** (exponent - 1.0)
    if kind == "f3":
        derivative = derivative / ((1.0 + u ** exponent) * np.log(2.0))
    return smoothing_terms(u, kind, varsigma) - derivative * u, derivative


def smoothing_majorant(w_n: BeamformerSet, scenario: Scenario, kind: str, varsigma: float = 2.0) -> SmoothingMajorant:
    """
    平滑化関数の1次展開（ノルムについて凹なので大域的な上界）

    ゼロノルムのアンテナは NORM_FLOOR で下から抑えて勾配の発散を避ける

    Args:
        w_n: 展開点のビームフォーマ
        scenario: シナリオ
        kind: f1 / f2 / f3
        varsigma: 急峻さパラメータ ς ≥ 1

    Returns:
        アフィン上界の係数
    """
    constants, slopes = [], []
    for u in normalized_norms(w_n, scenario):
        constant, slope = smoothing_tangent(u, kind, varsigma)
        constants.append(constant)
        slopes.append(slope)
    return SmoothingMajorant(tuple(constants), tuple(slopes))

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
凸部分問題の構築
Charnes-Cooper 変換した SCA 部分問題（指数錐版・SOCP版）、固定アンテナ再最適化問題、
スパース化部分問題、スカラー化部分問題、実行可能点探索問題を ConicProgram として組み立てる

部分問題内のチャネルは雑音電力で正規化（h/√N0）し、β は N0 を単位とする
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bounds import (
    GAMMA_FLOOR,
    ExpansionPoint,
    delta,
    psi,
    smoothing_majorant,
    upsilon,
    xi,
)
from ..conic.program import AffineExpression, ConicProgram, ProgramBuilder
from ..conic.solver import ConicSolution
from ..model.performance import group_rate_targets_nats, min_active_antennas
from ..model.scenario import BeamformerSet, Scenario


RATE_ROW_KINDS = ("xi", "exponential")

Mask = Sequence[np.ndarray]


@dataclass(frozen=True)
class SubproblemOptions:
    """部分問題の構成オプション"""
    chi: float = 2.0
    kappa: float = 1.0
    remark1: bool = True
    rate_rows: str = "xi"

    def __post_init__(self):
        if self.chi < 1:
            raise ValueError(f"chi must be >= 1, got {self.chi}")
        if not 0 <= self.kappa <= 1:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.rate_rows not in RATE_ROW_KINDS:
            raise ValueError(f"Unknown rate row kind: {self.rate_rows}")


@dataclass(frozen=True, eq=False)
class RecoveredPoint:
    """部分問題の解から復元した元変数（β は W 単位、レートは nat/s/Hz）"""
    w: BeamformerSet
    beta: np.ndarray
    gamma: np.ndarray
    rates: np.ndarray
    objective: float
    a: Optional[Tuple[np.ndarray, ...]] = None
    v: Optional[Tuple[np.ndarray, ...]] = None
    norms: Optional[Tuple[np.ndarray, ...]] = None
    transmit_power: float = float("nan")
    sqrt_rate: float = float("nan")
    ee_variable: float = float("nan")


@dataclass(frozen=True, eq=False)
class LiftedSolution:
    """Charnes-Cooper 変換後の解（φ とバー付き変数）と φ で割って復元した点"""
    phi: float
    lifted: Dict[str, np.ndarray]
    point: RecoveredPoint


@dataclass(frozen=True, eq=False)
class SlackBundle:
    """実行可能点探索問題のスラック変数"""
    q1: np.ndarray
    q2: np.ndarray
    p: Tuple[np.ndarray, ...]
    mu: np.ndarray

    def max_slack(self) -> float:
        values = [self.q1, self.q2, self.mu, *self.p]
        return float(max((np.max(v) for v in values if v.size), default=0.0))

    def is_feasible(self, slack_tol: float) -> bool:
        return self.max_slack() <= slack_tol

    def violated_groups(self, slack_tol: float) -> List[int]:
        return [int(g) for g in np.flatnonzero(self.mu > slack_tol)]


def _normalized_channels(scenario: Scenario) -> Tuple[np.ndarray, ...]:
    scale = 1.0 / np.sqrt(scenario.n0_linear)
    return tuple(scale * h for h in scenario.channels)


def _antenna_offsets(scenario: Scenario) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(scenario.antennas_per_bs)])


def _split_per_bs(flat: np.ndarray, scenario: Scenario) -> Tuple[np.ndarray, ...]:
    offsets = _antenna_offsets(scenario)
    return tuple(np.array(flat[offsets[b]:offsets[b + 1]]) for b in range(scenario.num_bs))


class _BeamformerLayout:
    """w_g の実部・虚部を変数に割り当てる（マスクでオフのアンテナは変数を持たない）"""

    def __init__(self, builder: Optional[ProgramBuilder], scenario: Scenario, mask: Optional[Mask] = None,
                 program: Optional[ConicProgram] = None):
        self.scenario = scenario
        self.re: List[np.ndarray] = []
        self.im: List[np.ndarray] = []
        for g, group in enumerate(scenario.groups):
            n = scenario.group_antennas(g)
            active = np.ones(n, dtype=bool) if mask is None else np.asarray(mask[group.bs], dtype=bool)
            count = int(np.count_nonzero(active))
            if program is not None:
                block = program.blocks[f"w[{g}]"]
            else:
                block = builder.add_block(f"w[{g}]", 2 * count)
            re = np.full(n, -1, dtype=int)
            im = np.full(n, -1, dtype=int)
            re[active] = block[:count]
            im[active] = block[count:]
            self.re.append(re)
            self.im.append(im)

    def inner(self, g: int, vector: np.ndarray) -> Tuple[AffineExpression, AffineExpression]:
        """(Re(v^H w_g), Im(v^H w_g))"""
        vr, vi = vector.real, vector.imag
        indices = np.concatenate([self.re[g], self.im[g]])
        real = AffineExpression.linear(indices, np.concatenate([vr, vi]))
        imag = AffineExpression.linear(indices, np.concatenate([-vi, vr]))
        return real, imag

    def antenna_entries(self, b: int, i: int) -> List[AffineExpression]:
        """アンテナ行 ŵ_{b,i} の実部・虚部（有効な変数のみ）"""
        entries = []
        for g in self.scenario.groups_of_bs(b):
            if self.re[g][i] >= 0:
                entries.append(AffineExpression.variable(self.re[g][i]))
                entries.append(AffineExpression.variable(self.im[g][i]))
        return entries

    def all_entries(self) -> List[AffineExpression]:
        return [AffineExpression.variable(j) for idx in (*self.re, *self.im) for j in idx if j >= 0]

    def is_active(self, b: int, i: int) -> bool:
        return any(self.re[g][i] >= 0 for g in self.scenario.groups_of_bs(b))

    def extract(self, x: np.ndarray, scale: float = 1.0) -> BeamformerSet:
        vectors = []
        for re, im in zip(self.re, self.im):
            w = np.zeros(re.shape[0], dtype=complex)
            active = re >= 0
            w[active] = (x[re[active]] + 1j * x[im[active]]) / scale
            vectors.append(w)
        return BeamformerSet(tuple(vectors))


def _add_psi_rows(builder: ProgramBuilder, scenario: Scenario, ep: ExpansionPoint, layout: _BeamformerLayout,
                  gamma: np.ndarray, beta: np.ndarray, slack: Optional[np.ndarray] = None) -> None:
    """γ_k ≤ Ψ_k(w_g, β_k)（スラック付きなら γ_k − Ψ_k ≤ q1_k）"""
    channels = _normalized_channels(scenario)
    beta_n = ep.beta / scenario.n0_linear
    owner = scenario.user_group
    for k in range(scenario.num_users):
        g = owner[k]
        coeffs = psi(channels[scenario.groups[g].bs][k], ep.w.vectors[g], beta_n[k])
        surrogate, _ = layout.inner(g, coeffs.gradient)
        row = surrogate - coeffs.beta_coef * builder.var(beta[k]) - builder.var(gamma[k])
        if slack is not None:
            row = row + builder.var(slack[k])
        builder.add_nonnegative(row, f"psi[{k}]")


def _add_interference_rows(builder: ProgramBuilder, scenario: Scenario, layout: _BeamformerLayout,
                           beta: np.ndarray, scale: AffineExpression, slack: Optional[np.ndarray] = None) -> None:
    """φ·β̄_k ≥ φ² + Σ_{u≠g}|h̃^H w̄_u|²（回転二次錐、y1=[φ, I_u…], y2=φ, y3=β̄_k）"""
    channels = _normalized_channels(scenario)
    owner = scenario.user_group
    for k in range(scenario.num_users):
        entries = [scale]
        for u, group in enumerate(scenario.groups):
            if u == owner[k]:
                continue
            entries.extend(layout.inner(u, channels[group.bs][k]))
        upper = builder.var(beta[k])
        if slack is not None:
            upper = upper + builder.var(slack[k])
        builder.add_rotated(scale, upper, entries, f"interference[{k}]")


def _add_rate_rows(builder: ProgramBuilder, scenario: Scenario, ep: ExpansionPoint, gamma: np.ndarray,
                   rates: np.ndarray, scale: AffineExpression, rate_rows: str) -> None:
    """r̄_g ≤ φ·log(1+γ̄_k/φ)（指数錐）または r̄_g ≤ φ·Ξ_k(γ̄_k/φ)（回転二次錐）"""
    owner = scenario.user_group
    if rate_rows == "exponential":
        for k in range(scenario.num_users):
            g = owner[k]
            builder.add_exponential(builder.var(rates[g]), scale, scale + builder.var(gamma[k]), f"rate[{k}]")
        return
    coeffs = xi(np.maximum(ep.gamma, GAMMA_FLOOR))
    for k in range(scenario.num_users):
        g = owner[k]
        # ν1·φ² ≤ γ̄_k·(ν2·φ − r̄_g)
        builder.add_rotated(
            builder.var(gamma[k]),
            coeffs.nu2[k] * scale - builder.var(rates[g]),
            [np.sqrt(coeffs.nu1[k]) * scale],
            f"rate[{k}]",
        )


def _add_target_rows(builder: ProgramBuilder, scenario: Scenario, rates: np.ndarray, scale: AffineExpression,
                     slack: Optional[np.ndarray] = None, margin: float = 0.0) -> None:
    """r̄_g ≥ φ·max_{k∈K_g} R̄_k"""
    targets = group_rate_targets_nats(scenario) * (1.0 + margin)
    for g in range(scenario.num_groups):
        row = builder.var(rates[g]) - targets[g] * scale
        if slack is not None:
            row = row + builder.var(slack[g])
        builder.add_nonnegative(row, f"target[{g}]")


def _add_remark1_rows(builder: ProgramBuilder, scenario: Scenario, a: np.ndarray, scale: AffineExpression) -> None:
    """Σ_i ā_{b,i} ≥ φ·X_b"""
    offsets = _antenna_offsets(scenario)
    for b, required in enumerate(min_active_antennas(scenario)):
        if required > 0:
            row = AffineExpression.linear(a[offsets[b]:offsets[b + 1]], np.ones(scenario.antennas_per_bs[b]))
            builder.add_nonnegative(row - float(required) * scale, f"remark1[{b}]")


def _add_power_epigraph(builder: ProgramBuilder, layout: _BeamformerLayout, power: int,
                        scale: AffineExpression) -> None:
    """Σ||w̄_g||² ≤ φ·s̄"""
    entries = layout.all_entries()
    if entries:
        builder.add_rotated(scale, builder.var(power), entries, "transmit_power")
    else:
        builder.add_nonnegative(builder.var(power), "transmit_power")


def build_cc_subproblem(scenario: Scenario, ep: ExpansionPoint, options: SubproblemOptions) -> ConicProgram:
    """
    Charnes-Cooper 変換した SCA 部分問題

    変数順: w̄[g]（実部・虚部）, γ̄, β̄, v̄, ā, r̄, φ

    Args:
        scenario: シナリオ
        ep: 展開点
        options: 構成オプション（χ, κ, アンテナ電力の追加行, レート行の形式）

    Returns:
        錐計画（maximize Σ r̄_g）
    """
    pm = scenario.power
    builder = ProgramBuilder("socp_subproblem" if options.rate_rows == "xi" else "cc_subproblem")
    layout = _BeamformerLayout(builder, scenario)
    total = scenario.total_antennas
    gamma = builder.add_block("gamma", scenario.num_users)
    beta = builder.add_block("beta", scenario.num_users)
    v = builder.add_block("v", total)
    a = builder.add_block("a", total)
    rates = builder.add_block("r", scenario.num_groups)
    phi = builder.var(builder.add_block("phi", 1)[0])

    # 電力制約 κ·Σ((1/η)v̄ + P_RF·ā) + φ·P0 ≤ 1
    adjustable = AffineExpression.linear(
        np.concatenate([v, a]),
        np.concatenate([np.full(total, 1.0 / pm.eta), np.full(total, pm.p_rf)]),
    )
    builder.add_nonnegative(1.0 - options.kappa * adjustable - scenario.p0 * phi, "power_budget")

    offsets = _antenna_offsets(scenario)
    for b in range(scenario.num_bs):
        surrogate = upsilon(ep.a[b], options.chi)
        constants = np.broadcast_to(surrogate.constant, (scenario.antennas_per_bs[b],))
        slopes = np.broadcast_to(surrogate.slope, (scenario.antennas_per_bs[b],))
        for i in range(scenario.antennas_per_bs[b]):
            j = offsets[b] + i
            v_j, a_j = builder.var(v[j]), builder.var(a[j])
            # ||ŵ̄||² ≤ v̄·(φ·x_n + ā·z_n)
            entries = layout.antenna_entries(b, i)
            if entries:
                builder.add_rotated(v_j, constants[i] * phi + slopes[i] * a_j, entries, f"antenna[{b},{i}]")
            else:
                builder.add_nonnegative(v_j, f"antenna[{b},{i}]")
            builder.add_nonnegative(pm.p_max * phi - v_j, f"v_max[{b},{i}]")
            builder.add_nonnegative(a_j, f"a_min[{b},{i}]")
            builder.add_nonnegative(phi - a_j, f"a_max[{b},{i}]")

    if options.remark1:
        _add_remark1_rows(builder, scenario, a, phi)
    _add_psi_rows(builder, scenario, ep, layout, gamma, beta)
    _add_target_rows(builder, scenario, rates, phi)
    _add_interference_rows(builder, scenario, layout, beta, phi)
    _add_rate_rows(builder, scenario, ep, gamma, rates, phi, options.rate_rows)
    builder.add_nonnegative(phi, "phi")

    builder.set_objective(AffineExpression.linear(rates, np.ones(scenario.num_groups)))
    return builder.build()


def build_socp_subproblem(scenario: Scenario, ep: ExpansionPoint, options: SubproblemOptions) -> ConicProgram:
    """SCA 部分問題のSOCP版（レート行を Ξ の回転二次錐で表す）"""
    socp_options = SubproblemOptions(chi=options.chi, kappa=options.kappa, remark1=options.remark1, rate_rows="xi")
    return build_cc_subproblem(scenario, ep, socp_options)


def build_refit_subproblem(scenario: Scenario, ep: ExpansionPoint, mask: Mask,
                           options: SubproblemOptions) -> ConicProgram:
    """
    アンテナ集合を固定したビームフォーミングのみの部分問題（Charnes-Cooper 変換）

    変数順: w̄[g]（選択アンテナのみ）, γ̄, β̄, s̄, r̄, φ

    Args:
        scenario: シナリオ
        ep: 展開点
        mask: 基地局ごとのアンテナ選択マスク
        options: 構成オプション（κ とレート行の形式を使用）

    Returns:
        錐計画（maximize Σ r̄_g）
    """
    pm = scenario.power
    builder = ProgramBuilder("refit_subproblem")
    layout = _BeamformerLayout(builder, scenario, mask)
    gamma = builder.add_block("gamma", scenario.num_users)
    beta = builder.add_block("beta", scenario.num_users)
    power = builder.add_block("s", 1)[0]
    rates = builder.add_block("r", scenario.num_groups)
    phi = builder.var(builder.add_block("phi", 1)[0])

    active = float(sum(int(np.count_nonzero(m)) for m in mask))
    adjustable = builder.var(power, 1.0 / pm.eta) + pm.p_rf * active * phi
    builder.add_nonnegative(1.0 - options.kappa * adjustable - scenario.p0 * phi, "power_budget")
    _add_power_epigraph(builder, layout, power, phi)

    for b in range(scenario.num_bs):
        for i in range(scenario.antennas_per_bs[b]):
            entries = layout.antenna_entries(b, i)
            if entries:
                builder.add_soc(np.sqrt(pm.p_max) * phi, entries, f"antenna[{b},{i}]")

    _add_psi_rows(builder, scenario, ep, layout, gamma, beta)
    _add_target_rows(builder, scenario, rates, phi)
    _add_interference_rows(builder, scenario, layout, beta, phi)
    _add_rate_rows(builder, scenario, ep, gamma, rates, phi, options.rate_rows)
    builder.add_nonnegative(phi, "phi")

    builder.set_objective(AffineExpression.linear(rates, np.ones(scenario.num_groups)))
    return builder.build()


def build_sparsity_subproblem(scenario: Scenario, ep: ExpansionPoint, kind: str, rho: float, varsigma: float,
                              options: Optional[SubproblemOptions] = None) -> ConicProgram:
    """
    アンテナ数を平滑化関数で数えるスパース化部分問題（Charnes-Cooper 変換）

    電力制約: (1/η)Σ||w̄_g||²/φ + (P_RF+ρ)·f̂ + φ·P0 ≤ 1、f̂ は f1 そのものか f2/f3 のアフィン上界

    変数順: w̄[g], γ̄, β̄, t̄（アンテナ行ノルムのエピグラフ）, s̄, r̄, φ

    Args:
        scenario: シナリオ
        ep: 展開点
        kind: f1 / f2 / f3
        rho: スパース化の重み（0以上）
        varsigma: 平滑化の急峻さ ς
        options: 構成オプション（レート行の形式を使用）

    Returns:
        錐計画（maximize Σ r̄_g）
    """
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    options = options or SubproblemOptions()
    pm = scenario.power
    builder = ProgramBuilder(f"sparsity_subproblem_{kind}")
    layout = _BeamformerLayout(builder, scenario)
    total = scenario.total_antennas
    gamma = builder.add_block("gamma", scenario.num_users)
    beta = builder.add_block("beta", scenario.num_users)
    norms = builder.add_block("t", total)
    power = builder.add_block("s", 1)[0]
    rates = builder.add_block("r", scenario.num_groups)
    phi_index = builder.add_block("phi", 1)[0]
    phi = builder.var(phi_index)

    majorant = smoothing_majorant(ep.w, scenario, kind, varsigma)
    constants = np.concatenate(majorant.constants)
    slopes = np.concatenate(majorant.slopes)
    root_pmax = np.sqrt(pm.p_max)
    # φ·f̂(w̄/φ) = Σ (c·φ + d·t̄/√P_max)
    smoothed = AffineExpression.linear(
        np.concatenate([[phi_index], norms]),
        np.concatenate([[float(np.sum(constants))], slopes / root_pmax]),
    )
    budget = builder.var(power, 1.0 / pm.eta) + (pm.p_rf + rho) * smoothed + scenario.p0 * phi
    builder.add_nonnegative(1.0 - budget, "power_budget")
    _add_power_epigraph(builder, layout, power, phi)

    offsets = _antenna_offsets(scenario)
    for b in range(scenario.num_bs):
        for i in range(scenario.antennas_per_bs[b]):
            t_j = builder.var(norms[offsets[b] + i])
            entries = layout.antenna_entries(b, i)
            if entries:
                builder.add_soc(t_j, entries, f"antenna_norm[{b},{i}]")
            else:
                builder.add_nonnegative(t_j, f"antenna_norm[{b},{i}]")
            builder.add_nonnegative(root_pmax * phi - t_j, f"antenna_max[{b},{i}]")

    _add_psi_rows(builder, scenario, ep, layout, gamma, beta)
    _add_target_rows(builder, scenario, rates, phi)
    _add_interference_rows(builder, scenario, layout, beta, phi)
    _add_rate_rows(builder, scenario, ep, gamma, rates, phi, options.rate_rows)
    builder.add_nonnegative(phi, "phi")

    builder.set_objective(AffineExpression.linear(rates, np.ones(scenario.num_groups)))
    return builder.build()


def build_scalarization_subproblem(scenario: Scenario, ep: ExpansionPoint, varrho: float, p_min: float,
                                   options: SubproblemOptions, mask: Optional[Mask] = None) -> ConicProgram:
    """
    EE と総レートのスカラー化部分問題（Charnes-Cooper 変換なし）

    maximize x + ϱ·Σr_g/P_min s.t. g(v,a) + P0 ≤ Δ(r,x)、r² ≤ Σr_g、Υ・Ψ 行と共通行。
    mask を与えると a を固定し、Υ 行の代わりに Σ||w||² ≤ s とアンテナ電力上限を用いる

    変数順: w[g], γ, β, (v, a | s), r_g, r, x

    Args:
        scenario: シナリオ
        ep: 展開点（r, x > 0 が必要）
        varrho: 総レートの重み ϱ
        p_min: 最小電力 P_min
        options: 構成オプション
        mask: 固定するアンテナ選択（省略時は連続緩和）

    Returns:
        錐計画
    """
    if varrho < 0:
        raise ValueError(f"varrho must be >= 0, got {varrho}")
    if p_min <= 0:
        raise ValueError(f"p_min must be > 0, got {p_min}")
    pm = scenario.power
    one = AffineExpression(constant=1.0)
    builder = ProgramBuilder("scalarization_subproblem" if mask is None else "scalarization_refit_subproblem")
    layout = _BeamformerLayout(builder, scenario, mask)
    total = scenario.total_antennas
    gamma = builder.add_block("gamma", scenario.num_users)
    beta = builder.add_block("beta", scenario.num_users)
    offsets = _antenna_offsets(scenario)

    if mask is None:
        v = builder.add_block("v", total)
        a = builder.add_block("a", total)
        adjustable = AffineExpression.linear(
            np.concatenate([v, a]),
            np.concatenate([np.full(total, 1.0 / pm.eta), np.full(total, pm.p_rf)]),
        )
    else:
        power = builder.add_block("s", 1)[0]
        active = float(sum(int(np.count_nonzero(m)) for m in mask))
        adjustable = builder.var(power, 1.0 / pm.eta) + pm.p_rf * active
    rates = builder.add_block("r", scenario.num_groups)
    sqrt_rate = builder.var(builder.add_block("r_sqrt", 1)[0])
    ee = builder.var(builder.add_block("x", 1)[0])

    # g(v,a) + P0 ≤ Δ(r, x)
    bound = delta(ep.r, ep.x)
    builder.add_nonnegative(bound.r_coef * sqrt_rate - bound.x_coef * ee - adjustable - scenario.p0, "ee_bound")
    builder.add_nonnegative(ee, "x_min")
    # r² ≤ Σ r_g
    builder.add_rotated(one, AffineExpression.linear(rates, np.ones(scenario.num_groups)), [sqrt_rate], "sqrt_rate")

    if mask is None:
        for b in range(scenario.num_bs):
            surrogate = upsilon(ep.a[b], options.chi)
            constants = np.broadcast_to(surrogate.constant, (scenario.antennas_per_bs[b],))
            slopes = np.broadcast_to(surrogate.slope, (scenario.antennas_per_bs[b],))
            for i in range(scenario.antennas_per_bs[b]):
                j = offsets[b] + i
                v_j, a_j = builder.var(v[j]), builder.var(a[j])
                entries = layout.antenna_entries(b, i)
                if entries:
                    builder.add_rotated(v_j, constants[i] + slopes[i] * a_j, entries, f"antenna[{b},{i}]")
                else:
                    builder.add_nonnegative(v_j, f"antenna[{b},{i}]")
                builder.add_nonnegative(pm.p_max - v_j, f"v_max[{b},{i}]")
                builder.add_nonnegative(a_j, f"a_min[{b},{i}]")
                builder.add_nonnegative(1.0 - a_j, f"a_max[{b},{i}]")
        if options.remark1:
            _add_remark1_rows(builder, scenario, a, one)
    else:
        _add_power_epigraph(builder, layout, power, one)
        for b in range(scenario.num_bs):
            for i in range(scenario.antennas_per_bs[b]):
                entries = layout.antenna_entries(b, i)
                if entries:
                    builder.add_soc(np.sqrt(pm.p_max) * one, entries, f"antenna[{b},{i}]")

    _add_psi_rows(builder, scenario, ep, layout, gamma, beta)
    _add_target_rows(builder, scenario, rates, one)
    _add_interference_rows(builder, scenario, layout, beta, one)
    _add_rate_rows(builder, scenario, ep, gamma, rates, one, options.rate_rows)

    objective = ee + AffineExpression.linear(rates, np.full(scenario.num_groups, varrho / p_min))
    builder.set_objective(objective)
    return builder.build()


def build_feasibility_subproblem(scenario: Scenario, ep: ExpansionPoint, lam: float,
                                 options: Optional[SubproblemOptions] = None, mask: Optional[Mask] = None,
                                 target_margin: float = 0.0) -> ConicProgram:
    """
    スラック付き実行可能点探索問題

    maximize Σr_g − λ(Σ(q1+q2) + Σμ + Σp)、全スラック ≥ 0

    変数順: w[g], γ, β, r, q1, q2, p（選択アンテナのみ）, μ

    Args:
        scenario: シナリオ
        ep: 展開点
        lam: ペナルティ係数 λ（正）
        options: 構成オプション（レート行の形式を使用）
        mask: アンテナ選択（省略時は全アンテナ）
        target_margin: 要求レートに掛ける相対マージン

    Returns:
        錐計画
    """
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    options = options or SubproblemOptions()
    pm = scenario.power
    one = AffineExpression(constant=1.0)
    builder = ProgramBuilder("feasibility_subproblem")
    layout = _BeamformerLayout(builder, scenario, mask)
    K, G = scenario.num_users, scenario.num_groups
    gamma = builder.add_block("gamma", K)
    beta = builder.add_block("beta", K)
    rates = builder.add_block("r", G)
    q1 = builder.add_block("q1", K)
    q2 = builder.add_block("q2", K)
    active = [(b, i) for b in range(scenario.num_bs) for i in range(scenario.antennas_per_bs[b])
              if layout.is_active(b, i)]
    p = builder.add_block("p", len(active))
    mu = builder.add_block("mu", G)

    # ||ŵ||² − P_max ≤ p
    for j, (b, i) in enumerate(active):
        builder.add_rotated(one, pm.p_max + builder.var(p[j]), layout.antenna_entries(b, i), f"antenna[{b},{i}]")

    _add_psi_rows(builder, scenario, ep, layout, gamma, beta, slack=q1)
    _add_target_rows(builder, scenario, rates, one, slack=mu, margin=target_margin)
    _add_interference_rows(builder, scenario, layout, beta, one, slack=q2)
    _add_rate_rows(builder, scenario, ep, gamma, rates, one, options.rate_rows)
    for block in (q1, q2, p, mu):
        for j in block:
            builder.add_nonnegative(builder.var(j), "slack")

    slacks = np.concatenate([q1, q2, p, mu])
    objective = AffineExpression.linear(
        np.concatenate([rates, slacks]),
        np.concatenate([np.ones(G), np.full(slacks.shape[0], -lam)]),
    )
    builder.set_objective(objective)
    return builder.build()


def _recover(program: ConicProgram, solution: ConicSolution, scenario: Scenario, scale: float,
             mask: Optional[Mask]) -> RecoveredPoint:
    """解ベクトルを scale で割って元変数を取り出す"""
    x = solution.x
    layout = _BeamformerLayout(None, scenario, mask, program=program)
    blocks = program.blocks

    def block(name: str) -> np.ndarray:
        return program.block(x, name) / scale

    a = _split_per_bs(block("a"), scenario) if "a" in blocks else None
    v = _split_per_bs(block("v"), scenario) if "v" in blocks else None
    norms = None
    if "t" in blocks:
        norms = _split_per_bs(block("t") / np.sqrt(scenario.power.p_max), scenario)
    return RecoveredPoint(
        w=layout.extract(x, scale),
        beta=np.maximum(block("beta"), 0.0) * scenario.n0_linear,
        gamma=np.maximum(block("gamma"), 0.0),
        rates=block("r"),
        objective=solution.objective,
        a=a,
        v=v,
        norms=norms,
        transmit_power=float(block("s")[0]) if "s" in blocks else float("nan"),
        sqrt_rate=float(block("r_sqrt")[0]) if "r_sqrt" in blocks else float("nan"),
        ee_variable=float(block("x")[0]) if "x" in blocks else float("nan"),
    )


def recover_lifted(program: ConicProgram, solution: ConicSolution, scenario: Scenario,
                   mask: Optional[Mask] = None) -> LiftedSolution:
    """
    Charnes-Cooper 変換後の解を φ で割って元の変数に戻す

    Args:
        program: 解いた錐計画
        solution: 最適解
        scenario: シナリオ
        mask: 構築時に使ったアンテナ選択

    Returns:
        φ・バー付き変数・復元点
    """
    if solution.x is None:
        raise ValueError("Cannot recover a solution without primal values")
    phi = float(program.block(solution.x, "phi")[0])
    if not phi > 0:
        raise ValueError(f"Charnes-Cooper scale must be positive, got {phi}")
    lifted = {name: program.block(solution.x, name) for name in program.blocks}
    return LiftedSolution(phi=phi, lifted=lifted, point=_recover(program, solution, scenario, phi, mask))


def recover_unlifted(program: ConicProgram, solution: ConicSolution, scenario: Scenario,
                     mask: Optional[Mask] = None) -> RecoveredPoint:
    """Charnes-Cooper 変換なしの部分問題の解を取り出す"""
    if solution.x is None:
        raise ValueError("Cannot recover a solution without primal values")
    return _recover(program, solution, scenario, 1.0, mask)


def recover_slacks(program: ConicProgram, solution: ConicSolution, scenario: Scenario,
                   mask: Optional[Mask] = None) -> SlackBundle:
    """実行可能点探索問題のスラックを取り出す（p は基地局ごと、未選択アンテナは0）"""
    x = solution.x
    p_flat = np.zeros(scenario.total_antennas)
    offsets = _antenna_offsets(scenario)
    active = [offsets[b] + i for b in range(scenario.num_bs) for i in range(scenario.antennas_per_bs[b])
              if mask is None or bool(mask[b][i])]
    p_flat[active] = program.block(x, "p")
    return SlackBundle(
        q1=np.maximum(program.block(x, "q1"), 0.0),
        q2=np.maximum(program.block(x, "q2"), 0.0) * scenario.n0_linear,
        p=_split_per_bs(np.maximum(p_flat, 0.0), scenario),
        mu=np.maximum(program.block(x, "mu"), 0.0),
    )

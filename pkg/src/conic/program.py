#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
錐計画の中間表現
ソルバー非依存の ConicProgram（線形目的の最大化 + 錐所属制約 A·x + b ∈ K）と構築ヘルパー
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp


class ConeKind(Enum):
    """錐の種類"""
    ZERO = "zero"
    NONNEGATIVE = "nonnegative"
    SECOND_ORDER = "second_order"
    ROTATED_SECOND_ORDER = "rotated_second_order"
    EXPONENTIAL = "exponential"


# 錐ごとの最小次元
MIN_DIMENSION = {
    ConeKind.ZERO: 1,
    ConeKind.NONNEGATIVE: 1,
    ConeKind.SECOND_ORDER: 2,
    ConeKind.ROTATED_SECOND_ORDER: 3,
    ConeKind.EXPONENTIAL: 3,
}


def in_second_order_cone(y: np.ndarray, tol: float = 0.0) -> bool:
    """||y[1:]||₂ ≤ y[0]"""
    y = np.asarray(y, dtype=float)
    return bool(np.linalg.norm(y[1:]) <= y[0] + tol)


def in_rotated_cone(y: np.ndarray, tol: float = 0.0) -> bool:
    """||y[2:]||² ≤ y[0]·y[1]、y[0], y[1] ≥ 0"""
    y = np.asarray(y, dtype=float)
    return bool(y[0] >= -tol and y[1] >= -tol and float(np.dot(y[2:], y[2:])) <= y[0] * y[1] + tol)


def rotated_to_standard_map(dim: int) -> np.ndarray:
    """
    回転二次錐を標準二次錐に写す線形写像

    (y0, y1, y2...) -> ((y0+y1)/2, (y0-y1)/2, y2...)、
    ||y[2:]||² ≤ y0·y1 ⇔ ||(y[2:], (y0−y1)/2)|| ≤ (y0+y1)/2

    Args:
        dim: 錐の次元（3以上）

    Returns:
        形状 (dim, dim) の変換行列
    """
    transform = np.eye(dim)
    transform[0, :2] = [0.5, 0.5]
    transform[1, :2] = [0.5, -0.5]
    return transform


def _exponential_violation(y: np.ndarray) -> float:
    """(x, y, z): y·exp(x/y) ≤ z, y > 0 の閉包からの違反量"""
    x, t, z = (float(v) for v in y[:3])
    if t > 0:
        with np.errstate(over="ignore"):
            value = t * np.exp(x / t)
        return max(0.0, float(value) - z)
    if t == 0:
        return max(0.0, x, -z)
    return -t


@dataclass(frozen=True, eq=False)
class ConeMembership:
    """錐所属制約 A·x + b ∈ K"""
    kind: ConeKind
    matrix: sp.csr_matrix
    offset: np.ndarray
    label: str = ""

    def __post_init__(self):
        matrix = sp.csr_matrix(self.matrix, dtype=float)
        offset = np.array(self.offset, dtype=float).reshape(-1)
        offset.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", offset)

    @property
    def dim(self) -> int:
        return int(self.offset.shape[0])

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """y = A·x + b"""
        x = np.asarray(x, dtype=float)
        return self.matrix @ x[: self.matrix.shape[1]] + self.offset

    def violation(self, x: np.ndarray) -> float:
        """
        制約違反量（所属していれば0）

        回転二次錐は標準形に写してから距離を測る
        """
        y = self.evaluate(x)
        if self.kind == ConeKind.ZERO:
            return float(np.max(np.abs(y)))
        if self.kind == ConeKind.NONNEGATIVE:
            return float(max(0.0, -np.min(y)))
        if self.kind == ConeKind.SECOND_ORDER:
            return float(max(0.0, np.linalg.norm(y[1:]) - y[0]))
        if self.kind == ConeKind.ROTATED_SECOND_ORDER:
            s = rotated_to_standard_map(self.dim) @ y
            return float(max(0.0, np.linalg.norm(s[1:]) - s[0]))
        return _exponential_violation(y)

    def to_standard(self) -> "ConeMembership":
        """回転二次錐を等価な標準二次錐に変換（他の錐はそのまま）"""
        if self.kind != ConeKind.ROTATED_SECOND_ORDER:
            return self
        transform = sp.csr_matrix(rotated_to_standard_map(self.dim))
        return ConeMembership(
            kind=ConeKind.SECOND_ORDER,
            matrix=transform @ self.matrix,
            offset=transform @ self.offset,
            label=self.label,
        )


@dataclass(frozen=True, eq=False)
class ConicProgram:
    """
    錐計画 maximize c·x + c0 s.t. A_j·x + b_j ∈ K_j

    blocks は変数ブロック名から変数インデックス配列への対応
    """
    num_variables: int
    objective: np.ndarray
    constraints: Tuple[ConeMembership, ...]
    blocks: Mapping[str, np.ndarray] = field(default_factory=dict)
    objective_offset: float = 0.0
    name: str = ""

    def __post_init__(self):
        objective = np.array(self.objective, dtype=float).reshape(-1)
        objective.setflags(write=False)
        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "constraints", tuple(self.constraints))

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective @ np.asarray(x, dtype=float) + self.objective_offset)

    def max_violation(self, x: np.ndarray) -> float:
        """全制約の最大違反量"""
        if not self.constraints:
            return 0.0
        return max(c.violation(x) for c in self.constraints)

    def block(self, x: np.ndarray, name: str) -> np.ndarray:
        """変数ブロックの値を取り出す"""
        return np.asarray(x, dtype=float)[self.blocks[name]]

    def count(self, kind: ConeKind) -> int:
        return sum(1 for c in self.constraints if c.kind == kind)

    @property
    def uses_exponential_cone(self) -> bool:
        return self.count(ConeKind.EXPONENTIAL) > 0


Scalar = Union[int, float]


class AffineExpression:
    """変数インデックス -> 係数 の疎な1次式と定数項"""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Optional[Dict[int, float]] = None, constant: float = 0.0):
        self.terms: Dict[int, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    @classmethod
    def variable(cls, index: int, coefficient: float = 1.0) -> "AffineExpression":
        return cls({int(index): float(coefficient)})

    @classmethod
    def linear(cls,
               indices: Iterable[int],
               coefficients: Iterable[float],
               constant: float = 0.0) -> "AffineExpression":
        """Σ coefficients[j]·x[indices[j]] + constant（インデックス -1 は定数ゼロ扱い）"""
        expr = cls(constant=constant)
        for index, coefficient in zip(indices, coefficients):
            index = int(index)
            if index < 0 or coefficient == 0.0:
                continue
            expr.terms[index] = expr.terms.get(index, 0.0) + float(coefficient)
        return expr

    @staticmethod
    def _coerce(other) -> "AffineExpression":
        if isinstance(other, AffineExpression):
            return other
        return AffineExpression(constant=float(other))

    def __add__(self, other) -> "AffineExpression":
        other = self._coerce(other)
        terms = dict(self.terms)
        for index, coefficient in other.terms.items():
            terms[index] = terms.get(index, 0.0) + coefficient
        return AffineExpression(terms, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpression":
        return AffineExpression({i: -c for i, c in self.terms.items()}, -self.constant)

    def __sub__(self, other) -> "AffineExpression":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "AffineExpression":
        return self._coerce(other) + (-self)

    def __mul__(self, factor: Scalar) -> "AffineExpression":
        factor = float(factor)
        return AffineExpression({i: factor * c for i, c in self.terms.items()}, factor * self.constant)

    __rmul__ = __mul__

    def __truediv__(self, divisor: Scalar) -> "AffineExpression":
        return self * (1.0 / float(divisor))

    def value(self, x: np.ndarray) -> float:
        return self.constant + sum(c * float(x[i]) for i, c in self.terms.items())

    def __repr__(self) -> str:
        return f"AffineExpression({len(self.terms)} terms, constant={self.constant:g})"


Row = Union[AffineExpression, Scalar]


class ProgramBuilder:
    """ConicProgram を変数ブロック単位で組み立てるビルダー"""

    def __init__(self, name: str = ""):
        self.name = name
        self._size = 0
        self._blocks: Dict[str, np.ndarray] = {}
        self._constraints: List[ConeMembership] = []
        self._objective = AffineExpression()

    @property
    def num_variables(self) -> int:
        return self._size

    def add_block(self, name: str, size: int) -> np.ndarray:
        """
        変数ブロックを確保

        Args:
            name: ブロック名（一意）
            size: 変数の個数

        Returns:
            確保した変数インデックスの配列
        """
        if name in self._blocks:
            raise ValueError(f"Variable block '{name}' already exists")
        indices = np.arange(self._size, self._size + int(size))
        indices.setflags(write=False)
        self._blocks[name] = indices
        self._size += int(size)
        return indices

    def var(self, index: int, coefficient: float = 1.0) -> AffineExpression:
        return AffineExpression.variable(index, coefficient)

    def add_cone(self, kind: ConeKind, rows: Sequence[Row], label: str = "") -> None:
        """A·x + b の各行を1次式で与えて錐制約を追加"""
        row_idx, col_idx, data = [], [], []
        offset = np.zeros(len(rows))
        for r, row in enumerate(rows):
            row = AffineExpression._coerce(row)
            offset[r] = row.constant
            for index, coefficient in row.terms.items():
                if coefficient != 0.0:
                    row_idx.append(r)
                    col_idx.append(index)
                    data.append(coefficient)
        matrix = sp.csr_matrix((data, (row_idx, col_idx)), shape=(len(rows), max(self._size, 1)))
        self._constraints.append(ConeMembership(kind, matrix, offset, label))

    def add_nonnegative(self, expr: Row, label: str = "") -> None:
        """expr ≥ 0"""
        self.add_cone(ConeKind.NONNEGATIVE, [expr], label)

    def add_equality(self, expr: Row, label: str = "") -> None:
        """expr = 0"""
        self.add_cone(ConeKind.ZERO, [expr], label)

    def add_soc(self, bound: Row, entries: Sequence[Row], label: str = "") -> None:
        """||entries||₂ ≤ bound"""
        self.add_cone(ConeKind.SECOND_ORDER, [bound, *entries], label)

    def add_rotated(self, first: Row, second: Row, entries: Sequence[Row], label: str = "") -> None:
        """||entries||² ≤ first·second、first, second ≥ 0"""
        self.add_cone(ConeKind.ROTATED_SECOND_ORDER, [first, second, *entries], label)

    def add_exponential(self, x: Row, y: Row, z: Row, label: str = "") -> None:
        """y·exp(x/y) ≤ z"""
        self.add_cone(ConeKind.EXPONENTIAL, [x, y, z], label)

    def set_objective(self, expr: AffineExpression) -> None:
        """最大化する目的関数を設定"""
        self._objective = expr

    def build(self) -> ConicProgram:
        objective = np.zeros(self._size)
        for index, coefficient in self._objective.terms.items():
            objective[index] += coefficient
        constraints = []
        for cone in self._constraints:
            matrix = cone.matrix
            if matrix.shape[1] != self._size:
                matrix = sp.csr_matrix(matrix, copy=True)
                matrix.resize((matrix.shape[0], self._size))
            constraints.append(ConeMembership(cone.kind, matrix, cone.offset, cone.label))
        return ConicProgram(
            num_variables=self._size,
            objective=objective,
            constraints=tuple(constraints),
            blocks=dict(self._blocks),
            objective_offset=self._objective.constant,
            name=self.name,
        )


def validate(program: ConicProgram) -> List[str]:
    """
    構造上の欠陥を列挙

    Args:
        program: 錐計画

    Returns:
        欠陥の説明のリスト（空なら整合）
    """
    defects: List[str] = []
    n = program.num_variables
    if n < 1:
        defects.append("program has no variables")
    if program.objective.shape[0] != n:
        defects.append(f"objective has length {program.objective.shape[0]}, expected {n}")
    elif not np.any(program.objective):
        defects.append("objective is empty (all coefficients zero)")
    elif not np.all(np.isfinite(program.objective)):
        defects.append("objective has non-finite coefficients")

    for j, cone in enumerate(program.constraints):
        name = f"constraint {j} ({cone.kind.value}{', ' + cone.label if cone.label else ''})"
        rows, cols = cone.matrix.shape
        if rows != cone.dim:
            defects.append(f"{name}: matrix has {rows} rows but offset has {cone.dim}")
        if cone.dim < MIN_DIMENSION[cone.kind]:
            defects.append(f"{name}: dimension {cone.dim} below minimum {MIN_DIMENSION[cone.kind]}")
        if cone.kind == ConeKind.EXPONENTIAL and cone.dim != 3:
            defects.append(f"{name}: exponential cone must have dimension 3")
        coo = cone.matrix.tocoo()
        if coo.nnz and int(coo.col.max()) >= n:
            defects.append(f"{name}: references variable index {int(coo.col.max())} >= {n}")
        if not (np.all(np.isfinite(coo.data)) and np.all(np.isfinite(cone.offset))):
            defects.append(f"{name}: non-finite coefficients")
    return defects


def dump_program(program: ConicProgram, path: Union[str, Path]) -> Path:
    """
    錐計画を疎トリプレット形式のテキストに書き出す

    形式:
        # program <name>
        # variables <n>
        [objective offset=<c0>]
        <col> <value>
        [constraint <j> <kind> dim=<m> label=<label>]
        A <row> <col> <value>
        b <row> <value>

    Args:
        program: 錐計画
        path: 出力ファイル

    Returns:
        出力パス
    """
    output_path = Path(path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# program {program.name}", f"# variables {program.num_variables}"]
    lines.append(f"[objective offset={program.objective_offset:.17g}]")
    for col in np.flatnonzero(program.objective):
        lines.append(f"{col} {program.objective[col]:.17g}")
    for j, cone in enumerate(program.constraints):
        lines.append(f"[constraint {j} {cone.kind.value} dim={cone.dim} label={cone.label}]")
        coo = cone.matrix.tocoo()
        for r, c, v in sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())):
            lines.append(f"A {r} {c} {v:.17g}")
        for r in np.flatnonzero(cone.offset):
            lines.append(f"b {r} {cone.offset[r]:.17g}")
    output_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return output_path

"""
Standard conic form and the row/cone records the model builders emit.

A ConicProgram is

    minimize    c'x + offset
    subject to  A x = b
                lower <= x <= upper
                x[block] in K_block   for every block

where the blocks partition x and each K_block is the free cone, the
nonnegative orthant, a second-order cone {t >= ||w||} or a rotated
second-order cone {2uv >= ||w||^2, u, v >= 0}.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import AssemblyError

FORMAT_HEADER = "svcplan-program 1"


class ConeKind(Enum):
    FREE = "free"
    NONNEG = "nonneg"
    SOC = "soc"
    RSOC = "rsoc"


@dataclass(frozen=True)
class ConeBlock:
    kind: ConeKind
    start: int
    size: int

    @property
    def stop(self) -> int:
        return self.start + self.size


@dataclass(frozen=True)
class Affine:
    """sum(coef * x[pos]) + constant"""

    coefs: tuple[tuple[int, float], ...] = ()
    constant: float = 0.0

    @classmethod
    def of(cls, terms: Mapping[int, float] = None, constant: float = 0.0) -> "Affine":
        terms = terms or {}
        return cls(tuple((int(p), float(v)) for p, v in terms.items() if v != 0.0), float(constant))

    def evaluate(self, x: np.ndarray) -> float:
        return sum(v * x[p] for p, v in self.coefs) + self.constant


@dataclass(frozen=True)
class LinearRow:
    """lower <= sum(coef * x[pos]) <= upper; an equality when lower == upper."""

    kind: str
    coefs: tuple[tuple[int, float], ...]
    lower: float
    upper: float
    label: str = ""

    @classmethod
    def equal(cls, kind: str, terms: Mapping[int, float], rhs: float, label: str = "") -> "LinearRow":
        return cls(kind, _terms(terms), float(rhs), float(rhs), label)

    @classmethod
    def between(cls, kind: str, terms: Mapping[int, float], lower: float, upper: float, label: str = "") -> "LinearRow":
        return cls(kind, _terms(terms), float(lower), float(upper), label)

    @property
    def is_equality(self) -> bool:
        return self.lower == self.upper

    def evaluate(self, x: np.ndarray) -> float:
        return sum(v * x[p] for p, v in self.coefs)

    def violation(self, x: np.ndarray) -> float:
        value = self.evaluate(x)
        return max(self.lower - value, value - self.upper, 0.0)

    def describe(self, names: Optional[Sequence[str]] = None) -> str:
        terms = " ".join(
            f"{'+' if v >= 0 else '-'} {abs(v):.6g}*{names[p] if names else f'x{p}'}" for p, v in self.coefs
        )
        if self.is_equality:
            return f"[{self.kind}] {self.label}: {terms} = {self.lower:.6g}"
        return f"[{self.kind}] {self.label}: {self.lower:.6g} <= {terms} <= {self.upper:.6g}"


@dataclass(frozen=True)
class ConeRow:
    """(members[0], members[1], ...) in a SOC or rotated SOC."""

    kind: str
    cone: ConeKind
    members: tuple[Affine, ...]
    label: str = ""

    def __post_init__(self):
        if self.cone not in (ConeKind.SOC, ConeKind.RSOC):
            raise AssemblyError(f"cone row {self.label} must be SOC or RSOC")
        minimum = 3 if self.cone == ConeKind.RSOC else 2
        if len(self.members) < minimum:
            raise AssemblyError(f"cone row {self.label} has {len(self.members)} members, need {minimum}")

    def mismatch(self, x: np.ndarray) -> float:
        """Cone slack: 2uv - ||w||^2 for RSOC, t^2 - ||w||^2 for SOC."""
        values = [m.evaluate(x) for m in self.members]
        if self.cone == ConeKind.RSOC:
            return 2.0 * values[0] * values[1] - sum(v * v for v in values[2:])
        return values[0] ** 2 - sum(v * v for v in values[1:])

    def describe(self, names: Optional[Sequence[str]] = None) -> str:
        def fmt(a: Affine) -> str:
            parts = [f"{v:.6g}*{names[p] if names else f'x{p}'}" for p, v in a.coefs]
            if a.constant or not parts:
                parts.append(f"{a.constant:.6g}")
            return " + ".join(parts)

        return f"[{self.kind}] {self.label}: ({', '.join(fmt(m) for m in self.members)}) in {self.cone.value}"


@dataclass(frozen=True)
class VariableBound:
    position: int
    lower: float
    upper: float
    integer: bool = False


def _terms(terms: Mapping[int, float]) -> tuple[tuple[int, float], ...]:
    merged: dict[int, float] = {}
    for p, v in terms.items():
        merged[int(p)] = merged.get(int(p), 0.0) + float(v)
    return tuple((p, v) for p, v in merged.items() if v != 0.0)


@dataclass(frozen=True, eq=False)
class ConicProgram:
    c: np.ndarray
    a: sp.csr_matrix
    b: np.ndarray
    blocks: tuple[ConeBlock, ...]
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray
    offset: float = 0.0
    row_kinds: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = len(self.c)
        m = len(self.b)
        if self.a.shape != (m, n):
            raise AssemblyError(f"equality matrix is {self.a.shape}, expected {(m, n)}")
        for name in ("lower", "upper", "integer"):
            if len(getattr(self, name)) != n:
                raise AssemblyError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        position = 0
        for block in self.blocks:
            if block.start != position or block.size <= 0:
                raise AssemblyError(f"cone blocks do not partition the variables at position {position}")
            if block.kind == ConeKind.RSOC and block.size < 3:
                raise AssemblyError(f"rotated cone block at {block.start} has size {block.size}")
            position = block.stop
        if position != n:
            raise AssemblyError(f"cone blocks cover {position} of {n} variables")
        marked = np.flatnonzero(self.integer)
        if np.any(self.lower[marked] < 0) or np.any(self.upper[marked] > 1):
            raise AssemblyError("integrality mask marks a variable not bounded in [0, 1]")

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def integer_positions(self) -> np.ndarray:
        return np.flatnonzero(self.integer)

    def with_fixings(self, fixings: Mapping[int, float]) -> "ConicProgram":
        lower = self.lower.copy()
        upper = self.upper.copy()
        for pos, value in fixings.items():
            lower[pos] = upper[pos] = float(value)
        return replace(self, lower=lower, upper=upper)

    def with_objective(self, c: np.ndarray, offset: float = None) -> "ConicProgram":
        return replace(self, c=np.asarray(c, dtype=float), offset=self.offset if offset is None else offset)

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset

    def to_text(self) -> str:
        """
        Serialize to the text format:

            svcplan-program 1
            dims <n> <m>
            offset <value>
            objective            (one "<col> <value>" line per nonzero)
            equalities           (one "<row> <col> <value>" line per nonzero, row-major)
            rhs                  (one "<row> <value>" line per nonzero)
            blocks               (one "<kind> <start> <size>" line per block)
            bounds               (one "<col> <lower> <upper>" line per non-free bound)
            integer              (one "<col>" line per integer variable)
            end

        Floats are written with repr() so that reading back is exact.
        """
        out = [FORMAT_HEADER, f"dims {self.n} {self.m}", f"offset {self.offset!r}", "objective"]
        out.extend(f"{j} {float(v)!r}" for j, v in enumerate(self.c) if v != 0.0)
        out.append("equalities")
        a = self.a.tocsr()
        a.sort_indices()
        for i in range(self.m):
            lo, hi = a.indptr[i], a.indptr[i + 1]
            out.extend(f"{i} {int(j)} {float(v)!r}" for j, v in zip(a.indices[lo:hi], a.data[lo:hi]))
        out.append("rhs")
        out.extend(f"{i} {float(v)!r}" for i, v in enumerate(self.b) if v != 0.0)
        out.append("blocks")
        out.extend(f"{blk.kind.value} {blk.start} {blk.size}" for blk in self.blocks)
        out.append("bounds")
        for j in range(self.n):
            lo, hi = self.lower[j], self.upper[j]
            if lo != -math.inf or hi != math.inf:
                out.append(f"{j} {float(lo)!r} {float(hi)!r}")
        out.append("integer")
        out.extend(str(int(j)) for j in self.integer_positions)
        out.append("end")
        return "\n".join(out) + "\n"


def program_from_text(text: str) -> ConicProgram:
    lines = iter(text.splitlines())
    if next(lines, None) != FORMAT_HEADER:
        raise AssemblyError("not a program file")
    _, n, m = next(lines).split()
    n, m = int(n), int(m)
    offset = float(next(lines).split()[1])
    c = np.zeros(n)
    b = np.zeros(m)
    rows, cols, vals = [], [], []
    lower = np.full(n, -math.inf)
    upper = np.full(n, math.inf)
    integer = np.zeros(n, dtype=bool)
    blocks = []
    section = None
    for line in lines:
        if line in ("objective", "equalities", "rhs", "blocks", "bounds", "integer", "end"):
            section = line
            continue
        parts = line.split()
        if section == "objective":
            c[int(parts[0])] = float(parts[1])
        elif section == "equalities":
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
        elif section == "rhs":
            b[int(parts[0])] = float(parts[1])
        elif section == "blocks":
            blocks.append(ConeBlock(ConeKind(parts[0]), int(parts[1]), int(parts[2])))
        elif section == "bounds":
            j = int(parts[0])
            lower[j], upper[j] = float(parts[1]), float(parts[2])
        elif section == "integer":
            integer[int(parts[0])] = True
    a = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return ConicProgram(c=c, a=a, b=b, blocks=tuple(blocks), lower=lower, upper=upper, integer=integer, offset=offset)


class ProgramBuilder:
    """
    Accumulates rows over a fixed set of named variables and lays out the
    auxiliary variables they need: one nonnegative slack per inequality row
    and one cone block (linked to its members by equalities) per cone row.
    """

    def __init__(self, n_named: int, named_blocks: Sequence[ConeBlock]):
        self.n_named = n_named
        self.named_blocks = list(named_blocks)
        self.objective = np.zeros(n_named)
        self.lower = np.full(n_named, -math.inf)
        self.upper = np.full(n_named, math.inf)
        self.integer = np.zeros(n_named, dtype=bool)
        for block in self.named_blocks:
            if block.kind == ConeKind.NONNEG:
                self.lower[block.start:block.stop] = 0.0
        self._entries: list[tuple[int, int, int, float]] = []  # (row, space, col, value)
        self._rhs: list[float] = []
        self._kinds: list[str] = []
        self._slack_bounds: list[float] = []
        self._cones: list[tuple[ConeKind, list[Optional[float]]]] = []
        self._n_cone_vars = 0

    _NAMED, _SLACK, _CONE = 0, 1, 2

    def set_objective(self, c: np.ndarray):
        if len(c) != self.n_named:
            raise AssemblyError(f"objective has length {len(c)}, expected {self.n_named}")
        self.objective = np.asarray(c, dtype=float)

    def add_bound(self, bound: VariableBound):
        j = bound.position
        self.lower[j] = max(self.lower[j], bound.lower)
        self.upper[j] = min(self.upper[j], bound.upper)
        if self.lower[j] > self.upper[j]:
            raise AssemblyError(f"empty bounds [{self.lower[j]}, {self.upper[j]}] on variable {j}")
        if bound.integer:
            self.integer[j] = True

    def _new_row(self, kind: str, rhs: float) -> int:
        self._rhs.append(rhs)
        self._kinds.append(kind)
        return len(self._rhs) - 1

    def add_row(self, row: LinearRow):
        if row.lower > row.upper:
            raise AssemblyError(f"row {row.label}: lower bound exceeds upper bound")
        if not row.coefs:
            if row.lower > 1e-12 or row.upper < -1e-12:
                raise AssemblyError(f"row {row.label} has no variables and is infeasible")
            return
        if row.is_equality:
            i = self._new_row(row.kind, row.lower)
            self._entries.extend((i, self._NAMED, p, v) for p, v in row.coefs)
            return
        lo_finite, hi_finite = math.isfinite(row.lower), math.isfinite(row.upper)
        if not (lo_finite or hi_finite):
            return
        slack = len(self._slack_bounds)
        if lo_finite:
            # a.x - s = lower, 0 <= s <= upper - lower
            i = self._new_row(row.kind, row.lower)
            self._slack_bounds.append(row.upper - row.lower if hi_finite else math.inf)
            self._entries.append((i, self._SLACK, slack, -1.0))
        else:
            # a.x + s = upper, s >= 0
            i = self._new_row(row.kind, row.upper)
            self._slack_bounds.append(math.inf)
            self._entries.append((i, self._SLACK, slack, 1.0))
        self._entries.extend((i, self._NAMED, p, v) for p, v in row.coefs)

    def add_cone(self, row: ConeRow):
        base = self._n_cone_vars
        fixed: list[Optional[float]] = []
        for offset, member in enumerate(row.members):
            if not member.coefs:
                fixed.append(member.constant)
                continue
            fixed.append(None)
            # y - a.x = constant
            i = self._new_row(row.kind, member.constant)
            self._entries.append((i, self._CONE, base + offset, 1.0))
            self._entries.extend((i, self._NAMED, p, -v) for p, v in member.coefs)
        self._cones.append((row.cone, fixed))
        self._n_cone_vars += len(row.members)

    def build(self) -> ConicProgram:
        n_slack = len(self._slack_bounds)
        n = self.n_named + n_slack + self._n_cone_vars
        offsets = (0, self.n_named, self.n_named + n_slack)
        m = len(self._rhs)
        if self._entries:
            rows, spaces, cols, vals = zip(*self._entries)
            cols = np.asarray(cols) + np.asarray([offsets[s] for s in spaces])
            a = sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsr()
        else:
            a = sp.csr_matrix((m, n))
        a.sum_duplicates()

        c = np.concatenate([self.objective, np.zeros(n - self.n_named)])
        lower = np.concatenate([self.lower, np.zeros(n_slack), np.full(self._n_cone_vars, -math.inf)])
        upper = np.concatenate([self.upper, np.asarray(self._slack_bounds, dtype=float), np.full(self._n_cone_vars, math.inf)])
        integer = np.concatenate([self.integer, np.zeros(n - self.n_named, dtype=bool)])

        blocks = list(self.named_blocks)
        if n_slack:
            blocks.append(ConeBlock(ConeKind.NONNEG, self.n_named, n_slack))
        position = offsets[2]
        for cone, fixed in self._cones:
            for k, value in enumerate(fixed):
                if value is not None:
                    lower[position + k] = upper[position + k] = value
            blocks.append(ConeBlock(cone, position, len(fixed)))
            position += len(fixed)
        return ConicProgram(
            c=c,
            a=a,
            b=np.asarray(self._rhs, dtype=float),
            blocks=tuple(_merge_blocks(blocks)),
            lower=lower,
            upper=upper,
            integer=integer,
            row_kinds=tuple(self._kinds),
        )


def _merge_blocks(blocks: Iterable[ConeBlock]) -> list[ConeBlock]:
    merged: list[ConeBlock] = []
    for block in blocks:
        if merged and block.kind in (ConeKind.FREE, ConeKind.NONNEG) and merged[-1].kind == block.kind \
                and merged[-1].stop == block.start:
            merged[-1] = ConeBlock(block.kind, merged[-1].start, merged[-1].size + block.size)
        else:
            merged.append(block)
    return merged

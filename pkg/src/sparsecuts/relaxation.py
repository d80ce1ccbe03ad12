"""Relaxation builders: lifted SDP, sparse support-space LP, McCormick rows.

Everything is expressed as a :class:`ConicProblem` — a minimize-only program
over scalar coordinates with linear rows and optional PSD blocks.  A PSD
block pins a symmetric matrix slice whose entries are coordinates (entries
absent from the block map are structurally zero).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .model import (
    EVector,
    QcqpInstance,
    SupportMismatchError,
    SupportSet,
    build_support_set,
    canonical_pair,
)

__all__ = [
    "LinearRow",
    "PsdBlock",
    "ConicProblem",
    "McCormickRow",
    "mccormick_rows",
    "build_shor_sdp",
    "build_e_lp",
    "full_pair_index",
    "lifted_interval_bounds",
    "export_text",
]

LE, GE, EQ = "<=", ">=", "=="
_SENSES = (LE, GE, EQ)


@dataclass(frozen=True)
class LinearRow:
    """sum_k coeffs[k] * x[indices[k]]  (sense)  rhs."""

    indices: tuple[int, ...]
    coeffs: tuple[float, ...]
    sense: str
    rhs: float
    label: str = ""

    def __post_init__(self) -> None:
        if self.sense not in _SENSES:
            raise ValueError(f"unknown sense {self.sense!r}")
        if len(self.indices) != len(self.coeffs):
            raise ValueError("indices and coeffs length mismatch")

    def value(self, x: np.ndarray) -> float:
        return float(sum(c * x[i] for i, c in zip(self.indices, self.coeffs)))


@dataclass(frozen=True)
class PsdBlock:
    """A dim x dim symmetric PSD slice; entries maps canonical (i, j) pairs
    to coordinate indices, missing entries are fixed at zero."""

    dim: int
    entries: dict[tuple[int, int], int]

    def __post_init__(self) -> None:
        for (i, j) in self.entries:
            if not (0 <= i <= j < self.dim):
                raise ValueError(f"block entry {(i, j)} not canonical for dim {self.dim}")

    def materialize(self, x: np.ndarray) -> np.ndarray:
        a = np.zeros((self.dim, self.dim))
        for (i, j), k in self.entries.items():
            a[i, j] = x[k]
            a[j, i] = x[k]
        return a


@dataclass(frozen=True)
class ConicProblem:
    """min obj.x + const  s.t. linear rows, PSD blocks, coordinate bounds."""

    num_coords: int
    obj_indices: tuple[int, ...]
    obj_coeffs: tuple[float, ...]
    rows: tuple[LinearRow, ...]
    psd_blocks: tuple[PsdBlock, ...] = ()
    obj_constant: float = 0.0
    lower: np.ndarray | None = None  # per-coordinate bounds, None = free
    upper: np.ndarray | None = None
    coord_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        for row in self.rows:
            for i in row.indices:
                if not (0 <= i < self.num_coords):
                    raise ValueError(f"row {row.label!r} references undeclared coordinate {i}")
        for block in self.psd_blocks:
            for k in block.entries.values():
                if not (0 <= k < self.num_coords):
                    raise ValueError(f"PSD block references undeclared coordinate {k}")
        for i in self.obj_indices:
            if not (0 <= i < self.num_coords):
                raise ValueError(f"objective references undeclared coordinate {i}")

    def objective_value(self, x: np.ndarray) -> float:
        return self.obj_constant + float(
            sum(c * x[i] for i, c in zip(self.obj_indices, self.obj_coeffs))
        )

    def objective_dense(self) -> np.ndarray:
        q = np.zeros(self.num_coords)
        for i, c in zip(self.obj_indices, self.obj_coeffs):
            q[i] += c
        return q

    def with_extra_rows(self, rows: Iterable[LinearRow]) -> "ConicProblem":
        return replace(self, rows=self.rows + tuple(rows))

    def without_psd_blocks(self) -> "ConicProblem":
        return replace(self, psd_blocks=())

    def label(self, i: int) -> str:
        return self.coord_labels[i] if self.coord_labels else f"x{i}"


@dataclass(frozen=True)
class McCormickRow:
    """Envelope inequalities for Y_ij = Y_0i * Y_0j over a box.

    Each inequality is (a_i, a_j, a_ij, sense, rhs) applied to the
    coordinates (Y_0i, Y_0j, Y_ij); three inequalities when i == j (the two
    overestimators coincide), four otherwise.
    """

    pair: tuple[int, int]
    inequalities: tuple[tuple[float, float, float, str, float], ...]

    def satisfied_by(self, xi: float, xj: float, xij: float, tol: float = 1e-12) -> bool:
        for ai, aj, aij, sense, rhs in self.inequalities:
            lhs = ai * xi + aj * xj + aij * xij
            if sense == LE and lhs > rhs + tol:
                return False
            if sense == GE and lhs < rhs - tol:
                return False
        return True


def mccormick_rows(i: int, j: int, lower: Sequence[float], upper: Sequence[float]) -> McCormickRow:
    """Envelope rows for the lifted pair (i, j), 1-based in the lifted space;
    bounds are the 0-based x vectors."""
    if not (1 <= i <= j):
        raise ValueError("mccormick pairs live in the lifted indices i, j >= 1")
    li, ui = float(lower[i - 1]), float(upper[i - 1])
    lj, uj = float(lower[j - 1]), float(upper[j - 1])
    if li > ui or lj > uj:
        raise ValueError("inverted bounds")
    if i == j:
        ineqs = (
            (-2.0 * li, 0.0, 1.0, GE, -li * li),
            (-2.0 * ui, 0.0, 1.0, GE, -ui * ui),
            (-(li + ui), 0.0, 1.0, LE, -li * ui),
        )
    else:
        ineqs = (
            (-lj, -li, 1.0, GE, -li * lj),
            (-uj, -ui, 1.0, GE, -ui * uj),
            (-uj, -li, 1.0, LE, -li * uj),
            (-lj, -ui, 1.0, LE, -ui * lj),
        )
    return McCormickRow((i, j), ineqs)


def full_pair_index(dim: int) -> dict[tuple[int, int], int]:
    """Coordinate order used by full-space lifted problems: canonical pairs,
    lexicographic."""
    return {p: k for k, p in enumerate(itertools.combinations_with_replacement(range(dim), 2))}


def lifted_interval_bounds(
    instance: QcqpInstance,
    box: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate bounds for the full lifted space that never tighten the
    conic relaxation: diagonal entries get the square's range over the box,
    off-diagonal entries the symmetric magnitude bound |Y_ij| <= m_i*m_j
    implied by the 2x2 PSD minor together with the diagonal envelopes.
    Off-support coordinates otherwise appear in no row of a full-space LP,
    leaving it free to drift numerically."""
    lower, upper = box if box is not None else (instance.lower, instance.upper)
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    m = np.maximum(np.abs(lower), np.abs(upper))
    index_of = full_pair_index(instance.n + 1)
    lo = np.empty(len(index_of))
    hi = np.empty(len(index_of))
    for (i, j), k in index_of.items():
        if i == 0 and j == 0:
            lo[k], hi[k] = 1.0, 1.0
        elif i == 0:
            lo[k], hi[k] = lower[j - 1], upper[j - 1]
        elif i == j:
            l, u = lower[i - 1], upper[i - 1]
            lo[k] = 0.0 if l <= 0.0 <= u else min(l * l, u * u)
            hi[k] = m[i - 1] ** 2
        else:
            hi[k] = m[i - 1] * m[j - 1]
            lo[k] = -hi[k]
    return lo, hi


def _weight(i: int, j: int) -> float:
    return 1.0 if i == j else 2.0


def _function_row(
    coeffs: dict[tuple[int, int], float],
    index_of: dict[tuple[int, int], int],
    sense: str,
    rhs: float,
    label: str,
) -> LinearRow:
    idx, val = [], []
    for (i, j), v in sorted(coeffs.items()):
        idx.append(index_of[(i, j)])
        val.append(_weight(i, j) * v)
    return LinearRow(tuple(idx), tuple(val), sense, rhs, label)


def _mccormick_linear_rows(
    pairs: Iterable[tuple[int, int]],
    index_of: dict[tuple[int, int], int],
    lower: np.ndarray,
    upper: np.ndarray,
) -> list[LinearRow]:
    rows = []
    for (i, j) in pairs:
        mc = mccormick_rows(i, j, lower, upper)
        for t, (ai, aj, aij, sense, rhs) in enumerate(mc.inequalities):
            coeffs: dict[int, float] = {}
            for coord, a in (((0, i), ai), ((0, j), aj), ((i, j), aij)):
                if a != 0.0:
                    k = index_of[canonical_pair(*coord)]
                    coeffs[k] = coeffs.get(k, 0.0) + a
            rows.append(
                LinearRow(
                    tuple(coeffs),
                    tuple(coeffs.values()),
                    sense,
                    rhs,
                    label=f"mccormick[{i},{j}]#{t}",
                )
            )
    return rows


def _base_rows(
    instance: QcqpInstance,
    index_of: dict[tuple[int, int], int],
    lower: np.ndarray,
    upper: np.ndarray,
) -> list[LinearRow]:
    n = instance.n
    rows = [LinearRow((index_of[(0, 0)],), (1.0,), EQ, 1.0, label="homog")]
    for i in range(1, n + 1):
        k = index_of[(0, i)]
        rows.append(LinearRow((k,), (1.0,), GE, float(lower[i - 1]), label=f"box_lo[{i}]"))
        rows.append(LinearRow((k,), (1.0,), LE, float(upper[i - 1]), label=f"box_up[{i}]"))
    for k in range(1, instance.m + 1):
        rows.append(_function_row(instance.homogenized(k), index_of, LE, 0.0, f"qcon[{k}]"))
    return rows


def build_shor_sdp(
    instance: QcqpInstance,
    *,
    mccormick: str = "off",
    dnn: bool = False,
    box: tuple[np.ndarray, np.ndarray] | None = None,
    lifted_bounds: bool = False,
) -> ConicProblem:
    """Lifted SDP relaxation on the full (n+1) x (n+1) matrix variable.

    ``mccormick`` is one of ``off``, ``E`` (envelope rows on the instance's
    support pairs) or ``full`` (all 1 <= i <= j <= n).  ``dnn=True`` adds
    elementwise nonnegativity and requires a nonnegative box.
    ``lifted_bounds`` attaches product-interval bounds to every coordinate,
    stabilizing LPs derived from this problem by dropping the PSD block.
    """
    if mccormick not in ("off", "E", "full"):
        raise ValueError("mccormick must be one of off, E, full")
    n = instance.n
    lower, upper = box if box is not None else (instance.lower, instance.upper)
    if dnn and not np.all(np.asarray(lower) >= 0.0):
        raise ValueError("DNN variant requires a nonnegative box")
    d = n + 1
    index_of = full_pair_index(d)
    rows = _base_rows(instance, index_of, np.asarray(lower), np.asarray(upper))
    if mccormick != "off":
        if mccormick == "E":
            E = build_support_set(instance)
            pairs = [(i, j) for (i, j) in E.pairs if i >= 1]
        else:
            pairs = list(itertools.combinations_with_replacement(range(1, d), 2))
        rows += _mccormick_linear_rows(pairs, index_of, np.asarray(lower), np.asarray(upper))
    if dnn:
        for (i, j), k in index_of.items():
            if i >= 1:
                rows.append(LinearRow((k,), (1.0,), GE, 0.0, label=f"nonneg[{i},{j}]"))
    obj = instance.homogenized(0)
    obj_idx = tuple(index_of[p] for p in sorted(obj))
    obj_val = tuple(_weight(*p) * obj[p] for p in sorted(obj))
    labels = tuple(f"Y[{i},{j}]" for (i, j) in sorted(index_of, key=index_of.get))
    coord_lo = coord_hi = None
    if lifted_bounds:
        coord_lo, coord_hi = lifted_interval_bounds(instance, box=(lower, upper))
    return ConicProblem(
        num_coords=len(index_of),
        obj_indices=obj_idx,
        obj_coeffs=obj_val,
        rows=tuple(rows),
        psd_blocks=(PsdBlock(d, dict(index_of)),),
        coord_labels=labels,
        lower=coord_lo,
        upper=coord_hi,
    )


def build_e_lp(
    instance: QcqpInstance,
    cuts: Sequence = (),
    *,
    mccormick: str = "E",
    box: tuple[np.ndarray, np.ndarray] | None = None,
    support: SupportSet | None = None,
) -> ConicProblem:
    """LP over exactly the support coordinates: homogenization row, box rows,
    constraint rows, optional envelope rows, one row per accumulated cut."""
    if mccormick not in ("off", "E"):
        raise ValueError("mccormick must be off or E for the support-space LP")
    E = support if support is not None else build_support_set(instance)
    if E.dim != instance.n + 1:
        raise SupportMismatchError("support dimension does not match the instance")
    index_of = {p: k for k, p in enumerate(E.pairs)}
    lower, upper = box if box is not None else (instance.lower, instance.upper)
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)

    for k in range(instance.m + 1):
        for p in instance.homogenized(k):
            if p not in index_of:
                raise SupportMismatchError(f"support is missing instance pair {p}")

    rows = [LinearRow((index_of[(0, 0)],), (1.0,), EQ, 1.0, label="homog")]
    for i in range(1, instance.n + 1):
        if (0, i) in index_of:
            k = index_of[(0, i)]
            rows.append(LinearRow((k,), (1.0,), GE, float(lower[i - 1]), label=f"box_lo[{i}]"))
            rows.append(LinearRow((k,), (1.0,), LE, float(upper[i - 1]), label=f"box_up[{i}]"))
    for k in range(1, instance.m + 1):
        rows.append(_function_row(instance.homogenized(k), index_of, LE, 0.0, f"qcon[{k}]"))
    if mccormick == "E":
        pairs = [
            (i, j)
            for (i, j) in E.pairs
            if i >= 1 and (0, i) in index_of and (0, j) in index_of
        ]
        rows += _mccormick_linear_rows(pairs, index_of, lower, upper)
    for t, cut in enumerate(cuts):
        rows.append(_cut_row(cut, E, index_of, t))

    obj = instance.homogenized(0)
    obj_idx = tuple(index_of[p] for p in sorted(obj))
    obj_val = tuple(_weight(*p) * obj[p] for p in sorted(obj))
    labels = tuple(f"Z[{i},{j}]" for (i, j) in E.pairs)
    return ConicProblem(
        num_coords=len(E),
        obj_indices=obj_idx,
        obj_coeffs=obj_val,
        rows=tuple(rows),
        coord_labels=labels,
    )


def _cut_row(cut, E: SupportSet, index_of: dict, t: int) -> LinearRow:
    coeffs: EVector | None = getattr(cut, "coeffs", None)
    if coeffs is None:
        raise SupportMismatchError("only support-space cuts can enter the sparse LP")
    if coeffs.support != E:
        raise SupportMismatchError(f"cut #{t} lives on a different support set")
    idx, val = [], []
    for k, (i, j) in enumerate(E.pairs):
        v = coeffs.values[k]
        if v != 0.0:
            idx.append(index_of[(i, j)])
            val.append(_weight(i, j) * v)
    return LinearRow(tuple(idx), tuple(val), GE, 0.0, label=f"cut[{t}]")


def export_text(problem: ConicProblem) -> str:
    """Human-readable dump of a conic problem for external debugging."""
    out = [f"minimize  {_linexpr(problem, problem.obj_indices, problem.obj_coeffs)}"]
    if problem.obj_constant:
        out[0] += f" + {problem.obj_constant!r}"
    out.append("subject to")
    for row in problem.rows:
        tag = f"  [{row.label}]" if row.label else ""
        out.append(f"  {_linexpr(problem, row.indices, row.coeffs)} {row.sense} {row.rhs!r}{tag}")
    for b, block in enumerate(problem.psd_blocks):
        out.append(f"  psd block #{b}: dim {block.dim}, entries {len(block.entries)}")
    return "\n".join(out) + "\n"


def _linexpr(problem: ConicProblem, indices, coeffs) -> str:
    if not indices:
        return "0"
    return " + ".join(f"{c!r}*{problem.label(i)}" for i, c in zip(indices, coeffs))

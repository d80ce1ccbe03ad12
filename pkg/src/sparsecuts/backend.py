"""Backend-neutral solving of conic problems, eigendecomposition and a
PSD-completion feasibility oracle.

Two backends ship with the package: ``clarabel`` (an interior-point conic
solver handling linear rows and PSD blocks) and ``highs`` (LP only, via
scipy).  ``auto`` picks highs for pure LPs and clarabel otherwise.  Tests
may register additional backends for cross-checks via
:func:`register_backend`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model import EVector, SymMatrix
from .relaxation import EQ, GE, LE, ConicProblem, LinearRow, PsdBlock

__all__ = [
    "SolveLimits",
    "SolveResult",
    "BackendError",
    "solve_conic",
    "register_backend",
    "available_backends",
    "eigendecomp",
    "complete_to_psd",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_ERROR = "numerical_error"
TIME_LIMIT = "time_limit"


@dataclass(frozen=True)
class SolveLimits:
    time: float | None = None
    tolerance: float = 1e-8


@dataclass
class SolveResult:
    status: str
    objective: float | None
    primal: np.ndarray | None
    dual: np.ndarray | None
    solve_time: float
    diagnostic: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


class BackendError(RuntimeError):
    """A solve needed by an oracle did not reach optimality."""

    def __init__(self, result: SolveResult, context: str = ""):
        self.result = result
        super().__init__(f"{context or 'conic solve'} failed: {result.status} {result.diagnostic}")


def _solve_highs(problem: ConicProblem, limits: SolveLimits) -> SolveResult:
    if problem.psd_blocks:
        raise ValueError("highs backend handles linear problems only")
    n = problem.num_coords
    c = problem.objective_dense()
    a_ub_rows, b_ub, a_eq_rows, b_eq = [], [], [], []
    ub_origin, eq_origin = [], []  # (problem row index, sign)
    for r, row in enumerate(problem.rows):
        data = (row.indices, row.coeffs)
        if row.sense == EQ:
            a_eq_rows.append(data)
            b_eq.append(row.rhs)
            eq_origin.append(r)
        elif row.sense == LE:
            a_ub_rows.append((data, 1.0))
            b_ub.append(row.rhs)
            ub_origin.append((r, 1.0))
        else:
            a_ub_rows.append((data, -1.0))
            b_ub.append(-row.rhs)
            ub_origin.append((r, -1.0))

    def build(rows_with_sign, plain=False):
        data, ri, ci = [], [], []
        for k, item in enumerate(rows_with_sign):
            (idx, val), sgn = item if not plain else (item, 1.0)
            for i, v in zip(idx, val):
                ri.append(k)
                ci.append(i)
                data.append(sgn * v)
        return sparse.csr_matrix((data, (ri, ci)), shape=(len(rows_with_sign), n))

    lo = problem.lower if problem.lower is not None else np.full(n, -np.inf)
    up = problem.upper if problem.upper is not None else np.full(n, np.inf)
    bounds = [(None if not math.isfinite(l) else l, None if not math.isfinite(u) else u)
              for l, u in zip(lo, up)]
    options = {}
    if limits.time is not None:
        options["time_limit"] = max(limits.time, 1e-3)
    t0 = time.perf_counter()
    try:
        res = linprog(
            c,
            A_ub=build(a_ub_rows) if a_ub_rows else None,
            b_ub=np.array(b_ub) if b_ub else None,
            A_eq=build(a_eq_rows, plain=True) if a_eq_rows else None,
            b_eq=np.array(b_eq) if b_eq else None,
            bounds=bounds,
            method="highs",
            options=options,
        )
    except Exception as exc:  # backend failure surfaces as a status, never a crash
        return SolveResult(NUMERICAL_ERROR, None, None, None, time.perf_counter() - t0, repr(exc))
    elapsed = time.perf_counter() - t0
    status = {0: OPTIMAL, 1: TIME_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, NUMERICAL_ERROR)
    if status != OPTIMAL:
        return SolveResult(status, None, None, None, elapsed, res.message)
    x = np.asarray(res.x)
    dual = np.zeros(len(problem.rows))
    if eq_origin:
        for k, r in enumerate(eq_origin):
            dual[r] = res.eqlin.marginals[k]
    if ub_origin:
        for k, (r, sgn) in enumerate(ub_origin):
            dual[r] = sgn * res.ineqlin.marginals[k]
    return SolveResult(OPTIMAL, problem.objective_value(x), x, dual, elapsed, res.message)


def _svec_rows(block: PsdBlock) -> list[tuple[tuple[int, int], float]]:
    """PSD-triangle vectorization order: upper triangle, column-major,
    off-diagonal entries scaled by sqrt(2)."""
    rt2 = math.sqrt(2.0)
    out = []
    for col in range(block.dim):
        for row in range(col + 1):
            out.append(((row, col), 1.0 if row == col else rt2))
    return out


def _solve_clarabel(problem: ConicProblem, limits: SolveLimits) -> SolveResult:
    import clarabel

    n = problem.num_coords
    q = problem.objective_dense()
    data, ri, ci, b, cones = [], [], [], [], []
    row_pos: list[tuple[int, float]] = []  # stacked position/sign of each problem row

    def push(indices, coeffs, rhs, sgn=1.0):
        k = len(b)
        for i, v in zip(indices, coeffs):
            ri.append(k)
            ci.append(i)
            data.append(sgn * v)
        b.append(sgn * rhs)
        return k

    eq_rows = [(r, row) for r, row in enumerate(problem.rows) if row.sense == EQ]
    ineq_rows = [(r, row) for r, row in enumerate(problem.rows) if row.sense != EQ]
    for r, row in eq_rows:
        row_pos.append((push(row.indices, row.coeffs, row.rhs), 1.0))
    if eq_rows:
        cones.append(clarabel.ZeroConeT(len(eq_rows)))
    num_ineq = 0
    for r, row in ineq_rows:
        sgn = 1.0 if row.sense == LE else -1.0
        row_pos.append((push(row.indices, row.coeffs, row.rhs, sgn), sgn))
        num_ineq += 1
    if problem.lower is not None:
        for i, l in enumerate(problem.lower):
            if math.isfinite(l):
                push((i,), (1.0,), l, -1.0)
                num_ineq += 1
    if problem.upper is not None:
        for i, u in enumerate(problem.upper):
            if math.isfinite(u):
                push((i,), (1.0,), u, 1.0)
                num_ineq += 1
    if num_ineq:
        cones.append(clarabel.NonnegativeConeT(num_ineq))
    for block in problem.psd_blocks:
        for (i, j), scale in _svec_rows(block):
            k = len(b)
            coord = block.entries.get((i, j))
            if coord is not None:
                ri.append(k)
                ci.append(coord)
                data.append(-scale)
            b.append(0.0)
        cones.append(clarabel.PSDTriangleConeT(block.dim))

    A = sparse.csc_matrix((data, (ri, ci)), shape=(len(b), n))
    P = sparse.csc_matrix((n, n))
    bvec = np.array(b)
    t0 = time.perf_counter()
    # escalate the tolerance a decade at a time (never past 1e-6) when the
    # solver stalls just short of the requested accuracy
    tol = limits.tolerance
    attempts = [tol]
    while tol < 1e-6:
        tol = min(tol * 10.0, 1e-6)
        attempts.append(tol)
    sol = None
    used_tol = attempts[0]
    for used_tol in attempts:
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_gap_abs = used_tol
        settings.tol_gap_rel = used_tol
        settings.tol_feas = used_tol
        if limits.time is not None:
            settings.time_limit = max(limits.time, 1e-3)
        try:
            sol = clarabel.DefaultSolver(P, q, A, bvec, cones, settings).solve()
        except Exception as exc:
            return SolveResult(
                NUMERICAL_ERROR, None, None, None, time.perf_counter() - t0, repr(exc)
            )
        if str(sol.status) not in ("AlmostSolved", "InsufficientProgress", "NumericalError"):
            break
    elapsed = time.perf_counter() - t0
    raw = str(sol.status)
    status = {
        "Solved": OPTIMAL,
        "PrimalInfeasible": INFEASIBLE,
        "DualInfeasible": UNBOUNDED,
        "MaxTime": TIME_LIMIT,
    }.get(raw, NUMERICAL_ERROR)
    diagnostic = raw if used_tol == attempts[0] else f"{raw} (tol {used_tol:g} after retry)"
    if status != OPTIMAL:
        return SolveResult(status, None, None, None, elapsed, diagnostic)
    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    dual = np.zeros(len(problem.rows))
    ordered = [r for r, _ in eq_rows] + [r for r, _ in ineq_rows]
    for r, (pos, sgn) in zip(ordered, row_pos):
        dual[r] = sgn * z[pos]
    return SolveResult(OPTIMAL, problem.objective_value(x), x, dual, elapsed, diagnostic)


_BACKENDS: dict[str, Callable[[ConicProblem, SolveLimits], SolveResult]] = {
    "highs": _solve_highs,
    "clarabel": _solve_clarabel,
}


def register_backend(name: str, fn: Callable[[ConicProblem, SolveLimits], SolveResult]) -> None:
    _BACKENDS[name] = fn


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def solve_conic(
    problem: ConicProblem,
    limits: SolveLimits | None = None,
    backend: str = "auto",
) -> SolveResult:
    """Solve a conic problem; failures surface as a result status, never an
    exception."""
    limits = limits or SolveLimits()
    if backend == "auto":
        backend = "clarabel" if problem.psd_blocks else "highs"
    try:
        fn = _BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}; have {available_backends()}") from None
    return fn(problem, limits)


def eigendecomp(M: SymMatrix) -> list[tuple[float, np.ndarray]]:
    """Full spectrum of a symmetric matrix, eigenvalues descending,
    orthonormal eigenvectors."""
    w, V = np.linalg.eigh(M.to_array())
    return [(float(w[k]), V[:, k].copy()) for k in range(len(w) - 1, -1, -1)]


def complete_to_psd(
    Z: EVector,
    *,
    tolerance: float = 1e-8,
    backend: str = "clarabel",
    limits: SolveLimits | None = None,
) -> SymMatrix | None:
    """PSD completion oracle: find Y >= 0 with Y agreeing with Z on its
    support, or report that none exists.

    Solves min s subject to W >= 0 (PSD) where W plays Y + s*I; a completion
    exists iff the optimal s is <= ``tolerance``.
    """
    E = Z.support
    d = E.dim
    coords = {p: k for k, p in enumerate(
        (i, j) for i in range(d) for j in range(i, d)
    )}
    s_idx = len(coords)
    rows = []
    for k, (i, j) in enumerate(E.pairs):
        zij = float(Z.values[k])
        if i == j:
            rows.append(LinearRow((coords[(i, j)], s_idx), (1.0, -1.0), EQ, zij, f"fix[{i},{j}]"))
        else:
            rows.append(LinearRow((coords[(i, j)],), (1.0,), EQ, zij, f"fix[{i},{j}]"))
    # keep the slack bounded below so the program stays bounded even for
    # supports with no diagonal entries
    rows.append(LinearRow((s_idx,), (1.0,), GE, -1e6, "slack_floor"))
    problem = ConicProblem(
        num_coords=len(coords) + 1,
        obj_indices=(s_idx,),
        obj_coeffs=(1.0,),
        rows=tuple(rows),
        psd_blocks=(PsdBlock(d, dict(coords)),),
    )
    result = solve_conic(problem, limits or SolveLimits(tolerance=min(tolerance, 1e-9)), backend)
    if not result.is_optimal:
        raise BackendError(result, "psd completion")
    s_star = float(result.primal[s_idx])
    if s_star > tolerance:
        return None
    W = np.zeros((d, d))
    for (i, j), k in coords.items():
        W[i, j] = W[j, i] = result.primal[k]
    return SymMatrix(W - s_star * np.eye(d))

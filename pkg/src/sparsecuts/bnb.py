"""Miniature spatial branch-and-bound over the sparse LP relaxation.

Node relaxations are the support-space LP with McCormick rows rebuilt from
the node box; cone cuts are inherited unchanged because they outer
approximate the lifted cone independently of the box.  Node selection is
best-bound, branching targets the largest product-consistency violation at
the node optimum.  A uniform grid search with coordinate-descent polish
serves as the upper-bound oracle for tests.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import backend as be
from .model import QcqpInstance, SupportSet, build_support_set
from .relaxation import build_e_lp

__all__ = [
    "BnbNode",
    "GlobalSolveResult",
    "GridSearchResult",
    "solve_global",
    "brute_force_grid",
    "coordinate_descent",
    "polish_point",
]


@dataclass
class BnbNode:
    node_id: int
    parent_id: int | None
    depth: int
    lower: np.ndarray
    upper: np.ndarray
    bound: float
    z_values: np.ndarray | None = field(default=None, repr=False)
    x_hat: np.ndarray | None = field(default=None, repr=False)

    def __lt__(self, other: "BnbNode") -> bool:
        return (self.bound, self.node_id) < (other.bound, other.node_id)


@dataclass
class GlobalSolveResult:
    z_best: float
    x_best: np.ndarray | None
    bound: float
    gap: float
    nodes: int
    status: str
    root_bound: float
    solve_time: float


@dataclass
class GridSearchResult:
    feasible: bool
    value: float | None
    point: np.ndarray | None


def _candidate_points(instance: QcqpInstance, i: int, x: np.ndarray,
                      lo: float, hi: float) -> list[float]:
    """Stationary point plus every feasibility-flip root along coordinate i."""
    cands = [lo, hi, float(x[i])]
    for k in range(instance.m + 1):
        a = instance.Q[k].get((i, i), 0.0)
        b = instance.c[k][i]
        for j in range(instance.n):
            if j != i:
                v = instance.Q[k].get((min(i, j), max(i, j)))
                if v:
                    b += 2.0 * v * x[j]
        if k == 0:
            if a > 1e-14:
                cands.append(-b /(2.0 * a))
            continue
        x0 = x.copy()
        x0[i] = 0.0
        gamma = instance.function_value(k, x0)
        if abs(a) > 1e-14:
            disc = b * b - 4.0 * a * gamma
            if disc >= 0.0:
                r = math.sqrt(disc)
                cands += [(-b - r) / (2.0 * a), (-b + r) / (2.0 * a)]
        elif abs(b) > 1e-14:
            cands.append(-gamma / b)
    return [t for t in cands if lo - 1e-12 <= t <= hi + 1e-12]


def coordinate_descent(
    instance: QcqpInstance,
    x0: np.ndarray,
    *,
    box: tuple[np.ndarray, np.ndarray] | None = None,
    sweeps: int = 25,
    feas_tol: float = 1e-9,
) -> tuple[np.ndarray, float] | None:
    """Feasibility-preserving local polish; None when no feasible start."""
    lo, hi = box if box is not None else (instance.lower, instance.upper)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    if not instance.is_feasible(x, tol=feas_tol):
        return None
    best = instance.objective_value(x)
    for _ in range(sweeps):
        improved = False
        for i in range(instance.n):
            for t in _candidate_points(instance, i, x, float(lo[i]), float(hi[i])):
                trial = x.copy()
                trial[i] = min(max(t, lo[i]), hi[i])
                if not instance.is_feasible(trial, tol=feas_tol):
                    continue
                val = instance.objective_value(trial)
                if val < best - 1e-12:
                    x, best = trial, val
                    improved = True
        if not improved:
            break
    return x, best


def _restore_feasibility(
    instance: QcqpInstance,
    x0: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    target: float = 1e-12,
) -> np.ndarray:
    """Newton backoff on the most-violated constraint; pulls boundary points
    with tiny violations onto the feasible side."""
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    for _ in range(8):
        vals = instance.constraint_values(x) if instance.m else np.zeros(0)
        if vals.size == 0 or vals.max() <= target:
            break
        k = int(np.argmax(vals)) + 1
        grad = instance.c[k] + 2.0 * instance.quad_dense(k) @ x
        norm2 = float(grad @ grad)
        if norm2 <= 1e-16:
            break
        x = np.clip(x - (vals.max() / norm2) * grad * (1.0 + 1e-9), lo, hi)
    return x


def _refine_local(
    instance: QcqpInstance,
    x0: np.ndarray,
    box: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, float] | None:
    """Smooth local refinement (SLSQP); coordinate moves alone stall on
    curved constraint boundaries."""
    lo, hi = box if box is not None else (instance.lower, instance.upper)
    dense = [instance.quad_dense(k) for k in range(instance.m + 1)]

    def fun(k):
        return (
            lambda x, k=k: instance.d[k] + instance.c[k] @ x + x @ dense[k] @ x,
            lambda x, k=k: instance.c[k] + 2.0 * dense[k] @ x,
        )

    f0, g0 = fun(0)
    cons = []
    for k in range(1, instance.m + 1):
        fk, gk = fun(k)
        cons.append({"type": "ineq",
                     "fun": (lambda x, fk=fk: -fk(x)),
                     "jac": (lambda x, gk=gk: -gk(x))})
    try:
        res = minimize(
            f0, np.clip(x0, lo, hi), jac=g0, method="SLSQP",
            bounds=list(zip(lo, hi)), constraints=cons,
            options={"maxiter": 200, "ftol": 1e-12},
        )
    except Exception:
        return None
    x = _restore_feasibility(instance, res.x, lo, hi)
    if not instance.is_feasible(x, tol=1e-9):
        return None
    return x, instance.objective_value(x)


def polish_point(
    instance: QcqpInstance,
    x0: np.ndarray,
    *,
    box: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, float] | None:
    """Feasibility restoration, coordinate descent, then smooth refinement."""
    lo, hi = box if box is not None else (instance.lower, instance.upper)
    start = _restore_feasibility(instance, np.asarray(x0, dtype=float), lo, hi)
    best = coordinate_descent(instance, start, box=box)
    refined = _refine_local(instance, best[0] if best is not None else start, box)
    if refined is not None and (best is None or refined[1] < best[1]):
        best = refined
    return best


def _branch_variable(instance: QcqpInstance, E: SupportSet, z: np.ndarray,
                     x_hat: np.ndarray) -> tuple[int, float]:
    """Variable with the largest |Z_ii - x_i^2| + max_j |Z_ij - x_i x_j|."""
    best_i, best_score = 0, -1.0
    for i in range(1, instance.n + 1):
        zii = z[E.index(i, i)]
        score = abs(zii - x_hat[i - 1] ** 2)
        off = 0.0
        for j in range(1, instance.n + 1):
            if j != i and (i, j) in E:
                zij = z[E.index(i, j)]
                off = max(off, abs(zij - x_hat[i - 1] * x_hat[j - 1]))
        score += off
        if score > best_score:
            best_i, best_score = i, score
    return best_i, best_score


def solve_global(
    instance: QcqpInstance,
    cuts=(),
    *,
    eps_rel: float = 1e-4,
    node_limit: int = 100_000,
    time_limit: float | None = None,
    lp_backend: str = "auto",
) -> GlobalSolveResult:
    """Globally solve a small QCQP by spatial branch and bound.

    ``cuts`` is a pool of support-space cone cuts, valid on every sub-box;
    they tighten each node LP.  Terminates when
    (z_best - bound) / max(1, |z_best|) <= eps_rel or a limit is hit.
    """
    t0 = time.perf_counter()
    E = build_support_set(instance)
    z_best = math.inf
    x_best: np.ndarray | None = None
    nodes_solved = 0
    pruned_floor = math.inf
    next_id = itertools.count()

    def gap_of(bound: float) -> float:
        if not math.isfinite(z_best):
            return math.inf
        return (z_best - bound) / max(1.0, abs(z_best))

    def solve_node(lo: np.ndarray, hi: np.ndarray):
        nonlocal nodes_solved
        nodes_solved += 1
        lp = build_e_lp(instance, cuts, mccormick="E", box=(lo, hi), support=E)
        return be.solve_conic(lp, be.SolveLimits(), lp_backend)

    def try_incumbent(x_hat: np.ndarray) -> None:
        nonlocal z_best, x_best
        x = np.clip(x_hat, instance.lower, instance.upper)
        if instance.is_feasible(x, tol=1e-8):
            val = instance.objective_value(x)
            if val < z_best:
                z_best, x_best = val, x.copy()
        polished = polish_point(instance, x)
        if polished is not None and polished[1] < z_best:
            x_best, z_best = polished[0], polished[1]

    root = solve_node(instance.lower, instance.upper)
    if root.status == be.INFEASIBLE:
        return GlobalSolveResult(math.inf, None, math.inf, 0.0, nodes_solved,
                                 "infeasible", math.inf, time.perf_counter() - t0)
    if not root.is_optimal:
        return GlobalSolveResult(math.inf, None, -math.inf, math.inf, nodes_solved,
                                 "backend_error", -math.inf, time.perf_counter() - t0)
    root_bound = root.objective
    x_hat = np.array([root.primal[E.index(0, i)] for i in range(1, instance.n + 1)])
    try_incumbent(x_hat)
    heap: list[BnbNode] = [
        BnbNode(next(next_id), None, 0, instance.lower.copy(), instance.upper.copy(),
                root_bound, root.primal.copy(), x_hat)
    ]
    bound = root_bound
    status = None
    while heap and status is None:
        if time_limit is not None and time.perf_counter() - t0 > time_limit:
            status = "time_limit"
            break
        node = heapq.heappop(heap)
        bound = max(bound, min(node.bound, pruned_floor))
        if gap_of(bound) <= eps_rel:
            status = "optimal"
            break
        if nodes_solved >= node_limit:
            status = "node_limit"
            break
        i, score = _branch_variable(instance, E, node.z_values, node.x_hat)
        width = node.upper[i - 1] - node.lower[i - 1]
        if score <= 1e-9 or width <= 1e-12:
            # relaxation is product-consistent here; the node bound is exact
            try_incumbent(node.x_hat)
            pruned_floor = min(pruned_floor, node.bound)
            continue
        split = float(np.clip(node.x_hat[i - 1],
                              node.lower[i - 1] + 0.1 * width,
                              node.upper[i - 1] - 0.1 * width))
        for side in (0, 1):
            lo, hi = node.lower.copy(), node.upper.copy()
            if side == 0:
                hi[i - 1] = split
            else:
                lo[i - 1] = split
            res = solve_node(lo, hi)
            if res.status == be.INFEASIBLE:
                continue
            if not res.is_optimal:
                status = "backend_error"
                break
            child_bound = max(res.objective, node.bound - 1e-9)
            child_x = np.array([res.primal[E.index(0, t)] for t in range(1, instance.n + 1)])
            try_incumbent(child_x)
            if gap_of(child_bound) <= eps_rel:
                pruned_floor = min(pruned_floor, child_bound)
                continue
            heapq.heappush(
                heap,
                BnbNode(next(next_id), node.node_id, node.depth + 1, lo, hi,
                        child_bound, res.primal.copy(), child_x),
            )
    if status is None:
        # every region was resolved; the floor of the pruned leaves is the bound
        if math.isfinite(z_best):
            bound = max(bound, min(pruned_floor, z_best))
            status = "optimal"
        else:
            bound = pruned_floor if math.isfinite(pruned_floor) else math.inf
            status = "infeasible"
    if math.isfinite(z_best):
        bound = min(bound, z_best)
    return GlobalSolveResult(
        z_best=z_best,
        x_best=x_best,
        bound=bound,
        gap=gap_of(bound),
        nodes=nodes_solved,
        status=status,
        root_bound=root_bound,
        solve_time=time.perf_counter() - t0,
    )


def _axis_grid(lo: float, hi: float, resolution: int) -> np.ndarray:
    return np.linspace(lo, hi, resolution) if resolution > 1 else np.array([(lo + hi) / 2.0])


def brute_force_grid(
    instance: QcqpInstance,
    resolution: int = 11,
    *,
    feas_tol: float = 1e-9,
    polish_starts: int = 5,
) -> GridSearchResult:
    """Best feasible objective on a uniform grid, locally refined by
    coordinate descent; an upper-bound oracle (finding nothing feasible is
    not a proof of infeasibility)."""
    n = instance.n
    axes = [_axis_grid(instance.lower[i], instance.upper[i], resolution) for i in range(n)]
    quads = [list(instance.Q[k].items()) for k in range(instance.m + 1)]

    def evaluate(P: np.ndarray, k: int) -> np.ndarray:
        vals = np.full(P.shape[0], instance.d[k]) + P @ instance.c[k]
        for (i, j), v in quads[k]:
            vals += (v if i == j else 2.0 * v) * P[:, i] * P[:, j]
        return vals

    top: list[tuple[float, np.ndarray]] = []
    for first in axes[0]:
        mesh = np.meshgrid(*axes[1:], indexing="ij") if n > 1 else []
        rest = np.stack([m.ravel() for m in mesh], axis=1) if n > 1 else np.zeros((1, 0))
        P = np.column_stack([np.full(rest.shape[0], first), rest])
        feas = np.ones(P.shape[0], dtype=bool)
        for k in range(1, instance.m + 1):
            feas &= evaluate(P, k) <= feas_tol
            if not feas.any():
                break
        if not feas.any():
            continue
        vals = evaluate(P, 0)
        vals[~feas] = np.inf
        order = np.argsort(vals)[: polish_starts]
        for idx in order:
            if np.isfinite(vals[idx]):
                top.append((float(vals[idx]), P[idx].copy()))
    if not top:
        return GridSearchResult(False, None, None)
    top.sort(key=lambda t: t[0])
    best_val, best_x = top[0]
    for val, x in top[:polish_starts]:
        polished = polish_point(instance, x)
        if polished is not None and polished[1] < best_val:
            best_x, best_val = polished[0], polished[1]
    return GridSearchResult(True, best_val, best_x)

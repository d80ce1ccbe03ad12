"""Cutting-plane orchestration: four strategies, gap tracking, stopping rules.

A run computes the strategy's no-cut LP bound (z_mcc) and its conic
reference bound (z_sdp; the DNN bound when the run separates against the
DNN cone), then alternates LP solves with separation until the gap-closed
target, a no-violation certificate, or a limit is hit.  The reference
conic problem carries the same McCormick rows as the LP so the bound chain
z_mcc <= z_lp <= z_sdp holds throughout.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import backend as be
from .model import EVector, QcqpInstance, SymMatrix, build_support_set, evec_inner, project_to_E
from .relaxation import (
    GE,
    ConicProblem,
    LinearRow,
    build_e_lp,
    build_shor_sdp,
    full_pair_index,
)
from .separation import (
    DENSE,
    EDNN,
    EPSD,
    TOL_VIOLATION,
    CertificateError,
    Cut,
    blend_point,
    dense_eigen_cuts,
    separate_ednn,
    separate_epsd,
)

__all__ = [
    "DENSE_MCC_CUTS",
    "DENSE_CUTS",
    "SPARSE_CUTS",
    "SDP_SPARSE_CUTS",
    "VARIANTS",
    "Strategy",
    "RunLimits",
    "IterationRecord",
    "Trace",
    "DegenerateGapError",
    "gap_closed",
    "run_cutting_plane",
    "prune_slack_cuts",
]

DENSE_MCC_CUTS = "dense_mcc_cuts"
DENSE_CUTS = "dense_cuts"
SPARSE_CUTS = "sparse_cuts"
SDP_SPARSE_CUTS = "sdp_sparse_cuts"
VARIANTS = (DENSE_MCC_CUTS, DENSE_CUTS, SPARSE_CUTS, SDP_SPARSE_CUTS)

CONE_EPSD = "epsd"
CONE_EDNN_IF_NONNEG = "ednn_if_nonneg"


class DegenerateGapError(ValueError):
    """The conic bound equals the McCormick bound; gap closed is undefined."""


@dataclass(frozen=True)
class Strategy:
    variant: str
    cone_mode: str = CONE_EPSD
    alpha: float = 0.001

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.cone_mode not in (CONE_EPSD, CONE_EDNN_IF_NONNEG):
            raise ValueError(f"unknown cone mode {self.cone_mode!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie strictly in (0, 1)")

    @property
    def is_dense(self) -> bool:
        return self.variant in (DENSE_MCC_CUTS, DENSE_CUTS)

    @property
    def is_accelerated(self) -> bool:
        return self.variant == SDP_SPARSE_CUTS

    @property
    def mccormick(self) -> str:
        return "full" if self.variant == DENSE_MCC_CUTS else "E"


@dataclass(frozen=True)
class RunLimits:
    time: float | None = 60.0
    max_iters: int = 1000
    gc_target: float | None = 0.99


@dataclass
class IterationRecord:
    iter: int
    z_lp: float
    gc: float
    num_cuts: int
    t_separation: float
    t_lp: float
    violation: float | None = None  # at the separation point; None if none found
    violation_lp: float | None = None  # at the raw LP point, when recorded
    fallback: bool = False


@dataclass
class Trace:
    instance: str
    strategy: Strategy
    cut_mode: str  # EPSD / EDNN / DENSE actually used
    z_mcc: float
    z_sdp: float  # reference conic bound (DNN bound when cut_mode == EDNN)
    t_sdp: float
    records: list[IterationRecord] = field(default_factory=list)
    cuts: list[Cut] = field(default_factory=list)
    status: str = "running"
    total_time: float = 0.0
    lp_coords: int = 0

    @property
    def z_lp(self) -> float:
        return self.records[-1].z_lp if self.records else self.z_mcc

    @property
    def final_gc(self) -> float:
        return self.records[-1].gc if self.records else 0.0

    @property
    def t_lastlp(self) -> float:
        return self.records[-1].t_lp if self.records else 0.0

    @property
    def num_cuts(self) -> int:
        return len(self.cuts)

    @property
    def iterations(self) -> int:
        return len(self.records)


def gap_closed(z_lp: float, z_mcc: float, z_sdp: float) -> float:
    """(z_lp - z_mcc) / (z_sdp - z_mcc); raises when the denominator vanishes."""
    if z_sdp <= z_mcc + 1e-9:
        raise DegenerateGapError(
            f"conic bound {z_sdp!r} does not exceed the McCormick bound {z_mcc!r}"
        )
    return (z_lp - z_mcc) / (z_sdp - z_mcc)


def _lifted_matrix(dim: int, primal: np.ndarray) -> SymMatrix:
    a = np.zeros((dim, dim))
    for (i, j), k in full_pair_index(dim).items():
        a[i, j] = a[j, i] = primal[k]
    return SymMatrix(a)


def _dense_cut_row(cut: Cut, dim: int, label: str) -> LinearRow:
    a = cut.matrix.to_array()
    idx, val = [], []
    for (i, j), k in full_pair_index(dim).items():
        v = a[i, j] * (1.0 if i == j else 2.0)
        if v != 0.0:
            idx.append(k)
            val.append(v)
    return LinearRow(tuple(idx), tuple(val), GE, 0.0, label)


def run_cutting_plane(
    instance: QcqpInstance,
    strategy: Strategy,
    limits: RunLimits | None = None,
    *,
    tol_violation: float = TOL_VIOLATION,
    eig_tol: float = 1e-6,
    lp_backend: str = "auto",
    sdp_backend: str = "auto",
    record_lp_violation: bool = False,
) -> Trace:
    """Run one strategy on one instance and return its trace.

    Raises :class:`DegenerateGapError` when the reference bound equals the
    McCormick bound (such instances are excluded from experiments); backend
    failures mark the trace status and stop the loop gracefully.
    """
    limits = limits or RunLimits()
    t_start = time.perf_counter()

    def remaining() -> float | None:
        if limits.time is None:
            return None
        return limits.time - (time.perf_counter() - t_start)

    E = build_support_set(instance)
    d = instance.n + 1
    if strategy.is_dense:
        cut_mode = DENSE
    elif strategy.cone_mode == CONE_EDNN_IF_NONNEG and instance.nonneg:
        cut_mode = EDNN
    else:
        cut_mode = EPSD

    # reference conic bound with the strategy's McCormick rows; dense
    # strategies also carry interval bounds so the LP obtained by dropping
    # the PSD block stays numerically tame on its off-support columns
    ref_problem = build_shor_sdp(
        instance, mccormick=strategy.mccormick, dnn=(cut_mode == EDNN),
        lifted_bounds=strategy.is_dense,
    )
    ref_result = be.solve_conic(ref_problem, be.SolveLimits(time=remaining()), sdp_backend)
    t_sdp = ref_result.solve_time
    if not ref_result.is_optimal:
        trace = Trace(instance.name, strategy, cut_mode, float("nan"), float("nan"), t_sdp)
        trace.status = "backend_error" if ref_result.status != be.TIME_LIMIT else "time_limit"
        trace.total_time = time.perf_counter() - t_start
        return trace
    z_sdp = ref_result.objective
    y_ref = SymMatrix(ref_problem.psd_blocks[0].materialize(ref_result.primal))
    y_ref_e = project_to_E(y_ref, E)

    def make_lp(pool: list[Cut]) -> ConicProblem:
        if strategy.is_dense:
            lp = ref_problem.without_psd_blocks()
            return lp.with_extra_rows(
                _dense_cut_row(c, d, f"cut[{t}]") for t, c in enumerate(pool)
            )
        return build_e_lp(instance, pool, mccormick="E", support=E)

    def separate(point: EVector, tol: float) -> Cut | None:
        lim = be.SolveLimits(time=remaining(), tolerance=1e-9)
        if cut_mode == EDNN:
            return separate_ednn(
                point, nonneg=instance.nonneg, tol_violation=tol,
                backend=sdp_backend, limits=lim,
            )
        return separate_epsd(point, tol_violation=tol, backend=sdp_backend, limits=lim)

    pool: list[Cut] = []
    mcc_result = be.solve_conic(make_lp(pool), be.SolveLimits(time=remaining()), lp_backend)
    if not mcc_result.is_optimal:
        trace = Trace(instance.name, strategy, cut_mode, float("nan"), z_sdp, t_sdp)
        trace.status = "backend_error"
        trace.total_time = time.perf_counter() - t_start
        return trace
    z_mcc = mcc_result.objective
    gap_closed(z_sdp, z_mcc, z_sdp)  # raises DegenerateGapError when degenerate

    trace = Trace(instance.name, strategy, cut_mode, z_mcc, z_sdp, t_sdp)
    problem = make_lp(pool)
    trace.lp_coords = problem.num_coords
    lp_result = mcc_result
    try:
        for it in range(1, limits.max_iters + 1):
            if it > 1:
                budget = remaining()
                if budget is not None and budget <= 0:
                    trace.status = "time_limit"
                    break
                lp_result = be.solve_conic(problem, be.SolveLimits(time=budget), lp_backend)
                if not lp_result.is_optimal:
                    trace.status = (
                        "time_limit" if lp_result.status == be.TIME_LIMIT else "backend_error"
                    )
                    break
            if not strategy.is_dense:
                assert problem.num_coords == len(E), "sparse LP left the support space"
            z_lp = lp_result.objective
            record = IterationRecord(
                iter=it,
                z_lp=z_lp,
                gc=gap_closed(z_lp, z_mcc, z_sdp),
                num_cuts=len(pool),
                t_separation=0.0,
                t_lp=lp_result.solve_time,
            )
            trace.records.append(record)
            if limits.gc_target is not None and record.gc >= limits.gc_target:
                trace.status = "gc_target"
                break
            budget = remaining()
            if budget is not None and budget <= 0:
                trace.status = "time_limit"
                break

            t_sep0 = time.perf_counter()
            if strategy.is_dense:
                y_hat = _lifted_matrix(d, lp_result.primal)
                new_cuts = dense_eigen_cuts(y_hat, eig_tol)
                record.t_separation = time.perf_counter() - t_sep0
                if not new_cuts:
                    trace.status = "no_violation"
                    break
                record.violation = min(c.violation for c in new_cuts)
                start = len(pool)
                pool.extend(new_cuts)
                problem = problem.with_extra_rows(
                    _dense_cut_row(c, d, f"cut[{start + s}]") for s, c in enumerate(new_cuts)
                )
            else:
                z_hat = EVector(E, lp_result.primal)
                if strategy.is_accelerated:
                    point = blend_point(z_hat, y_ref_e, strategy.alpha)
                    # blending contracts violations by a factor of alpha, so
                    # the acceptance threshold contracts with it
                    tol_point = tol_violation * strategy.alpha
                else:
                    point, tol_point = z_hat, tol_violation
                lp_cut = None
                if record_lp_violation and strategy.is_accelerated:
                    lp_cut = separate(z_hat, tol_violation)
                    record.violation_lp = lp_cut.violation if lp_cut else None
                cut = separate(point, tol_point)
                if cut is None and strategy.is_accelerated:
                    # blended point is clean but the target is not reached:
                    # fall back to separating the raw LP point
                    cut = lp_cut if record_lp_violation else separate(z_hat, tol_violation)
                    record.fallback = cut is not None
                record.t_separation = time.perf_counter() - t_sep0
                if cut is None:
                    trace.status = "no_violation"
                    break
                record.violation = cut.violation
                if record_lp_violation and not strategy.is_accelerated:
                    record.violation_lp = cut.violation
                pool.append(cut)
                problem = make_lp(pool)
        else:
            trace.status = "max_iters"
    except be.BackendError:
        trace.status = "backend_error"
    except CertificateError:
        trace.status = "backend_error"
    trace.cuts = pool
    trace.total_time = time.perf_counter() - t_start
    return trace


def prune_slack_cuts(
    instance: QcqpInstance,
    cuts: list[Cut],
    *,
    slack_tol: float = 1e-6,
    lp_backend: str = "auto",
) -> list[Cut]:
    """Drop sparse cuts slack at the final LP optimum; keep the full pool if
    the re-solved bound degrades."""
    sparse_cuts = [c for c in cuts if c.mode in (EPSD, EDNN)]
    if len(sparse_cuts) != len(cuts) or not cuts:
        return list(cuts)
    E = sparse_cuts[0].coeffs.support
    full = be.solve_conic(build_e_lp(instance, cuts, support=E), backend=lp_backend)
    if not full.is_optimal:
        return list(cuts)
    z_hat = EVector(E, full.primal)
    kept = [c for c in cuts if evec_inner(c.coeffs, z_hat) <= slack_tol]
    if len(kept) == len(cuts):
        return list(cuts)
    pruned = be.solve_conic(build_e_lp(instance, kept, support=E), backend=lp_backend)
    tol = 1e-8 * max(1.0, abs(full.objective))
    if not pruned.is_optimal or pruned.objective < full.objective - tol:
        return list(cuts)
    return kept

"""Shared fixtures and deterministic instance selection for the suite."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import sparsecuts as sc
from sparsecuts import backend as be
from sparsecuts.relaxation import build_e_lp, build_shor_sdp

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def make_instance(n, Q, c, d, lower=None, upper=None, name="test"):
    lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float)
    upper = np.ones(n) if upper is None else np.asarray(upper, dtype=float)
    cs = tuple(np.asarray(ck, dtype=float) for ck in c)
    return sc.QcqpInstance(name=name, n=n, Q=tuple(Q), c=cs, d=tuple(d),
                           lower=lower, upper=upper)


def bilinear_instance():
    """min -x1*x2 on [0,1]^2 (off-diagonal entries count twice)."""
    return make_instance(2, [{(0, 1): -0.5}], [np.zeros(2)], [0.0], name="bilinear")


def neg_square_instance():
    """min -x^2 on [0,1]."""
    return make_instance(1, [{(0, 0): -1.0}], [np.zeros(1)], [0.0], name="neg_square")


@lru_cache(maxsize=None)
def _usability(n: int, rho: float, num_qc: int, index: int):
    inst = sc.generate_boxqcqp(sc.GeneratorConfig.from_index(n, rho, num_qc, index))
    evals = np.linalg.eigvalsh(inst.quad_dense(0))
    if evals[0] >= -1e-6:
        return None
    lp = be.solve_conic(build_e_lp(inst))
    sdp = be.solve_conic(build_shor_sdp(inst, mccormick="E"))
    if not (lp.is_optimal and sdp.is_optimal):
        return None
    if sdp.objective <= lp.objective + 1e-6 * max(1.0, abs(lp.objective)):
        return None
    return inst


def usable_boxqcqp(n: int, rho: float, num_qc: int, count: int, start: int = 1):
    """Deterministically pick nonconvex, non-degenerate generated instances."""
    out = []
    index = start
    while len(out) < count and index < start + 60:
        inst = _usability(n, rho, num_qc, index)
        if inst is not None:
            out.append(inst)
        index += 1
    if len(out) < count:
        raise RuntimeError(f"could not find {count} usable instances for n={n}, rho={rho}")
    return out


def cycle_pattern_instance(trial: int, seed: int = 777):
    """Random 4-variable instance whose quadratic support is a 4-cycle (the
    smallest lifted pattern that is not chordal, where the DNN and PSD
    projections can differ)."""
    rng = np.random.default_rng(seed)
    n = 4
    pairs = [(0, 0), (1, 1), (2, 2), (3, 3), (0, 1), (1, 2), (2, 3), (0, 3)]
    for _ in range(trial + 1):
        Q0 = {p: float(rng.integers(-10, 11)) for p in pairs}
        Q0 = {p: v for p, v in Q0.items() if v}
        c0 = rng.integers(-10, 11, size=n).astype(float)
        Q1 = {p: float(rng.integers(-10, 11)) for p in pairs}
        Q1 = {p: v for p, v in Q1.items() if v}
        c1 = rng.integers(-10, 11, size=n).astype(float)
    x_mid = np.full(n, 0.5)
    quad = sum(v * 0.25 * (1.0 if i == j else 2.0) for (i, j), v in Q1.items())
    d1 = -(quad + float(c1 @ x_mid))
    return make_instance(n, [Q0, Q1], [c0, c1], [0.0, d1], name=f"cycle{trial}")


@lru_cache(maxsize=1)
def dnn_gap_search(max_trials: int = 200, min_gap: float = 1e-4):
    """Search cycle-pattern instances for a strict DNN-over-PSD bound gap."""
    hits = []
    for trial in range(max_trials):
        inst = cycle_pattern_instance(trial)
        rs = be.solve_conic(build_shor_sdp(inst, mccormick="E"))
        rd = be.solve_conic(build_shor_sdp(inst, mccormick="E", dnn=True))
        if not (rs.is_optimal and rd.is_optimal):
            continue
        if rd.objective - rs.objective > min_gap:
            hits.append(trial)
    return tuple(hits)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)

"""Cut generation against the PSD and doubly-nonnegative cones.

Three producers: dense eigenvector cuts from a spectral decomposition of
the full lifted matrix, sparse cuts supported on E found by a projection
SDP (min <C_E, Z> over normalized PSD matrices vanishing off E), and the
doubly-nonnegative variant where off-support entries may go nonpositive
instead of zero.  A blended separation point close to the reference conic
optimum accelerates the cutting-plane loop.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from . import backend as be
from .model import (
    EVector,
    SupportMismatchError,
    SupportSet,
    SymMatrix,
    embed_from_E,
    evec_inner,
)
from .relaxation import LE, ConicProblem, LinearRow, PsdBlock

__all__ = [
    "Cut",
    "ModeViolationError",
    "CertificateError",
    "EPSD",
    "EDNN",
    "DENSE",
    "TOL_VIOLATION",
    "dense_eigen_cuts",
    "epsd_separation_problem",
    "ednn_separation_problem",
    "separate_epsd",
    "separate_ednn",
    "blend_point",
    "cuts_to_json",
    "cuts_from_json",
]

EPSD, EDNN, DENSE = "EPSD", "EDNN", "DENSE"

TOL_VIOLATION = 1e-6  # normalized objective below -tol counts as violated
_CERT_PSD_TOL = 1e-7
_CERT_OFF_SUPPORT_TOL = 1e-9
_CERT_TRACE_TOL = 1e-8


class ModeViolationError(ValueError):
    """DNN-mode separation requested for an instance without sign restrictions."""


class CertificateError(RuntimeError):
    """The separation solver returned a certificate violating its cone."""


@dataclass(frozen=True)
class Cut:
    """A valid inequality <C, Z> >= 0 for the outer-approximated cone.

    Sparse cuts (EPSD/EDNN) carry their coefficients as an E-vector plus the
    PSD certificate matrix from the separation SDP; dense cuts carry a full
    rank-one coefficient matrix and the originating eigenvector.
    Deserialized cuts have no certificate.
    """

    mode: str
    violation: float
    coeffs: EVector | None = None
    matrix: SymMatrix | None = None
    certificate: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.mode in (EPSD, EDNN):
            if self.coeffs is None:
                raise ValueError(f"{self.mode} cut requires support-space coefficients")
        elif self.mode == DENSE:
            if self.matrix is None:
                raise ValueError("dense cut requires a coefficient matrix")
        else:
            raise ValueError(f"unknown cut mode {self.mode!r}")


def _check_certificate(mode: str, coeffs: EVector, cert: np.ndarray) -> None:
    w = np.linalg.eigvalsh(cert)
    if w[0] < -_CERT_PSD_TOL:
        raise CertificateError(f"certificate not PSD: min eigenvalue {w[0]:.3e}")
    diag = np.diag(cert)
    if diag.min() < -_CERT_PSD_TOL:
        raise CertificateError(f"certificate has negative diagonal {diag.min():.3e}")
    if diag.sum() > 1.0 + _CERT_TRACE_TOL:
        raise CertificateError(f"certificate trace {diag.sum():.12f} exceeds normalization")
    E = coeffs.support
    if mode == EDNN:
        off = cert.copy()
        off[E.rows, E.cols] = 0.0
        off[E.cols, E.rows] = 0.0
        if off.max() > _CERT_OFF_SUPPORT_TOL:
            raise CertificateError(
                f"off-support certificate entry {off.max():.3e} above tolerance"
            )
        if not np.allclose(cert[E.rows, E.cols], coeffs.values, atol=1e-12):
            raise CertificateError("cut coefficients disagree with certificate restriction")


def dense_eigen_cuts(Y_hat: SymMatrix, tol: float = 1e-6) -> list[Cut]:
    """One rank-one cut vv' per eigenvalue below -tol*||Y||_2."""
    spectrum = be.eigendecomp(Y_hat)
    norm = max(abs(spectrum[0][0]), abs(spectrum[-1][0]))
    threshold = tol * norm
    cuts = []
    for lam, v in spectrum:
        if lam < -threshold:
            cuts.append(
                Cut(mode=DENSE, violation=float(lam), matrix=SymMatrix(np.outer(v, v)),
                    certificate=v.copy())
            )
    return cuts


def _solve_separation(problem: ConicProblem, limits, backend: str, context: str) -> be.SolveResult:
    result = be.solve_conic(problem, limits or be.SolveLimits(tolerance=1e-9), backend)
    if not result.is_optimal:
        raise be.BackendError(result, context)
    return result


def epsd_separation_problem(z_hat: EVector) -> ConicProblem:
    """Projection SDP: min <C_E, z_hat> over PSD C vanishing off the
    support with trace(C) <= 1 (the diagonal l1 normalization; PSD forces
    the diagonal nonnegative so the two coincide)."""
    E = z_hat.support
    index_of = {p: k for k, p in enumerate(E.pairs)}
    obj_idx = tuple(range(len(E)))
    obj_val = tuple(E.weights * z_hat.values)
    diag = tuple(index_of[(i, i)] for i in range(E.dim) if (i, i) in index_of)
    rows = (LinearRow(diag, (1.0,) * len(diag), LE, 1.0, "trace_norm"),)
    return ConicProblem(
        num_coords=len(E),
        obj_indices=obj_idx,
        obj_coeffs=obj_val,
        rows=rows,
        psd_blocks=(PsdBlock(E.dim, dict(index_of)),),
    )


def separate_epsd(
    z_hat: EVector,
    *,
    tol_violation: float = TOL_VIOLATION,
    backend: str = "auto",
    limits: be.SolveLimits | None = None,
) -> Cut | None:
    """Most-violated normalized cut supported on z_hat's support set, or
    None when no inequality is violated beyond tolerance."""
    E = z_hat.support
    problem = epsd_separation_problem(z_hat)
    result = _solve_separation(problem, limits, backend, "projection SDP")
    coeffs = EVector(E, result.primal)
    violation = evec_inner(coeffs, z_hat)
    if violation >= -tol_violation:
        return None
    cert = embed_from_E(coeffs).to_array()
    _check_certificate(EPSD, coeffs, cert)
    return Cut(mode=EPSD, violation=violation, coeffs=coeffs, certificate=np.array(cert))


def ednn_separation_problem(z_hat: EVector) -> ConicProblem:
    """DNN projection SDP: like the PSD variant but off-support entries may
    go nonpositive instead of vanishing.  Coordinates are all canonical
    pairs, lexicographic."""
    E = z_hat.support
    d = E.dim
    for i in range(d):
        if (i, i) not in E:
            raise ModeViolationError("DNN separation requires the full diagonal in the support")
    all_pairs = list(itertools.combinations_with_replacement(range(d), 2))
    index_of = {p: k for k, p in enumerate(all_pairs)}
    obj_idx = tuple(index_of[p] for p in E.pairs)
    obj_val = tuple(E.weights * z_hat.values)
    rows = [
        LinearRow(
            tuple(index_of[(i, i)] for i in range(d)), (1.0,) * d, LE, 1.0, "trace_norm"
        )
    ]
    for p, k in index_of.items():
        if p not in E:
            rows.append(LinearRow((k,), (1.0,), LE, 0.0, f"off_support[{p[0]},{p[1]}]"))
    return ConicProblem(
        num_coords=len(all_pairs),
        obj_indices=obj_idx,
        obj_coeffs=obj_val,
        rows=tuple(rows),
        psd_blocks=(PsdBlock(d, dict(index_of)),),
    )


def separate_ednn(
    z_hat: EVector,
    *,
    nonneg: bool,
    tol_violation: float = TOL_VIOLATION,
    backend: str = "auto",
    limits: be.SolveLimits | None = None,
) -> Cut | None:
    """DNN-cone variant of :func:`separate_epsd`, valid once the box
    enforces x >= 0."""
    if not nonneg:
        raise ModeViolationError("DNN separation requires a nonnegative instance box")
    E = z_hat.support
    d = E.dim
    problem = ednn_separation_problem(z_hat)
    all_pairs = list(itertools.combinations_with_replacement(range(d), 2))
    index_of = {p: k for k, p in enumerate(all_pairs)}
    result = _solve_separation(problem, limits, backend, "DNN projection SDP")
    coeffs = EVector(E, np.array([result.primal[index_of[p]] for p in E.pairs]))
    violation = evec_inner(coeffs, z_hat)
    if violation >= -tol_violation:
        return None
    cert = np.zeros((d, d))
    for (i, j), k in index_of.items():
        cert[i, j] = cert[j, i] = result.primal[k]
    _check_certificate(EDNN, coeffs, cert)
    return Cut(mode=EDNN, violation=violation, coeffs=coeffs, certificate=cert)


def blend_point(z_lp: EVector, y_ref: EVector, alpha: float = 0.001) -> EVector:
    """Convex combination alpha*z_lp + (1-alpha)*y_ref, 0 < alpha < 1."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie strictly in (0, 1)")
    if z_lp.support is not y_ref.support and z_lp.support != y_ref.support:
        raise SupportMismatchError("blend operands live on different support sets")
    return EVector(z_lp.support, alpha * z_lp.values + (1.0 - alpha) * y_ref.values)


def _num(v: float) -> str:
    return repr(float(v))


def cuts_to_json(cuts) -> str:
    """Serialize a cut pool: [{mode, pairs, values, violation}, ...]."""
    items = []
    for cut in cuts:
        if cut.mode == DENSE:
            a = cut.matrix.to_array()
            d = cut.matrix.dim
            pairs = list(itertools.combinations_with_replacement(range(d), 2))
            values = [_num(a[i, j]) for (i, j) in pairs]
        else:
            pairs = [list(p) for p in cut.coeffs.support.pairs]
            values = [_num(v) for v in cut.coeffs.values]
        items.append(
            {
                "mode": cut.mode,
                "pairs": [list(p) for p in pairs],
                "values": values,
                "violation": _num(cut.violation),
            }
        )
    return json.dumps(items, indent=2) + "\n"


def cuts_from_json(text: str | bytes, support: SupportSet) -> list[Cut]:
    """Rebuild a serialized pool against a known support set (certificates
    are not serialized; deserialized cuts enter LPs as plain rows)."""
    doc = json.loads(text.decode() if isinstance(text, bytes) else text)
    out = []
    for t, item in enumerate(doc):
        mode = item["mode"]
        pairs = [tuple(p) for p in item["pairs"]]
        values = [float(v) for v in item["values"]]
        if any(not math.isfinite(v) for v in values):
            raise ValueError(f"cut #{t}: non-finite coefficient")
        violation = float(item["violation"])
        if mode == DENSE:
            dim = support.dim
            a = np.zeros((dim, dim))
            for (i, j), v in zip(pairs, values):
                a[i, j] = a[j, i] = v
            out.append(Cut(mode=DENSE, violation=violation, matrix=SymMatrix(a)))
        elif mode in (EPSD, EDNN):
            cut_support = SupportSet(support.dim, pairs)
            if cut_support != support:
                raise SupportMismatchError(f"cut #{t} pairs do not match the target support")
            by_pair = {tuple(sorted(p)): v for p, v in zip(pairs, values)}
            ordered = np.array([by_pair[p] for p in support.pairs])
            out.append(Cut(mode=mode, violation=violation, coeffs=EVector(support, ordered)))
        else:
            raise ValueError(f"cut #{t}: unknown mode {mode!r}")
    return out

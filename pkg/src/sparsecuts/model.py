"""Core data model: QCQP instances, symmetric matrices, support sets and E-vectors.

A QCQP instance carries an objective (k=0) and m inequality constraints
(k=1..m), each a quadratic x'Qx + c'x + d over a finite box.  The lifted
matrix space uses indices 0..n where row/column 0 is the homogenization
(Y[0,0] = 1, Y[0,i] = x_i).  The support set E collects the index pairs
that carry structure: the first row/column, the diagonal, and every pair
where some Q matrix has a nonzero entry.  E-vectors are real assignments
on the canonical (upper-triangular) representatives of E; their inner
product counts off-diagonal pairs twice so that it agrees with the trace
inner product of the zero-filled symmetric embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "DimensionMismatchError",
    "SupportMismatchError",
    "QcqpInstance",
    "SymMatrix",
    "SupportSet",
    "EVector",
    "build_support_set",
    "evec_inner",
    "project_to_E",
    "embed_from_E",
]


class DimensionMismatchError(ValueError):
    """Operands refer to incompatible dimensions."""


class SupportMismatchError(ValueError):
    """Operands do not share the same support set."""


def canonical_pair(i: int, j: int) -> tuple[int, int]:
    """Upper-triangular representative of the symmetric pair (i, j)."""
    return (i, j) if i <= j else (j, i)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class SymMatrix:
    """Immutable dense symmetric matrix with bit-exact M[i,j] == M[j,i]."""

    __slots__ = ("_a",)

    def __init__(self, values: np.ndarray | Sequence[Sequence[float]]):
        a = np.array(values, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
        # (A + A.T)/2 is exactly symmetric in floating point
        self._a = _readonly((a + a.T) / 2.0)

    @classmethod
    def from_entries(cls, dim: int, entries: Mapping[tuple[int, int], float]) -> "SymMatrix":
        a = np.zeros((dim, dim))
        for (i, j), v in entries.items():
            a[i, j] = v
            a[j, i] = v
        return cls(a)

    @property
    def dim(self) -> int:
        return self._a.shape[0]

    def __getitem__(self, key: tuple[int, int]) -> float:
        return float(self._a[key])

    def to_array(self) -> np.ndarray:
        """Read-only view of the underlying array."""
        return self._a

    def __repr__(self) -> str:
        return f"SymMatrix(dim={self.dim})"


class SupportSet:
    """Ordered set of canonical index pairs (i, j), 0 <= i <= j < dim.

    Membership is symmetric: (i, j) and (j, i) are the same pair.  Instance
    supports built by :func:`build_support_set` always contain the first
    row, first column and diagonal; hand-built supports may omit them
    (useful for studying projections of specific patterns).
    """

    __slots__ = ("_dim", "_pairs", "_index", "_rows", "_cols", "_weights")

    def __init__(self, dim: int, pairs: Iterable[tuple[int, int]]):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        canon = sorted({canonical_pair(i, j) for i, j in pairs})
        for i, j in canon:
            if not (0 <= i <= j < dim):
                raise ValueError(f"pair {(i, j)} out of range for dim {dim}")
        self._dim = dim
        self._pairs = tuple(canon)
        self._index = {p: k for k, p in enumerate(canon)}
        self._rows = _readonly(np.array([p[0] for p in canon], dtype=int))
        self._cols = _readonly(np.array([p[1] for p in canon], dtype=int))
        # off-diagonal canonical pairs stand for two symmetric entries
        self._weights = _readonly(np.where(self._rows == self._cols, 1.0, 2.0))

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return self._pairs

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    @property
    def cols(self) -> np.ndarray:
        return self._cols

    @property
    def weights(self) -> np.ndarray:
        """Per-pair multiplicity (1 on the diagonal, 2 off it)."""
        return self._weights

    def __len__(self) -> int:
        return len(self._pairs)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self._pairs)

    def __contains__(self, pair: tuple[int, int]) -> bool:
        return canonical_pair(*pair) in self._index

    def index(self, i: int, j: int) -> int:
        try:
            return self._index[canonical_pair(i, j)]
        except KeyError:
            raise KeyError(f"pair {(i, j)} not in support") from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SupportSet):
            return NotImplemented
        return self._dim == other._dim and self._pairs == other._pairs

    def __hash__(self) -> int:
        return hash((self._dim, self._pairs))

    def has_mandatory_pairs(self) -> bool:
        """True iff the first row/column and full diagonal are present."""
        d = self._dim
        needed = [(0, j) for j in range(d)] + [(j, j) for j in range(d)]
        return all(p in self for p in needed)

    def __repr__(self) -> str:
        return f"SupportSet(dim={self._dim}, pairs={len(self._pairs)})"


@dataclass(frozen=True)
class EVector:
    """Real values on the canonical pairs of a support set."""

    support: SupportSet
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.support),):
            raise DimensionMismatchError(
                f"expected {len(self.support)} values, got shape {v.shape}"
            )
        object.__setattr__(self, "values", _readonly(v.copy()))

    def __getitem__(self, pair: tuple[int, int]) -> float:
        return float(self.values[self.support.index(*pair)])

    def __len__(self) -> int:
        return len(self.support)


def _check_upper_triplets(Q: Mapping[tuple[int, int], float], n: int, what: str) -> dict:
    out = {}
    for (i, j), v in Q.items():
        if not (0 <= i <= j < n):
            raise ValueError(f"{what}: entry {(i, j)} not canonical upper-triangular in [0,{n})")
        fv = float(v)
        if not np.isfinite(fv):
            raise ValueError(f"{what}: non-finite coefficient at {(i, j)}")
        if fv != 0.0:
            out[(i, j)] = fv
    return out


@dataclass(frozen=True)
class QcqpInstance:
    """Box-constrained QCQP data.

    ``Q[k]``, ``c[k]``, ``d[k]`` describe the quadratic x'Q x + c'x + d for
    the objective (k=0) and the <=0 constraints (k=1..m).  Quadratic
    coefficient dicts use canonical upper-triangular keys over 0-based
    variable indices; an off-diagonal entry v stands for the symmetric pair
    and contributes 2*v*x_i*x_j.  All bounds must be finite.
    """

    name: str
    n: int
    Q: tuple[dict[tuple[int, int], float], ...]
    c: tuple[np.ndarray, ...]
    d: tuple[float, ...]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not (len(self.Q) == len(self.c) == len(self.d)) or len(self.Q) < 1:
            raise ValueError("Q, c, d must have equal length >= 1 (objective plus constraints)")
        object.__setattr__(
            self, "Q", tuple(_check_upper_triplets(Qk, self.n, f"Q[{k}]") for k, Qk in enumerate(self.Q))
        )
        cs = []
        for k, ck in enumerate(self.c):
            a = np.asarray(ck, dtype=float)
            if a.shape != (self.n,):
                raise ValueError(f"c[{k}] must have length n={self.n}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"c[{k}] has non-finite entries")
            cs.append(_readonly(a.copy()))
        object.__setattr__(self, "c", tuple(cs))
        object.__setattr__(self, "d", tuple(float(dk) for dk in self.d))
        if not all(np.isfinite(dk) for dk in self.d):
            raise ValueError("constant terms must be finite")
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        if lo.shape != (self.n,) or up.shape != (self.n,):
            raise ValueError("bounds must have length n")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise ValueError("all variable bounds must be finite")
        if np.any(lo > up):
            raise ValueError("lower bounds must not exceed upper bounds")
        object.__setattr__(self, "lower", _readonly(lo.copy()))
        object.__setattr__(self, "upper", _readonly(up.copy()))

    @property
    def m(self) -> int:
        return len(self.Q) - 1

    @property
    def nonneg(self) -> bool:
        """True iff the box lies in the nonnegative orthant (enables DNN mode)."""
        return bool(np.all(self.lower >= 0.0))

    def quad_dense(self, k: int) -> np.ndarray:
        """Dense symmetric n x n matrix for Q[k]."""
        a = np.zeros((self.n, self.n))
        for (i, j), v in self.Q[k].items():
            a[i, j] = v
            a[j, i] = v
        return a

    def function_value(self, k: int, x: np.ndarray) -> float:
        """x'Q[k]x + c[k]'x + d[k] at a point x."""
        x = np.asarray(x, dtype=float)
        acc = self.d[k] + float(self.c[k] @ x)
        for (i, j), v in self.Q[k].items():
            acc += v * x[i] * x[j] * (1.0 if i == j else 2.0)
        return acc

    def objective_value(self, x: np.ndarray) -> float:
        return self.function_value(0, x)

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        return np.array([self.function_value(k, x) for k in range(1, self.m + 1)])

    def is_feasible(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        return self.m == 0 or bool(np.all(self.constraint_values(x) <= tol))

    def homogenized(self, k: int) -> dict[tuple[int, int], float]:
        """Lifted (n+1)-dimensional coefficients: entry (0,0) carries d,
        (0,i) carries c_i/2 and (i,j) carries Q entries, so that the
        weighted support-sum over Y(x, xx') reproduces the function value."""
        out: dict[tuple[int, int], float] = {}
        if self.d[k] != 0.0:
            out[(0, 0)] = self.d[k]
        for i, ci in enumerate(self.c[k]):
            if ci != 0.0:
                out[(0, i + 1)] = ci / 2.0
        for (i, j), v in self.Q[k].items():
            out[(i + 1, j + 1)] = v
        return out


def build_support_set(instance: QcqpInstance) -> SupportSet:
    """Minimal support set for an instance: first row/column, diagonal, plus
    every pair where some Q[k] is nonzero.  Ordering is lexicographic."""
    d = instance.n + 1
    pairs = {(0, j) for j in range(d)} | {(j, j) for j in range(d)}
    for Qk in instance.Q:
        for (i, j) in Qk:
            pairs.add(canonical_pair(i + 1, j + 1))
    return SupportSet(d, pairs)


def evec_inner(C: EVector, Z: EVector) -> float:
    """Inner product over the full symmetric support: off-diagonal canonical
    pairs count twice, matching trace(embed(C) @ embed(Z))."""
    if C.support is not Z.support and C.support != Z.support:
        raise SupportMismatchError("E-vectors live on different support sets")
    return float(np.sum(C.support.weights * C.values * Z.values))


def project_to_E(Y: SymMatrix, E: SupportSet) -> EVector:
    """Restrict a symmetric matrix to the support's canonical pairs."""
    if Y.dim != E.dim:
        raise DimensionMismatchError(f"matrix dim {Y.dim} != support dim {E.dim}")
    return EVector(E, Y.to_array()[E.rows, E.cols])


def embed_from_E(Z: EVector) -> SymMatrix:
    """Zero-fill embedding: Z's values on its support, zero elsewhere."""
    E = Z.support
    a = np.zeros((E.dim, E.dim))
    a[E.rows, E.cols] = Z.values
    a[E.cols, E.rows] = Z.values
    return SymMatrix(a)

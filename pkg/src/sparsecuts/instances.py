"""Instance generation, a QPLIB-subset parser and a JSON interchange format.

The generator produces box-constrained QCQPs on [0,1]^n: a quadratic
objective with a target off-diagonal density, plus quadratic constraints
sampled on the objective's support whose right-hand sides make them active
at x = (0.5, ..., 0.5).  Two independent RNG streams (both PCG64, spawned
from the config seed) keep structure and coefficient draws reproducible
across platforms: the structure stream decides which entries exist, the
coefficient stream draws their integer values.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
import numpy as np

from .model import QcqpInstance, canonical_pair

__all__ = [
    "GeneratorConfig",
    "UnsupportedFeatureError",
    "SchemaViolationError",
    "generate_boxqcqp",
    "derive_seed",
    "instance_name",
    "parse_qplib_subset",
    "write_json",
    "read_json",
    "load_instance",
]


class UnsupportedFeatureError(ValueError):
    """The input uses a feature outside the documented subset."""


class SchemaViolationError(ValueError):
    """The input does not conform to the instance JSON schema."""


def derive_seed(n: int, rho: float, num_qc: int, index: int) -> int:
    """Stable 64-bit seed for instance variation ``index`` of a family."""
    key = f"boxqcqp/1|n={n}|rho={rho:.6f}|qc={num_qc}|i={index}"
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "big")


def instance_name(n: int, rho: float, num_qc: int, index: int) -> str:
    return f"spar{n:03d}-{round(rho * 100):03d}-{index}_{num_qc}qc"


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    density: float
    num_qc: int
    seed: int
    coeff_range: tuple[int, int] = (-50, 50)
    # fraction of the objective support sampled into each constraint; the
    # default keeps every support entry
    constraint_support_fraction: float = 1.0
    index: int | None = None

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not (0.0 < self.density <= 1.0):
            raise ValueError("density must lie in (0, 1]")
        if self.num_qc < 0:
            raise ValueError("num_qc must be >= 0")
        if not (0.0 < self.constraint_support_fraction <= 1.0):
            raise ValueError("constraint_support_fraction must lie in (0, 1]")

    @classmethod
    def from_index(cls, n: int, rho: float, num_qc: int, index: int, **kw) -> "GeneratorConfig":
        return cls(n=n, density=rho, num_qc=num_qc,
                   seed=derive_seed(n, rho, num_qc, index), index=index, **kw)


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    structure = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
    coeff = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1,))))
    return structure, coeff


def generate_boxqcqp(cfg: GeneratorConfig) -> QcqpInstance:
    """Generate a boxqcqp instance on [0,1]^n, deterministic in the config."""
    structure, coeff = _streams(cfg.seed)
    n = cfg.n
    lo, hi = cfg.coeff_range

    def draw(count: int) -> np.ndarray:
        return coeff.integers(lo, hi + 1, size=count).astype(float)

    upper_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    placed = structure.random(len(upper_pairs)) < cfg.density

    Q0: dict[tuple[int, int], float] = {}
    for i, v in enumerate(draw(n)):
        if v != 0.0:
            Q0[(i, i)] = v
    off_values = draw(int(np.count_nonzero(placed)))
    t = 0
    for pair, keep in zip(upper_pairs, placed):
        if keep:
            if off_values[t] != 0.0:
                Q0[pair] = off_values[t]
            t += 1
    c0 = draw(n)

    q_support = sorted(Q0)
    c_support = [i for i in range(n) if c0[i] != 0.0]
    half = np.full(n, 0.5)

    Qs, cs, ds = [Q0], [c0], [0.0]
    for _ in range(cfg.num_qc):
        if cfg.constraint_support_fraction < 1.0:
            keep_q = structure.random(len(q_support)) < cfg.constraint_support_fraction
            sup = [p for p, k in zip(q_support, keep_q) if k]
        else:
            sup = q_support
        qvals = draw(len(sup))
        Qk = {p: v for p, v in zip(sup, qvals) if v != 0.0}
        ck = np.zeros(n)
        ck[c_support] = draw(len(c_support))
        # right-hand side chosen so the constraint is active at x = 0.5*1
        quad = sum(v * 0.25 * (1.0 if i == j else 2.0) for (i, j), v in Qk.items())
        dk = -(quad + float(ck @ half))
        Qs.append(Qk)
        cs.append(ck)
        ds.append(dk)

    idx = cfg.index if cfg.index is not None else cfg.seed
    return QcqpInstance(
        name=instance_name(n, cfg.density, cfg.num_qc, idx),
        n=n,
        Q=tuple(Qs),
        c=tuple(cs),
        d=tuple(ds),
        lower=np.zeros(n),
        upper=np.ones(n),
    )


# ---------------------------------------------------------------------------
# QPLIB subset
# ---------------------------------------------------------------------------
#
# Documented subset of the public line-oriented QPLIB format, continuous
# QCQP fragment only:
#
#   name
#   type code        three chars: objective in {L,D,C,Q}, variables = C,
#                    constraints in {N,B,L,D,C,Q}
#   minimize|maximize
#   n                                  number of variables
#   m                                  (only when constraints exist)
#   [objective quadratic block]        count, then "i j v" lines (1-based,
#                                      one entry per symmetric pair, for the
#                                      0.5 x'Hx convention)
#   default linear objective value; count of exceptions; "i v" lines
#   objective constant
#   [constraint quadratic block]       count, then "k i j v" lines
#   [constraint linear block]          count, then "k i v" lines
#   infinity threshold
#   [constraint lhs defaults/exceptions; rhs defaults/exceptions]
#   variable lower defaults/exceptions; upper defaults/exceptions
#
# Anything after the variable bounds (start points, names) is ignored.
# Unsupported: non-continuous variables, unbounded variables.


class _Lines:
    def __init__(self, text: str):
        self._items = []
        for raw in text.splitlines():
            line = raw.split("!", 1)[0].strip()
            if line:
                self._items.append(line)
        self._pos = 0

    def next(self) -> str:
        if self._pos >= len(self._items):
            raise SchemaViolationError("unexpected end of QPLIB input")
        line = self._items[self._pos]
        self._pos += 1
        return line

    def next_tokens(self, k: int) -> list[str]:
        toks = self.next().split()
        if len(toks) < k:
            raise SchemaViolationError(f"expected {k} fields, got {toks!r}")
        return toks[:k]

    def next_int(self) -> int:
        try:
            return int(self.next_tokens(1)[0])
        except ValueError as exc:
            raise SchemaViolationError(f"expected an integer: {exc}") from None

    def next_float(self) -> float:
        try:
            return float(self.next_tokens(1)[0])
        except ValueError as exc:
            raise SchemaViolationError(f"expected a number: {exc}") from None


def _read_defaults(lines: _Lines, count: int, what: str) -> np.ndarray:
    default = lines.next_float()
    out = np.full(count, default)
    for _ in range(lines.next_int()):
        toks = lines.next_tokens(2)
        i = int(toks[0]) - 1
        if not (0 <= i < count):
            raise SchemaViolationError(f"{what}: index {i + 1} out of range")
        out[i] = float(toks[1])
    return out


def parse_qplib_subset(data: bytes | str) -> QcqpInstance:
    """Parse the documented continuous-QCQP QPLIB fragment."""
    text = data.decode() if isinstance(data, bytes) else data
    lines = _Lines(text)
    name = lines.next().split()[0]
    code = lines.next().split()[0].upper()
    if len(code) != 3:
        raise SchemaViolationError(f"malformed problem type {code!r}")
    obj_char, var_char, con_char = code
    if var_char != "C":
        feature = {"B": "binary variables", "I": "integer variables",
                   "M": "mixed-integer variables", "G": "general discrete variables"}
        raise UnsupportedFeatureError(feature.get(var_char, f"variable type {var_char!r}"))
    if obj_char not in "LDCQ" or con_char not in "NBLDCQ":
        raise UnsupportedFeatureError(f"problem type {code!r}")
    sense = lines.next().split()[0].lower()
    if sense not in ("minimize", "maximize"):
        raise SchemaViolationError(f"unknown optimization sense {sense!r}")
    n = lines.next_int()
    if n < 1:
        raise SchemaViolationError("n must be positive")
    has_cons = con_char not in "NB"
    m_file = lines.next_int() if has_cons else 0

    def read_quad(entries: int, with_row: bool):
        out: list[tuple[int, ...]] = []
        for _ in range(entries):
            toks = lines.next_tokens(4 if with_row else 3)
            out.append(tuple(int(t) for t in toks[:-1]) + (float(toks[-1]),))
        return out

    obj_quad = read_quad(lines.next_int(), with_row=False) if obj_char != "L" else []
    b0 = _read_defaults(lines, n, "objective linear")
    d0 = lines.next_float()
    con_quad = read_quad(lines.next_int(), with_row=True) if has_cons and con_char != "L" else []
    con_lin = []
    if has_cons:
        for _ in range(lines.next_int()):
            toks = lines.next_tokens(3)
            con_lin.append((int(toks[0]), int(toks[1]), float(toks[2])))
    infinity = lines.next_float()
    if has_cons:
        cl = _read_defaults(lines, m_file, "constraint lhs")
        cu = _read_defaults(lines, m_file, "constraint rhs")
    xl = _read_defaults(lines, n, "lower bounds")
    xu = _read_defaults(lines, n, "upper bounds")

    for i in range(n):
        if abs(xl[i]) >= infinity or abs(xu[i]) >= infinity or not (
            math.isfinite(xl[i]) and math.isfinite(xu[i])
        ):
            raise UnsupportedFeatureError(f"unbounded variable {i + 1}")

    def add_quad(target: dict, i: int, j: int, v: float) -> None:
        if not (1 <= i <= n and 1 <= j <= n):
            raise SchemaViolationError(f"variable index out of range in ({i},{j})")
        p = canonical_pair(i - 1, j - 1)
        # the file stores H with the 0.5 x'Hx convention; our form is x'Qx
        target[p] = target.get(p, 0.0) + v / 2.0

    Q0: dict[tuple[int, int], float] = {}
    for i, j, v in obj_quad:
        add_quad(Q0, i, j, v)
    con_Q = [dict() for _ in range(m_file)]
    con_c = [np.zeros(n) for _ in range(m_file)]
    for k, i, j, v in con_quad:
        if not (1 <= k <= m_file):
            raise SchemaViolationError(f"constraint index {k} out of range")
        add_quad(con_Q[k - 1], i, j, v)
    for k, i, v in con_lin:
        if not (1 <= k <= m_file and 1 <= i <= n):
            raise SchemaViolationError("index out of range in constraint linear block")
        con_c[k - 1][i - 1] += v

    neg = -1.0 if sense == "maximize" else 1.0
    Qs = [{p: neg * v for p, v in Q0.items()}]
    cs = [neg * b0]
    ds = [neg * d0]
    # split two-sided rows: g(x) <= cu and g(x) >= cl become <=0 rows
    for k in range(m_file):
        if abs(cu[k]) < infinity:
            Qs.append(dict(con_Q[k]))
            cs.append(con_c[k].copy())
            ds.append(-float(cu[k]))
        if abs(cl[k]) < infinity:
            Qs.append({p: -v for p, v in con_Q[k].items()})
            cs.append(-con_c[k])
            ds.append(float(cl[k]))

    return QcqpInstance(
        name=name, n=n, Q=tuple(Qs), c=tuple(cs), d=tuple(ds), lower=xl, upper=xu
    )


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------


def _num(v: float) -> str:
    # shortest round-trip decimal form of the 64-bit float
    return repr(float(v))


def _parse_num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise SchemaViolationError(f"{where}: expected a number, got {type(v).__name__}")
    try:
        f = float(v)
    except ValueError:
        raise SchemaViolationError(f"{where}: malformed number {v!r}") from None
    if not math.isfinite(f):
        raise SchemaViolationError(f"{where}: non-finite value {v!r}")
    return f


def _block_to_json(Q: dict, c: np.ndarray, d: float) -> dict:
    return {
        "Q": [[i, j, _num(v)] for (i, j), v in sorted(Q.items())],
        "c": [_num(v) for v in c],
        "d": _num(d),
    }


def write_json(instance: QcqpInstance) -> bytes:
    doc = {
        "name": instance.name,
        "n": instance.n,
        "m": instance.m,
        "objective": _block_to_json(instance.Q[0], instance.c[0], instance.d[0]),
        "constraints": [
            _block_to_json(instance.Q[k], instance.c[k], instance.d[k])
            for k in range(1, instance.m + 1)
        ],
        "lower": [_num(v) for v in instance.lower],
        "upper": [_num(v) for v in instance.upper],
    }
    return (json.dumps(doc, indent=2) + "\n").encode()


def _block_from_json(block, n: int, where: str):
    if not isinstance(block, dict):
        raise SchemaViolationError(f"{where}: expected an object")
    for key in ("Q", "c", "d"):
        if key not in block:
            raise SchemaViolationError(f"{where}: missing key {key!r}")
    Q: dict[tuple[int, int], float] = {}
    for t, triple in enumerate(block["Q"]):
        if not (isinstance(triple, (list, tuple)) and len(triple) == 3):
            raise SchemaViolationError(f"{where}.Q[{t}]: expected [i, j, value]")
        i, j = triple[0], triple[1]
        if not (isinstance(i, int) and isinstance(j, int)):
            raise SchemaViolationError(f"{where}.Q[{t}]: indices must be integers")
        if not (0 <= i < n and 0 <= j < n):
            raise SchemaViolationError(f"{where}.Q[{t}]: index out of range")
        p = canonical_pair(i, j)
        if p in Q:
            raise SchemaViolationError(f"{where}.Q[{t}]: duplicate entry for pair {p}")
        Q[p] = _parse_num(triple[2], f"{where}.Q[{t}]")
    if not isinstance(block["c"], list) or len(block["c"]) != n:
        raise SchemaViolationError(f"{where}.c must be a list of length n")
    c = np.array([_parse_num(v, f"{where}.c[{i}]") for i, v in enumerate(block["c"])])
    d = _parse_num(block["d"], f"{where}.d")
    return Q, c, d


def read_json(data: bytes | str) -> QcqpInstance:
    text = data.decode() if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolationError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaViolationError("top level must be an object")
    for key in ("name", "n", "m", "objective", "constraints", "lower", "upper"):
        if key not in doc:
            raise SchemaViolationError(f"missing key {key!r}")
    n = doc["n"]
    if not isinstance(n, int) or n < 1:
        raise SchemaViolationError("n must be a positive integer")
    if not isinstance(doc["constraints"], list):
        raise SchemaViolationError("constraints must be a list")
    if doc["m"] != len(doc["constraints"]):
        raise SchemaViolationError("m does not match the number of constraints")
    Qs, cs, ds = [], [], []
    Q0, c0, d0 = _block_from_json(doc["objective"], n, "objective")
    Qs.append(Q0), cs.append(c0), ds.append(d0)
    for k, block in enumerate(doc["constraints"]):
        Qk, ck, dk = _block_from_json(block, n, f"constraints[{k}]")
        Qs.append(Qk), cs.append(ck), ds.append(dk)
    for key in ("lower", "upper"):
        if not isinstance(doc[key], list) or len(doc[key]) != n:
            raise SchemaViolationError(f"{key} must be a list of length n")
    lower = np.array([_parse_num(v, f"lower[{i}]") for i, v in enumerate(doc["lower"])])
    upper = np.array([_parse_num(v, f"upper[{i}]") for i, v in enumerate(doc["upper"])])
    if not isinstance(doc["name"], str):
        raise SchemaViolationError("name must be a string")
    try:
        return QcqpInstance(
            name=doc["name"], n=n, Q=tuple(Qs), c=tuple(cs), d=tuple(ds),
            lower=lower, upper=upper,
        )
    except ValueError as exc:
        raise SchemaViolationError(str(exc)) from None


def load_instance(path) -> QcqpInstance:
    """Read an instance file, sniffing JSON vs QPLIB subset."""
    with open(path, "rb") as fp:
        data = fp.read()
    head = data.lstrip()[:1]
    if head == b"{":
        return read_json(data)
    return parse_qplib_subset(data)

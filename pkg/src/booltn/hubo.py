"""Binary polynomials: the column-factorization HUBO and its quadratization.

A polynomial over binary variables ``x_0 .. x_{n-1}`` is a mapping from
sorted index tuples to real coefficients; the empty tuple holds the
constant. Since ``x**2 == x`` for binary ``x`` every monomial is
multilinear.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .tensor import BooleanMatrix, ShapeError

__all__ = [
    "Hubo",
    "Qubo",
    "build_column_hubo",
    "column_hubos",
    "hubo_to_qubo",
    "default_strength",
    "evaluate",
    "evaluate_many",
    "to_json",
    "from_json",
]


def _normalize(terms: Mapping, num_vars: int) -> dict[tuple[int, ...], float]:
    out: dict[tuple[int, ...], float] = {}
    for key, coeff in terms.items():
        idx = tuple(sorted(set(int(i) for i in key)))
        if len(idx) != len(tuple(key)):
            raise ValueError(f"repeated variable in monomial {key}")
        if idx and (idx[0] < 0 or idx[-1] >= num_vars):
            raise ValueError(f"monomial {key} out of range for {num_vars} variables")
        out[idx] = out.get(idx, 0.0) + float(coeff)
    return {k: v for k, v in sorted(out.items(), key=lambda kv: (len(kv[0]), kv[0])) if v != 0.0}


@dataclass(frozen=True)
class Hubo:
    """Higher-order binary polynomial.

    Attributes:
        num_vars: number of variables.
        terms: ``{(i, j, ...): coefficient}`` with strictly increasing indices
            and no zero coefficients. ``()`` is the constant.
    """

    num_vars: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        object.__setattr__(self, "terms", _normalize(self.terms, self.num_vars))

    @property
    def degree(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    @property
    def offset(self) -> float:
        return self.terms.get((), 0.0)

    def is_constant(self) -> bool:
        """True when no monomial involves a variable (the "empty" QUBO)."""
        return all(len(k) == 0 for k in self.terms)

    def __call__(self, x) -> float:
        return evaluate(self, x)


@dataclass(frozen=True)
class Qubo(Hubo):
    """Degree-2 binary polynomial ``c + sum h_i x_i + sum_{i<j} J_ij x_i x_j``.

    ``var_names`` maps every auxiliary variable index introduced by
    :func:`hubo_to_qubo` to the pair of variables whose product it stands for.
    """

    var_names: dict = field(default_factory=dict)

    def __post_init__(self):
        super().__post_init__()
        if self.degree > 2:
            raise ValueError(f"QUBO terms must have degree <= 2, got {self.degree}")

    @classmethod
    def from_hubo(cls, H: Hubo) -> "Qubo":
        return cls(H.num_vars, dict(H.terms))

    def arrays(self):
        """Return ``(offset, h, rows, cols, vals)`` with ``rows < cols``."""
        h = np.zeros(self.num_vars)
        rows, cols, vals = [], [], []
        for key, c in self.terms.items():
            if len(key) == 1:
                h[key[0]] += c
            elif len(key) == 2:
                rows.append(key[0])
                cols.append(key[1])
                vals.append(c)
        return (
            self.offset,
            h,
            np.asarray(rows, dtype=np.int64),
            np.asarray(cols, dtype=np.int64),
            np.asarray(vals, dtype=np.float64),
        )


def evaluate(P: Hubo, x: Sequence[int]) -> float:
    """Exact value of ``P`` at the bit vector ``x``."""
    x = np.asarray(x)
    if x.shape != (P.num_vars,):
        raise ShapeError(f"expected {P.num_vars} bits, got shape {x.shape}")
    total = 0.0
    for key, c in P.terms.items():
        if all(x[i] for i in key):
            total += c
    return total


def evaluate_many(P: Hubo, X: np.ndarray) -> np.ndarray:
    """Row-wise :func:`evaluate`; bit-identical to it for every row."""
    X = np.asarray(X, dtype=np.uint8)
    if X.ndim != 2 or X.shape[1] != P.num_vars:
        raise ShapeError(f"expected (k, {P.num_vars}) bits, got shape {X.shape}")
    total = np.zeros(X.shape[0])
    for key, c in P.terms.items():
        if key:
            mask = np.logical_and.reduce(X[:, list(key)].astype(bool), axis=1)
            total[mask] += c
        else:
            total += c
    return total


# ------------------------------------------------------------- column HUBO


def _pattern_codes(A: np.ndarray) -> np.ndarray:
    weights = 1 << np.arange(A.shape[1], dtype=np.int64)
    return A.astype(np.int64) @ weights


def _superset_sums(w: np.ndarray, r: int) -> np.ndarray:
    """``g[U] = sum_{S >= U} w[S]`` over bitmasks, along axis 0."""
    g = w.copy()
    masks = np.arange(1 << r)
    for bit in range(r):
        lo = masks[(masks >> bit) & 1 == 0]
        g[lo] += g[lo | (1 << bit)]
    return g


def column_hubos(A, M) -> tuple[list[Hubo], list[int]]:
    """HUBOs for every column of ``M`` against the fixed left factor ``A``.

    Identical rows of ``A`` are merged first, so the work depends on the
    rank and on the distinct row patterns, never on the matrix height.

    Returns:
        ``(hubos, constants)`` where ``hubos[i]`` is the polynomial for
        column ``i`` and ``constants[i]`` its number of ones.
    """
    A = np.asarray(A.array if isinstance(A, BooleanMatrix) else A, dtype=np.uint8)
    M = np.asarray(M.array if isinstance(M, BooleanMatrix) else M, dtype=np.uint8)
    if M.ndim == 1:
        M = M[:, None]
    n, r = A.shape
    if M.shape[0] != n:
        raise ShapeError(f"column length {M.shape[0]} does not match {n} rows of A")
    if r > 20:
        raise ValueError(f"rank {r} is too large for the HUBO expansion")
    codes = _pattern_codes(A)
    # weight of pattern S: (#rows with S where m=0) - (#rows with S where m=1)
    signs = 1 - 2 * M.astype(np.int64)
    w = np.zeros((1 << r, M.shape[1]), dtype=np.int64)
    np.add.at(w, codes, signs)
    g = _superset_sums(w, r)
    popcount = np.array([bin(u).count("1") for u in range(1 << r)])
    coeffs = np.where((popcount % 2 == 1)[:, None], g, -g)  # (-1)^(|U|+1) g(U)
    constants = M.sum(axis=0).astype(np.int64)
    monomials = [tuple(i for i in range(r) if (u >> i) & 1) for u in range(1 << r)]
    hubos = []
    for col in range(M.shape[1]):
        terms = {(): float(constants[col])}
        nz = np.nonzero(coeffs[1:, col])[0] + 1
        for u in nz:
            terms[monomials[u]] = float(coeffs[u, col])
        hubos.append(Hubo(r, terms))
    return hubos, [int(c) for c in constants]


def build_column_hubo(A: BooleanMatrix, m_col) -> Hubo:
    """Polynomial ``H(y)`` equal to the Hamming distance ``d(m_col, A y)``.

    Expands ``C - sum_{j in T} f(A_j * y) + sum_{j in F} f(A_j * y)`` with
    ``f(z) = 1 - prod(1 - z_i)``, where ``T``/``F`` are the rows where
    ``m_col`` is one/zero and ``C = |T|``.
    """
    m = np.asarray(m_col, dtype=np.uint8).reshape(-1)
    hubos, _ = column_hubos(A, m[:, None])
    return hubos[0]


# ----------------------------------------------------------- quadratization


def default_strength(H: Hubo) -> float:
    """Largest absolute non-constant coefficient, or 1 if there is none."""
    vals = [abs(c) for k, c in H.terms.items() if k]
    return max(vals) if vals else 1.0


def hubo_to_qubo(H: Hubo, strength: float | None = None) -> Qubo:
    """Reduce ``H`` to a QUBO by pairwise product substitution.

    The pair occurring in the most monomials of degree > 2 is replaced by a
    fresh variable ``u`` in every monomial that contains it. Each such
    substitution adds ``strength * (x_a x_b - 2 x_a u - 2 x_b u + 3 u)``,
    which is zero iff ``u == x_a x_b`` and at least ``strength`` otherwise.
    This repeats until every monomial is at most quadratic. Ties go to the
    lexicographically smallest pair, so the reduction is deterministic.
    Auxiliary variables are numbered after the original ones.

    With ``strength >= max |coefficient|`` (see :func:`default_strength`) a
    wrong auxiliary always costs at least as much as it can gain across the
    monomials it was substituted into, so the minimizers of the QUBO
    restricted to the original variables are exactly those of ``H``.
    """
    if strength is None:
        strength = default_strength(H)
    if not strength > 0:
        raise ValueError(f"strength must be positive, got {strength}")
    if H.degree <= 2:
        return H if isinstance(H, Qubo) else Qubo.from_hubo(H)

    poly = dict(H.terms)
    penalty: dict[tuple[int, ...], float] = {}
    n = H.num_vars
    aux: dict[int, tuple[int, int]] = {}
    while True:
        counts: Counter = Counter()
        for key in poly:
            if len(key) > 2:
                counts.update(itertools.combinations(key, 2))
        if not counts:
            break
        best = max(counts.values())
        a, b = min(p for p, c in counts.items() if c == best)
        u = n
        n += 1
        aux[u] = (a, b)
        reduced: dict[tuple[int, ...], float] = {}
        uses = 0
        for key, c in poly.items():
            if a in key and b in key:
                key = tuple(i for i in key if i != a and i != b) + (u,)
                uses += 1
            reduced[key] = reduced.get(key, 0.0) + c
        poly = reduced
        weight = uses * strength
        for key, c in (((a, b), weight), ((a, u), -2.0 * weight),
                       ((b, u), -2.0 * weight), ((u,), 3.0 * weight)):
            penalty[key] = penalty.get(key, 0.0) + c
    for key, c in penalty.items():
        poly[key] = poly.get(key, 0.0) + c
    return Qubo(n, poly, var_names=aux)


# ---------------------------------------------------------------------- JSON


def to_json(P: Hubo) -> str:
    """Serialize as ``{"n": int, "terms": [[[indices...], coeff], ...]}``."""
    payload = {"n": P.num_vars, "terms": [[list(k), float(c)] for k, c in P.terms.items()]}
    return json.dumps(payload, separators=(",", ":"))


def from_json(text: str) -> Hubo:
    obj = json.loads(text)
    terms = {tuple(k): c for k, c in obj["terms"]}
    H = Hubo(int(obj["n"]), terms)
    return Qubo.from_hubo(H) if H.degree <= 2 else H

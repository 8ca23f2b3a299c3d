"""Boolean matrix factorization ``M ~ A B`` by column-wise QUBO solving.

Every column of ``B`` is the minimizer of a small binary polynomial once
``A`` is fixed (and vice versa after transposing), so factorization is an
alternating sequence of batched QUBO solves. :func:`matrix_factorization`
wraps that in a multi-start driver seeded by a rounded nonnegative SVD.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .hubo import Qubo, column_hubos, hubo_to_qubo
from .solvers import DEFAULT_CAPACITY, SolveRequest, get_backend, pack_and_solve, reads_for_rank
from .tensor import BooleanMatrix, ShapeError, _as_array, matmul_array

__all__ = [
    "Solver",
    "QuboCache",
    "FactorizationParams",
    "FactorizationResult",
    "RankError",
    "column_factorization",
    "iterative_matrix_factorization",
    "matrix_factorization",
    "boolean_nnsvd",
]


class RankError(ValueError):
    """Raised when a requested rank does not fit the matrix."""


class Solver:
    """A QUBO backend plus the seed stream and bookkeeping of one run.

    Args:
        backend: ``"exhaustive"``, ``"sa"`` or ``"greedy"``.
        seed: root of every random choice made through this object.
        num_reads: reads per QUBO; ``None`` picks :func:`reads_for_rank`.
        sweeps: SA sweeps per read; ``None`` keeps the backend default.
        capacity: problems merged per composite when ``pack`` is on.
        pack: merge independent QUBOs before solving.
        dump: optional callback receiving every QUBO sent to the backend.
    """

    def __init__(
        self,
        backend: str = "sa",
        seed: int = 0,
        num_reads: int | None = None,
        sweeps: int | None = None,
        capacity: int = DEFAULT_CAPACITY,
        pack: bool = True,
        dump: Callable[[Qubo], None] | None = None,
    ):
        get_backend(backend)
        self.backend = backend
        self.seed = int(seed)
        self.num_reads = num_reads
        self.sweeps = sweeps
        self.capacity = capacity
        self.pack = pack
        self.dump = dump
        self.rng = np.random.default_rng(self.seed)
        self.solve_time = 0.0
        self.calls = 0
        self.problems_solved = 0

    def next_seed(self) -> int:
        return int(self.rng.integers(0, 2**63))

    def reads(self, rank: int) -> int:
        if self.num_reads is not None:
            return int(self.num_reads)
        # rank 1 has no schedule entry; it gets the rank-2 budget
        return reads_for_rank(max(rank, 2))

    def solve(self, problems: list[Qubo], rank: int) -> list[np.ndarray]:
        """Best bit vector of each problem, in input order."""
        params = {} if self.sweeps is None else {"sweeps": int(self.sweeps)}
        req = SolveRequest(list(problems), self.reads(rank), seed=self.next_seed(), solver_params=params)
        if self.dump is not None:
            for p in req.problems:
                self.dump(p)
        if self.pack:
            res = pack_and_solve(req, backend=self.backend, capacity=self.capacity)
        else:
            res = get_backend(self.backend)(req)
        self.calls += 1
        self.problems_solved += len(problems)
        self.solve_time += res.solve_time
        return [np.asarray(r.best_bits, dtype=np.uint8) for r in res.results]


def _canonical(Q: Qubo) -> str:
    terms = [[list(k), float(f"{c:.12g}")] for k, c in sorted(Q.terms.items())]
    return json.dumps({"n": Q.num_vars, "terms": terms}, separators=(",", ":"))


class QuboCache:
    """Solutions of previously solved QUBOs, keyed by canonical JSON.

    Coefficients are rounded to 12 significant digits in the key, so QUBOs
    built in a different order hit the same entry.
    """

    def __init__(self):
        self._store: dict[str, np.ndarray] = {}
        self.hits = 0

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, Q: Qubo) -> bool:
        return _canonical(Q) in self._store

    def get(self, Q: Qubo) -> np.ndarray | None:
        sol = self._store.get(_canonical(Q))
        if sol is not None:
            self.hits += 1
        return sol

    def put(self, Q: Qubo, solution) -> None:
        sol = np.asarray(solution, dtype=np.uint8).copy()
        if sol.shape != (Q.num_vars,):
            raise ShapeError(f"solution of length {sol.size} for a {Q.num_vars}-variable QUBO")
        sol.flags.writeable = False
        self._store[_canonical(Q)] = sol


@dataclass
class FactorizationParams:
    """Multi-start budget: restarts, short run length, stall window, hard cap."""

    n_states: int = 20
    rand_dur: int = 2
    l_c: int = 10
    l_h: int = 100

    def __post_init__(self):
        if self.n_states < 0 or self.rand_dur < 1 or self.l_c < 1 or self.l_h < 1:
            raise ValueError(f"invalid factorization parameters {self}")


@dataclass
class FactorizationResult:
    A: BooleanMatrix
    B: BooleanMatrix
    rank: int
    hamming_history: list = field(default_factory=list)
    exact: bool = False
    qubo_solver_time: float = 0.0

    @property
    def error(self) -> int:
        return min(self.hamming_history) if self.hamming_history else 0


def column_factorization(M, A, solver: Solver, cache: QuboCache | None = None) -> BooleanMatrix:
    """Best ``B`` for fixed ``A``, one QUBO per distinct column of ``M``.

    Constant QUBOs get a random column. Known QUBOs are read from ``cache``.
    All remaining ones are solved in a single batched call.
    """
    m = _as_array(M)
    a = _as_array(A)
    if m.ndim != 2 or a.ndim != 2 or a.shape[0] != m.shape[0]:
        raise ShapeError(f"cannot factor {m.shape} against a left factor of shape {a.shape}")
    r = a.shape[1]
    uniq, inverse = np.unique(m, axis=1, return_inverse=True)
    inverse = inverse.reshape(-1)
    hubos, _ = column_hubos(a, uniq)
    rng = np.random.default_rng(solver.next_seed())
    cols = np.zeros((r, uniq.shape[1]), dtype=np.uint8)
    pending: dict[str, tuple[Qubo, list[int]]] = {}
    for j, H in enumerate(hubos):
        Q = hubo_to_qubo(H)
        if Q.is_constant():
            cols[:, j] = rng.integers(0, 2, size=r)
            continue
        hit = cache.get(Q) if cache is not None else None
        if hit is not None:
            cols[:, j] = hit[:r]
            continue
        key = _canonical(Q)
        pending.setdefault(key, (Q, []))[1].append(j)
    if pending:
        entries = list(pending.values())
        sols = solver.solve([Q for Q, _ in entries], r)
        for (Q, idx), sol in zip(entries, sols):
            if cache is not None:
                cache.put(Q, sol)
            cols[:, idx] = sol[:r, None]
    out = cols[:, inverse]
    return BooleanMatrix(out.shape, out)


def _distance(m: np.ndarray, a: np.ndarray, b: np.ndarray) -> int:
    return int(np.count_nonzero(matmul_array(a, b) != m))


def iterative_matrix_factorization(
    M,
    A0,
    B0,
    L_c: int,
    L_h: int,
    solver: Solver,
    cache: QuboCache | None = None,
) -> FactorizationResult:
    """Alternate column updates of ``B`` and ``A`` from ``(A0, B0)``.

    Stops on an exact factorization, when the last ``L_c`` iterations all
    reproduced the best distance so far (a stall), or after ``L_h``
    iterations. ``hamming_history[0]`` is the starting distance and each
    later entry the distance after one full iteration. The pair with the
    smallest distance ever seen is returned.
    """
    m, a, b = _as_array(M), _as_array(A0), _as_array(B0)
    if a.shape[0] != m.shape[0] or b.shape[1] != m.shape[1] or a.shape[1] != b.shape[0]:
        raise ShapeError(f"factors {a.shape} x {b.shape} do not fit a {m.shape} matrix")
    t0 = solver.solve_time
    best = (_distance(m, a, b), a, b)
    history = [best[0]]
    stall = 0
    it = 0
    while best[0] > 0 and it < L_h and stall < L_c:
        it += 1
        prev = best[0]
        b = column_factorization(m, a, solver, cache).array
        err = _distance(m, a, b)
        if err < best[0]:
            best = (err, a, b)
        if err > 0:
            a = column_factorization(m.T, b.T, solver, cache).array.T
            err = _distance(m, a, b)
            if err < best[0]:
                best = (err, a, b)
        history.append(err)
        if err != best[0]:
            stall = 0
        else:
            stall = 1 if best[0] < prev else stall + 1
    err, a, b = best
    return FactorizationResult(
        BooleanMatrix(a.shape, a),
        BooleanMatrix(b.shape, b),
        a.shape[1],
        history,
        err == 0,
        solver.solve_time - t0,
    )


def boolean_nnsvd(M, r: int, tol: float = 1e-8, max_iter: int = 500):
    """Rounded nonnegative double SVD initialization ``(A0, B0)``.

    A rank-``r`` truncated SVD is computed by subspace iteration, turned
    into nonnegative factors with the double-SVD sign split, and every
    entry ``>= 0.5`` becomes 1.

    Raises:
        RankError: if ``r`` exceeds ``min(M.shape)`` or is below 1.
    """
    x = _as_array(M).astype(np.float64)
    n, k = x.shape
    if not 1 <= r <= min(n, k):
        raise RankError(f"rank {r} is outside 1..{min(n, k)} for a {n}x{k} matrix")
    U, s, V = _truncated_svd(x, r, tol, max_iter)
    W = np.zeros((n, r))
    H = np.zeros((r, k))
    for j in range(r):
        if s[j] <= 0:
            continue
        u, v = U[:, j], V[:, j]
        if j == 0:
            # the leading pair of a nonnegative matrix can be taken nonnegative
            W[:, 0] = math.sqrt(s[0]) * np.abs(u)
            H[0] = math.sqrt(s[0]) * np.abs(v)
            continue
        up, un = np.maximum(u, 0), np.maximum(-u, 0)
        vp, vn = np.maximum(v, 0), np.maximum(-v, 0)
        pos = np.linalg.norm(up) * np.linalg.norm(vp)
        neg = np.linalg.norm(un) * np.linalg.norm(vn)
        uu, vv, sigma = (up, vp, pos) if pos >= neg else (un, vn, neg)
        if sigma <= 0:
            continue
        uu = uu / np.linalg.norm(uu)
        vv = vv / np.linalg.norm(vv)
        scale = math.sqrt(s[j] * sigma)
        W[:, j] = scale * uu
        H[j] = scale * vv
    A0 = (W >= 0.5).astype(np.uint8)
    B0 = (H >= 0.5).astype(np.uint8)
    return BooleanMatrix(A0.shape, A0), BooleanMatrix(B0.shape, B0)


def _truncated_svd(x: np.ndarray, r: int, tol: float, max_iter: int):
    """Top-``r`` singular triplets by block power iteration on ``x^T x``."""
    n, k = x.shape
    # deterministic start: the r rows of largest norm, topped up with unit vectors
    order = np.argsort(-np.einsum("ij,ij->i", x, x), kind="stable")[:r]
    V = np.concatenate([x[order].T, np.eye(k, r)], axis=1)
    V = np.linalg.qr(V)[0][:, :r]
    for _ in range(max_iter):
        Z = np.linalg.qr(x.T @ (x @ V))[0]
        # subspace change, insensitive to rotations within the subspace
        delta = np.linalg.norm(Z - V @ (V.T @ Z))
        V = Z
        if delta < tol:
            break
    # Rayleigh-Ritz step recovers the individual singular vectors
    Ur, s, Wt = np.linalg.svd(x @ V, full_matrices=False)
    return Ur, s, V @ Wt.T


def _nnsvd_padded(m: np.ndarray, r: int):
    """:func:`boolean_nnsvd` with zero padding when ``r > min(m.shape)``."""
    k = min(r, min(m.shape))
    A0, B0 = boolean_nnsvd(m, k)
    a = np.zeros((m.shape[0], r), dtype=np.uint8)
    b = np.zeros((r, m.shape[1]), dtype=np.uint8)
    a[:, :k] = A0.array
    b[:k] = B0.array
    return a, b


def matrix_factorization(
    M,
    r: int,
    solver: Solver,
    params: FactorizationParams | None = None,
    cache: QuboCache | None = None,
) -> FactorizationResult:
    """Rank-``r`` Boolean factorization with a multi-start search.

    1. Iterate from the rounded NNSVD start with the full budget.
    2. Iterate ``n_states`` random Bernoulli(p) starts for ``rand_dur``
       iterations each, with ``p ~ U(0.1, 0.9)`` drawn per start.
    3. Iterate from the best short run with the full budget.

    Returns the first exact factorization found, otherwise the pair with
    the smallest distance over all three stages.
    """
    if r < 1:
        raise RankError(f"rank must be at least 1, got {r}")
    params = params or FactorizationParams()
    cache = QuboCache() if cache is None else cache
    m = _as_array(M)
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {m.shape}")
    t0 = solver.solve_time
    base = solver.next_seed()

    def run(a, b, budget):
        return iterative_matrix_factorization(m, a, b, params.l_c, budget, solver, cache)

    def done(res):
        res.qubo_solver_time = solver.solve_time - t0
        return res

    a0, b0 = _nnsvd_padded(m, r)
    best = run(a0, b0, params.l_h)
    if best.exact or params.n_states == 0:
        return done(best)
    pool = []
    for n in range(params.n_states):
        rng = np.random.default_rng([base, n])
        p = rng.uniform(0.1, 0.9)
        a = (rng.random((m.shape[0], r)) < p).astype(np.uint8)
        b = (rng.random((r, m.shape[1])) < p).astype(np.uint8)
        res = run(a, b, params.rand_dur)
        if res.exact:
            return done(res)
        pool.append(res)
    start = min(pool, key=lambda res: res.error)
    final = run(start.A, start.B, params.l_h)
    return done(min((final, start, best), key=lambda res: res.error))

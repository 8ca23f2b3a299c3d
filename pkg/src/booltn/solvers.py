"""QUBO solver backends and the disjoint-problem packer.

Every backend consumes a :class:`SolveRequest` and returns a
:class:`SolveResult` whose energies are recomputed with
:func:`booltn.hubo.evaluate_many`, so a stored energy always equals the exact
polynomial value of its bitstring. Randomness is derived from
``(seed, problem_index, read_index)`` only, which makes results independent
of the order in which problems are processed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba as nb
import numpy as np

from .hubo import Qubo, evaluate_many

__all__ = [
    "SolveRequest",
    "SolveResult",
    "ProblemResult",
    "SolverError",
    "ExhaustiveLimitError",
    "PackingError",
    "EXHAUSTIVE_LIMIT",
    "DEFAULT_CAPACITY",
    "solve_exhaustive",
    "solve_sa",
    "solve_greedy",
    "pack_and_solve",
    "merge_disjoint",
    "reads_for_rank",
    "get_backend",
    "BACKENDS",
]

EXHAUSTIVE_LIMIT = 24
DEFAULT_CAPACITY = 255
DEFAULT_SWEEPS = 1000

_READS_BY_RANK = {2: 100, 3: 200, 4: 400, 5: 600, 6: 800, 7: 1000, 8: 3000}


class SolverError(RuntimeError):
    pass


class ExhaustiveLimitError(SolverError, ValueError):
    pass


class PackingError(SolverError):
    """A backend failed on a packed batch; ``batch`` and ``slots`` locate it."""

    def __init__(self, message: str, batch: int, slots: Sequence[int]):
        super().__init__(message)
        self.batch = batch
        self.slots = list(slots)


@dataclass
class SolveRequest:
    """A batch of independent QUBOs plus solver parameters.

    ``solver_params`` understands ``sweeps`` (SA), ``beta_range`` (SA,
    a ``(beta_hot, beta_cold)`` override), and ``initial_states``
    (greedy; one ``(num_reads, n)`` array per problem).
    """

    problems: list
    num_reads: int = 100
    seed: int = 0
    solver_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.problems:
            raise ValueError("a solve request needs at least one problem")
        if self.num_reads < 1:
            raise ValueError(f"num_reads must be >= 1, got {self.num_reads}")
        self.problems = [p if isinstance(p, Qubo) else Qubo.from_hubo(p) for p in self.problems]


@dataclass
class ProblemResult:
    best_bits: np.ndarray
    best_energy: float
    samples: list  # [(bits tuple, energy, multiplicity)], sorted by energy then bits
    solve_time: float = 0.0


@dataclass
class SolveResult:
    results: list
    solve_time: float = 0.0

    def __len__(self) -> int:
        return len(self.results)

    def __getitem__(self, i) -> ProblemResult:
        return self.results[i]

    @property
    def best_bits(self) -> list:
        return [r.best_bits for r in self.results]

    @property
    def best_energies(self) -> list:
        return [r.best_energy for r in self.results]


def reads_for_rank(r: int) -> int:
    """Number of reads for a column problem of rank ``r`` (clamped above 8)."""
    if r < 2:
        raise ValueError(f"the read schedule starts at rank 2, got {r}")
    return _READS_BY_RANK.get(r, 3000)


def _collect(problem: Qubo, states: np.ndarray, elapsed: float) -> ProblemResult:
    """Aggregate raw reads into a :class:`ProblemResult`."""
    n = problem.num_vars
    if n == 0:
        e = problem.offset
        return ProblemResult(np.zeros(0, dtype=np.uint8), e, [((), e, len(states))], elapsed)
    # unique on reversed columns orders rows by sum(x_i 2^i); a stable sort
    # on energy then keeps the smallest such bitstring first among ties
    uniq, counts = np.unique(states[:, ::-1], axis=0, return_counts=True)
    uniq = np.ascontiguousarray(uniq[:, ::-1])
    energies = evaluate_many(problem, uniq)
    order = np.argsort(energies, kind="stable")
    samples = [(tuple(int(b) for b in uniq[i]), float(energies[i]), int(counts[i])) for i in order]
    best = order[0]
    return ProblemResult(uniq[best].astype(np.uint8), float(energies[best]), samples, elapsed)


# ---------------------------------------------------------------- exhaustive


def _components(problem: Qubo) -> list[list[int]]:
    parent = list(range(problem.num_vars))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for key in problem.terms:
        if len(key) == 2:
            a, b = find(key[0]), find(key[1])
            if a != b:
                parent[max(a, b)] = min(a, b)
    groups: dict[int, list[int]] = {}
    for i in range(problem.num_vars):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _exhaustive_block(h: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Minimizer of ``x.h + x.J.x`` (J upper) with the smallest ``sum x_i 2^i``."""
    k = h.size
    shifts = np.arange(k, dtype=np.int64)
    chunk = 1 << min(k, 18)
    best_e, best_s = math.inf, 0
    scale = max(1.0, float(np.abs(h).sum() + np.abs(J).sum()))
    tol = 1e-9 * scale
    for start in range(0, 1 << k, chunk):
        s = np.arange(start, min(start + chunk, 1 << k), dtype=np.int64)
        X = ((s[:, None] >> shifts) & 1).astype(np.float64)
        e = X @ h + np.einsum("ij,ij->i", X @ J, X)
        i = int(np.argmin(e))
        # states are visited in increasing order, so only a strictly better
        # energy may replace the incumbent
        if e[i] < best_e - tol:
            best_e, best_s = float(e[i]), int(s[i])
    return ((best_s >> shifts) & 1).astype(np.uint8)


def solve_exhaustive(req: SolveRequest) -> SolveResult:
    """Exact minimum of every problem by enumeration.

    Disconnected variable groups are enumerated independently, so the limit of
    ``EXHAUSTIVE_LIMIT`` variables applies per connected component. Ties are
    broken toward the bitstring read as the smallest binary number with
    ``x_0`` as the least significant bit, i.e. the minimizer that is
    lexicographically smallest when compared from the last variable down.
    """
    results = []
    total = 0.0
    for p_idx, problem in enumerate(req.problems):
        t0 = time.process_time()
        _, h, rows, cols, vals = problem.arrays()
        bits = np.zeros(problem.num_vars, dtype=np.uint8)
        comps = _components(problem)
        comp_of = np.zeros(problem.num_vars, dtype=np.int64)
        local = np.zeros(problem.num_vars, dtype=np.int64)
        for c, comp in enumerate(comps):
            comp_of[comp] = c
            local[comp] = np.arange(len(comp))
        term_comp = comp_of[rows]
        for c, comp in enumerate(comps):
            if len(comp) > EXHAUSTIVE_LIMIT:
                raise ExhaustiveLimitError(
                    f"problem {p_idx}: connected component of {len(comp)} variables "
                    f"exceeds the exhaustive limit of {EXHAUSTIVE_LIMIT}"
                )
            sel = term_comp == c
            Jc = np.zeros((len(comp), len(comp)))
            np.add.at(Jc, (local[rows[sel]], local[cols[sel]]), vals[sel])
            bits[comp] = _exhaustive_block(h[comp], Jc)
        elapsed = time.process_time() - t0
        total += elapsed
        results.append(_collect(problem, bits[None, :], elapsed))
    return SolveResult(results, total)


# ------------------------------------------------------------ numba kernels

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True)
def _mix(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True)
def _read_seed(seed, problem_index, read_index):
    return _mix(_mix(_mix(seed) ^ np.uint64(problem_index)) ^ np.uint64(read_index))


@nb.njit(cache=True)
def _next(state):
    # splitmix64 stream: returns (new_state, uniform in [0, 1))
    state = state + _GOLDEN
    z = (state ^ (state >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    z = z ^ (z >> _S31)
    return state, float(z >> _S11) * _INV53


@nb.njit(cache=True)
def _sa_kernel(h, indptr, indices, data, betas, seed, problem_index, num_reads):
    n = h.size
    out = np.zeros((num_reads, n), dtype=np.uint8)
    x = np.zeros(n, dtype=np.uint8)
    fld = np.zeros(n)
    for r in range(num_reads):
        st = _read_seed(seed, problem_index, r)
        for i in range(n):
            st, u = _next(st)
            x[i] = 1 if u < 0.5 else 0
        for i in range(n):
            f = h[i]
            for k in range(indptr[i], indptr[i + 1]):
                f += data[k] * x[indices[k]]
            fld[i] = f
        for beta in betas:
            for i in range(n):
                delta = fld[i] if x[i] == 0 else -fld[i]
                accept = delta <= 0.0
                if not accept:
                    st, u = _next(st)
                    accept = u < math.exp(-beta * delta)
                if accept:
                    step = 1.0 if x[i] == 0 else -1.0
                    x[i] = 1 - x[i]
                    for k in range(indptr[i], indptr[i + 1]):
                        fld[indices[k]] += step * data[k]
        out[r, :] = x
    return out


@nb.njit(cache=True)
def _greedy_kernel(h, indptr, indices, data, seed, problem_index, num_reads, starts, tol):
    n = h.size
    out = np.zeros((num_reads, n), dtype=np.uint8)
    x = np.zeros(n, dtype=np.uint8)
    fld = np.zeros(n)
    for r in range(num_reads):
        if starts.shape[0] > 0:
            for i in range(n):
                x[i] = starts[r, i]
        else:
            st = _read_seed(seed, problem_index, r)
            for i in range(n):
                st, u = _next(st)
                x[i] = 1 if u < 0.5 else 0
        for i in range(n):
            f = h[i]
            for k in range(indptr[i], indptr[i + 1]):
                f += data[k] * x[indices[k]]
            fld[i] = f
        while True:
            best_i = -1
            best_d = -tol
            for i in range(n):
                delta = fld[i] if x[i] == 0 else -fld[i]
                if delta < best_d:
                    best_d = delta
                    best_i = i
            if best_i < 0:
                break
            step = 1.0 if x[best_i] == 0 else -1.0
            x[best_i] = 1 - x[best_i]
            for k in range(indptr[best_i], indptr[best_i + 1]):
                fld[indices[k]] += step * data[k]
        out[r, :] = x
    return out


def _csr(problem: Qubo):
    _, h, rows, cols, vals = problem.arrays()
    n = problem.num_vars
    src = np.concatenate([rows, cols])
    dst = np.concatenate([cols, rows])
    w = np.concatenate([vals, vals])
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return h, np.cumsum(indptr), dst[order].astype(np.int64), w[order]


def _u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def sa_betas(problem: Qubo, sweeps: int, beta_range=None) -> np.ndarray:
    """Geometric inverse-temperature schedule, one value per sweep.

    Starts at 0.1 and ends where a flip that costs as much as the smallest
    coefficient magnitude is accepted with probability 1e-3, so the final
    sweeps are effectively a greedy descent.
    """
    if beta_range is None:
        mags = [abs(c) for k, c in problem.terms.items() if k]
        smallest = min(mags) if mags else 0.0
        hot = 0.1
        cold = math.log(1e3) / smallest if smallest > 0 else 1.0
        cold = max(cold, hot)
    else:
        hot, cold = map(float, beta_range)
    if sweeps == 1:
        return np.array([cold])
    return np.geomspace(hot, cold, sweeps)


def solve_sa(req: SolveRequest) -> SolveResult:
    """Single-spin-flip Metropolis annealing, ``num_reads`` restarts per problem."""
    sweeps = int(req.solver_params.get("sweeps", DEFAULT_SWEEPS))
    beta_range = req.solver_params.get("beta_range")
    results, total = [], 0.0
    for p_idx, problem in enumerate(req.problems):
        t0 = time.process_time()
        h, indptr, indices, data = _csr(problem)
        betas = sa_betas(problem, sweeps, beta_range)
        states = _sa_kernel(h, indptr, indices, data, betas, _u64(req.seed), p_idx, req.num_reads)
        elapsed = time.process_time() - t0
        total += elapsed
        results.append(_collect(problem, states, elapsed))
    return SolveResult(results, total)


def solve_greedy(req: SolveRequest) -> SolveResult:
    """Steepest descent from random starts; ties flip the lowest index."""
    starts_all = req.solver_params.get("initial_states")
    results, total = [], 0.0
    for p_idx, problem in enumerate(req.problems):
        t0 = time.process_time()
        h, indptr, indices, data = _csr(problem)
        if starts_all is not None:
            starts = np.asarray(starts_all[p_idx], dtype=np.uint8).reshape(-1, problem.num_vars)
            reads = starts.shape[0]
        else:
            starts = np.zeros((0, problem.num_vars), dtype=np.uint8)
            reads = req.num_reads
        tol = 1e-12 * max(1.0, float(np.abs(h).sum() + np.abs(data).sum()))
        states = _greedy_kernel(h, indptr, indices, data, _u64(req.seed), p_idx, reads, starts, tol)
        elapsed = time.process_time() - t0
        total += elapsed
        results.append(_collect(problem, states, elapsed))
    return SolveResult(results, total)


BACKENDS: dict[str, Callable[[SolveRequest], SolveResult]] = {
    "exhaustive": solve_exhaustive,
    "sa": solve_sa,
    "greedy": solve_greedy,
}


def get_backend(name) -> Callable[[SolveRequest], SolveResult]:
    if callable(name):
        return name
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(BACKENDS)}") from None


# ------------------------------------------------------------------ packing


def merge_disjoint(problems: Sequence[Qubo]) -> tuple[Qubo, list[int]]:
    """Place problems side by side in one QUBO with offset variable indices.

    Returns the composite and the starting offset of every block.
    """
    terms: dict[tuple[int, ...], float] = {}
    offsets = []
    n = 0
    for p in problems:
        offsets.append(n)
        for key, c in p.terms.items():
            k = tuple(i + n for i in key)
            terms[k] = terms.get(k, 0.0) + c
        n += p.num_vars
    return Qubo(n, terms), offsets


def pack_and_solve(req: SolveRequest, backend="sa", capacity: int = DEFAULT_CAPACITY) -> SolveResult:
    """Solve many small QUBOs as a few composite QUBOs.

    Problems are shuffled (seeded by ``req.seed``) over slots, cut into batches
    of at most ``capacity``, merged block-diagonally and solved with one
    backend call per batch. Every read of a composite is split into one read
    per block, so each problem gets ``num_reads`` samples as if solved alone.
    """
    if capacity < 1:
        raise ValueError(f"capacity must be >= 1, got {capacity}")
    solve = get_backend(backend)
    rng = np.random.default_rng([int(req.seed) & 0xFFFFFFFFFFFFFFFF, 0x5EED])
    slots = rng.permutation(len(req.problems))
    results: list = [None] * len(req.problems)
    total = 0.0
    params = {k: v for k, v in req.solver_params.items() if k != "initial_states"}
    for b, start in enumerate(range(0, len(slots), capacity)):
        members = [int(i) for i in slots[start:start + capacity]]
        composite, offsets = merge_disjoint([req.problems[i] for i in members])
        sub = SolveRequest([composite], req.num_reads, seed=_batch_seed(req.seed, b), solver_params=params)
        try:
            res = solve(sub)
        except Exception as exc:
            raise PackingError(
                f"backend failed on batch {b} holding problems {members}: {exc}", b, members
            ) from exc
        total += res.solve_time
        share = res.solve_time / len(members)
        reads = _expand(res.results[0].samples, composite.num_vars)
        for i, off in zip(members, offsets):
            p = req.problems[i]
            results[i] = _collect(p, reads[:, off:off + p.num_vars], share)
    return SolveResult(results, total)


def _batch_seed(seed: int, batch: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, batch])
    return int(ss.generate_state(1, np.uint64)[0])


def _expand(samples, n: int) -> np.ndarray:
    rows = [np.tile(np.asarray(bits, dtype=np.uint8), (mult, 1)) for bits, _, mult in samples]
    if n == 0:
        return np.zeros((sum(m for *_, m in samples), 0), dtype=np.uint8)
    return np.concatenate(rows, axis=0)

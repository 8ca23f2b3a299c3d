"""Boolean tensor networks built from repeated matrix factorizations.

A :class:`TensorNetwork` is a list of Boolean nodes (matrices and order-3
or higher tensors), an edge list joining node modes, and the ordered list
of modes that form the reconstructed tensor. Contraction is the Boolean
analogue of ``einsum``: OR over shared indices of AND products.

All decompositions use a single rank ``r`` for every factorization and
share one :class:`~booltn.factorization.QuboCache` per top-level call.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .factorization import FactorizationParams, QuboCache, Solver, matrix_factorization
from .tensor import BooleanTensor, ShapeError, _as_array, _wrap, hamming

__all__ = [
    "TensorNetwork",
    "TopologyError",
    "SplitInfo",
    "split_tt",
    "tensor_train",
    "iterative_tucker",
    "recursive_tucker",
    "hierarchical_tucker",
    "tt_network",
    "tucker_network",
    "decompose",
    "contract",
    "error_rate",
    "census",
    "ALGORITHMS",
    "dumps_btnet",
    "loads_btnet",
    "write_btnet",
    "read_btnet",
]

TT, TUCKER, HT = "TT", "TUCKER", "HT"
ROLES = {"tt-car", "tt-carriage", "tucker-core", "tucker-factor", "ht-core", "ht-leaf"}


class TopologyError(ValueError):
    """Raised when a network's edges or outputs are inconsistent."""


@dataclass
class TensorNetwork:
    """Nodes plus wiring.

    Attributes:
        kind: ``"TT"``, ``"TUCKER"`` or ``"HT"``.
        nodes: the factor tensors.
        roles: one role tag per node.
        edges: ``((node_a, mode_a), (node_b, mode_b))`` pairs that are summed over.
        outputs: ``(node, mode)`` for each axis of the contracted tensor, in order.
        target_dims: shape of the contracted tensor.
        meta: free-form extras such as the rank, recursion depth or HT root.

    Modes of size 1 that are neither on an edge nor an output are dropped
    during contraction (the root of an HT tree has one).
    """

    kind: str
    nodes: list
    roles: list
    edges: list
    outputs: list
    target_dims: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = [n if isinstance(n, BooleanTensor) else _wrap(np.asarray(n, dtype=np.uint8))
                      for n in self.nodes]
        self.edges = [((int(a), int(i)), (int(b), int(j))) for (a, i), (b, j) in self.edges]
        self.outputs = [(int(a), int(i)) for a, i in self.outputs]
        self.target_dims = tuple(int(d) for d in self.target_dims)

    def validate(self) -> None:
        """Raise :class:`TopologyError` unless every mode is used consistently."""
        if self.kind not in (TT, TUCKER, HT):
            raise TopologyError(f"unknown network kind {self.kind!r}")
        if len(self.roles) != len(self.nodes):
            raise TopologyError("need exactly one role per node")
        bad = set(self.roles) - ROLES
        if bad:
            raise TopologyError(f"unknown roles {sorted(bad)}")
        used: dict[tuple[int, int], str] = {}

        def size(ref):
            node, mode = ref
            if not 0 <= node < len(self.nodes) or not 0 <= mode < self.nodes[node].order():
                raise TopologyError(f"mode reference {ref} does not exist")
            return self.nodes[node].dims[mode]

        def claim(ref, what):
            if ref in used:
                raise TopologyError(f"mode {ref} used by both {used[ref]} and {what}")
            used[ref] = what

        for a, b in self.edges:
            if a[0] == b[0]:
                raise TopologyError(f"edge {a}-{b} joins a node to itself")
            if size(a) != size(b):
                raise TopologyError(f"edge {a}-{b} joins modes of size {size(a)} and {size(b)}")
            claim(a, "an edge")
            claim(b, "an edge")
        if len(self.outputs) != len(self.target_dims):
            raise TopologyError(f"{len(self.outputs)} outputs for {len(self.target_dims)} target dims")
        for ref, d in zip(self.outputs, self.target_dims):
            if size(ref) != d:
                raise TopologyError(f"output {ref} has size {size(ref)}, target wants {d}")
            claim(ref, "an output")
        for k, node in enumerate(self.nodes):
            for mode, d in enumerate(node.dims):
                if (k, mode) not in used and d != 1:
                    raise TopologyError(f"mode {(k, mode)} of size {d} is dangling")

    @property
    def rank(self):
        return self.meta.get("rank")


# ------------------------------------------------------------------ contraction


def _bool_tensordot(a: np.ndarray, b: np.ndarray, axes) -> np.ndarray:
    # counts of AND matches fit exactly in float32 for any realistic rank
    out = np.tensordot(a.astype(np.float32), b.astype(np.float32), axes=axes)
    return (out > 0.5).astype(np.uint8)


def contract(net: TensorNetwork) -> BooleanTensor:
    """Boolean contraction of the whole network, shaped ``target_dims``.

    Pairs of tensors are merged greedily, always choosing the pair whose
    result is smallest. OR-AND contraction is associative and commutative,
    so the order only affects speed.
    """
    net.validate()
    label_of: dict[tuple[int, int], int] = {}
    for k, (a, b) in enumerate(net.edges):
        label_of[a] = label_of[b] = k
    out_labels = []
    for i, ref in enumerate(net.outputs):
        label_of[ref] = len(net.edges) + i
        out_labels.append(len(net.edges) + i)
    sizes: dict[int, int] = {}
    parts = []
    for k, node in enumerate(net.nodes):
        arr = node.array
        keep = [m for m in range(node.order()) if (k, m) in label_of]
        drop = tuple(m for m in range(node.order()) if (k, m) not in label_of)
        if drop:
            arr = arr.reshape([node.dims[m] for m in keep])
        labels = [label_of[(k, m)] for m in keep]
        for lab, d in zip(labels, arr.shape):
            sizes[lab] = d
        parts.append((np.asarray(arr, dtype=np.uint8), labels))

    while len(parts) > 1:
        best = None
        for i in range(len(parts)):
            for j in range(i + 1, len(parts)):
                shared = set(parts[i][1]) & set(parts[j][1])
                rest = (set(parts[i][1]) | set(parts[j][1])) - shared
                cost = (not shared, math.prod(sizes[lab] for lab in rest))
                if best is None or cost < best[0]:
                    best = (cost, i, j, shared)
        _, i, j, shared = best
        (a, la), (b, lb) = parts[i], parts[j]
        shared_list = sorted(shared)
        axes = ([la.index(s) for s in shared_list], [lb.index(s) for s in shared_list])
        merged = _bool_tensordot(a, b, axes)
        labels = [x for x in la if x not in shared] + [x for x in lb if x not in shared]
        parts = [p for k, p in enumerate(parts) if k not in (i, j)] + [(merged, labels)]

    arr, labels = parts[0]
    arr = np.transpose(arr, [labels.index(lab) for lab in out_labels])
    return _wrap(np.ascontiguousarray(arr).reshape(net.target_dims))


def error_rate(T, T_prime) -> float:
    """Fraction of positions where the two tensors differ."""
    x, y = _as_array(T), _as_array(T_prime)
    if x.shape != y.shape:
        raise ShapeError(f"error rate needs equal shapes, got {x.shape} and {y.shape}")
    if isinstance(T, BooleanTensor) and isinstance(T_prime, BooleanTensor):
        return hamming(T, T_prime) / T.size
    return float(np.count_nonzero(x != y)) / x.size


def census(net: TensorNetwork) -> dict:
    """Node counts by role and order, with the HT root counted separately."""
    out: dict = {"matrices": 0, "order3": 0, "higher": 0}
    for node in net.nodes:
        key = "matrices" if node.order() == 2 else "order3" if node.order() == 3 else "higher"
        out[key] += 1
    for role in net.roles:
        out[role] = out.get(role, 0) + 1
    if net.kind == HT:
        out["ht-root"] = 1
        out["ht-internal"] = out.get("ht-core", 0) - 1
    return out


# --------------------------------------------------------------------- split


@dataclass(frozen=True)
class SplitInfo:
    """Where a tensor is cut into rows and columns for one factorization."""

    split_point: int
    d1: int
    d2: int
    dims1: tuple
    dims2: tuple


def _split(dims: Sequence[int], rec: bool, lead: bool, trail: bool) -> SplitInfo:
    dims = tuple(int(d) for d in dims)
    physical = len(dims) - int(lead) - int(trail)
    if len(dims) < 2 or physical < 2:
        raise ShapeError(f"cannot split dims {dims}: need two modes besides rank modes")
    step = math.ceil(physical / 2) if rec else 1
    s = int(lead) + step
    return SplitInfo(s, math.prod(dims[:s]), math.prod(dims[s:]), dims[:s], dims[s:])


def split_tt(T, rec: bool, r: int, lead: bool | None = None, trail: bool | None = None) -> SplitInfo:
    """Split point for a tensor-train step.

    ``lead``/``trail`` say whether the first/last mode is a rank mode
    carried over from an earlier factorization. When omitted they are
    guessed by comparing those dimensions with ``r``. Rank modes always
    stay attached to their neighbours, and the remaining physical modes are
    cut in half (``rec``) or after the first one (iterative).

    Raises:
        ShapeError: if fewer than two physical modes remain.
    """
    dims = T.dims if isinstance(T, BooleanTensor) else tuple(T.shape if hasattr(T, "shape") else T)
    if len(dims) < 2:
        raise ShapeError(f"cannot split a tensor of order {len(dims)}")
    if lead is None:
        lead = dims[0] == r
    if trail is None:
        trail = len(dims) > 2 and dims[-1] == r
    return _split(dims, rec, lead, trail)


# ---------------------------------------------------------------- tensor train


class _Run:
    """Shared state of one decomposition: solver, parameters, cache, depth."""

    def __init__(self, r: int, solver: Solver, params: FactorizationParams | None):
        if r < 1:
            raise ValueError(f"rank must be at least 1, got {r}")
        self.r = r
        self.solver = solver
        self.params = params
        self.cache = QuboCache()
        self.depth = 0
        self.factorizations = 0
        self.solver_time = 0.0

    def factor(self, m: np.ndarray, depth: int):
        self.depth = max(self.depth, depth)
        self.factorizations += 1
        res = matrix_factorization(m, self.r, self.solver, self.params, self.cache)
        self.solver_time += res.qubo_solver_time
        return res.A.array, res.B.array

    def meta(self, **extra) -> dict:
        return {"rank": self.r, "depth": self.depth, "factorizations": self.factorizations, **extra}


def tt_network(nodes: Sequence, target_dims=None) -> TensorNetwork:
    """Wire a left-to-right list of TT nodes into a network."""
    nodes = [_as_array(n) for n in nodes]
    edges = [((k, nodes[k].ndim - 1), (k + 1, 0)) for k in range(len(nodes) - 1)]
    outputs = [(0, 0)] + [(k, 1) for k in range(1, len(nodes))]
    roles = ["tt-car" if n.ndim == 2 else "tt-carriage" for n in nodes]
    if target_dims is None:
        target_dims = tuple(nodes[k].shape[m] for k, m in outputs)
    return TensorNetwork(TT, nodes, roles, edges, outputs, target_dims)


def tensor_train(T, rec: bool, r: int, solver: Solver, params: FactorizationParams | None = None) -> TensorNetwork:
    """Tensor-train decomposition: two boundary matrices and ``d - 2`` order-3 cores.

    The tensor is unfolded at :func:`split_tt`, factored at rank ``r``, and
    each factor (with its new rank mode attached) is decomposed again while
    it still holds more than one physical mode.
    """
    x = _as_array(T)
    if x.ndim < 2:
        raise ShapeError(f"tensor train needs order >= 2, got {x.ndim}")
    run = _Run(r, solver, params)

    def go(x, lead, trail, depth):
        info = _split(x.shape, rec, lead, trail)
        a, b = run.factor(x.reshape(info.d1, info.d2), depth)
        left = a.reshape(info.dims1 + (r,))
        right = b.reshape((r,) + info.dims2)
        p_left = info.split_point - int(lead)
        p_right = x.ndim - int(lead) - int(trail) - p_left
        nodes = go(left, lead, True, depth + 1) if p_left >= 2 else [left]
        nodes += go(right, True, trail, depth + 1) if p_right >= 2 else [right]
        return nodes

    net = tt_network(go(x, False, False, 1), x.shape)
    net.meta = run.meta(algorithm="ttr" if rec else "tti", solver_time=run.solver_time)
    return net


# --------------------------------------------------------------------- Tucker


def tucker_network(core, factors: Sequence) -> TensorNetwork:
    """Core plus one ``(mode_size, rank)`` factor per core mode."""
    core = _as_array(core)
    factors = [_as_array(f) for f in factors]
    if core.ndim != len(factors):
        raise TopologyError(f"core of order {core.ndim} needs {core.ndim} factors, got {len(factors)}")
    nodes = [core] + factors
    edges = [((0, i), (i + 1, 1)) for i in range(len(factors))]
    outputs = [(i + 1, 0) for i in range(len(factors))]
    roles = ["tucker-core"] + ["tucker-factor"] * len(factors)
    return TensorNetwork(TUCKER, nodes, roles, edges, outputs, tuple(f.shape[0] for f in factors))


def _tucker_sweep(x: np.ndarray, links: Sequence[bool], run: _Run, depth: int):
    """Factor every non-link mode in turn; link modes pass through untouched.

    Each step unfolds the leading mode, keeps the left factor and moves the
    new rank mode to the back, so after a full cycle the modes are back in
    their original order with every physical size replaced by ``r``.
    """
    factors = []
    for is_link in links:
        if is_link:
            x = np.moveaxis(x, 0, -1)
            continue
        rest = x.shape[1:]
        a, b = run.factor(x.reshape(x.shape[0], -1), depth)
        factors.append(a)
        x = np.ascontiguousarray(b.T).reshape(rest + (run.r,))
    return x, factors


def iterative_tucker(T, r: int, solver: Solver, params: FactorizationParams | None = None):
    """Tucker decomposition one mode at a time.

    Returns:
        ``(core, factors)`` with ``core`` of shape ``(r,) * d`` and
        ``factors[i]`` of shape ``(dims[i], r)``.
    """
    x = _as_array(T)
    if x.ndim < 2:
        raise ShapeError(f"Tucker needs order >= 2, got {x.ndim}")
    core, factors, _ = _iterative_tucker(x, r, solver, params)
    return _wrap(core), [_wrap(f) for f in factors]


def _iterative_tucker(x, r, solver, params):
    run = _Run(r, solver, params)
    core, factors = _tucker_sweep(x, [False] * x.ndim, run, 1)
    return core, factors, run


def recursive_tucker(T, r: int, solver: Solver, min_rec_ord: int = 4,
                     params: FactorizationParams | None = None):
    """Tucker decomposition by recursive halving.

    The tensor is cut in half and factored. Each half, carrying the new
    rank mode, is handled recursively while its order is at least
    ``min_rec_ord`` and iteratively otherwise. The two sub-cores are then
    joined over that rank mode, giving one core of order ``d``.

    Raises:
        ValueError: if ``min_rec_ord`` is odd or below 2.
    """
    if min_rec_ord % 2 or min_rec_ord < 2:
        raise ValueError(f"min_rec_ord must be an even integer >= 2, got {min_rec_ord}")
    x = _as_array(T)
    if x.ndim < 2:
        raise ShapeError(f"Tucker needs order >= 2, got {x.ndim}")
    core, factors, _ = _recursive_tucker(x, r, solver, min_rec_ord, params)
    return _wrap(core), [_wrap(f) for f in factors]


def _recursive_tucker(x, r, solver, min_rec_ord, params):
    run = _Run(r, solver, params)
    core, factors = _tucker_recursive(x, False, False, run, min_rec_ord, 1)
    return core, factors, run


def _tucker_recursive(x, lead, trail, run, min_rec_ord, depth):
    links = [lead] + [False] * (x.ndim - 2) + [trail]
    if x.ndim < min_rec_ord or x.ndim - int(lead) - int(trail) < 2:
        return _tucker_sweep(x, links, run, depth)
    info = _split(x.shape, True, lead, trail)
    a, b = run.factor(x.reshape(info.d1, info.d2), depth)
    halves = [(a.reshape(info.dims1 + (run.r,)), lead, True),
              (b.reshape((run.r,) + info.dims2), True, trail)]
    cores, factors = [], []
    for half, hl, ht in halves:
        c, f = _tucker_recursive(half, hl, ht, run, min_rec_ord, depth + 1)
        cores.append(c)
        factors += f
    core = _bool_tensordot(cores[0], cores[1], ([cores[0].ndim - 1], [0]))
    return core, factors


# ---------------------------------------------------------- hierarchical Tucker


class _Graph:
    def __init__(self):
        self.nodes: list = []
        self.roles: list = []
        self.edges: list = []
        self.outputs: list = []

    def add(self, arr, role) -> int:
        self.nodes.append(arr)
        self.roles.append(role)
        return len(self.nodes) - 1


def hierarchical_tucker(T, r: int, solver: Solver, q: int = 1,
                        params: FactorizationParams | None = None) -> TensorNetwork:
    """Hierarchical Tucker decomposition as a binary tree.

    At each level the modes ``(n_1..n_s)`` plus the parent rank ``q`` are
    unfolded as ``(n_1..n_{s//2}) x (n_{s//2+1}..n_s, q)`` and factored
    into ``M1 M2``. ``q`` is moved to the rows of ``M2``, which is factored
    again into ``M21 M22``. ``M21`` becomes the order-3 transfer core
    ``(q, r, r)``. ``M1`` and ``M22`` become leaves ``(n, r)`` or, when
    they still span several modes, subtrees.

    With ``q == 1`` the root core has a dangling mode of size 1. With
    ``q > 1`` the last mode of ``T`` is taken to be the parent rank mode
    and becomes the root core's first mode.
    """
    x = _as_array(T)
    target = x.shape
    if q == 1:
        x = x.reshape(x.shape + (1,))
    elif x.shape[-1] != q:
        raise ShapeError(f"last mode of size {x.shape[-1]} does not match q={q}")
    if x.ndim < 3:
        raise ShapeError(f"hierarchical Tucker needs at least two modes besides q, got {x.shape}")
    run = _Run(r, solver, params)
    g = _Graph()
    root = _ht(x, run, g, 1)
    outputs = g.outputs + ([(root, 0)] if q > 1 else [])
    net = TensorNetwork(HT, g.nodes, g.roles, g.edges, outputs, target)
    net.meta = run.meta(algorithm="ht", root=root, solver_time=run.solver_time)
    return net


def _ht(x: np.ndarray, run: _Run, g: _Graph, depth: int) -> int:
    *dims, q = x.shape
    s2 = len(dims) // 2
    dims1, dims2 = tuple(dims[:s2]), tuple(dims[s2:])
    d1, d2 = math.prod(dims1), math.prod(dims2)
    r = run.r
    core = g.add(None, "ht-core")
    m1, m2 = run.factor(x.reshape(d1, d2 * q), depth)
    _ht_child(m1.reshape(dims1 + (r,)), (core, 1), run, g, depth)
    # move q from the columns to the rows: (r1, d2, q) -> (q r1, d2)
    m2 = np.ascontiguousarray(m2.reshape(r, d2, q).transpose(2, 0, 1)).reshape(q * r, d2)
    m21, m22 = run.factor(m2, depth)
    g.nodes[core] = m21.reshape(q, r, r)
    _ht_child(np.ascontiguousarray(m22.T).reshape(dims2 + (r,)), (core, 2), run, g, depth)
    return core


def _ht_child(x: np.ndarray, parent: tuple[int, int], run: _Run, g: _Graph, depth: int) -> None:
    if x.ndim > 2:
        child = _ht(x, run, g, depth + 1)
        g.edges.append((parent, (child, 0)))
    else:
        leaf = g.add(x, "ht-leaf")
        g.edges.append((parent, (leaf, 1)))
        g.outputs.append((leaf, 0))


# ------------------------------------------------------------------- dispatch

ALGORITHMS = ("ht", "tti", "ttr", "ti", "tr")


def decompose(T, algorithm: str, r: int, solver: Solver,
              params: FactorizationParams | None = None, min_rec_ord: int = 4) -> TensorNetwork:
    """Run one of the five decompositions and return its network.

    ``algorithm`` is ``ht``, ``tti``/``ttr`` (tensor train, iterative or
    recursive) or ``ti``/``tr`` (Tucker, iterative or recursive).
    """
    x = _as_array(T)
    if algorithm in ("tti", "ttr"):
        return tensor_train(x, algorithm == "ttr", r, solver, params)
    if algorithm == "ht":
        return hierarchical_tucker(x, r, solver, params=params)
    if algorithm in ("ti", "tr"):
        if x.ndim < 2:
            raise ShapeError(f"Tucker needs order >= 2, got {x.ndim}")
        if algorithm == "ti":
            core, factors, run = _iterative_tucker(x, r, solver, params)
        else:
            if min_rec_ord % 2 or min_rec_ord < 2:
                raise ValueError(f"min_rec_ord must be an even integer >= 2, got {min_rec_ord}")
            core, factors, run = _recursive_tucker(x, r, solver, min_rec_ord, params)
        net = tucker_network(core, factors)
        net.meta = run.meta(algorithm=algorithm, solver_time=run.solver_time)
        return net
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")


# ------------------------------------------------------------------ .btnet I/O


def _encode(node: BooleanTensor) -> str:
    return base64.b64encode(np.packbits(node.array.reshape(-1)).tobytes()).decode("ascii")


def _decode(text: str, dims) -> np.ndarray:
    size = math.prod(dims)
    raw = np.frombuffer(base64.b64decode(text.encode("ascii"), validate=True), dtype=np.uint8)
    if raw.size != (size + 7) // 8:
        raise TopologyError(f"node payload of {raw.size} bytes does not fit dims {list(dims)}")
    return np.unpackbits(raw, count=size).reshape(dims)


def dumps_btnet(net: TensorNetwork) -> str:
    payload = {
        "schema": 1,
        "kind": net.kind,
        "target_dims": list(net.target_dims),
        "nodes": [{"role": role, "dims": list(node.dims), "bits": _encode(node)}
                  for node, role in zip(net.nodes, net.roles)],
        "edges": [[list(a), list(b)] for a, b in net.edges],
        "outputs": [list(o) for o in net.outputs],
        "meta": {k: v for k, v in net.meta.items() if k != "solver_time"},
    }
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def loads_btnet(text: str) -> TensorNetwork:
    try:
        obj = json.loads(text)
        nodes = [_decode(n["bits"], n["dims"]) for n in obj["nodes"]]
        net = TensorNetwork(
            obj["kind"],
            nodes,
            [n["role"] for n in obj["nodes"]],
            [tuple(map(tuple, e)) for e in obj["edges"]],
            [tuple(o) for o in obj["outputs"]],
            tuple(obj["target_dims"]),
            dict(obj.get("meta", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TopologyError):
            raise
        raise TopologyError(f"malformed network file: {exc}") from exc
    net.validate()
    return net


def write_btnet(path, net: TensorNetwork) -> None:
    Path(path).write_text(dumps_btnet(net))


def read_btnet(path) -> TensorNetwork:
    return loads_btnet(Path(path).read_text())

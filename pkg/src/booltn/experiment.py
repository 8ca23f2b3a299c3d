"""Random ground-truth networks, the noise model, and the trial runner."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .factorization import FactorizationParams, Solver
from .networks import (
    ALGORITHMS,
    HT,
    TensorNetwork,
    contract,
    decompose,
    error_rate,
    read_btnet,
    tt_network,
    tucker_network,
    write_btnet,
)
from .solvers import BACKENDS
from .tensor import BooleanTensor, _as_array, _wrap, hamming, read_btn, write_btn

__all__ = [
    "KINDS",
    "generate_ground_truth",
    "add_noise",
    "ExperimentConfig",
    "TrialRecord",
    "RunReport",
    "run_experiment",
    "CSV_COLUMNS",
    "rows_to_csv",
    "recompute_error_rate",
]

KINDS = ("tt", "tucker", "ht")
KIND_OF_ALGORITHM = {"tti": "tt", "ttr": "tt", "ti": "tucker", "tr": "tucker", "ht": "ht"}
CSV_COLUMNS = ("algo", "order", "dim", "rank", "noise", "trial", "error_rate", "solver_time_s", "exact", "seed")


def _ht_skeleton(s: int, q: int, dim: int, r: int, fill, nodes, roles, edges, outputs) -> int:
    """Append an HT subtree over ``s`` modes with parent rank ``q``; return its root."""
    core = len(nodes)
    nodes.append(fill((q, r, r)))
    roles.append("ht-core")
    for mode, count in ((1, s // 2), (2, s - s // 2)):
        if count > 1:
            child = _ht_skeleton(count, r, dim, r, fill, nodes, roles, edges, outputs)
            edges.append(((core, mode), (child, 0)))
        else:
            leaf = len(nodes)
            nodes.append(fill((dim, r)))
            roles.append("ht-leaf")
            edges.append(((core, mode), (leaf, 1)))
            outputs.append((leaf, 0))
    return core


def generate_ground_truth(kind: str, order: int, dim: int, rank: int, seed: int, p: float | None = None):
    """Random network of the given kind and its contraction.

    Every node is filled i.i.d. Bernoulli(p) with its own ``p ~ U[0.01, 0.99]``
    unless ``p`` is given. The tree and chain shapes are the ones the
    decompositions produce, so a perfect decomposition exists at ``rank``.

    Returns:
        ``(network, tensor)`` where ``tensor`` has dims ``(dim,) * order``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown network kind {kind!r}; choose from {KINDS}")
    if order < 2 or dim < 1 or rank < 1:
        raise ValueError(f"need order >= 2, dim >= 1, rank >= 1; got {order}, {dim}, {rank}")
    if p is not None and not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)

    def fill(shape):
        prob = rng.uniform(0.01, 0.99) if p is None else p
        return (rng.random(shape) < prob).astype(np.uint8)

    if kind == "tt":
        shapes = [(dim, rank)] + [(rank, dim, rank)] * (order - 2) + [(rank, dim)]
        net = tt_network([fill(s) for s in shapes])
    elif kind == "tucker":
        core = fill((rank,) * order)
        net = tucker_network(core, [fill((dim, rank)) for _ in range(order)])
    else:
        nodes, roles, edges, outputs = [], [], [], []
        root = _ht_skeleton(order, 1, dim, rank, fill, nodes, roles, edges, outputs)
        net = TensorNetwork(HT, nodes, roles, edges, outputs, (dim,) * order, {"root": root})
    net.meta.update({"rank": rank, "seed": int(seed)})
    return net, contract(net)


def add_noise(T, prob: float, seed: int) -> BooleanTensor:
    """Flip each bit independently with probability ``prob``.

    If no bit flips, exactly one uniformly chosen bit is flipped instead, so
    the result always differs from ``T``.
    """
    if not 0.0 <= prob < 1.0:
        raise ValueError(f"noise probability must lie in [0, 1), got {prob}")
    x = _as_array(T)
    rng = np.random.default_rng(seed)
    flips = rng.random(x.shape) < prob
    if not flips.any():
        flips.reshape(-1)[rng.integers(x.size)] = True
    return _wrap(x ^ flips.astype(np.uint8))


@dataclass
class ExperimentConfig:
    """One cell of the experiment grid, repeated ``trials`` times."""

    algorithm: str
    order: int
    dim: int
    rank: int
    noise: bool = False
    noise_prob: float = 0.001
    solver: str = "sa"
    seed: int = 0
    trials: int = 5
    num_reads: int | None = None
    sweeps: int | None = None
    capacity: int = 255
    min_rec_ord: int = 4
    params: FactorizationParams = field(default_factory=FactorizationParams)
    output: str | None = None
    save_artifacts: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.solver not in BACKENDS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {sorted(BACKENDS)}")
        if not 0.0 <= self.noise_prob < 1.0:
            raise ValueError(f"noise_prob must lie in [0, 1), got {self.noise_prob}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.order < 2 or self.dim < 1 or self.rank < 1:
            raise ValueError(f"need order >= 2, dim >= 1, rank >= 1; got {self.order}, {self.dim}, {self.rank}")
        if self.num_reads is not None and self.num_reads < 1:
            raise ValueError(f"num_reads must be >= 1, got {self.num_reads}")
        if self.sweeps is not None and self.sweeps < 1:
            raise ValueError(f"sweeps must be >= 1, got {self.sweeps}")
        if self.min_rec_ord % 2 or self.min_rec_ord < 2:
            raise ValueError(f"min_rec_ord must be an even integer >= 2, got {self.min_rec_ord}")

    def describe(self) -> dict:
        """Settings that determine the results (no output location)."""
        out = asdict(self)
        out.pop("output")
        out.pop("save_artifacts")
        return out


@dataclass
class TrialRecord:
    trial: int
    seed: int
    error_rate: float
    hamming: int
    exact: bool
    num_reads: int
    solver_time_s: float


def _stats(values) -> dict:
    return {"mean": float(np.mean(values)), "min": float(np.min(values)), "max": float(np.max(values))}


@dataclass
class RunReport:
    config: ExperimentConfig
    trials: list

    def aggregates(self) -> dict:
        return {
            "error_rate": _stats([t.error_rate for t in self.trials]),
            "exact": sum(t.exact for t in self.trials),
        }

    def timing(self) -> dict:
        times = [t.solver_time_s for t in self.trials]
        return {"solver_time_s": times, "aggregate": _stats(times)}

    @property
    def mean_error_rate(self) -> float:
        return self.aggregates()["error_rate"]["mean"]

    def to_dict(self) -> dict:
        rows = [{k: v for k, v in asdict(t).items() if k != "solver_time_s"} for t in self.trials]
        return {
            "schema": 1,
            "config": self.config.describe(),
            "trials": rows,
            "aggregates": self.aggregates(),
            "timing": self.timing(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def csv_rows(self) -> list[list]:
        c = self.config
        return [
            [c.algorithm, c.order, c.dim, c.rank, int(c.noise), t.trial, repr(t.error_rate),
             repr(t.solver_time_s), int(t.exact), t.seed]
            for t in self.trials
        ]

    def to_csv(self) -> str:
        return rows_to_csv(self.csv_rows())

    def write(self, directory) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        js, cs = directory / "report.json", directory / "report.csv"
        js.write_text(self.to_json())
        cs.write_text(self.to_csv())
        return js, cs


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(rows)
    return buf.getvalue()


def _trial_seed(seed: int, trial: int) -> int:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, trial])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Generate, optionally perturb, decompose and score ``cfg.trials`` tensors.

    Each trial derives its own seed from ``(cfg.seed, trial)`` and owns its
    solver and cache, so trials are independent of each other's order.
    """
    kind = KIND_OF_ALGORITHM[cfg.algorithm]
    art = None
    if cfg.save_artifacts:
        if cfg.output is None:
            raise ValueError("save_artifacts needs an output directory")
        art = Path(cfg.output) / "artifacts"
        art.mkdir(parents=True, exist_ok=True)
    records = []
    for trial in range(cfg.trials):
        seed = _trial_seed(cfg.seed, trial)
        gen_seed, noise_seed, solver_seed = np.random.SeedSequence(seed).generate_state(3, np.uint32)
        _, T = generate_ground_truth(kind, cfg.order, cfg.dim, cfg.rank, int(gen_seed))
        if cfg.noise:
            T = add_noise(T, cfg.noise_prob, int(noise_seed))
        solver = Solver(cfg.solver, seed=int(solver_seed), num_reads=cfg.num_reads,
                        sweeps=cfg.sweeps, capacity=cfg.capacity)
        net = decompose(T, cfg.algorithm, cfg.rank, solver, cfg.params, cfg.min_rec_ord)
        R = contract(net)
        dist = hamming(T, R)
        records.append(TrialRecord(
            trial=trial,
            seed=seed,
            error_rate=dist / T.size,
            hamming=dist,
            exact=dist == 0,
            num_reads=solver.reads(cfg.rank),
            solver_time_s=solver.solve_time,
        ))
        if art is not None:
            write_btn(art / f"trial{trial}_input.btn", T)
            write_btnet(art / f"trial{trial}.btnet", net)
    report = RunReport(cfg, records)
    if cfg.output is not None:
        report.write(cfg.output)
    return report


def recompute_error_rate(directory, trial: int) -> float:
    """Error rate of a saved trial, from its artifacts alone."""
    art = Path(directory) / "artifacts"
    return error_rate(read_btn(art / f"trial{trial}_input.btn"), contract(read_btnet(art / f"trial{trial}.btnet")))

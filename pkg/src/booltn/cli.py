"""Command-line interface: ``booltn generate | decompose | contract | noise | bench``.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
runtime failures such as unreadable files.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from pathlib import Path

from . import __version__
from .experiment import (
    KINDS,
    ExperimentConfig,
    add_noise,
    generate_ground_truth,
    rows_to_csv,
    run_experiment,
)
from .factorization import FactorizationParams, Solver
from .hubo import to_json
from .networks import ALGORITHMS, contract, decompose, error_rate, read_btnet, write_btnet
from .solvers import BACKENDS
from .tensor import read_btn, write_btn

__all__ = ["main", "build_parser"]


class ConfigError(ValueError):
    """Invalid combination of command-line settings."""


def _default_seed() -> int:
    raw = os.environ.get("BTN_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"BTN_SEED must be an integer, got {raw!r}") from None


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", choices=sorted(BACKENDS), default="sa")
    p.add_argument("--num-reads", type=int, default=None,
                   help="reads per QUBO (default: chosen from the rank)")
    p.add_argument("--sweeps", type=int, default=None, help="SA sweeps per read (default 1000)")
    p.add_argument("--capacity", type=int, default=255, help="QUBOs merged per solver call")
    p.add_argument("--seed", type=int, default=None, help="random seed (default: $BTN_SEED or 0)")
    p.add_argument("--n-states", type=int, default=20, help="random restarts per factorization")
    p.add_argument("--rand-dur", type=int, default=2, help="iterations per random restart")
    p.add_argument("--lc", type=int, default=10, help="stall window")
    p.add_argument("--lh", type=int, default=100, help="iteration cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="booltn", description="Boolean tensor network decompositions")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="contract a random network into a .btn tensor")
    g.add_argument("--kind", choices=KINDS, required=True)
    g.add_argument("--order", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--rank", type=int, required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("-o", "--output", default="tensor.btn")
    g.add_argument("--network", default=None, help="also write the ground-truth network (.btnet)")

    d = sub.add_parser("decompose", help="decompose a .btn tensor into a .btnet network")
    d.add_argument("input")
    d.add_argument("--algo", choices=ALGORITHMS, default="ttr")
    d.add_argument("--rank", type=int, required=True)
    d.add_argument("--min-rec-ord", type=int, default=4)
    _solver_flags(d)
    d.add_argument("-o", "--output", default=None, help="network path (default: INPUT with .btnet)")
    d.add_argument("--report", default=None, help="JSON report path (default: OUTPUT with .json)")
    d.add_argument("--dump-qubo", default=None, help="write every solved QUBO as JSON lines")

    c = sub.add_parser("contract", help="contract a .btnet network into a .btn tensor")
    c.add_argument("input")
    c.add_argument("-o", "--output", default=None)

    n = sub.add_parser("noise", help="flip bits of a .btn tensor")
    n.add_argument("input")
    n.add_argument("--prob", type=float, default=0.001)
    n.add_argument("--seed", type=int, default=None)
    n.add_argument("-o", "--output", required=True)

    b = sub.add_parser("bench", help="run the experiment protocol over a parameter grid")
    b.add_argument("--algo", nargs="+", choices=ALGORITHMS, default=list(ALGORITHMS))
    b.add_argument("--order", nargs="+", type=int, default=[3])
    b.add_argument("--dim", nargs="+", type=int, default=[4])
    b.add_argument("--rank", nargs="+", type=int, default=[2])
    b.add_argument("--trials", type=int, default=5)
    b.add_argument("--noise", action="store_true", help="run the noisy arm")
    b.add_argument("--noise-prob", type=float, default=0.001)
    b.add_argument("--min-rec-ord", type=int, default=4)
    _solver_flags(b)
    b.add_argument("-o", "--output", default="bench_out", help="report directory")
    b.add_argument("--artifacts", action="store_true", help="keep input tensors and output networks")
    return parser


def _config(factory, *args, **kwargs):
    """Build a settings object, reporting invalid values as configuration errors."""
    try:
        return factory(*args, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _seed(args) -> int:
    return _default_seed() if args.seed is None else args.seed


def _params(args) -> FactorizationParams:
    return _config(FactorizationParams, args.n_states, args.rand_dur, args.lc, args.lh)


def _check_solver_args(args) -> None:
    if args.num_reads is not None and args.num_reads < 1:
        raise ConfigError("--num-reads must be >= 1")
    if args.sweeps is not None and args.sweeps < 1:
        raise ConfigError("--sweeps must be >= 1")
    if args.capacity < 1:
        raise ConfigError("--capacity must be >= 1")


def _generate(args) -> None:
    if args.order < 2 or args.dim < 1 or args.rank < 1:
        raise ConfigError("need --order >= 2, --dim >= 1, --rank >= 1")
    seed = _seed(args)
    net, T = generate_ground_truth(args.kind, args.order, args.dim, args.rank, seed)
    write_btn(args.output, T)
    if args.network:
        write_btnet(args.network, net)
    print(f"wrote {args.output} dims={list(T.dims)} ones={T.count()}")


def _decompose(args) -> None:
    _check_solver_args(args)
    if args.rank < 1:
        raise ConfigError("--rank must be >= 1")
    if args.min_rec_ord % 2 or args.min_rec_ord < 2:
        raise ConfigError("--min-rec-ord must be an even integer >= 2")
    params = _params(args)
    seed = _seed(args)
    T = read_btn(args.input)
    out = Path(args.output) if args.output else Path(args.input).with_suffix(".btnet")
    report = Path(args.report) if args.report else out.with_suffix(".json")
    dump_file = open(args.dump_qubo, "w") if args.dump_qubo else None
    try:
        dump = (lambda q: dump_file.write(to_json(q) + "\n")) if dump_file else None
        solver = Solver(args.solver, seed=seed, num_reads=args.num_reads, sweeps=args.sweeps,
                        capacity=args.capacity, dump=dump)
        net = decompose(T, args.algo, args.rank, solver, params, args.min_rec_ord)
    finally:
        if dump_file:
            dump_file.close()
    write_btnet(out, net)
    rate = error_rate(T, contract(net))
    payload = {
        "schema": 1,
        "input": str(args.input),
        "algorithm": args.algo,
        "rank": args.rank,
        "solver": args.solver,
        "seed": seed,
        "num_reads": solver.reads(args.rank),
        "error_rate": rate,
        "exact": rate == 0.0,
        "qubo_calls": solver.calls,
        "qubos_solved": solver.problems_solved,
        "timing": {"solver_time_s": solver.solve_time},
    }
    report.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    print(f"wrote {out} and {report}: error_rate={rate:.6g}")


def _contract(args) -> None:
    net = read_btnet(args.input)
    out = args.output or str(Path(args.input).with_suffix(".btn"))
    T = contract(net)
    write_btn(out, T)
    print(f"wrote {out} dims={list(T.dims)}")


def _noise(args) -> None:
    if not 0.0 <= args.prob < 1.0:
        raise ConfigError("--prob must lie in [0, 1)")
    seed = _seed(args)
    T = read_btn(args.input)
    write_btn(args.output, add_noise(T, args.prob, seed))
    print(f"wrote {args.output}")


def _bench(args) -> None:
    _check_solver_args(args)
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    params = _params(args)
    seed = _seed(args)
    configs = []
    for algo, order, dim, rank in itertools.product(args.algo, args.order, args.dim, args.rank):
        configs.append(_config(
            ExperimentConfig,
            algorithm=algo, order=order, dim=dim, rank=rank, noise=args.noise,
            noise_prob=args.noise_prob, solver=args.solver, seed=seed, trials=args.trials,
            num_reads=args.num_reads, sweeps=args.sweeps, capacity=args.capacity,
            min_rec_ord=args.min_rec_ord, params=params,
        ))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    runs, rows = [], []
    for k, cfg in enumerate(configs):
        if args.artifacts:
            cfg.output = str(out / f"run{k:03d}")
            cfg.save_artifacts = True
        report = run_experiment(cfg)
        runs.append(report.to_dict())
        rows += report.csv_rows()
        agg = report.aggregates()["error_rate"]
        print(f"{cfg.algorithm} order={cfg.order} dim={cfg.dim} rank={cfg.rank}: "
              f"mean error {agg['mean']:.4g} (min {agg['min']:.4g}, max {agg['max']:.4g})")
    body = {
        "schema": 1,
        "runs": [{k: v for k, v in r.items() if k != "timing"} for r in runs],
        "timing": [r["timing"] for r in runs],
    }
    (out / "bench.json").write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
    (out / "bench.csv").write_text(rows_to_csv(rows))
    print(f"wrote {out / 'bench.json'} and {out / 'bench.csv'}")


_COMMANDS = {
    "generate": _generate,
    "decompose": _decompose,
    "contract": _contract,
    "noise": _noise,
    "bench": _bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"booltn: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"booltn: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

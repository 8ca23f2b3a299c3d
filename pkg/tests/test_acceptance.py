"""Acceptance criteria 1 to 9, one summary line each (see the terminal summary)."""

import csv
import io
import json
import time

import numpy as np
import pytest
from scipy import stats

from booltn.cli import main
from booltn.experiment import ExperimentConfig, add_noise, generate_ground_truth, run_experiment
from booltn.factorization import FactorizationParams, Solver
from booltn.hubo import Hubo, Qubo, build_column_hubo, default_strength, evaluate_many, hubo_to_qubo
from booltn.networks import census, contract, decompose, error_rate
from booltn.solvers import SolveRequest, pack_and_solve, solve_exhaustive, solve_sa
from booltn.tensor import BooleanTensor, hamming, matmul_array

from conftest import all_assignments, rand_bits, record

# Fixed by oracle campaigns on seeds disjoint from the ones asserted below.
SA_OPTIMUM_RATE = 100          # percent of instances; campaign seeds 100-104
SA_TOLERANCE = 2               # percentage points
ROUNDTRIP_THRESHOLD = 0.02     # mean error rate; oracle worst was 0.0094 on seeds 100-104
ROUNDTRIP_SEED = 11
TREND_SEED = 2024
TREND_TRIALS = 20


def test_ac1_hubo_oracle():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(1000):
        n, r = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        A, m = rand_bits(rng, (n, r)), rand_bits(rng, n)
        Y = all_assignments(r)
        oracle = (matmul_array(A, Y.T) != m[:, None]).sum(axis=0)
        bad += not np.array_equal(evaluate_many(build_column_hubo(A, m), Y), oracle)
    elapsed = time.perf_counter() - t0
    record(1, bad == 0 and elapsed < 10, f"{bad} mismatches in 1000 cases, {elapsed:.2f}s")


def _random_hubo(rng):
    n = int(rng.integers(1, 11))
    terms = {}
    for _ in range(int(rng.integers(1, 16))):
        k = int(rng.integers(1, min(4, n) + 1))
        terms[tuple(sorted(rng.choice(n, size=k, replace=False).tolist()))] = float(rng.uniform(-5, 5))
    return Hubo(n, terms)


TIE = 1e-9  # energies closer than this are ties; summation order differs between H and Q


def _minimum(P, n):
    X = all_assignments(P.num_vars)
    e = evaluate_many(P, X)
    best = e.min()
    return best, {tuple(x[:n]) for x in X[e - best < TIE]}


def test_ac2_quadratization_soundness():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(500):
        H = _random_hubo(rng)
        Q = hubo_to_qubo(H, default_strength(H))
        hv, hs = _minimum(H, H.num_vars)
        qv, qs = _minimum(Q, H.num_vars)
        bad += not (abs(hv - qv) < TIE and hs == qs)
    elapsed = time.perf_counter() - t0
    record(2, bad == 0 and elapsed < 60, f"{bad} mismatches in 500 HUBOs, {elapsed:.2f}s")


def _dense_qubo(rng, n=12):
    terms = {(i,): rng.uniform(-1, 1) for i in range(n)}
    for i in range(n):
        for j in range(i + 1, n):
            terms[(i, j)] = rng.uniform(-1, 1)
    return Qubo(n, terms)


def test_ac3_sa_reaches_optimum():
    seed = 7
    rng = np.random.default_rng(seed)
    problems = [_dense_qubo(rng) for _ in range(100)]
    exact = solve_exhaustive(SolveRequest(problems)).best_energies
    sa = solve_sa(SolveRequest(problems, num_reads=200, seed=seed)).best_energies
    hits = sum(abs(a - b) < 1e-9 for a, b in zip(exact, sa))
    need = SA_OPTIMUM_RATE - SA_TOLERANCE
    record(3, hits >= need, f"{hits}/100 optimal, need >= {need}")


def test_ac4_packing_equivalence():
    rng = np.random.default_rng(4)
    bad = 0
    for batch in range(50):
        problems = []
        for _ in range(int(rng.integers(1, 40))):
            n = int(rng.integers(0, 9))
            terms = {(i,): rng.uniform(-1, 1) for i in range(n)}
            terms.update({(i, j): rng.uniform(-1, 1) for i in range(n) for j in range(i + 1, n)
                          if rng.random() < 0.5})
            problems.append(Qubo(n, terms))
        req = SolveRequest(problems, num_reads=1, seed=batch)
        solo = solve_exhaustive(req)
        for cap in (1, 7, 255):
            packed = pack_and_solve(req, "exhaustive", cap)
            same = all(np.array_equal(a, b) for a, b in zip(packed.best_bits, solo.best_bits))
            bad += not (same and packed.best_energies == solo.best_energies)
    record(4, bad == 0, f"{bad} differing (batch, capacity) pairs of 150")


def test_ac5_censuses():
    solver = Solver("sa", num_reads=2, sweeps=5)
    params = FactorizationParams(n_states=0, l_c=1, l_h=1)
    rng = np.random.default_rng(5)
    bad = []
    for d in range(3, 8):
        x = rand_bits(rng, (2,) * d)
        for algo in ("tti", "ttr", "ti", "tr", "ht"):
            c = census(decompose(x, algo, 2, solver, params))
            if algo.startswith("tt"):
                ok = (c["matrices"], c["order3"], c["higher"]) == (2, d - 2, 0)
            elif algo == "ht":
                ok = (c["ht-leaf"], c["ht-internal"], c["ht-root"]) == (d, d - 2, 1)
            else:
                ok = (c["tucker-core"], c["tucker-factor"]) == (1, d)
            if not ok:
                bad.append((algo, d))
    record(5, not bad, f"mismatched (algorithm, order): {bad}")


def test_ac6_roundtrip_at_desk_scale():
    lines, ok = [], True
    for algo in ("tti", "ttr", "ti", "tr", "ht"):
        t0 = time.perf_counter()
        rep = run_experiment(ExperimentConfig(algo, 3, 4, 2, solver="exhaustive", seed=ROUNDTRIP_SEED, trials=5))
        elapsed = time.perf_counter() - t0
        ok &= rep.mean_error_rate <= ROUNDTRIP_THRESHOLD and elapsed < 120
        lines.append(f"{algo}={rep.mean_error_rate:.4f}/{elapsed:.1f}s")
    record(6, ok, f"mean error (limit {ROUNDTRIP_THRESHOLD}): " + " ".join(lines))


def test_ac7_recursive_not_worse():
    means = {}
    for algo in ("tti", "ttr", "ti", "tr"):
        cfg = ExperimentConfig(algo, 4, 4, 3, solver="sa", seed=TREND_SEED, trials=TREND_TRIALS)
        means[algo] = run_experiment(cfg).mean_error_rate
    tt_gap = means["ttr"] - means["tti"]
    tucker_gap = means["tr"] - means["ti"]
    strict = tt_gap <= 0 and tucker_gap <= 0
    soft = max(tt_gap, tucker_gap) <= 1 / 256
    detail = ", ".join(f"{k}={v:.5f}" for k, v in means.items())
    record(7, strict, detail, soft=soft)


def test_ac8_noise_model():
    n, p = 10**6, 0.001
    inside = stats.binom.cdf(1100, n, p) - stats.binom.cdf(899, n, p)
    # probability that at least 99 of 100 seeds land inside the window
    enough = stats.binom.sf(98, 100, inside)
    T = BooleanTensor.from_array(np.zeros(n, dtype=np.uint8))
    counts = [hamming(T, add_noise(T, p, seed)) for seed in range(100)]
    good = sum(900 <= c <= 1100 for c in counts)
    small = BooleanTensor.from_array(np.zeros((4, 4), dtype=np.uint8))
    fallback = all(hamming(small, add_noise(small, 0.0, s)) == 1 for s in range(100))
    record(8, good >= 99 and fallback and enough > 0.99,
           f"{good}/100 seeds in [900, 1100] (oracle P={enough:.4f}), fallback exact={fallback}")


def _strip_timing(directory):
    body = json.loads((directory / "bench.json").read_text())
    body.pop("timing")
    rows = list(csv.reader(io.StringIO((directory / "bench.csv").read_text())))
    col = rows[0].index("solver_time_s")
    rows = [r[:col] + r[col + 1:] for r in rows]
    reports = sorted(directory.glob("run*/report.json"))
    per_run = []
    for path in reports:
        rep = json.loads(path.read_text())
        rep.pop("timing")
        per_run.append(rep)
    arts = {p.relative_to(directory): p.read_bytes() for p in sorted(directory.glob("run*/artifacts/*"))}
    return body, rows, per_run, arts


def test_ac9_bench_determinism(tmp_path):
    argv = ["bench", "--algo", "ttr", "tr", "ht", "--rank", "2", "3", "--dim", "3", "--order", "4",
            "--trials", "2", "--solver", "sa", "--seed", "7", "--noise", "--artifacts"]
    codes = [main(argv + ["-o", str(tmp_path / name)]) for name in ("a", "b")]
    a, b = _strip_timing(tmp_path / "a"), _strip_timing(tmp_path / "b")
    record(9, codes == [0, 0] and a == b, f"exit codes {codes}, identical={a == b}")


@pytest.mark.slow
def test_million_element_smoke():
    # seed 4 gives a tensor with about 45% ones; many seeds give all zeros
    _, T = generate_ground_truth("tt", 10, 4, 2, seed=4)
    assert 0 < T.count() < T.size
    assert T.size == 4**10
    net = decompose(T, "ttr", 2, Solver("sa", seed=1))
    rate = error_rate(T, contract(net))
    print(f"million-element smoke: error rate {rate:.6f}")

"""The ten acceptance criteria, at their stated tolerances and time limits.

Each test records a one-line verdict that is printed in the pytest terminal
summary (and directly when this file is run as a script).
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from tdcd import benchmarks, models, oracles
from tdcd.benchmarks import BENCHMARKS
from tdcd.config import load_config
from tdcd.experiments import run_experiment
from tdcd.metrics import LatencyModel, round_latency
from tdcd.synthetic import generate_synthetic


def verdict(cid, ok, detail):
    ACCEPTANCE[cid] = (bool(ok), detail)
    print(f"criterion {cid:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def data_for(cfg):
    return generate_synthetic(cfg.dataset.synthetic_spec(), cfg.seeds.data)[0]


def test_01_gradient_correctness():
    t = time.perf_counter()
    worst = {}
    for arch in models.ARCHITECTURES:
        for kind in models.LOSS_KINDS:
            worst[(arch, kind)] = oracles.gradient_check(arch, kind, n_probes=100, step=1e-6)
    elapsed = time.perf_counter() - t
    err = max(worst.values())
    verdict(1, err < 1e-5 and elapsed < 10,
            f"gradient check, {len(worst)} pairs x 100 probes: max rel err {err:.2e} (< 1e-5), {elapsed:.2f}s (< 10s)")


def test_02_q1_centralized_equivalence():
    cfg = benchmarks.analytic_quadratic(
        local_steps=1, batch_size=64, rounds=50, **{"dataset.n_samples": 64, "dataset.noise": 0.5}
    )
    assert (cfg.n_silos, cfg.clients, cfg.model.architecture, cfg.loss.kind) == (2, 2, "linear", "squared_error")
    ds = data_for(cfg)
    t = time.perf_counter()
    res = oracles.reduction_check("Q1_centralized", cfg, ds)
    elapsed = time.perf_counter() - t
    verdict(2, res.max_deviation <= 1e-10 and elapsed < 5,
            f"Q=1 vs centralized SGD, N=2 K=2 M=64 R=50: deviation {res.max_deviation:.1e} (<= 1e-10), {elapsed:.2f}s (< 5s)")


def test_03_n1_k1_reductions():
    base = benchmarks.analytic_quadratic(rounds=50, local_steps=5, **{"dataset.n_samples": 64, "dataset.noise": 0.5})
    ds = data_for(base)
    cases = {
        "N1_local_sgd": base.replace(n_silos=1, clients=4, batch_size=16),
        "K1_vfl": base.replace(clients=1, batch_size=16),
        "K1_vfl/mlp": base.replace(clients=1, batch_size=16, **{"model.architecture": "mlp", "model.hidden_width": 4}),
    }
    parts, ok = [], True
    for name, cfg in cases.items():
        t = time.perf_counter()
        res = oracles.reduction_check(name.split("/")[0], cfg, ds)
        elapsed = time.perf_counter() - t
        ok &= res.max_deviation <= 1e-10 and elapsed < 5
        parts.append(f"{name} {res.max_deviation:.1e} in {elapsed:.2f}s")
    verdict(3, ok, "Q=5, R=50 reductions (<= 1e-10, < 5s each): " + "; ".join(parts))


def test_04_determinism(tmp_path):
    same = []
    for name, build in sorted(BENCHMARKS.items()):
        first = run_experiment(build(), tmp_path / name / "a")
        snap = load_config(tmp_path / name / "a" / "config.yaml")
        run_experiment(snap, tmp_path / name / "b")
        assert first.error is None
        for f in ("trace.jsonl", "trace.csv"):
            same.append((tmp_path / name / "a" / f).read_bytes() == (tmp_path / name / "b" / f).read_bytes())
    verdict(4, all(same), f"byte-identical trace files from snapshot re-runs: {sum(same)}/{len(same)} files, "
            f"{len(BENCHMARKS)} benchmark configs")


def test_05_unbiasedness():
    cfg = benchmarks.analytic_quadratic()
    assert (cfg.dataset.n_samples, cfg.batch_size, cfg.n_silos, cfg.clients) == (8, 4, 2, 2)
    problem = oracles.build_problem(cfg, data_for(cfg))
    n_batches = sum(1 for _ in oracles.enumerate_batches(8, 4))
    gen = np.random.default_rng(0)
    worst = 0.0
    for blocks in (problem.init_blocks, *([b + gen.normal(size=b.shape) for b in problem.init_blocks] for _ in range(3))):
        full = oracles._full_gradient(problem, blocks)
        got = oracles.weighted_gradient_expectation(problem, blocks)
        worst = max(worst, max(float(np.max(np.abs(g - f))) for g, f in zip(got, full)))
    verdict(5, worst <= 1e-12 and n_batches == 70,
            f"ID-weighted mean over all {n_batches} batches vs full partial derivative: max abs diff {worst:.1e} (<= 1e-12)")


def test_06_bound_inequality():
    t = time.perf_counter()
    reports = benchmarks.bound_grid(benchmarks.analytic_quadratic(), local_steps=(1, 2, 4),
                                    fractions=(1.0, 0.5, 0.25), seeds=range(5))
    elapsed = time.perf_counter() - t
    held = sum(r.satisfied for r in reports)
    ratio = max(r.lhs / r.rhs for r in reports)
    src = {r.constants["source"] for r in reports}
    verdict(6, held == 9 and elapsed < 30 and src == {"analytic"},
            f"bound on analytic quadratic: {held}/9 (Q, eta) settings satisfied, max lhs/rhs {ratio:.3f}, {elapsed:.1f}s (< 30s)")


def test_07_rate_trend():
    trend = benchmarks.rate_trend(seeds=range(5))
    verdict(7, -0.75 <= trend.slope <= -0.25,
            f"eta ~ 1/(Q sqrt R), R={trend.rounds}: mean sq grad {np.round(trend.mean_grad_sq, 4).tolist()}, "
            f"log-log slope {trend.slope:.3f} (in [-0.75, -0.25])")


def test_08_latency_tradeoff():
    t = time.perf_counter()
    base = benchmarks.standard_logistic()
    assert (base.n_silos, base.clients, base.latency.t_comp) == (2, 10, 1.0)
    slow = benchmarks.latency_tradeoff(100.0, 6200.0, base)
    fast = benchmarks.latency_tradeoff(0.0, 200.0, base)
    elapsed = time.perf_counter() - t
    high = slow.clock_to_target[10] < slow.clock_to_target[1]
    low = fast.clock_to_target[1] <= fast.clock_to_target[10]
    verdict(8, high and low and elapsed < 60,
            f"clock-to-target t_comm=100: Q=10 {slow.clock_to_target[10]} < Q=1 {slow.clock_to_target[1]}; "
            f"t_comm=0: Q=1 {fast.clock_to_target[1]} <= Q=10 {fast.clock_to_target[10]}; {elapsed:.1f}s (< 60s)")


LATENCY_TABLE = [
    (5, 10, 1, 35), (10, 100, 1, 310), (1, 0, 0, 0), (1, 100, 1, 301), (25, 100, 1, 325),
    (3, 0.5, 0.25, 2.25), (7, 0, 2, 14), (2, 3, 0, 9), (100, 1, 1, 103), (4, 2.5, 1.5, 13.5),
]


def test_09_latency_formula():
    bad = [row for row in LATENCY_TABLE if round_latency(row[0], LatencyModel(row[1], row[2])) != row[3]]
    verdict(9, not bad and len(LATENCY_TABLE) == 10,
            f"round latency 3 t_comm + Q t_comp exact on {len(LATENCY_TABLE) - len(bad)}/10 triples")


def test_10_n_degradation():
    means = benchmarks.n_degradation_trend(silos=(2, 4, 8), seeds=range(5))
    vals = [means[n] for n in (2, 4, 8)]
    verdict(10, all(a <= b for a, b in zip(vals, vals[1:])),
            "final loss at fixed clock, N=2,4,8 (5 seeds): " + ", ".join(f"{v:.4f}" for v in vals) + " (nondecreasing)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

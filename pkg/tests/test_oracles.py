import json
import math

import numpy as np
import pytest

from conftest import make_config
from tdcd import oracles
from tdcd.benchmarks import analytic_quadratic
from tdcd.errors import ConfigError
from tdcd.oracles import BoundConstants, ProbeConfig
from tdcd.protocol import run_training
from tdcd.synthetic import generate_synthetic


def data_for(cfg):
    return generate_synthetic(cfg.dataset.synthetic_spec(), cfg.seeds.data)[0]


def reduction_base(**kw):
    return make_config(
        rounds=20, **{"dataset.n_samples": 64, "dataset.n_features": 4, "dataset.noise": 0.5, **kw}
    )


@pytest.mark.parametrize(
    "kind,overrides",
    [
        ("Q1_centralized", dict(local_steps=1, clients=1, batch_size=8)),
        ("Q1_centralized", dict(local_steps=1, clients=2, batch_size=64)),
        ("N1_local_sgd", dict(n_silos=1, clients=4, local_steps=5, batch_size=16)),
        ("N1_local_sgd", dict(n_silos=1, clients=3, local_steps=2, batch_size=10)),
        ("K1_vfl", dict(clients=1, local_steps=5, batch_size=16)),
        ("K1_vfl", dict(n_silos=3, clients=1, local_steps=3, batch_size=5,
                        **{"model.architecture": "mlp", "model.hidden_width": 3})),
    ],
)
def test_reductions(kind, overrides):
    cfg = reduction_base(**overrides)
    res = oracles.reduction_check(kind, cfg, data_for(cfg))
    assert res.passed, res


def test_reduction_detects_a_wrong_engine(monkeypatch):
    # perturb the engine's averaging; the N=1 oracle must notice
    from tdcd import protocol
    real = protocol._mean_blocks
    monkeypatch.setattr(protocol, "_mean_blocks", lambda blocks: real(blocks) * (1 + 1e-6))
    cfg = reduction_base(n_silos=1, clients=4, local_steps=5, batch_size=16)
    assert not oracles.reduction_check("N1_local_sgd", cfg, data_for(cfg)).passed


@pytest.mark.parametrize(
    "kind,overrides",
    [
        ("N1_local_sgd", dict()),
        ("K1_vfl", dict(clients=2)),
        ("Q1_centralized", dict(local_steps=2, clients=1)),
        ("Q1_centralized", dict(local_steps=1, clients=2, batch_size=8)),
        ("bogus", dict()),
    ],
)
def test_reduction_preconditions(kind, overrides):
    cfg = reduction_base(**overrides)
    with pytest.raises(ConfigError):
        oracles.reduction_check(kind, cfg, data_for(cfg))


@pytest.mark.parametrize("arch,kind", [("linear", "squared_error"), ("mlp", "binary_cross_entropy_with_logit")])
def test_unbiasedness_at_round_start(arch, kind):
    cfg = analytic_quadratic(**{"model.architecture": arch, "model.hidden_width": 3, "loss.kind": kind,
                                "dataset.task": "logistic" if "entropy" in kind else "least_squares"})
    ds = data_for(cfg)
    problem = oracles.build_problem(cfg, ds)
    gen = np.random.default_rng(0)
    for blocks in (problem.init_blocks, [b + gen.normal(size=b.shape) for b in problem.init_blocks]):
        expected = oracles._full_gradient(problem, blocks)
        got = oracles.weighted_gradient_expectation(problem, blocks)
        for g, e in zip(got, expected):
            np.testing.assert_allclose(g, e, rtol=0, atol=1e-12)
    assert sum(1 for _ in oracles.enumerate_batches(8, 4)) == 70


def test_sigma_zero_for_full_batch_single_client():
    cfg = analytic_quadratic(clients=1, batch_size=8)
    problem = oracles.build_problem(cfg, data_for(cfg))
    k = oracles.estimate_constants(problem)
    assert max(k.sigma_sq) < 1e-25


def test_quadratic_fast_path_matches_generic(monkeypatch):
    cfg = analytic_quadratic()
    problem = oracles.build_problem(cfg, data_for(cfg))
    its = oracles._probe_iterates(problem, ProbeConfig())
    batches, _ = oracles._batches(problem, 5000, 10, 0)
    fast = oracles.sigma_squared(problem, its, batches)
    monkeypatch.setattr(oracles, "_is_quadratic", lambda p: False)
    slow = oracles.sigma_squared(problem, its, batches)
    np.testing.assert_allclose(fast, slow, rtol=1e-10)


def test_sampled_constants_below_analytic():
    cfg = analytic_quadratic()
    problem = oracles.build_problem(cfg, data_for(cfg))
    exact = oracles.estimate_constants(problem)
    est = oracles.estimate_constants(problem, analytic=False)
    assert exact.source == "analytic" and est.source == "estimated"
    assert est.lipschitz <= exact.lipschitz * (1 + 1e-9)
    assert est.lipschitz_max <= exact.lipschitz_max * (1 + 1e-9)
    assert est.lipschitz > 0.3 * exact.lipschitz


def test_per_sample_bound_dominates_exhaustive():
    cfg = analytic_quadratic()
    problem = oracles.build_problem(cfg, data_for(cfg))
    exact = oracles.estimate_constants(problem)
    bound = oracles.estimate_constants(problem, ProbeConfig(max_enumerated=0, n_sampled_batches=8))
    assert bound.lipschitz_max >= exact.lipschitz_max


def test_power_iteration_matches_eigvalsh():
    gen = np.random.default_rng(3)
    a = gen.normal(size=(7, 7))
    sym = a @ a.T
    assert oracles.power_iteration(sym) == pytest.approx(np.linalg.eigvalsh(sym)[-1], rel=1e-9)
    assert oracles.power_iteration(np.zeros((3, 3))) == 0.0


def test_analytic_lipschitz_matches_gram():
    cfg = analytic_quadratic()
    train, _, meta = generate_synthetic(cfg.dataset.synthetic_spec(), cfg.seeds.data)
    k = oracles.estimate_constants(oracles.build_problem(cfg, train))
    assert k.lipschitz == pytest.approx(meta.lipschitz, rel=1e-9)


def test_bound_rhs_formula_and_linear_in_n():
    sigma = 0.7
    eta, q, lip, lm = 0.01, 3, 2.0, 5.0
    per_silo = 4 * (eta * lip * q + 4 * eta**2 * q**2 * lm**2 + 8 * eta**3 * q**3 * lip * lm**2) * sigma
    for n in (1, 2, 4, 8):
        k = BoundConstants(lip, lm, [sigma] * n, "analytic")
        rhs, var = oracles.bound_rhs(k, eta, q, rounds=10, initial_loss=1.0, final_loss=1.0)
        assert rhs == pytest.approx(n * per_silo, rel=1e-12) and var == rhs
    k = BoundConstants(lip, lm, [0.0], "analytic")
    rhs, _ = oracles.bound_rhs(k, eta, q, rounds=10, initial_loss=3.0, final_loss=1.0)
    assert rhs == pytest.approx(4 * 2.0 / (eta * q * 10))
    assert oracles.eta_max(k, q) == 1 / (8 * q * lm)
    assert oracles.eta_max(BoundConstants(0, 0, [], "x"), q) == math.inf


def test_bound_report_fields():
    cfg = analytic_quadratic(rounds=10)
    ds = data_for(cfg)
    tr = run_training(cfg, ds)
    k = BoundConstants(2.0, 3.0, [0.1, 0.2], "analytic")
    rep = oracles.theorem1_bound(tr, k, cfg.lr, cfg.local_steps)
    assert rep.lhs == pytest.approx(np.mean(tr.round_start_grad_sq_norms()))
    assert rep.rounds == 10 and rep.initial_loss == tr.initial_loss and rep.final_loss == tr.final_loss
    assert json.loads(rep.to_json())["constants"]["sigma_sq"] == [0.1, 0.2]
    with pytest.raises(ValueError):
        oracles.theorem1_bound(run_training(cfg.replace(rounds=0), ds), k, cfg.lr, 1)


def test_bound_holds_on_analytic_quadratic():
    cfg = analytic_quadratic(local_steps=2)
    ds = data_for(cfg)
    k = oracles.estimate_constants(oracles.build_problem(cfg, ds))
    rep = oracles.run_bound_check(cfg.replace(lr=oracles.eta_max(k, 2)), ds, seeds=range(3))
    assert rep.admissible and rep.satisfied


def test_gradient_check_flags_a_wrong_gradient(monkeypatch):
    from tdcd import models
    real = models.partial_gradient
    monkeypatch.setattr(models, "partial_gradient", lambda *a: real(*a) * 1.001)
    assert oracles.gradient_check("linear", "squared_error", n_probes=5) > 1e-5

"""Standard synthetic benchmarks and the trend studies run on them.

Each builder returns a complete :class:`SimConfig`; keyword overrides use the
same dotted keys as :meth:`SimConfig.replace`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import oracles
from .config import SimConfig
from .metrics import clock_to_target, loss_at_fraction, round_latency
from .protocol import run_training
from .synthetic import generate_synthetic


def _build(base: dict, overrides: dict) -> SimConfig:
    cfg = SimConfig.from_dict(base)
    return cfg.replace(**overrides) if overrides else cfg


def analytic_quadratic(**overrides) -> SimConfig:
    """Tiny least-squares problem small enough to enumerate every mini-batch."""
    return _build(
        dict(
            n_silos=2, clients=2, local_steps=1, lr=0.05, batch_size=4, rounds=50,
            seeds=dict(data=0, init=1, batch=2),
            dataset=dict(n_samples=8, n_features=4),
        ),
        overrides,
    )


def standard_quadratic(**overrides) -> SimConfig:
    """Noisy, mildly ill-conditioned least squares used for the rate study."""
    return _build(
        dict(
            n_silos=2, clients=2, local_steps=4, lr=0.25 / (4 * 8), batch_size=8, rounds=64,
            seeds=dict(data=0, init=1, batch=2),
            dataset=dict(n_samples=64, n_features=8, noise=0.5, condition=4.0),
        ),
        overrides,
    )


def standard_logistic(**overrides) -> SimConfig:
    """Binary logistic regression with ten clients per silo, for latency studies."""
    return _build(
        dict(
            n_silos=2, clients=10, local_steps=10, lr=1.0, batch_size=100, rounds=20,
            seeds=dict(data=0, init=1, batch=2),
            dataset=dict(n_samples=1000, n_features=10, task="logistic", margin=4.0, condition=10.0),
            loss=dict(kind="binary_cross_entropy_with_logit"),
            latency=dict(t_comm=100.0, t_comp=1.0),
        ),
        overrides,
    )


def n_degradation(**overrides) -> SimConfig:
    """Least squares with a fixed feature count split over a varying number of silos."""
    return _build(
        dict(
            n_silos=2, clients=4, local_steps=10, lr=0.1, batch_size=32, rounds=30,
            seeds=dict(data=0, init=0, batch=0),
            dataset=dict(n_samples=256, n_features=16, noise=0.5, condition=10.0),
            latency=dict(t_comm=10.0, t_comp=1.0),
        ),
        overrides,
    )


BENCHMARKS = {
    "analytic_quadratic": analytic_quadratic,
    "standard_quadratic": standard_quadratic,
    "standard_logistic": standard_logistic,
    "n_degradation": n_degradation,
}


def _dataset(config: SimConfig):
    return generate_synthetic(config.dataset.synthetic_spec(), config.seeds.data)[0]


# --- trend studies -----------------------------------------------------------


@dataclass
class RateTrend:
    rounds: list[int]
    mean_grad_sq: list[float]
    slope: float


def rate_trend(base: SimConfig | None = None, rounds: Sequence[int] = (16, 64, 256),
               seeds: Sequence[int] = range(5), scale: float = 0.25) -> RateTrend:
    """Average round-start squared gradient norm with ``eta = scale / (Q sqrt(R))``,
    averaged over batch seeds, and its log-log slope against ``R``."""
    base = base or standard_quadratic()
    data = _dataset(base)
    q = base.local_steps
    means = []
    for r in rounds:
        eta = scale / (q * math.sqrt(r))
        vals = []
        for s in seeds:
            tr = run_training(base.replace(rounds=r, lr=eta, **{"seeds.batch": s}), data)
            vals.append(np.mean(tr.round_start_grad_sq_norms()))
        means.append(float(np.mean(vals)))
    slope = float(np.polyfit(np.log(rounds), np.log(means), 1)[0])
    return RateTrend(list(rounds), means, slope)


@dataclass
class LatencyTrend:
    t_comm: float
    budget: float
    target: float
    clock_to_target: dict[int, float]
    final_loss: dict[int, float]


def latency_tradeoff(t_comm: float, budget: float, base: SimConfig | None = None,
                     local_steps: Sequence[int] = (1, 10)) -> LatencyTrend:
    """Train each ``Q`` for as many rounds as fit into ``budget`` clock units and
    report the clock at which each first reaches a common target loss.

    The target is the loss the best run (lowest final loss) had reached by 80%
    of the budget.
    """
    base = base or standard_logistic()
    data = _dataset(base)
    curves, finals = {}, {}
    for q in local_steps:
        cfg = base.replace(local_steps=q, **{"latency.t_comm": t_comm})
        rounds = int(budget // round_latency(q, cfg.latency))
        tr = run_training(cfg.replace(rounds=rounds), data)
        curves[q] = tr.boundary_losses()
        finals[q] = tr.final_loss
    best = min(local_steps, key=lambda q: finals[q])
    target = loss_at_fraction(curves[best], budget)
    return LatencyTrend(t_comm, budget, target, {q: clock_to_target(curves[q], target) for q in local_steps}, finals)


def n_degradation_trend(base: SimConfig | None = None, silos: Sequence[int] = (2, 4, 8),
                        seeds: Sequence[int] = range(5)) -> dict[int, float]:
    """Mean final training loss per silo count after the same clock budget.

    Seed ``s`` is used for data, initialization and batches alike.
    """
    base = base or n_degradation()
    out = {}
    for n in silos:
        losses = []
        for s in seeds:
            cfg = base.replace(n_silos=n, seeds={"data": s, "init": s, "batch": s})
            losses.append(run_training(cfg, _dataset(cfg)).final_loss)
        out[n] = float(np.mean(losses))
    return out


def bound_grid(base: SimConfig | None = None, local_steps: Sequence[int] = (1, 2, 4),
               fractions: Sequence[float] = (1.0, 0.5, 0.25), seeds: Sequence[int] = range(5)):
    """Convergence-bound reports for each ``(Q, eta_max * fraction)``."""
    base = base or analytic_quadratic()
    data = _dataset(base)
    constants = oracles.estimate_constants(oracles.build_problem(base, data))
    reports = []
    for q in local_steps:
        for f in fractions:
            eta = f * oracles.eta_max(constants, q)
            reports.append(oracles.run_bound_check(base.replace(local_steps=q, lr=eta), data, seeds))
    return reports

"""Reference implementations and convergence-bound checks.

The reference loops here are written directly against the model functions
and the data-plane helpers; they share no orchestration code with
:mod:`tdcd.protocol`, so agreement between the two is evidence that the
protocol engine implements the update rule it claims to.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import models, rng
from .config import SimConfig
from .data import Dataset, equal_silo_dims, sample_minibatch, shard_horizontal, split_vertical
from .errors import ConfigError, DivergenceError
from .models import LossSpec, SiloModelSpec
from .protocol import Federation, TrainingTrace, run_training

REDUCTION_KINDS = ("N1_local_sgd", "K1_vfl", "Q1_centralized")


# --- shared setup ---------------------------------------------------------


@dataclass
class Problem:
    """Everything a reference loop needs, built from a config without the engine."""

    specs: list[SiloModelSpec]
    silo_rows: list[np.ndarray]
    labels: np.ndarray
    loss: LossSpec
    init_blocks: list[np.ndarray]
    shards: list[list[np.ndarray]]  # owned IDs per silo, per client
    batch_seed: int
    batch_size: int
    local_steps: int
    lr: float

    @property
    def n_samples(self) -> int:
        return len(self.labels)

    def batch(self, t0: int) -> np.ndarray:
        return sample_minibatch(self.batch_seed, t0, self.batch_size, self.n_samples).ids


def build_problem(config: SimConfig, dataset: Dataset) -> Problem:
    d = dataset.n_features
    if config.model.silo_columns is not None:
        parts = split_vertical(d, [], columns=config.model.silo_columns)
    else:
        parts = split_vertical(d, config.model.silo_dims or equal_silo_dims(d, config.n_silos))
    e = config.embedding_dim
    specs = [
        SiloModelSpec(j, len(p.columns), e, a, config.model.hidden_width if a == "mlp" else 0)
        for j, (p, a) in enumerate(zip(parts, config.architectures))
    ]
    shards = [
        [s.owned_ids for s in shard_horizontal(dataset.labels, j, k, config.seeds.data)]
        for j, k in enumerate(config.clients_per_silo)
    ]
    return Problem(
        specs=specs,
        silo_rows=[p.slice(dataset.features) for p in parts],
        labels=dataset.labels,
        loss=LossSpec(config.loss.kind, config.loss.label_arity),
        init_blocks=[models.init_block(s, config.seeds.init) for s in specs],
        shards=shards,
        batch_seed=config.seeds.batch,
        batch_size=config.batch_size,
        local_steps=config.local_steps,
        lr=config.lr,
    )


def _ordered_intersection(batch: np.ndarray, owned: np.ndarray) -> np.ndarray:
    owned_set = set(owned.tolist())
    return np.array([i for i in batch.tolist() if i in owned_set], dtype=np.int64)


def _check_finite(blocks, t):
    if not all(np.all(np.isfinite(b)) for b in blocks):
        raise DivergenceError(None, None, t)


# --- reference trajectories -----------------------------------------------


def centralized_sgd_reference(problem: Problem, rounds: int) -> list[np.ndarray]:
    """Plain mini-batch SGD on the full model, one step per batch.

    The batch for step ``t`` is the one the protocol would draw at ``t0 = t * Q``
    with ``Q = problem.local_steps``. Returns the parameter vector at every
    step, starting from the initialisation.
    """
    blocks = [b.copy() for b in problem.init_blocks]
    path = [np.concatenate(blocks)]
    for t in range(rounds):
        ids = problem.batch(t * problem.local_steps)
        rows = [x[ids] for x in problem.silo_rows]
        grads = models.objective_gradient(problem.specs, blocks, rows, problem.labels[ids], problem.loss)
        blocks = [b - problem.lr * g for b, g in zip(blocks, grads)]
        _check_finite(blocks, t)
        path.append(np.concatenate(blocks))
    return path


def local_sgd_reference(problem: Problem, rounds: int) -> list[np.ndarray]:
    """Single-silo local SGD with periodic averaging (horizontal FL).

    Each client runs ``Q`` steps on its slice of the shared batch, then the
    models are averaged. Returns the averaged model after every round.
    """
    if len(problem.specs) != 1:
        raise ConfigError("local SGD reference needs exactly one silo")
    spec, x, y = problem.specs[0], problem.silo_rows[0], problem.labels
    theta = problem.init_blocks[0].copy()
    path = [theta.copy()]
    for r in range(rounds):
        ids = problem.batch(r * problem.local_steps)
        locals_ = []
        for owned in problem.shards[0]:
            mine = _ordered_intersection(ids, owned)
            w = theta.copy()
            for step in range(problem.local_steps):
                if len(mine) == 0:
                    break
                (g,) = models.objective_gradient([spec], [w], [x[mine]], y[mine], problem.loss)
                w = w - problem.lr * g
            _check_finite([w], r * problem.local_steps)
            locals_.append(w)
        theta = sum(locals_[1:], locals_[0].copy()) / len(locals_)
        path.append(theta.copy())
    return path


def single_tier_vfl_reference(problem: Problem, rounds: int) -> list[np.ndarray]:
    """One party per silo: exchange embeddings once, then ``Q`` local steps
    against the frozen embeddings of the other parties."""
    if any(len(s) != 1 for s in problem.shards):
        raise ConfigError("single-tier VFL reference needs one client per silo")
    blocks = [b.copy() for b in problem.init_blocks]
    path = [np.concatenate(blocks)]
    n = len(blocks)
    for r in range(rounds):
        ids = problem.batch(r * problem.local_steps)
        y = problem.labels[ids]
        rows = [x[ids] for x in problem.silo_rows]
        frozen = [models.embed(s, b, xr) for s, b, xr in zip(problem.specs, blocks, rows)]
        new_blocks = []
        for j in range(n):
            others = sum((frozen[l] for l in range(n) if l != j), np.zeros_like(frozen[j]))
            w = blocks[j].copy()
            for _ in range(problem.local_steps):
                z = models.embed(problem.specs[j], w, rows[j]) + others
                dz = models.loss_grad_wrt_sum(z, y, problem.loss) / len(ids)
                w = w - problem.lr * models.backprop(problem.specs[j], w, rows[j], dz)
            new_blocks.append(w)
        blocks = new_blocks
        _check_finite(blocks, r * problem.local_steps)
        path.append(np.concatenate(blocks))
    return path


def protocol_trajectory(config: SimConfig, dataset: Dataset) -> list[np.ndarray]:
    """Hub parameters at every round boundary, initialisation first."""
    fed = Federation(config, dataset)
    path = [np.concatenate([h.block for h in fed.hubs])]
    for r in range(config.rounds):
        fed.run_round(r)
        path.append(np.concatenate([h.block for h in fed.hubs]))
    return path


def max_relative_deviation(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> float:
    if len(a) != len(b):
        raise ValueError(f"trajectories differ in length: {len(a)} vs {len(b)}")
    worst = 0.0
    for x, ref in zip(a, b):
        scale = max(float(np.linalg.norm(ref)), np.finfo(float).tiny)
        worst = max(worst, float(np.linalg.norm(x - ref)) / scale)
    return worst


@dataclass
class ReductionResult:
    kind: str
    passed: bool
    max_deviation: float
    tolerance: float
    rounds: int


def reduction_check(kind: str, config: SimConfig, dataset: Dataset, tolerance: float = 1e-10) -> ReductionResult:
    """Run the protocol on a degenerate topology against its classical counterpart."""
    if kind not in REDUCTION_KINDS:
        raise ConfigError(f"unknown reduction {kind!r}; expected one of {REDUCTION_KINDS}")
    problem = build_problem(config, dataset)
    ks = config.clients_per_silo
    if kind == "N1_local_sgd":
        if config.n_silos != 1:
            raise ConfigError("N1_local_sgd needs n_silos = 1")
        ref = local_sgd_reference(problem, config.rounds)
    elif kind == "K1_vfl":
        if any(k != 1 for k in ks):
            raise ConfigError("K1_vfl needs one client per silo")
        ref = single_tier_vfl_reference(problem, config.rounds)
    else:
        if config.local_steps != 1:
            raise ConfigError("Q1_centralized needs local_steps = 1")
        # hubs weight clients equally, so exactness needs equal batch slices:
        # one client per silo, or a full batch over equal shards
        if any(k > 1 for k in ks):
            m = dataset.n_samples
            if config.batch_size != m or any(m % k for k in ks):
                raise ConfigError(
                    "Q1_centralized with several clients per silo needs batch_size = M and equal shards"
                )
        ref = centralized_sgd_reference(problem, config.rounds)
    got = protocol_trajectory(config, dataset)
    dev = max_relative_deviation(got, ref)
    return ReductionResult(kind, dev <= tolerance, dev, tolerance, config.rounds)


# --- stochastic gradients over enumerated batches ---------------------------


def client_gradients(problem: Problem, blocks: Sequence[np.ndarray], batch: np.ndarray):
    """Round-start ``g_{k,j}`` for every client, with fresh cross-silo embeddings.

    Returns ``{(j, k): (n_kj, gradient)}``; clients with no rows in the batch
    get a zero gradient.
    """
    rows = [x[batch] for x in problem.silo_rows]
    embs = [models.embed(s, b, r) for s, b, r in zip(problem.specs, blocks, rows)]
    total = embs[0]
    for e in embs[1:]:
        total = total + e
    y = problem.labels[batch]
    out = {}
    for j, shards in enumerate(problem.shards):
        others = total - embs[j]
        for k, owned in enumerate(shards):
            mask = np.isin(batch, owned)
            n = int(mask.sum())
            if n == 0:
                out[(j, k)] = (0, np.zeros_like(blocks[j]))
                continue
            g = models.partial_gradient(problem.specs[j], blocks[j], rows[j][mask], others[mask], y[mask], problem.loss)
            out[(j, k)] = (n, g)
    return out


def enumerate_batches(n_samples: int, batch_size: int) -> Iterable[np.ndarray]:
    for combo in itertools.combinations(range(n_samples), batch_size):
        yield np.array(combo, dtype=np.int64)


def _batches(problem: Problem, max_enumerated: int, n_sampled: int, seed: int) -> tuple[list[np.ndarray], bool]:
    if math.comb(problem.n_samples, problem.batch_size) <= max_enumerated:
        return list(enumerate_batches(problem.n_samples, problem.batch_size)), True
    return [
        sample_minibatch(seed, i, problem.batch_size, problem.n_samples).ids for i in range(n_sampled)
    ], False


def weighted_gradient_expectation(problem: Problem, blocks: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Average over every size-B batch of ``sum_k |zeta_kj| g_kj / B``, per silo."""
    acc = [np.zeros_like(b) for b in blocks]
    count = 0
    for batch in enumerate_batches(problem.n_samples, problem.batch_size):
        grads = client_gradients(problem, blocks, batch)
        for (j, _k), (n, g) in grads.items():
            acc[j] += n * g
        count += 1
    return [a / (count * problem.batch_size) for a in acc]


# --- smoothness and variance constants --------------------------------------


@dataclass
class BoundConstants:
    lipschitz: float
    lipschitz_max: float
    sigma_sq: list[float]
    source: str  # "analytic" or "estimated"

    @property
    def smoothness(self) -> float:
        return max(self.lipschitz, self.lipschitz_max)


@dataclass
class ProbeConfig:
    n_pairs: int = 64
    radius: float = 0.5
    n_iterates: int = 5
    seed: int = 0
    max_enumerated: int = 5000
    n_sampled_batches: int = 256


def power_iteration(matrix: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric positive semi-definite matrix."""
    v = rng.generator(seed, "power").standard_normal(matrix.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new = float(v @ matrix @ v)
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            return new
        lam = new
    return lam


def _is_quadratic(problem: Problem) -> bool:
    return problem.loss.kind == "squared_error" and all(s.architecture == "linear" for s in problem.specs)


def _probe_iterates(problem: Problem, probe: ProbeConfig) -> list[list[np.ndarray]]:
    gen = rng.generator(probe.seed, "probe-iterates")
    out = [[b.copy() for b in problem.init_blocks]]
    for _ in range(probe.n_iterates - 1):
        out.append([b + probe.radius * gen.standard_normal(b.shape) for b in problem.init_blocks])
    return out


def _full_gradient(problem: Problem, blocks) -> list[np.ndarray]:
    return models.objective_gradient(problem.specs, blocks, problem.silo_rows, problem.labels, problem.loss)


def sigma_squared(problem: Problem, iterates, batches: list[np.ndarray]) -> list[float]:
    """Per-silo max over clients and iterates of E_batch ||g_kj - grad_j L||^2."""
    if _is_quadratic(problem):
        return _sigma_squared_quadratic(problem, iterates, batches)
    n_silos = len(problem.specs)
    sig = [0.0] * n_silos
    for blocks in iterates:
        full = _full_gradient(problem, blocks)
        acc = {}
        for batch in batches:
            for (j, k), (_n, g) in client_gradients(problem, blocks, batch).items():
                diff = g - full[j]
                acc[(j, k)] = acc.get((j, k), 0.0) + float(diff @ diff)
        for (j, _k), total in acc.items():
            sig[j] = max(sig[j], total / len(batches))
    return sig


def _sigma_squared_quadratic(problem: Problem, iterates, batches) -> list[float]:
    # g_kj - grad_j L is affine in the stacked weights W (D x E): C W - c
    x = np.concatenate(problem.silo_rows, axis=1)
    m, e = x.shape[0], problem.specs[0].embedding_dim
    y = np.asarray(problem.labels, dtype=np.float64).reshape(m, -1)
    edges = np.cumsum([0] + [s.input_dim for s in problem.specs])
    weights = np.stack(
        [np.concatenate([b.reshape(s.input_dim, e) for s, b in zip(problem.specs, blocks)]) for blocks in iterates]
    )  # (n_iterates, D, E)
    sig = []
    for j, shards in enumerate(problem.shards):
        xj = x[:, edges[j] : edges[j + 1]]
        a_full = (2.0 / m) * xj.T @ x
        b_full = (2.0 / m) * xj.T @ y
        worst = np.zeros(len(iterates))
        for owned in shards:
            acc = np.zeros(len(iterates))
            for batch in batches:
                sub = batch[np.isin(batch, owned)]
                if len(sub):
                    a = (2.0 / len(sub)) * xj[sub].T @ x[sub] - a_full
                    b = (2.0 / len(sub)) * xj[sub].T @ y[sub] - b_full
                else:
                    a, b = -a_full, -b_full
                diff = np.einsum("ad,nde->nae", a, weights) - b
                acc += np.sum(diff**2, axis=(1, 2))
            worst = np.maximum(worst, acc / len(batches))
        sig.append(float(worst.max()))
    return sig


def estimate_constants(
    problem: Problem,
    probe: ProbeConfig | None = None,
    iterates: Sequence[Sequence[np.ndarray]] | None = None,
    analytic: bool = True,
) -> BoundConstants:
    """Smoothness constants and per-silo gradient variance.

    For linear models with squared error (and ``analytic=True``) the smoothness
    constants are exact: ``L`` is the top eigenvalue of ``(2/M) X^T X`` and each
    ``L_kj`` is the largest spectral norm of ``(2/|S|) X_{S,j}^T X_S`` over the
    client slices ``S`` that can occur (exhaustively when the batches can be
    enumerated, otherwise bounded per sample). Otherwise both are sampled
    difference quotients and therefore lower bounds.

    ``sigma_sq`` is always evaluated at ``iterates`` (default: the
    initialisation plus random perturbations of it), over every batch when
    enumerable and over sampled batches otherwise.
    """
    probe = probe or ProbeConfig()
    batches, exhaustive = _batches(problem, probe.max_enumerated, probe.n_sampled_batches, probe.seed)
    probes = [list(b) for b in iterates] if iterates is not None else _probe_iterates(problem, probe)
    sig = sigma_squared(problem, probes, batches)

    if analytic and _is_quadratic(problem):
        x = np.concatenate(problem.silo_rows, axis=1)
        m = x.shape[0]
        lip = power_iteration((2.0 / m) * (x.T @ x))
        lmax = _analytic_block_lipschitz(problem, x, batches, exhaustive)
        return BoundConstants(lip, lmax, sig, "analytic")

    lip, lmax = _sampled_lipschitz(problem, probes, batches, probe)
    return BoundConstants(lip, lmax, sig, "estimated")


def _analytic_block_lipschitz(problem: Problem, x: np.ndarray, batches, exhaustive: bool) -> float:
    edges = np.cumsum([0] + [s.input_dim for s in problem.specs])
    if not exhaustive:
        # ||mean_p 2 x_pj x_p^T|| <= max_p 2 ||x_pj|| ||x_p||
        best = 0.0
        norms = np.linalg.norm(x, axis=1)
        for j in range(len(problem.specs)):
            nj = np.linalg.norm(x[:, edges[j] : edges[j + 1]], axis=1)
            best = max(best, float(np.max(2.0 * nj * norms)))
        return best
    seen = set()
    best = 0.0
    for batch in batches:
        for j, shards in enumerate(problem.shards):
            for owned in shards:
                sub = tuple(sorted(set(batch.tolist()) & set(owned.tolist())))
                if not sub or (j, sub) in seen:
                    continue
                seen.add((j, sub))
                xs = x[list(sub)]
                block = (2.0 / len(sub)) * (xs[:, edges[j] : edges[j + 1]].T @ xs)
                best = max(best, float(np.linalg.norm(block, 2)))
    return best


def _sampled_lipschitz(problem: Problem, probes, batches, probe: ProbeConfig) -> tuple[float, float]:
    gen = rng.generator(probe.seed, "probe-pairs")
    lip = lmax = 0.0
    for i in range(probe.n_pairs):
        base = probes[i % len(probes)]
        a = [b + probe.radius * gen.standard_normal(b.shape) for b in base]
        direction = [gen.standard_normal(b.shape) for b in base]
        scale = probe.radius / np.sqrt(sum(float(d @ d) for d in direction))
        b2 = [p + scale * d for p, d in zip(a, direction)]
        dist = probe.radius
        ga, gb = _full_gradient(problem, a), _full_gradient(problem, b2)
        diff = np.sqrt(sum(float((u - v) @ (u - v)) for u, v in zip(ga, gb)))
        lip = max(lip, diff / dist)
        batch = batches[int(gen.integers(len(batches)))]
        ca, cb = client_gradients(problem, a, batch), client_gradients(problem, b2, batch)
        for key in ca:
            d = ca[key][1] - cb[key][1]
            lmax = max(lmax, float(np.linalg.norm(d)) / dist)
    return lip, lmax


# --- gradient check -----------------------------------------------------------


def finite_difference_gradient(
    spec: SiloModelSpec, block, own_rows, other_sum, labels, loss: LossSpec, step: float = 1e-6
) -> np.ndarray:
    """Central differences of the composite loss with respect to one block."""
    grad = np.empty_like(block)
    for i in range(block.shape[0]):
        up, down = block.copy(), block.copy()
        up[i] += step
        down[i] -= step
        f_up = models.composite_loss(models.embed(spec, up, own_rows) + other_sum, labels, loss)
        f_down = models.composite_loss(models.embed(spec, down, own_rows) + other_sum, labels, loss)
        grad[i] = (f_up - f_down) / (2 * step)
    return grad


def random_probe(architecture: str, loss_kind: str, seed: int, index: int):
    """A random (spec, block, rows, other_sum, labels, loss) tuple for gradient checks."""
    gen = rng.generator(seed, "gradcheck", index)
    n = int(gen.integers(1, 9))
    d = int(gen.integers(1, 6))
    e = int(gen.integers(2, 5)) if loss_kind == "softmax_cross_entropy" else 1
    if loss_kind == "squared_error":
        e = int(gen.integers(1, 4))
    width = int(gen.integers(1, 6)) if architecture == "mlp" else 0
    spec = SiloModelSpec(0, d, e, architecture, width)
    loss = LossSpec(loss_kind, e)
    block = gen.normal(size=spec.n_params)
    rows = gen.normal(size=(n, d))
    other = gen.normal(size=(n, e))
    if loss_kind == "squared_error":
        labels = gen.normal(size=(n, e)) if e > 1 else gen.normal(size=n)
    elif loss_kind == "binary_cross_entropy_with_logit":
        labels = gen.integers(0, 2, size=n).astype(np.float64)
    else:
        labels = gen.integers(0, e, size=n).astype(np.float64)
    return spec, block, rows, other, labels, loss


def gradient_check(architecture: str, loss_kind: str, n_probes: int = 100, seed: int = 0,
                   step: float = 1e-6) -> float:
    """Largest relative error (in 2-norm) between the analytic and the
    finite-difference gradient over ``n_probes`` random probes."""
    worst = 0.0
    for i in range(n_probes):
        spec, block, rows, other, labels, loss = random_probe(architecture, loss_kind, seed, i)
        g = models.partial_gradient(spec, block, rows, other, labels, loss)
        fd = finite_difference_gradient(spec, block, rows, other, labels, loss, step)
        scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
        worst = max(worst, float(np.linalg.norm(g - fd) / scale))
    return worst


# --- the convergence bound ----------------------------------------------------


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    eta: float
    eta_max: float
    local_steps: int
    rounds: int
    initial_loss: float
    final_loss: float
    variance_term: float
    admissible: bool
    satisfied: bool
    constants: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def eta_max(constants: BoundConstants, local_steps: int) -> float:
    smooth = constants.smoothness
    return math.inf if smooth == 0 else 1.0 / (8 * local_steps * smooth)


def bound_rhs(constants: BoundConstants, eta: float, local_steps: int, rounds: int,
              initial_loss: float, final_loss: float) -> tuple[float, float]:
    """Right-hand side of the convergence bound and its variance part."""
    q, lip, lm = local_steps, constants.lipschitz, constants.lipschitz_max
    variance = 4 * (eta * lip * q + 4 * eta**2 * q**2 * lm**2 + 8 * eta**3 * q**3 * lip * lm**2) * sum(
        constants.sigma_sq
    )
    if eta == 0:
        return math.inf, variance
    return 4 * (initial_loss - final_loss) / (eta * q * rounds) + variance, variance


def theorem1_bound(
    traces: TrainingTrace | Sequence[TrainingTrace],
    constants: BoundConstants,
    eta: float,
    local_steps: int,
) -> BoundReport:
    """Compare the average round-start squared gradient norm with the bound.

    With several traces (independent seeds), both the left-hand side and the
    final loss are averaged across them.
    """
    if isinstance(traces, TrainingTrace):
        traces = [traces]
    if not traces:
        raise ValueError("need at least one trace")
    rounds = len(traces[0].rounds)
    if rounds == 0:
        raise ValueError("the bound needs at least one round (T = QR > 0)")
    for tr in traces:
        if tr.final is None or tr.final.loss is None or len(tr.rounds) != rounds:
            raise ValueError("traces must be complete and of equal length")
        if any(v is None for v in tr.round_start_grad_sq_norms()):
            raise ValueError("trace lacks round-start gradient norms")
    lhs = float(np.mean([np.mean(tr.round_start_grad_sq_norms()) for tr in traces]))
    initial = float(np.mean([tr.initial_loss for tr in traces]))
    final = float(np.mean([tr.final_loss for tr in traces]))
    rhs, variance = bound_rhs(constants, eta, local_steps, rounds, initial, final)
    limit = eta_max(constants, local_steps)
    return BoundReport(
        lhs=lhs,
        rhs=rhs,
        eta=eta,
        eta_max=limit,
        local_steps=local_steps,
        rounds=rounds,
        initial_loss=initial,
        final_loss=final,
        variance_term=variance,
        admissible=0 <= eta <= limit,
        satisfied=lhs <= rhs,
        constants=asdict(constants),
    )


def run_bound_check(config: SimConfig, dataset: Dataset, seeds: Sequence[int],
                    probe: ProbeConfig | None = None) -> BoundReport:
    """Train once per batch seed, then evaluate the bound.

    ``sigma_sq`` is measured at every round-start iterate visited by any of
    the runs.
    """
    traces = []
    for s in seeds:
        cfg = config.replace(**{"seeds.batch": s, "eval.record_iterates": True})
        traces.append(run_training(cfg, dataset))
    problem = build_problem(config, dataset)
    sizes = [s.n_params for s in problem.specs]
    iterates = []
    for tr in traces:
        for rt in tr.rounds:
            iterates.append(np.split(rt.iterates[0], np.cumsum(sizes)[:-1]))
    constants = estimate_constants(problem, probe, iterates=iterates)
    return theorem1_bound(traces, constants, config.lr, config.local_steps)

"""Tiered decentralized coordinate descent: hubs, clients, and rounds.

One communication round:

1. every hub draws the shared mini-batch for this round;
2. hubs push their block and the batch IDs to their clients, which overwrite
   their local block;
3. each client embeds the batch rows it owns and uploads them;
4. each hub assembles its silo's batch embeddings and broadcasts them to every
   other hub, then sums what it receives;
5. each hub sends every client the slice of that sum for the client's rows;
6. clients take ``Q`` local gradient steps on their own block, recomputing
   their own embeddings each step but reusing the cross-silo sum from step 5;
7. hubs replace their block with the mean of their clients' blocks.

Silos and clients are processed in index order so every reduction has a fixed
summation order and traces are bit-reproducible.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import models
from .config import SimConfig
from .data import (
    Dataset,
    EmbeddingBatch,
    HorizontalShard,
    Minibatch,
    client_batch_ids,
    equal_silo_dims,
    project,
    sample_minibatch,
    shard_horizontal,
    split_vertical,
)
from .errors import ConfigError, DivergenceError
from .metrics import round_latency
from .models import LossSpec, SiloModelSpec


class MessageKind(enum.Enum):
    WEIGHTS_DOWN = "weights_down"
    EMBEDDINGS_UP = "embeddings_up"
    HUB_EXCHANGE = "hub_exchange"
    PROJECTED_DOWN = "projected_down"
    WEIGHTS_UP = "weights_up"


@dataclass
class Message:
    kind: MessageKind
    silo: int
    client: int | None  # None for hub-to-hub traffic
    payload: np.ndarray
    ids: np.ndarray | None = None
    dest_silo: int | None = None

    @property
    def scalars(self) -> int:
        """Real-valued payload size; sample-ID lists are not counted."""
        return int(self.payload.size)


@dataclass
class GlobalModel:
    specs: list[SiloModelSpec]
    blocks: list[np.ndarray]
    columns: list[np.ndarray]

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    def silo_rows(self, features: np.ndarray) -> list[np.ndarray]:
        return [np.ascontiguousarray(features[:, c]) for c in self.columns]


@dataclass
class HubState:
    silo: int
    spec: SiloModelSpec
    block: np.ndarray
    columns: np.ndarray
    n_clients: int


@dataclass
class ClientState:
    client: int
    silo: int
    block: np.ndarray
    shard: HorizontalShard
    rows: np.ndarray  # this client's X_{k,j}, aligned with shard.owned_ids
    batch_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    batch_rows: np.ndarray | None = None
    batch_labels: np.ndarray | None = None
    stale_other: EmbeddingBatch | None = None


@dataclass
class IterRecord:
    round: int
    iter: int
    clock: float
    loss: float | None = None
    grad_sq_norm: float | None = None
    msgs_scalars: int = 0

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "iter": self.iter,
            "clock": self.clock,
            "loss": self.loss,
            "grad_sq_norm": self.grad_sq_norm,
            "msgs_scalars": self.msgs_scalars,
        }


TRACE_COLUMNS = ("round", "iter", "clock", "loss", "grad_sq_norm", "msgs_scalars")


@dataclass
class RoundTrace:
    """One round: ``Q`` iteration records plus optional per-iteration iterates.

    ``records[0]`` is the round start. Its ``loss`` and ``grad_sq_norm`` are
    computed on the full training set at the hubs' blocks, and its
    ``msgs_scalars`` is the whole round's traffic.
    """

    round_index: int
    batch: Minibatch
    records: list[IterRecord]
    messages: list[Message]
    # virtual iterates (silo-wise client means) before each local step, and
    # the stacked client-mean gradients G^t; filled when record_iterates is on
    iterates: list[np.ndarray] = field(default_factory=list)
    mean_grads: list[np.ndarray] = field(default_factory=list)

    @property
    def start(self) -> IterRecord:
        return self.records[0]


@dataclass
class TrainingTrace:
    rounds: list[RoundTrace]
    final: IterRecord | None = None
    model: GlobalModel | None = None

    def records(self) -> Iterator[IterRecord]:
        for r in self.rounds:
            yield from r.records
        if self.final is not None:
            yield self.final

    def boundary_losses(self) -> list[tuple[float, float]]:
        """(clock, full training loss) at every round boundary, final state included."""
        points = [(r.start.clock, r.start.loss) for r in self.rounds]
        if self.final is not None:
            points.append((self.final.clock, self.final.loss))
        return points

    @property
    def initial_loss(self) -> float:
        return self.rounds[0].start.loss if self.rounds else self.final.loss

    @property
    def final_loss(self) -> float:
        return self.final.loss

    def round_start_grad_sq_norms(self) -> list[float]:
        return [r.start.grad_sq_norm for r in self.rounds]


StepHook = Callable[[int, "Federation"], None]


class Federation:
    """All hubs and clients of one simulated deployment."""

    def __init__(self, config: SimConfig, dataset: Dataset):
        self.config = config
        self.dataset = dataset
        m, d = dataset.features.shape
        loss_cfg = config.loss
        self.loss = LossSpec(loss_cfg.kind, loss_cfg.label_arity)
        e = config.embedding_dim
        self.loss.check_embedding_dim(e)
        if config.batch_size > m:
            raise ConfigError(f"batch_size {config.batch_size} exceeds dataset size {m}")

        if config.model.silo_columns is not None:
            parts = split_vertical(d, [], columns=config.model.silo_columns)
            if len(parts) != config.n_silos:
                raise ConfigError("model.silo_columns must have one entry per silo")
        else:
            dims = config.model.silo_dims or equal_silo_dims(d, config.n_silos)
            parts = split_vertical(d, dims)

        self.partitions = parts
        self.silo_features = [p.slice(dataset.features) for p in parts]
        self.hubs: list[HubState] = []
        self.clients: list[list[ClientState]] = []
        for j, (part, arch, n_clients) in enumerate(
            zip(parts, config.architectures, config.clients_per_silo)
        ):
            spec = SiloModelSpec(j, len(part.columns), e, arch, config.model.hidden_width if arch == "mlp" else 0)
            hub = HubState(j, spec, models.init_block(spec, config.seeds.init), part.columns, n_clients)
            self.hubs.append(hub)
            shards = shard_horizontal(dataset.labels, j, n_clients, config.seeds.data)
            xj = self.silo_features[j]
            self.clients.append(
                [ClientState(s.client_index, j, hub.block.copy(), s, xj[s.owned_ids]) for s in shards]
            )
        self.specs = [h.spec for h in self.hubs]
        self.clock = 0.0
        self.t_round = round_latency(config.local_steps, config.latency)
        self._check_learning_rate()

    # -- helpers -------------------------------------------------------------

    @property
    def n_silos(self) -> int:
        return len(self.hubs)

    def _check_learning_rate(self) -> None:
        a = self.config.analysis
        if a.lipschitz is None and a.lipschitz_max is None:
            return
        smooth = max(v for v in (a.lipschitz, a.lipschitz_max) if v is not None)
        limit = 1.0 / (8 * self.config.local_steps * smooth) if smooth > 0 else float("inf")
        if self.config.lr > limit:
            warnings.warn(
                f"learning rate {self.config.lr} exceeds 1/(8 Q max(L, L_max)) = {limit:.6g}",
                RuntimeWarning,
                stacklevel=3,
            )

    def global_model(self) -> GlobalModel:
        return GlobalModel(self.specs, [h.block.copy() for h in self.hubs], [h.columns for h in self.hubs])

    def virtual_blocks(self) -> list[np.ndarray]:
        """Silo-wise mean of client blocks (equals the hub blocks at round boundaries)."""
        return [_mean_blocks([c.block for c in cs]) for cs in self.clients]

    def full_loss(self, blocks: Sequence[np.ndarray]) -> float:
        return models.objective(self.specs, blocks, self.silo_features, self.dataset.labels, self.loss)

    def full_grad_sq_norm(self, blocks: Sequence[np.ndarray]) -> float:
        grads = models.objective_gradient(self.specs, blocks, self.silo_features, self.dataset.labels, self.loss)
        return float(sum(np.dot(g, g) for g in grads))

    # -- the round -----------------------------------------------------------

    def run_round(self, round_index: int, on_step: StepHook | None = None) -> RoundTrace:
        cfg = self.config
        q, eta = cfg.local_steps, cfg.lr
        t0 = round_index * q
        m = self.dataset.n_samples
        messages: list[Message] = []

        hub_blocks = [h.block for h in self.hubs]
        start = IterRecord(
            round=round_index,
            iter=t0,
            clock=self.clock,
            loss=self.full_loss(hub_blocks),
            grad_sq_norm=self.full_grad_sq_norm(hub_blocks),
        )

        # every silo draws the batch from the shared seed; they must agree
        batches = [sample_minibatch(cfg.seeds.batch, t0, cfg.batch_size, m) for _ in self.hubs]
        batch = batches[0]
        for b in batches[1:]:
            if not np.array_equal(b.ids, batch.ids):
                raise RuntimeError("silos disagree on the shared mini-batch")

        # hub -> clients: weights and IDs; clients -> hub: own embeddings
        silo_emb: list[np.ndarray] = []
        for hub, clients in zip(self.hubs, self.clients):
            phi_j = np.zeros((len(batch.ids), hub.spec.embedding_dim))
            for c in clients:
                messages.append(Message(MessageKind.WEIGHTS_DOWN, hub.silo, c.client, hub.block.copy(), batch.ids))
                c.block = hub.block.copy()
                c.batch_ids = client_batch_ids(batch, c.shard)
                local = c.shard.local_rows(c.batch_ids)
                c.batch_rows = c.rows[local]
                c.batch_labels = c.shard.labels[local]
                phi_kj = models.embed(hub.spec, c.block, c.batch_rows)
                messages.append(Message(MessageKind.EMBEDDINGS_UP, hub.silo, c.client, phi_kj, c.batch_ids))
                # union of client pieces, laid out in batch order
                phi_j[np.isin(batch.ids, c.batch_ids)] = phi_kj
            silo_emb.append(phi_j)

        # hub all-to-all exchange, summed at the receiver in silo order
        for j in range(self.n_silos):
            for dest in range(self.n_silos):
                if dest != j:
                    messages.append(
                        Message(MessageKind.HUB_EXCHANGE, j, None, silo_emb[j], batch.ids, dest_silo=dest)
                    )
        for j, (hub, clients) in enumerate(zip(self.hubs, self.clients)):
            phi_other = np.zeros_like(silo_emb[j])
            for l in range(self.n_silos):
                if l != j:
                    phi_other = phi_other + silo_emb[l]
            others = EmbeddingBatch(batch.ids, phi_other)
            for c in clients:
                c.stale_other = project(others, c.shard)
                messages.append(
                    Message(MessageKind.PROJECTED_DOWN, j, c.client, c.stale_other.values, c.stale_other.ids)
                )

        trace = RoundTrace(round_index, batch, [start], messages)
        for step in range(q):
            t = t0 + step
            if step > 0:
                rec = IterRecord(round=round_index, iter=t, clock=self.clock)
                if cfg.eval.every_iter:
                    rec.loss = self.full_loss(self.virtual_blocks())
                trace.records.append(rec)
            if cfg.eval.record_iterates:
                trace.iterates.append(np.concatenate(self.virtual_blocks()))
            if on_step is not None:
                on_step(t, self)
            grads = self._local_step(t, eta)
            if cfg.eval.record_iterates:
                trace.mean_grads.append(np.concatenate(grads))

        # clients -> hub: weights, then averaging
        for hub, clients in zip(self.hubs, self.clients):
            for c in clients:
                messages.append(Message(MessageKind.WEIGHTS_UP, hub.silo, c.client, c.block.copy()))
            hub.block = _mean_blocks([c.block for c in clients])

        start.msgs_scalars = sum(msg.scalars for msg in messages)
        self.clock += self.t_round
        return trace

    def _local_step(self, t: int, eta: float) -> list[np.ndarray]:
        """One gradient step at every client; returns per-silo client-mean gradients."""
        mean_grads = []
        for hub, clients in zip(self.hubs, self.clients):
            grads = []
            for c in clients:
                if len(c.batch_ids) == 0:
                    grads.append(np.zeros_like(c.block))
                    continue
                g = models.partial_gradient(
                    hub.spec, c.block, c.batch_rows, c.stale_other.values, c.batch_labels, self.loss
                )
                c.block = c.block - eta * g
                if not np.all(np.isfinite(c.block)):
                    raise DivergenceError(c.client, c.silo, t)
                grads.append(g)
            mean_grads.append(_mean_blocks(grads))
        return mean_grads

    def final_record(self, rounds: int) -> IterRecord:
        blocks = [h.block for h in self.hubs]
        return IterRecord(
            round=rounds,
            iter=rounds * self.config.local_steps,
            clock=self.clock,
            loss=self.full_loss(blocks),
            grad_sq_norm=self.full_grad_sq_norm(blocks),
        )


def _mean_blocks(blocks: Sequence[np.ndarray]) -> np.ndarray:
    total = blocks[0].copy()
    for b in blocks[1:]:
        total = total + b
    return total / len(blocks)


def assemble_global_model(hubs: Sequence[HubState]) -> GlobalModel:
    return GlobalModel([h.spec for h in hubs], [h.block.copy() for h in hubs], [h.columns for h in hubs])


def run_training(
    config: SimConfig,
    dataset: Dataset,
    on_round: Callable[[RoundTrace, Federation], None] | None = None,
    on_step: StepHook | None = None,
) -> TrainingTrace:
    """Run ``config.rounds`` rounds; on divergence the partial trace rides on the error."""
    fed = Federation(config, dataset)
    trace = TrainingTrace(rounds=[])
    try:
        for r in range(config.rounds):
            rt = fed.run_round(r, on_step=on_step)
            trace.rounds.append(rt)
            if on_round is not None:
                on_round(rt, fed)
    except DivergenceError as exc:
        trace.model = fed.global_model()
        exc.trace = trace
        raise
    trace.final = fed.final_record(config.rounds)
    trace.model = fed.global_model()
    return trace

"""Dataset layout: vertical feature split, horizontal sharding, shared batches.

Also holds the two on-disk dataset formats (CSV and a column-major float64
binary file).
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .errors import ConfigError

BINARY_MAGIC = b"TDCDBIN1"
_HEADER = struct.Struct("<8sII")  # 16 bytes: magic, M, D


@dataclass
class Dataset:
    features: np.ndarray  # (M, D) float64
    labels: np.ndarray  # (M,) or (M, E)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ConfigError(f"features must be a non-empty (M, D) matrix, got {self.features.shape}")
        if self.labels.shape[0] != self.features.shape[0]:
            raise ConfigError("labels and features disagree on M")
        if not np.all(np.isfinite(self.features)):
            raise ConfigError("features contain missing or non-finite entries")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def sample_ids(self) -> np.ndarray:
        return np.arange(self.n_samples)


@dataclass(frozen=True)
class VerticalPartition:
    silo_index: int
    columns: np.ndarray

    def slice(self, features: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(features[:, self.columns])


@dataclass(frozen=True)
class HorizontalShard:
    silo_index: int
    client_index: int
    owned_ids: np.ndarray  # ascending
    labels: np.ndarray

    def local_rows(self, ids: np.ndarray) -> np.ndarray:
        """Positions of ``ids`` (all owned) inside this shard's local arrays."""
        return np.searchsorted(self.owned_ids, ids)


@dataclass(frozen=True)
class Minibatch:
    round_index: int
    ids: np.ndarray


@dataclass(frozen=True)
class EmbeddingBatch:
    ids: np.ndarray
    values: np.ndarray  # (len(ids), E)

    def __len__(self) -> int:
        return len(self.ids)


def split_vertical(
    n_features: int, silo_dims: Sequence[int], columns: Sequence[Sequence[int]] | None = None
) -> list[VerticalPartition]:
    """Contiguous column ranges in silo order, or an explicit column assignment."""
    if columns is not None:
        cols = [np.asarray(c, dtype=np.int64) for c in columns]
        flat = np.sort(np.concatenate(cols)) if cols else np.array([], dtype=np.int64)
        if not np.array_equal(flat, np.arange(n_features)):
            raise ConfigError("column lists must be disjoint and cover every feature")
        if any(len(c) == 0 for c in cols):
            raise ConfigError("every silo needs at least one feature")
        return [VerticalPartition(j, c) for j, c in enumerate(cols)]
    if any(d < 1 for d in silo_dims):
        raise ConfigError(f"silo dims must be >= 1, got {list(silo_dims)}")
    if sum(silo_dims) != n_features:
        raise ConfigError(f"silo dims {list(silo_dims)} sum to {sum(silo_dims)}, dataset has D={n_features}")
    edges = np.cumsum([0, *silo_dims])
    return [VerticalPartition(j, np.arange(edges[j], edges[j + 1])) for j in range(len(silo_dims))]


def equal_silo_dims(n_features: int, n_silos: int) -> list[int]:
    """Near-equal split; the first ``D mod N`` silos get one extra column."""
    if n_silos > n_features:
        raise ConfigError(f"cannot split {n_features} features over {n_silos} silos")
    base, extra = divmod(n_features, n_silos)
    return [base + (1 if j < extra else 0) for j in range(n_silos)]


def shard_horizontal(
    labels: np.ndarray, silo_index: int, n_clients: int, seed: int, shuffle: bool = True
) -> list[HorizontalShard]:
    """Deal a seeded permutation of sample IDs to clients in contiguous blocks.

    Block sizes differ by at most one; the lowest-indexed clients take the
    remainder.
    """
    m = len(labels)
    if n_clients < 1:
        raise ConfigError("need at least one client per silo")
    if n_clients > m:
        raise ConfigError(f"{n_clients} clients but only {m} samples")
    order = rng.permutation(m, seed, "shard", silo_index) if shuffle else np.arange(m)
    base, extra = divmod(m, n_clients)
    shards = []
    start = 0
    for k in range(n_clients):
        size = base + (1 if k < extra else 0)
        ids = np.sort(order[start : start + size])
        shards.append(HorizontalShard(silo_index, k, ids, np.asarray(labels)[ids]))
        start += size
    return shards


def sample_minibatch(seed: int, t0: int, batch_size: int, n_samples: int) -> Minibatch:
    """Shared mini-batch for the round starting at iteration ``t0``.

    A pure function of its arguments, so every silo computes the same ordered
    ID list locally.
    """
    if not 1 <= batch_size <= n_samples:
        raise ConfigError(f"batch size must be in [1, {n_samples}], got {batch_size}")
    ints = rng.IntStream(seed, "minibatch", t0)
    return Minibatch(t0, rng.partial_shuffle(n_samples, batch_size, ints))


def project(embeddings: EmbeddingBatch, shard: HorizontalShard) -> EmbeddingBatch:
    """Rows of ``embeddings`` whose IDs the shard owns, in batch order."""
    mask = np.isin(embeddings.ids, shard.owned_ids)
    return EmbeddingBatch(embeddings.ids[mask], embeddings.values[mask])


def client_batch_ids(batch: Minibatch, shard: HorizontalShard) -> np.ndarray:
    return batch.ids[np.isin(batch.ids, shard.owned_ids)]


# --- file formats -----------------------------------------------------------


def read_csv(path: str | Path, label_column: str) -> tuple[Dataset, list[str]]:
    """Header row required; every non-label column is a float64 feature."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        if label_column not in header:
            raise ConfigError(f"{path}: label column {label_column!r} not in header")
        li = header.index(label_column)
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header) or any(cell.strip() == "" for cell in row):
                raise ConfigError(f"{path}:{lineno}: missing entries")
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
            labels.append(values.pop(li))
            feats.append(values)
    names = [h for i, h in enumerate(header) if i != li]
    if not feats:
        raise ConfigError(f"{path}: no data rows")
    return Dataset(np.array(feats, dtype=np.float64), np.array(labels, dtype=np.float64)), names


def write_csv(path: str | Path, dataset: Dataset, label_column: str = "label") -> None:
    if dataset.labels.ndim != 1:
        raise ConfigError("CSV export supports scalar labels only")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(dataset.n_features)] + [label_column])
        for row, y in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])


def write_binary(path: str | Path, dataset: Dataset) -> None:
    """Header (magic, M, D), then D feature columns and the label column, float64 LE."""
    if dataset.labels.ndim != 1:
        raise ConfigError("binary export supports scalar labels only")
    m, d = dataset.features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(BINARY_MAGIC, m, d))
        fh.write(np.asfortranarray(dataset.features, dtype="<f8").tobytes(order="F"))
        fh.write(np.asarray(dataset.labels, dtype="<f8").tobytes())


def read_binary(path: str | Path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ConfigError(f"{path}: truncated header")
    magic, m, d = _HEADER.unpack_from(raw)
    if magic != BINARY_MAGIC:
        raise ConfigError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * m * (d + 1)
    if len(raw) != expected:
        raise ConfigError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    features = body[: m * d].reshape((m, d), order="F")
    return Dataset(features.astype(np.float64), body[m * d :].astype(np.float64))

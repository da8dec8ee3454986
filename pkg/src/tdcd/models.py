"""Per-silo models, the separable composite loss, and block gradients.

A silo ``j`` owns a flat parameter block and a map ``h_j`` from its feature
slice to an ``E``-dimensional embedding. The prediction for a sample is the sum
of every silo's embedding, and the loss only sees that sum.

Parameter blocks are flat float64 vectors. Layouts:

* ``linear``: ``W`` of shape ``(D_j, E)``, row-major.
* ``mlp``: ``W1 (D_j, H)``, ``b1 (H,)``, ``W2 (H, E)``, ``b2 (E,)``, concatenated
  in that order; hidden activation is ``tanh``.

Gradients are derived by hand for each architecture.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .errors import ConfigError, NumericError

ARCHITECTURES = ("linear", "mlp")
LOSS_KINDS = ("squared_error", "binary_cross_entropy_with_logit", "softmax_cross_entropy")


@dataclass(frozen=True)
class SiloModelSpec:
    silo_index: int
    input_dim: int
    embedding_dim: int
    architecture: str = "linear"
    hidden_width: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.input_dim < 1 or self.embedding_dim < 1:
            raise ConfigError("input_dim and embedding_dim must be >= 1")
        if self.architecture == "mlp" and self.hidden_width < 1:
            raise ConfigError("mlp architecture needs hidden_width >= 1")

    @property
    def n_params(self) -> int:
        d, e, h = self.input_dim, self.embedding_dim, self.hidden_width
        if self.architecture == "linear":
            return d * e
        return d * h + h + h * e + e

    def unpack(self, block: np.ndarray) -> dict[str, np.ndarray]:
        """Named views into ``block`` (no copies)."""
        check_block(self, block)
        d, e, h = self.input_dim, self.embedding_dim, self.hidden_width
        if self.architecture == "linear":
            return {"W": block.reshape(d, e)}
        o1 = d * h
        o2 = o1 + h
        o3 = o2 + h * e
        return {
            "W1": block[:o1].reshape(d, h),
            "b1": block[o1:o2],
            "W2": block[o2:o3].reshape(h, e),
            "b2": block[o3:],
        }


@dataclass(frozen=True)
class LossSpec:
    kind: str
    label_arity: int = 1

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.kind!r}")
        if self.kind == "binary_cross_entropy_with_logit" and self.label_arity != 1:
            raise ConfigError("binary cross-entropy takes a single logit (label_arity=1)")
        if self.kind == "softmax_cross_entropy" and self.label_arity < 2:
            raise ConfigError("softmax cross-entropy needs label_arity >= 2 classes")

    def check_embedding_dim(self, embedding_dim: int) -> None:
        if embedding_dim != self.label_arity:
            raise ConfigError(
                f"{self.kind} needs embedding_dim == label_arity ({self.label_arity}), got {embedding_dim}"
            )


def check_block(spec: SiloModelSpec, block: np.ndarray) -> None:
    if block.ndim != 1 or block.shape[0] != spec.n_params:
        raise ConfigError(
            f"silo {spec.silo_index}: block has shape {block.shape}, expected ({spec.n_params},)"
        )


def _check_rows(spec: SiloModelSpec, rows: np.ndarray) -> None:
    if rows.ndim != 2 or rows.shape[1] != spec.input_dim:
        raise ConfigError(
            f"silo {spec.silo_index}: rows have shape {rows.shape}, expected (n, {spec.input_dim})"
        )


def init_block(spec: SiloModelSpec, seed: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer, keyed by (seed, silo)."""
    gen = rng.generator(seed, "init", spec.silo_index)
    if spec.architecture == "linear":
        bound = 1.0 / np.sqrt(spec.input_dim)
        return gen.uniform(-bound, bound, size=spec.n_params)
    d, e, h = spec.input_dim, spec.embedding_dim, spec.hidden_width
    b_in = 1.0 / np.sqrt(d)
    b_hid = 1.0 / np.sqrt(h)
    parts = [
        gen.uniform(-b_in, b_in, size=d * h + h),
        gen.uniform(-b_hid, b_hid, size=h * e + e),
    ]
    return np.concatenate(parts)


def embed(spec: SiloModelSpec, block: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Apply ``h_j`` row-wise, returning an ``(n, E)`` array."""
    _check_rows(spec, rows)
    p = spec.unpack(block)
    if spec.architecture == "linear":
        return rows @ p["W"]
    hidden = np.tanh(rows @ p["W1"] + p["b1"])
    return hidden @ p["W2"] + p["b2"]


def _as_logits(z: np.ndarray) -> np.ndarray:
    if z.ndim == 1:
        return z[:, None]
    return z


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr.reshape(arr.shape[0], -1)))[0, 0]
        raise NumericError(f"non-finite value in {name} at sample {bad}", sample_index=int(bad))


def _label_targets(labels: np.ndarray, n: int, e: int, loss: LossSpec) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape[0] != n:
        raise ConfigError(f"got {labels.shape[0]} labels for {n} embeddings")
    if loss.kind == "softmax_cross_entropy":
        if labels.ndim != 1:
            raise ConfigError("softmax cross-entropy expects integer class labels of shape (n,)")
        cls = labels.astype(np.int64)
        if np.any(cls != labels) or np.any(cls < 0) or np.any(cls >= e):
            raise ConfigError(f"class labels must be integers in [0, {e})")
        return cls
    y = labels.astype(np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != e:
        raise ConfigError(f"{loss.kind}: labels have width {y.shape[1]}, embeddings have {e}")
    return y


def per_sample_loss(z: np.ndarray, labels: np.ndarray, loss: LossSpec) -> np.ndarray:
    z = _as_logits(np.asarray(z, dtype=np.float64))
    n, e = z.shape
    _check_finite("embedding sum", z)
    _check_finite("labels", np.asarray(labels, dtype=np.float64).reshape(n, -1))
    y = _label_targets(labels, n, e, loss)
    if loss.kind == "squared_error":
        return np.sum((z - y) ** 2, axis=1)
    if loss.kind == "binary_cross_entropy_with_logit":
        # softplus(z) - y z, stable for large |z|
        return (np.logaddexp(0.0, z) - y * z)[:, 0]
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.sum(np.exp(z - zmax), axis=1))
    return lse - z[np.arange(n), y]


def composite_loss(embedding_sum: np.ndarray, labels: np.ndarray, loss: LossSpec) -> float:
    """Mean loss over samples of the summed silo embeddings."""
    values = per_sample_loss(embedding_sum, labels, loss)
    if values.shape[0] == 0:
        raise ConfigError("composite_loss needs at least one sample")
    return float(np.mean(values))


def loss_grad_wrt_sum(z: np.ndarray, labels: np.ndarray, loss: LossSpec) -> np.ndarray:
    """d loss_p / d z_p for each sample, shape ``(n, E)`` (not averaged)."""
    z = _as_logits(np.asarray(z, dtype=np.float64))
    n, e = z.shape
    _check_finite("embedding sum", z)
    y = _label_targets(labels, n, e, loss)
    if loss.kind == "squared_error":
        return 2.0 * (z - y)
    if loss.kind == "binary_cross_entropy_with_logit":
        # sigmoid via tanh avoids overflow in exp
        return 0.5 * (1.0 + np.tanh(0.5 * z)) - y
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    probs = ez / ez.sum(axis=1, keepdims=True)
    probs[np.arange(n), y] -= 1.0
    return probs


def backprop(spec: SiloModelSpec, block: np.ndarray, rows: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of ``h_j`` at ``block`` with output cotangent ``dz``."""
    p = spec.unpack(block)
    if spec.architecture == "linear":
        return (rows.T @ dz).ravel()
    hidden = np.tanh(rows @ p["W1"] + p["b1"])
    g_w2 = hidden.T @ dz
    g_b2 = dz.sum(axis=0)
    d_pre = (dz @ p["W2"].T) * (1.0 - hidden**2)
    g_w1 = rows.T @ d_pre
    g_b1 = d_pre.sum(axis=0)
    return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])


def partial_gradient(
    spec: SiloModelSpec,
    block: np.ndarray,
    own_rows: np.ndarray,
    other_sum: np.ndarray,
    labels: np.ndarray,
    loss: LossSpec,
) -> np.ndarray:
    """Mean gradient of the loss with respect to one silo's block.

    ``other_sum`` holds the summed embeddings of every other silo for the same
    samples and is treated as a constant; only ``h_j`` is differentiated.
    """
    own = embed(spec, block, own_rows)
    other_sum = _as_logits(np.asarray(other_sum, dtype=np.float64))
    if other_sum.shape != own.shape:
        raise ConfigError(f"other_sum has shape {other_sum.shape}, expected {own.shape}")
    n = own.shape[0]
    if n == 0:
        return np.zeros_like(block)
    dz = loss_grad_wrt_sum(own + other_sum, labels, loss) / n
    grad = backprop(spec, block, own_rows, dz)
    if not np.all(np.isfinite(grad)):
        raise NumericError(f"non-finite gradient for silo {spec.silo_index}")
    return grad


def embedding_sum(
    specs: Sequence[SiloModelSpec], blocks: Sequence[np.ndarray], silo_rows: Sequence[np.ndarray]
) -> np.ndarray:
    total = embed(specs[0], blocks[0], silo_rows[0])
    for spec, block, rows in zip(specs[1:], blocks[1:], silo_rows[1:]):
        total = total + embed(spec, block, rows)
    return total


def objective(specs, blocks, silo_rows, labels, loss: LossSpec) -> float:
    """Full objective: mean loss of the composite model over the given rows."""
    return composite_loss(embedding_sum(specs, blocks, silo_rows), labels, loss)


def objective_gradient(specs, blocks, silo_rows, labels, loss: LossSpec) -> list[np.ndarray]:
    """Per-block gradients of the full objective, all taken at the same point."""
    embs = [embed(s, b, r) for s, b, r in zip(specs, blocks, silo_rows)]
    total = embs[0]
    for e in embs[1:]:
        total = total + e
    n = total.shape[0]
    dz = loss_grad_wrt_sum(total, labels, loss) / n
    return [backprop(s, b, r, dz) for s, b, r in zip(specs, blocks, silo_rows)]

"""Seeded synthetic regression and classification problems."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .data import Dataset
from .errors import ConfigError

TASKS = ("least_squares", "logistic")


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int
    n_features: int
    task: str = "least_squares"
    noise: float = 0.0
    margin: float = 1.0
    # ratio between the largest and smallest eigenvalue of X^T X
    condition: float = 1.0
    n_test: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown synthetic task {self.task!r}")
        if self.n_samples < 1 or self.n_features < 1:
            raise ConfigError("synthetic data needs n_samples >= 1 and n_features >= 1")
        if self.condition < 1:
            raise ConfigError("condition must be >= 1")
        if self.noise < 0 or self.n_test < 0:
            raise ConfigError("noise and n_test must be >= 0")


@dataclass
class SyntheticMeta:
    theta_star: np.ndarray
    theta_opt: np.ndarray | None
    optimum_loss: float | None
    lipschitz: float | None
    gram: np.ndarray  # (2/M) X^T X

    def block_lipschitz(self, silo_dims: Sequence[int]) -> list[float]:
        """Largest eigenvalue of each diagonal block of the squared-error Hessian."""
        edges = np.cumsum([0, *silo_dims])
        return [
            float(np.linalg.eigvalsh(self.gram[a:b, a:b])[-1]) for a, b in zip(edges[:-1], edges[1:])
        ]


def _random_rotation(gen: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(gen.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def generate_synthetic(spec: SyntheticSpec, seed: int) -> tuple[Dataset, Dataset | None, SyntheticMeta]:
    """Returns ``(train, test or None, metadata)``.

    Features are Gaussian with population covariance ``V diag(s^2) V^T`` for a
    random rotation ``V``. When ``M >= D`` the training matrix is whitened first
    so ``X^T X = M V diag(s^2) V^T`` holds exactly and the eigenvalue spread is
    exactly ``condition``.
    """
    gen = rng.generator(seed, "synthetic")
    m, d = spec.n_samples, spec.n_features
    if d > 1:
        scales = spec.condition ** (-0.5 * np.arange(d) / (d - 1))
    else:
        scales = np.ones(1)
    rot = _random_rotation(gen, d)
    mix = (rot * scales) @ rot.T
    z_train = gen.standard_normal((m, d))
    z_test = gen.standard_normal((spec.n_test, d))
    if m >= d:
        u, _ = np.linalg.qr(z_train)
        x_train = np.sqrt(m) * (u @ rot) @ np.diag(scales) @ rot.T
    else:
        x_train = z_train @ mix
    x_test = z_test @ mix

    if spec.task == "least_squares":
        theta_star = gen.standard_normal(d)
        y_train = x_train @ theta_star + spec.noise * gen.standard_normal(m)
        y_test = x_test @ theta_star + spec.noise * gen.standard_normal(spec.n_test)
    else:
        theta_star = gen.standard_normal(d)
        theta_star *= spec.margin / np.linalg.norm(theta_star)
        y_train = (gen.uniform(size=m) < _sigmoid(x_train @ theta_star)).astype(np.float64)
        y_test = (gen.uniform(size=spec.n_test) < _sigmoid(x_test @ theta_star)).astype(np.float64)

    gram = (2.0 / m) * (x_train.T @ x_train)
    theta_opt = optimum = lipschitz = None
    if spec.task == "least_squares":
        theta_opt = np.linalg.lstsq(x_train, y_train, rcond=None)[0]
        optimum = float(np.mean((x_train @ theta_opt - y_train) ** 2))
        lipschitz = float(np.linalg.eigvalsh(gram)[-1])
    train = Dataset(x_train, y_train)
    test = Dataset(x_test, y_test) if spec.n_test else None
    return train, test, SyntheticMeta(theta_star, theta_opt, optimum, lipschitz, gram)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))

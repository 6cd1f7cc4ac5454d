"""Decentralized gradient descent iteration, step sizes and run metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Schedule:
    """Consensus step ``g0 / (1 + k delta)^(3/4)`` and learning step ``e0 / (1 + k delta)``."""

    gamma0: float
    eta0: float
    delta: float

    def __post_init__(self):
        if not (self.gamma0 > 0 and self.eta0 > 0 and self.delta > 0):
            raise ValueError("schedule constants must be positive")

    @classmethod
    def default(cls, mu: float, L: float, gamma0: float = 1.7e7) -> "Schedule":
        eta0 = 2.0 / (mu + L)
        return cls(gamma0, eta0, 5.0 / (4.0 * mu * eta0))


def step_sizes(schedule: Schedule, k: int) -> tuple[float, float]:
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    base = 1.0 + k * schedule.delta
    return schedule.gamma0 / base**0.75, schedule.eta0 / base


def project_ball(W, radius: float) -> np.ndarray:
    """Row-wise Euclidean projection onto the radius-``radius`` ball."""
    W = np.asarray(W, dtype=float)
    norms = np.linalg.norm(W, axis=-1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(norms, np.finfo(float).tiny))
    return W * scale


class NonFiniteUpdate(FloatingPointError):
    pass


def dgd_step(W, estimates, gradients, gamma: float, eta: float, radius: float,
             iteration: int | None = None) -> np.ndarray:
    """``w_i + gamma d_i - eta grad f_i(w_i)``, projected onto the ball.

    Transmitting nodes arrive here with a zero disagreement estimate and still
    take their gradient step.
    """
    W = np.asarray(W, dtype=float)
    new = W + gamma * np.asarray(estimates) - eta * np.asarray(gradients)
    bad = ~np.all(np.isfinite(new), axis=-1)
    if bad.any():
        nodes = np.flatnonzero(bad).tolist()
        raise NonFiniteUpdate(f"non-finite update at iteration {iteration} for nodes {nodes}")
    return project_ball(new, radius)


def frame_duration(dim: int, bandwidth: float, estimator: str, n_pilot: int = 10) -> float:
    """Air time of one iteration: ``M`` data samples plus the pilot for IR-NCOTA."""
    M = 2 * dim + 1
    samples = M + n_pilot if estimator == "ir-ncota" else M
    return samples / bandwidth


@dataclass(frozen=True)
class Metrics:
    normalized_error: float
    subopt_gap: float
    test_error: float


def metrics(W, w_star, objective, f_star: float) -> Metrics:
    """Normalized error of the local models, and gap/test error of their average."""
    W = np.asarray(W, dtype=float)
    ref = float(w_star @ w_star)
    if ref == 0.0:
        raise ValueError("normalized error undefined for a zero optimum")
    err = float(np.mean(np.sum((W - w_star) ** 2, axis=1))) / ref
    w_bar = W.mean(axis=0)
    return Metrics(err, objective.value(w_bar) - f_star, objective.test_error(w_bar))

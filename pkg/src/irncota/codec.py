"""Energy-simplex encoding of parameter vectors.

A vector ``w`` with ``||w|| <= r`` is written as a convex combination of the
``M = 2d + 1`` codewords ``+sqrt(d) r e_m``, ``-sqrt(d) r e_m`` and ``0``. The
combination weights form an energy profile that sets the per-sample transmit
energy. Codewords are never materialized: they are signed, scaled basis
vectors, so every operation reduces to index arithmetic.

All functions broadcast over leading axes (nodes, batches).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class Codebook:
    dim: int
    radius: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    @property
    def M(self) -> int:
        return 2 * self.dim + 1

    @property
    def scale(self) -> float:
        """Codeword magnitude sqrt(d) * r."""
        return float(np.sqrt(self.dim) * self.radius)

    def codeword(self, m: int) -> np.ndarray:
        """Codeword with 0-based index ``m`` (dense; for tests and inspection)."""
        z = np.zeros(self.dim)
        if m < self.dim:
            z[m] = self.scale
        elif m < 2 * self.dim:
            z[m - self.dim] = -self.scale
        elif m != 2 * self.dim:
            raise IndexError(m)
        return z

    def combine(self, weights: np.ndarray) -> np.ndarray:
        """Return ``sum_m weights[..., m] z_m`` for arbitrary real weights."""
        weights = np.asarray(weights, dtype=float)
        d = self.dim
        return self.scale * (weights[..., :d] - weights[..., d : 2 * d])


def encode(w: np.ndarray, cb: Codebook) -> np.ndarray:
    """Map ``w`` (shape ``(..., d)``) to its energy profile (shape ``(..., M)``)."""
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != cb.dim:
        raise ValueError(f"expected vectors of length {cb.dim}, got {w.shape[-1]}")
    norms = np.linalg.norm(w, axis=-1)
    if np.any(norms > cb.radius * (1 + 1e-12)):
        raise ValueError(
            f"vector norm {norms.max():.6g} exceeds the ball radius {cb.radius:.6g}"
        )
    pos = np.maximum(w, 0.0) / cb.scale
    neg = np.maximum(-w, 0.0) / cb.scale
    last = 1.0 - np.abs(w).sum(axis=-1, keepdims=True) / cb.scale
    p = np.concatenate([pos, neg, last], axis=-1)
    if np.any(last < 0):
        # only reachable through rounding right at the boundary
        p[..., -1:] = np.maximum(last, 0.0)
        p /= p.sum(axis=-1, keepdims=True)
    return p


def check_simplex(p: np.ndarray, tol: float = 1e-9) -> None:
    p = np.asarray(p)
    if np.any(p < -tol) or np.any(np.abs(p.sum(axis=-1) - 1.0) > tol):
        raise ValueError("energy profile is not on the probability simplex")


def reconstruct(p: np.ndarray, cb: Codebook) -> np.ndarray:
    """Inverse of :func:`encode`: the convex combination of codewords."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != cb.M:
        raise ValueError(f"expected profiles of length {cb.M}, got {p.shape[-1]}")
    check_simplex(p)
    return cb.combine(p)


def transmit_signal(p: np.ndarray, energy: float, M: int | None = None) -> np.ndarray:
    """Nonnegative real frame ``sqrt(E M) sqrt(p)``; mean sample energy is ``E``."""
    p = np.asarray(p, dtype=float)
    if M is None:
        M = p.shape[-1]
    if p.shape[-1] != M:
        raise ValueError(f"profile length {p.shape[-1]} does not match M={M}")
    if not energy > 0:
        raise ValueError("energy per sample must be positive")
    if np.any(p < 0):
        raise ValueError("energy profile has negative weights")
    return np.sqrt(energy * M) * np.sqrt(p)


def sample_ball(stream: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    """``n`` points uniform in the radius-``radius`` ball of R^dim."""
    from .rng import standard_normal, uniform

    direction = standard_normal(stream, (n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    rho = radius * uniform(stream, n) ** (1.0 / dim)
    return direction * rho[:, None]

"""Deployment geometry, Rayleigh fading, interference and signal superposition.

Energies are per complex sample: a transmitter emits ``E = P_tx / W`` joules
per sample and thermal noise has variance ``N0`` per sample. Links are drawn
independently in each direction; average gains follow free-space Friis and
are symmetric.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .rng import standard_complex_gaussian, uniform

SPEED_OF_LIGHT = 2.99792458e8


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class Deployment:
    positions: np.ndarray  # (N, 2), meters
    area_radius: float
    carrier_frequency: float = 3e9
    bandwidth: float = 5e6
    tx_power: float = 0.1
    noise_psd: float = dbm_to_watts(-173.0)

    def __post_init__(self):
        if np.any(np.linalg.norm(self.positions, axis=1) > self.area_radius * (1 + 1e-12)):
            raise ValueError("node outside the deployment disc")
        if not (self.tx_power > 0 and self.bandwidth > 0):
            raise ValueError("tx_power and bandwidth must be positive")

    @property
    def N(self) -> int:
        return len(self.positions)

    @property
    def energy(self) -> float:
        """Transmit energy per sample, ``P_tx / W``."""
        return self.tx_power / self.bandwidth

    def gain_matrix(self) -> np.ndarray:
        return gain_matrix(self.positions, self.carrier_frequency)

    def gains_from(self, point) -> np.ndarray:
        """Friis gain from an external emitter at ``point`` to every node."""
        dist = np.linalg.norm(self.positions - np.asarray(point, dtype=float), axis=1)
        return friis_gain(dist, self.carrier_frequency)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node_index", "x_m", "y_m"])
            for i, (x, y) in enumerate(self.positions):
                writer.writerow([i, repr(float(x)), repr(float(y))])


def _uniform_disc(stream, n: int, radius: float) -> np.ndarray:
    rho = radius * np.sqrt(uniform(stream, n))
    theta = 2.0 * np.pi * uniform(stream, n)
    return np.column_stack([rho * np.cos(theta), rho * np.sin(theta)])


def deploy(N: int, area_radius: float, stream, *, min_separation: float = 1e-6,
           avoid=(), **radio) -> Deployment:
    """Drop ``N`` nodes uniformly in a disc of radius ``area_radius``.

    Nodes closer than ``min_separation`` to one another, or to any point in
    ``avoid`` (e.g. an interferer), are redrawn.
    """
    if N < 2:
        raise ValueError(f"need at least 2 nodes, got {N}")
    pos = _uniform_disc(stream, N, area_radius)
    avoid = [np.asarray(a, dtype=float) for a in avoid]
    for _ in range(1000):
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        bad = np.any(dist < min_separation, axis=1)
        for a in avoid:
            bad |= np.linalg.norm(pos - a, axis=1) < min_separation
        if not bad.any():
            break
        pos[bad] = _uniform_disc(stream, int(bad.sum()), area_radius)
    return Deployment(pos, float(area_radius), **radio)


def friis_gain(distance, carrier_frequency: float):
    """Free-space average power gain ``(lambda / (4 pi d))^2``."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("Friis gain undefined at zero distance")
    wavelength = SPEED_OF_LIGHT / carrier_frequency
    g = (wavelength / (4.0 * np.pi * distance)) ** 2
    return g if g.ndim else float(g)


def gain_matrix(positions: np.ndarray, carrier_frequency: float) -> np.ndarray:
    """Symmetric ``N x N`` average gains with a zero diagonal."""
    dist = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    np.fill_diagonal(dist, 1.0)
    gains = friis_gain(dist, carrier_frequency)
    np.fill_diagonal(gains, 0.0)
    return gains


def sample_channels(gains: np.ndarray, stream, batch: tuple = ()) -> np.ndarray:
    """Rayleigh coefficients ``h_ij ~ CN(0, gains_ij)``, one independent draw per
    ordered pair. ``h[..., i, j]`` is the link from transmitter ``j`` to
    receiver ``i``."""
    gains = np.asarray(gains, dtype=float)
    return np.sqrt(gains) * standard_complex_gaussian(stream, (*batch, *gains.shape))


def thermal_noise(N0: float, shape, stream) -> np.ndarray:
    return np.sqrt(N0) * standard_complex_gaussian(stream, shape)


class InterferenceKind(str, enum.Enum):
    NONE = "none"
    GAUSSIAN_JAMMER = "gaussian-jammer"
    SINGLE_SAMPLE = "single-sample"


@dataclass(frozen=True)
class InterferenceSource:
    """External emitter seen by every node through its own Rayleigh link.

    ``gains`` holds the average power gain from the source to each node.
    ``energy`` is the emitted energy per sample ``E`` (jammer) or the scale of
    the single-sample burst ``sqrt(E M)``.
    """

    kind: InterferenceKind
    gains: np.ndarray | None = None
    energy: float = 0.0
    position: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "kind", InterferenceKind(self.kind))
        if self.kind is not InterferenceKind.NONE:
            if self.gains is None or not self.energy > 0:
                raise ValueError(f"{self.kind.value} interference needs gains and a positive energy")

    @classmethod
    def none(cls) -> "InterferenceSource":
        return cls(InterferenceKind.NONE)

    @classmethod
    def at(cls, kind, deployment: Deployment, position=(0.0, 0.0)) -> "InterferenceSource":
        kind = InterferenceKind(kind)
        if kind is InterferenceKind.NONE:
            return cls.none()
        return cls(kind, deployment.gains_from(position), deployment.energy, tuple(position))


def interference_frame(source: InterferenceSource, n_nodes: int, length: int,
                       stream, batch: tuple = ()) -> np.ndarray:
    """Interference seen by every node over one frame, shape ``(*batch, n_nodes, length)``.

    For the Gaussian jammer the emitted waveform ``v`` is drawn once per frame
    and shared by all receivers; each receiver has its own fading coefficient.
    """
    if source.kind is InterferenceKind.NONE:
        return np.zeros((*batch, n_nodes, length), dtype=complex)
    if len(source.gains) != n_nodes:
        raise ValueError(f"source has gains for {len(source.gains)} nodes, expected {n_nodes}")
    g = np.sqrt(source.gains) * standard_complex_gaussian(stream, (*batch, n_nodes))
    if source.kind is InterferenceKind.GAUSSIAN_JAMMER:
        v = np.sqrt(source.energy) * standard_complex_gaussian(stream, (*batch, 1, length))
        return g[..., None] * v
    out = np.zeros((*batch, n_nodes, length), dtype=complex)
    out[..., 0] = g * np.sqrt(source.energy * length)
    return out


def superpose(frames: np.ndarray, h: np.ndarray, transmitting: np.ndarray,
              disturbance: np.ndarray | None = None) -> np.ndarray:
    """Received frames ``y_i = sum_{j transmitting} h_ij x_j + n_i`` for all nodes.

    frames: ``(..., N, L)`` transmit frames; h: ``(..., N, N)``;
    transmitting: ``(..., N)`` booleans; disturbance: ``(..., N, L)`` noise
    plus interference, or None.
    """
    frames = np.asarray(frames)
    if h.shape[-1] != frames.shape[-2]:
        raise ValueError("channel matrix does not match the number of transmit frames")
    if disturbance is not None and disturbance.shape[-1] != frames.shape[-1]:
        raise ValueError(
            f"frame length mismatch: {frames.shape[-1]} vs {disturbance.shape[-1]}"
        )
    eff = h * np.asarray(transmitting, dtype=float)[..., None, :]
    y = eff @ frames
    if disturbance is not None:
        y = y + disturbance
    return y

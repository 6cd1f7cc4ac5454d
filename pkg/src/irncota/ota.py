"""Over-the-air estimation of the disagreement signal.

Baseline NCOTA recovers ``sum_j L_ij (w_j - w_i)`` from received sample
energies after subtracting the known noise floor. The interference-robust
variant (IR-NCOTA) splits the target into ``s_i = sum_j L_ij w_j`` and
``Lbar_i = sum_j L_ij``: ``s_i`` is estimated from energies measured in a
randomly rotated frame of reference, ``Lbar_i`` from a pilot with random
phases. Both rotation and pilot are common to the whole network, so any
interference energy averages out to zero.

Conventions: ``chi`` is True for receivers (the node listens this
iteration) and False for transmitters. Arrays broadcast over leading batch
axes; node axes come right before the sample/coordinate axis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import channel
from .codec import Codebook, encode, transmit_signal
from .rng import Label, bernoulli, permutation, uniform


def draw_roles(N: int, p_tx: float, stream, batch: tuple = ()) -> np.ndarray:
    """Half-duplex roles: True where the node receives (prob. ``1 - p_tx``)."""
    if not 0.0 < p_tx < 1.0:
        raise ValueError(f"p_tx must lie in (0, 1), got {p_tx}")
    return ~bernoulli(stream, p_tx, (*batch, N))


def _energy_scale(p_tx: float, energy: float, M: int) -> float:
    return (1.0 - p_tx) * p_tx * energy * M


def ncota_energy(y, chi, N0: float, p_tx: float, energy: float) -> np.ndarray:
    """Noise-compensated received sample energies (may be negative)."""
    y = np.asarray(y)
    M = y.shape[-1]
    gate = np.asarray(chi, dtype=float)[..., None]
    return gate * (np.abs(y) ** 2 - N0) / _energy_scale(p_tx, energy, M)


def ncota_estimate(raw_energy, w, cb: Codebook) -> np.ndarray:
    """``sum_m r_m (z_m - w)``."""
    raw_energy = np.asarray(raw_energy, dtype=float)
    return cb.combine(raw_energy) - raw_energy.sum(axis=-1, keepdims=True) * w


class RotationMode(str, enum.Enum):
    SIGN_FLIP = "sign-flip"
    SIGNED_PERMUTATION = "signed-permutation"


@dataclass(frozen=True)
class Rotation:
    """Signed permutation ``(U x)_k = signs_k * x[perm_k]``.

    ``perm`` is None for a pure sign flip ``U = s I``. Leading axes of
    ``signs``/``perm`` are batch axes.
    """

    signs: np.ndarray
    perm: np.ndarray | None = None

    def apply(self, x, node_axis: bool = False) -> np.ndarray:
        signs, perm = self.signs, self.perm
        if node_axis:
            signs = signs[..., None, :]
            perm = None if perm is None else perm[..., None, :]
        x = np.asarray(x)
        if perm is not None:
            perm = np.broadcast_to(perm, np.broadcast_shapes(perm.shape, x.shape))
            x = np.take_along_axis(np.broadcast_to(x, perm.shape), perm, axis=-1)
        return signs * x

    @property
    def T(self) -> "Rotation":
        if self.perm is None:
            return self
        inverse = np.argsort(self.perm, axis=-1, kind="stable")
        return Rotation(np.take_along_axis(self.signs, inverse, axis=-1), inverse)

    def matrix(self) -> np.ndarray:
        """Dense d x d matrix of an unbatched rotation."""
        d = self.signs.shape[-1]
        return self.apply(np.eye(d)).T


def draw_rotation(d: int, stream, mode=RotationMode.SIGN_FLIP, batch: tuple = ()) -> Rotation:
    """Zero-mean orthogonal rotation from the network-wide shared stream."""
    mode = RotationMode(mode)
    if mode is RotationMode.SIGN_FLIP:
        s = np.where(uniform(stream, batch) < 0.5, 1.0, -1.0)
        return Rotation(np.broadcast_to(np.asarray(s)[..., None], (*batch, d)).copy())
    perm = permutation(stream, d, batch)
    signs = np.where(uniform(stream, (*batch, d)) < 0.5, 1.0, -1.0)
    return Rotation(signs, perm)


def ir_energy(y, chi, p_tx: float, energy: float) -> np.ndarray:
    """Received sample energies without noise compensation (always >= 0)."""
    y = np.asarray(y)
    gate = np.asarray(chi, dtype=float)[..., None]
    return gate * np.abs(y) ** 2 / _energy_scale(p_tx, energy, y.shape[-1])


def ir_s_estimate(raw_energy, rotation: Rotation, cb: Codebook, node_axis: bool = False) -> np.ndarray:
    """``U^T sum_m r_m z_m``: the gain-weighted sum of neighbour parameters."""
    return rotation.T.apply(cb.combine(raw_energy), node_axis=node_axis)


def pilot_sequence(n_pilot: int, energy: float, stream, batch: tuple = ()) -> np.ndarray:
    """Constant-modulus pilot ``sqrt(E) exp(j phi_m)`` with uniform phases."""
    if n_pilot < 2:
        raise ValueError(f"pilot length must be at least 2, got {n_pilot}")
    phases = 2.0 * np.pi * uniform(stream, (*batch, n_pilot))
    return np.sqrt(energy) * np.exp(1j * phases)


def lambda_estimate(y_pilot, x_pilot, chi, p_tx: float, energy: float) -> np.ndarray:
    """Pilot-based estimate of the incoming gain sum ``sum_j L_ij``.

    ``y_pilot``: ``(..., N, n_P)``; ``x_pilot``: ``(..., n_P)``. Single draws
    can be negative; they are not clamped.
    """
    y_pilot = np.asarray(y_pilot)
    n_pilot = y_pilot.shape[-1]
    if n_pilot < 2:
        raise ValueError("pilot length must be at least 2")
    x = np.asarray(x_pilot)[..., None, :]
    corr = np.abs(np.sum(np.conj(x) * y_pilot, axis=-1)) ** 2 / energy
    power = np.sum(np.abs(y_pilot) ** 2, axis=-1)
    scale = (1.0 - p_tx) * p_tx * energy * n_pilot * (n_pilot - 1)
    return np.asarray(chi, dtype=float) * (corr - power) / scale


def ir_combine(s_hat, lambda_hat, w) -> np.ndarray:
    return np.asarray(s_hat) - np.asarray(lambda_hat)[..., None] * np.asarray(w)


def disagreement_oracle(W, gains, i: int | None = None) -> np.ndarray:
    """Exact ``d_i = sum_{j != i} L_ij (w_j - w_i)``; all nodes when ``i`` is None."""
    W = np.asarray(W, dtype=float)
    gains = np.asarray(gains, dtype=float)
    off = gains - np.diag(np.diag(gains))
    d = off @ W - off.sum(axis=1)[:, None] * W
    return d if i is None else d[i]


# --- network rounds -------------------------------------------------------


@dataclass(frozen=True)
class Radio:
    energy: float
    noise_psd: float
    p_tx: float
    n_pilot: int = 10
    rotation_mode: RotationMode = RotationMode.SIGN_FLIP


class RoundResult(NamedTuple):
    estimate: np.ndarray
    chi: np.ndarray
    raw_energy: np.ndarray
    gain_estimate: np.ndarray | None = None


def _disturbance(radio, interference, N, length, noise_stream, interference_stream, batch):
    noise = channel.thermal_noise(radio.noise_psd, (*batch, N, length), noise_stream)
    return noise + channel.interference_frame(interference, N, length, interference_stream, batch)


def ncota_round(W, gains, cb: Codebook, radio: Radio, interference, streams,
                batch: tuple = ()) -> RoundResult:
    """One baseline NCOTA exchange across the network."""
    N = gains.shape[0]
    chi = draw_roles(N, radio.p_tx, streams(Label.ROLES), batch)
    frames = transmit_signal(encode(W, cb), radio.energy)
    h = channel.sample_channels(gains, streams(Label.CHANNEL), batch)
    disturbance = _disturbance(radio, interference, N, cb.M, streams(Label.NOISE),
                               streams(Label.INTERFERENCE), batch)
    y = channel.superpose(frames, h, ~chi, disturbance)
    r = ncota_energy(y, chi, radio.noise_psd, radio.p_tx, radio.energy)
    return RoundResult(ncota_estimate(r, W, cb), chi, r)


def ir_ncota_round(W, gains, cb: Codebook, radio: Radio, interference, streams,
                   batch: tuple = ()) -> RoundResult:
    """One IR-NCOTA exchange: rotated data slot followed by a pilot slot.

    Roles and channel coefficients are shared by both slots; the pilot slot
    gets its own noise and interference draws.
    """
    N, d = gains.shape[0], cb.dim
    chi = draw_roles(N, radio.p_tx, streams(Label.ROLES), batch)
    U = draw_rotation(d, streams(Label.SHARED_ROTATION), radio.rotation_mode, batch)
    W_rot = U.apply(np.broadcast_to(W, (*batch, N, d)), node_axis=True)
    frames = transmit_signal(encode(W_rot, cb), radio.energy)
    h = channel.sample_channels(gains, streams(Label.CHANNEL), batch)
    noise_stream, interference_stream = streams(Label.NOISE), streams(Label.INTERFERENCE)
    disturbance = _disturbance(radio, interference, N, cb.M, noise_stream, interference_stream, batch)
    y = channel.superpose(frames, h, ~chi, disturbance)
    r = ir_energy(y, chi, radio.p_tx, radio.energy)
    s_hat = ir_s_estimate(r, U, cb, node_axis=True)

    x_pilot = pilot_sequence(radio.n_pilot, radio.energy, streams(Label.SHARED_PILOT), batch)
    pilot_frames = np.broadcast_to(x_pilot[..., None, :], (*batch, N, radio.n_pilot))
    disturbance = _disturbance(radio, interference, N, radio.n_pilot, noise_stream,
                               interference_stream, batch)
    y_pilot = channel.superpose(pilot_frames, h, ~chi, disturbance)
    lam = lambda_estimate(y_pilot, x_pilot, chi, radio.p_tx, radio.energy)
    return RoundResult(ir_combine(s_hat, lam, W), chi, r, lam)

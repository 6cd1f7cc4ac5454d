"""Named, reproducible random streams.

Every random quantity in a simulation is drawn from a stream identified by a
:class:`StreamKey`. The key is hashed together with the master seed into a
128-bit Philox key, so streams are independent without any coordination and a
given key always replays the same sequence. Shared keys (rotation, pilot)
carry no node index: every node that derives them gets the same draws, which
is how network-wide coordinated randomness is realized.

Gaussians are produced from uniform doubles with the Box-Muller transform
rather than numpy's ziggurat samplers.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1


class Label(str, enum.Enum):
    SHARED_ROTATION = "shared-rotation"
    SHARED_PILOT = "shared-pilot"
    CHANNEL = "channel"
    NOISE = "noise"
    ROLES = "roles"
    INTERFERENCE = "interference"
    DATA_SHUFFLE = "data-shuffle"
    DEPLOYMENT = "deployment"


SHARED_LABELS = frozenset({Label.SHARED_ROTATION, Label.SHARED_PILOT})


@dataclass(frozen=True)
class StreamKey:
    label: Label
    realization: int = 0
    iteration: int = 0
    node: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        if self.realization < 0 or self.iteration < 0:
            raise ValueError("realization and iteration indices must be nonnegative")
        if self.node is not None:
            if self.label in SHARED_LABELS:
                raise ValueError(f"{self.label.value} streams are network-wide and take no node index")
            if self.node < 0:
                raise ValueError("node index must be nonnegative")

    def encode(self) -> bytes:
        node = "-" if self.node is None else str(self.node)
        return f"{self.label.value}|{self.realization}|{self.iteration}|{node}".encode()


def derive_stream(master_seed: int, key: StreamKey) -> np.random.Generator:
    """Return the stream for ``key`` under ``master_seed``.

    The same (seed, key) pair yields a bitwise-identical sequence on every run.
    """
    h = hashlib.blake2b(digest_size=16)
    h.update((int(master_seed) & MASK64).to_bytes(8, "little"))
    h.update(key.encode())
    philox_key = int.from_bytes(h.digest(), "little")
    return np.random.Generator(np.random.Philox(key=philox_key))


def uniform(stream: np.random.Generator, shape=()) -> np.ndarray:
    """Uniform doubles in [0, 1)."""
    return stream.random(shape)


def _box_muller(stream: np.random.Generator, shape):
    # 1 - U lies in (0, 1], keeping the log finite
    u1 = 1.0 - stream.random(shape)
    u2 = stream.random(shape)
    return np.sqrt(-np.log(u1)), 2.0 * np.pi * u2


def standard_complex_gaussian(stream: np.random.Generator, n) -> np.ndarray:
    """I.i.d. CN(0, 1) samples: real and imaginary parts each of variance 1/2.

    ``n`` may be an int or a shape tuple; ``n = 0`` returns an empty array.
    """
    radius, phase = _box_muller(stream, n)
    out = np.empty(radius.shape, dtype=complex)
    out.real = radius * np.cos(phase)
    out.imag = radius * np.sin(phase)
    return out


def standard_normal(stream: np.random.Generator, shape) -> np.ndarray:
    """I.i.d. real N(0, 1) samples."""
    radius, phase = _box_muller(stream, shape)
    return np.sqrt(2.0) * radius * np.cos(phase)


def bernoulli(stream: np.random.Generator, p: float, shape) -> np.ndarray:
    return stream.random(shape) < p


def permutation(stream: np.random.Generator, n: int, batch: tuple = ()) -> np.ndarray:
    """Uniform random permutations of ``range(n)`` along the last axis."""
    keys = stream.random((*batch, n))
    return np.argsort(keys, axis=-1, kind="stable")


@dataclass(frozen=True)
class IterationStreams:
    """Stream factory for one (realization, iteration) of a run.

    ``streams(Label.NOISE)`` derives the noise stream for this iteration;
    shared labels ignore ``node`` by construction.
    """

    seed: int
    realization: int = 0
    iteration: int = 0

    def __call__(self, label: Label, node: int | None = None) -> np.random.Generator:
        return derive_stream(self.seed, StreamKey(label, self.realization, self.iteration, node))

"""Monte Carlo statistics of the over-the-air estimators for fixed parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import IterationStreams


@dataclass
class Moments:
    mean: np.ndarray
    stderr: np.ndarray
    n: int

    def zscore(self, target) -> np.ndarray:
        return (self.mean - target) / self.stderr


class _Accumulator:
    def __init__(self):
        self.n = 0
        self.s1 = 0.0
        self.s2 = 0.0

    def add(self, batch: np.ndarray):
        self.n += batch.shape[0]
        self.s1 = self.s1 + batch.sum(axis=0)
        self.s2 = self.s2 + (batch**2).sum(axis=0)

    def moments(self) -> Moments:
        mean = self.s1 / self.n
        var = (self.s2 - self.n * mean**2) / (self.n - 1)
        return Moments(mean, np.sqrt(np.maximum(var, 0.0) / self.n), self.n)


def estimator_moments(round_fn, W, gains, cb, radio, interference, n_frames: int,
                      seed: int = 0, batch_size: int = 20_000):
    """Mean and standard error of every node's disagreement estimate (and of
    the gain estimate, when the round produces one) over ``n_frames``
    independent frames with the parameters ``W`` held fixed."""
    est, lam = _Accumulator(), _Accumulator()
    done, block = 0, 0
    while done < n_frames:
        b = min(batch_size, n_frames - done)
        out = round_fn(W, gains, cb, radio, interference, IterationStreams(seed, 0, block), batch=(b,))
        est.add(out.estimate)
        if out.gain_estimate is not None:
            lam.add(out.gain_estimate)
        done += b
        block += 1
    return est.moments(), (lam.moments() if lam.n else None)

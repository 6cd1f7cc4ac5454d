"""Decentralized gradient descent over simulated wireless channels using
non-coherent over-the-air consensus, with an interference-robust variant."""

from .codec import Codebook, encode, reconstruct, transmit_signal
from .harness import ExperimentConfig, emit_results, load_config, run_experiment
from .rng import Label, StreamKey, derive_stream

__all__ = [
    "Codebook",
    "ExperimentConfig",
    "Label",
    "StreamKey",
    "derive_stream",
    "emit_results",
    "encode",
    "load_config",
    "reconstruct",
    "run_experiment",
    "transmit_signal",
]

from dataclasses import dataclass

import numpy as np
import pytest

from irncota.channel import InterferenceKind, InterferenceSource, deploy
from irncota.codec import Codebook, sample_ball
from irncota.ota import Radio
from irncota.rng import Label, StreamKey, derive_stream


@dataclass
class Topology:
    gains: np.ndarray
    W: np.ndarray
    cb: Codebook
    radio: Radio
    jammer: InterferenceSource
    single: InterferenceSource


def make_topology(seed: int = 5, N: int = 5, d: int = 4) -> Topology:
    """Small fixed network with physical radio constants (20 dBm, 5 MHz, -173 dBm/Hz)."""
    dep = deploy(N, 150.0, derive_stream(seed, StreamKey(Label.DEPLOYMENT)), avoid=[(0.0, 0.0)])
    cb = Codebook(d, 1.0)
    W = sample_ball(derive_stream(seed, StreamKey(Label.DATA_SHUFFLE)), N, d, 1.0)
    radio = Radio(dep.energy, dep.noise_psd, 0.34, 10)
    # interferer placed where its gain is comparable to the node-to-node gains
    jammer_pos = (60.0, 0.0)
    return Topology(
        gains=dep.gain_matrix(),
        W=W,
        cb=cb,
        radio=radio,
        jammer=InterferenceSource.at(InterferenceKind.GAUSSIAN_JAMMER, dep, jammer_pos),
        single=InterferenceSource.at(InterferenceKind.SINGLE_SAMPLE, dep, jammer_pos),
    )


@pytest.fixture(scope="session")
def topology() -> Topology:
    return make_topology()


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def report(label: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

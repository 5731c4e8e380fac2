import numpy as np
import pytest

from hapcap.signals import Origin, SignalProvenance, VibrationSignal


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_signal(samples, rate=100, sid="sig", origin=Origin.IMPORTED):
    return VibrationSignal(
        id=sid,
        samples=np.asarray(samples, dtype=np.float64),
        sample_rate=rate,
        provenance=SignalProvenance(origin),
    )


def random_signal(rng, seconds=10.0, rate=100, sid="sig", amplitude=0.9):
    n = int(round(seconds * rate))
    return make_signal(rng.uniform(-amplitude, amplitude, size=n), rate=rate, sid=sid)


@pytest.fixture
def ten_second_signal(rng):
    return random_signal(rng, sid="base")

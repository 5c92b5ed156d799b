import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from streamscale.capacity import MetricSample, RegressionState


@pytest.fixture
def line_state():
    """RegressionState fitted on two exact points of tput = 60000 * cpu."""
    state = RegressionState()
    state.update(0.5, 30_000.0)
    state.update(0.8, 48_000.0)
    return state


def make_samples(pairs, timestamp=60.0):
    """dict of worker_id -> MetricSample from (cpu, throughput) pairs."""
    return {
        f"w{i}": MetricSample(f"w{i}", timestamp, cpu, tput)
        for i, (cpu, tput) in enumerate(pairs)
    }


def sine_trace(offset, amplitude, periods, duration):
    t = np.arange(duration)
    return np.rint(offset + amplitude * np.sin(2 * np.pi * periods * t / duration)).astype(
        np.int64
    )

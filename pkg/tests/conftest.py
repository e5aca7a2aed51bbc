"""Shared fixtures: tiny deterministic phantoms and masks."""

import numpy as np
import pytest

from linetrace.synth import PhantomSpec, generate_phantom

from lt_helpers import ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def phantom_spec():
    return PhantomSpec(size=(512, 512), distractor_count=0, noise_sigma=200.0,
                       seed=2024)


@pytest.fixture(scope="session")
def sample(phantom_spec):
    return generate_phantom(phantom_spec, index=0)


@pytest.fixture(scope="session")
def quiet_spec():
    """Noise-free phantom spec, for properties that need a clean image."""
    return PhantomSpec(size=(512, 512), distractor_count=0, noise_sigma=0.0,
                       seed=77)


@pytest.fixture(scope="session")
def quiet_sample(quiet_spec):
    return generate_phantom(quiet_spec, index=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(123)

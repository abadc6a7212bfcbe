import logging

import numpy as np
import pytest

from sixstate.protocol import AttackModel, ProtocolKind, SessionConfig, session_arrays
from sixstate.rng import RandomStream

LARGE_SESSION = 100_000


@pytest.fixture(scope="session")
def six_state_clean():
    return session_arrays(SessionConfig(n_pulses=LARGE_SESSION, seed=11))


@pytest.fixture(scope="session")
def six_state_attacked():
    return session_arrays(
        SessionConfig(n_pulses=LARGE_SESSION, seed=12, attack=AttackModel.INTERCEPT_RESEND)
    )


@pytest.fixture(scope="session")
def bb84_attacked():
    return session_arrays(
        SessionConfig(
            n_pulses=LARGE_SESSION,
            seed=13,
            protocol=ProtocolKind.BB84,
            attack=AttackModel.INTERCEPT_RESEND,
        )
    )


@pytest.fixture
def rng():
    return RandomStream(20240611)


@pytest.fixture
def np_rng():
    """Source of randomized test inputs, separate from the simulator's streams."""
    return np.random.default_rng(7)


@pytest.fixture
def clean_env(monkeypatch):
    for name in (
        "SIXSTATE_SEED",
        "SIXSTATE_PULSES",
        "SIXSTATE_WORKERS",
        "SIXSTATE_Z_MAX",
        "SIXSTATE_LOG_LEVEL",
        "SIXSTATE_LOG_FILE",
    ):
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


@pytest.fixture
def propagating_logs(monkeypatch):
    """Let caplog see records from the package logger."""
    monkeypatch.setattr(logging.getLogger("sixstate"), "propagate", True)


@pytest.fixture(autouse=True)
def reset_package_logger():
    """Undo handlers installed by ``setup_logging`` inside a test."""
    yield
    logger = logging.getLogger("sixstate")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(logging.NOTSET)
    logger.propagate = True

import numpy as np
import pytest
from hypothesis import settings

from hanatomy import gen_gaussian_mixture, init_mlp, sgd_train, TrainConfig

settings.register_profile("hanatomy", deadline=None, max_examples=40)
settings.load_profile("hanatomy")


@pytest.fixture(scope="session")
def small_data():
    return gen_gaussian_mixture(3, 6, 12, separation=3.0, noise_scale=0.5, seed=11)


@pytest.fixture(scope="session")
def small_model(small_data):
    return init_mlp((6, 8, 3), "relu", seed=5)


@pytest.fixture(scope="session")
def small_trained(small_data, small_model):
    cfg = TrainConfig(initial_lr=0.1, epochs=40, batch_size=16, weight_decay=5e-3, seed=1)
    model, _ = sgd_train(small_model, small_data, cfg)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = []


@pytest.fixture
def criterion(capsys):
    """Record and print one pass/fail line per acceptance criterion, then assert it."""

    def record(label, ok, detail):
        line = f"[acceptance] criterion {label}: {'PASS' if ok else 'FAIL'} ({detail})"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)

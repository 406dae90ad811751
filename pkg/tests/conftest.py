import pytest

from foal.config import RunConfig, apply_overrides, load_transfer_pair


def tiny_config(*overrides):
    """Small, fast model on the default synthetic corpus."""
    base = [
        "hidden_size=16", "width_dim=4", "distance_dim=8", "span_hidden=16", "pair_hidden=16",
        "selection_split=none", "batch_size=2",
    ]
    return apply_overrides(RunConfig(), base + list(overrides))


@pytest.fixture
def tiny():
    return tiny_config


@pytest.fixture(scope="session")
def synthetic_pair():
    return load_transfer_pair(RunConfig().data)


# acceptance results, printed as one line per criterion at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

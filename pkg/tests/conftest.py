import pytest

from equity_reward.env import EnvConfig, MicroDistrict

PAPER_SEEDS = (42, 0, 1, 123, 456)


@pytest.fixture(scope="session")
def district():
    return MicroDistrict.synthetic()


@pytest.fixture(scope="session")
def short_district():
    return MicroDistrict.synthetic(EnvConfig(horizon=48))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA: dict = {}


def record_criterion(check) -> None:
    """Remember a check's one-line verdict for the end-of-run summary."""
    _CRITERIA[check.criterion] = check.line()
    print(check.line())


@pytest.fixture
def criterion_log():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def learning_study():
    """Five training seeds plus the transfer arms; shared by the slow criteria."""
    from seairl import verify
    runs = [verify.training_run(s) for s in range(5)]
    transfers = [verify.transfer_run(r, verify.training_run(r.seed, preset_name="gail"))
                 for r in runs]
    return {"runs": runs, "transfers": transfers}

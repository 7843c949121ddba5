import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# derandomized so the property tests are reproducible run to run
settings.register_profile(
    "mfsnn",
    derandomize=True,
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("mfsnn")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import acceptance_report

    if acceptance_report.RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, _, line in sorted(acceptance_report.RESULTS):
            terminalreporter.write_line(line)

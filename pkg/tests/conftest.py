import pytest

from sagin_sched.oracle import SmallInstance
from sagin_sched.scenario import default_scenario

# Lines reported by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def config():
    return default_scenario()


def make_inputs(slots, flows, frame=1):
    """FrameInputs from ``[(weight, {route: demand or (sat_hop, airship_hop)}), ...]``.

    Demands must divide 720720 (any integer up to 16 does) so the bit
    bookkeeping reproduces them exactly.
    """
    weights = {i: w for i, (w, _) in enumerate(flows)}
    demands = {i: dict(d) for i, (_, d) in enumerate(flows)}
    return SmallInstance(slots, weights, demands).to_frame_inputs(frame)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

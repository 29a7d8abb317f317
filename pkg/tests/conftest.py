import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from radrobust.phantom import PhantomSpec, ScannerProfile, SequenceParams  # noqa: E402

# coarser in-plane sampling keeps workflow tests fast
FAST_SEQUENCE = {"te": 100, "tr": 5000, "pixel_spacing": [1.2, 1.2], "fov": [320, 320], "mode": "2D"}


@pytest.fixture(scope="session")
def spec():
    return PhantomSpec()


@pytest.fixture(scope="session")
def fast_seq():
    return SequenceParams.from_dict(FAST_SEQUENCE)


@pytest.fixture(scope="session")
def scanner():
    return ScannerProfile("A", gain=1000.0, noise_sigma=4.7)


@pytest.fixture
def fast_config():
    return {
        "seed": 7,
        "sequence": dict(FAST_SEQUENCE),
        "scanners": [
            {"name": "A", "gain": 1000.0, "noise_sigma": 4.7},
            {"name": "B", "gain": 800.0, "noise_sigma": 9.7, "bias_field_amplitude": 0.1},
        ],
        "te_grid": {"te_values": [80, 100, 120]},
    }


# one line per acceptance criterion, printed after the run
CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")

import os
import tempfile

import pytest

# keep kernel caches out of the user's home during tests
os.environ.setdefault("BOSATOM_CACHE_DIR", tempfile.mkdtemp(prefix="bosatom-cache-"))


@pytest.fixture(scope="session")
def hydrogen_grid():
    from bosatom.grid import build_grid
    return build_grid(16.0, 16.0, 129, 257)


@pytest.fixture(scope="session")
def hydrogen_density(hydrogen_grid):
    import numpy as np
    from bosatom.grid import Density2D
    g = hydrogen_grid
    return Density2D(g, np.exp(-g.radius) / (8.0 * np.pi))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion_report():
    def record(number: int, passed: bool, text: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)

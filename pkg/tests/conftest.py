import pytest

from evflow.fespace import enumerate_dofs
from evflow.mesh import build_multiblock, build_subdomain_grid

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def two_block_23():
    """Left 2x2 on [0, 1/2] x [0, 1], right 3x3 on [1/2, 1] x [0, 1]."""
    return build_multiblock(
        [
            build_subdomain_grid(0.0, 0.5, 0.0, 1.0, 2, 2, id=1),
            build_subdomain_grid(0.5, 1.0, 0.0, 1.0, 3, 3, id=2),
        ]
    )


@pytest.fixture
def two_block_23_dofs(two_block_23):
    return enumerate_dofs(two_block_23)

import pytest

from icxtest import Table2xC


@pytest.fixture
def worked_table() -> Table2xC:
    """A 2x4 table used across modules; weights (3, 2, 1) go with it."""
    return Table2xC.from_rows((1, 6, 19, 4), (0, 4, 11, 8))


@pytest.fixture
def worked_weights():
    return (3.0, 2.0, 1.0)

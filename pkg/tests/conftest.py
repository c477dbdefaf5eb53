import pytest

from varqsim import counters


@pytest.fixture(autouse=True)
def fresh_counters():
    """Tests share one global counter object; isolate them."""
    counters.reset()
    yield
    counters.reset()

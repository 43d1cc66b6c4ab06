import numpy as np
import pytest

from shrinknet import tensor as T

from oracles import central_diff, rel_err  # noqa: F401  (re-export for tests)


@pytest.fixture
def f64():
    """Run a test in 64-bit mode (finite-difference checks need it)."""
    T.set_default_dtype(np.float64)
    yield
    T.set_default_dtype(np.float32)

import numpy as np
import pytest

CYCLE3 = np.array([[1.0, 0.0, 5.0], [5.0, 1.0, 0.0], [0.0, 5.0, 1.0]])


@pytest.fixture
def cyc3():
    return CYCLE3.copy()

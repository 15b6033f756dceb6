import numpy as np
import pytest

from fluctop.kinetics import LatticeState, Periodic, RandomStream, RateModel


@pytest.fixture
def model_small():
    return RateModel.quadratic(50)


def make_flat_state(lattice_size: int, k: int, boundary=None) -> LatticeState:
    occ = np.full(lattice_size, k, dtype=np.int64)
    return LatticeState(occ, boundary if boundary is not None else Periodic())


@pytest.fixture
def stream():
    return RandomStream.from_key(12345, 0, 0)

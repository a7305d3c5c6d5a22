import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from hamflow.families import HamiltonianFamily


@pytest.fixture(scope="session")
def example1():
    from hamflow.families import example_family
    return example_family(1)


@pytest.fixture(scope="session")
def example2():
    from hamflow.families import example_family
    return example_family(2)


@pytest.fixture(scope="session")
def control2():
    from hamflow.families import compact_control_family
    return compact_control_family(2)


def make_block_constant_family():
    """Constant n = 2 family with J A = diag(-1, -2, 1, 2).

    The stable space span{e1, e2} is 2-dimensional and Lagrangian, which
    exercises the frame code beyond the n = 1 built-ins.
    """
    a0 = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 2.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 2.0, 0.0, 0.0],
    ])

    def a_eval(theta, t):
        shape = np.broadcast_shapes(theta.shape[:-1], np.shape(t))
        return np.broadcast_to(a0, shape + (4, 4)).copy()

    def a_limit(theta):
        return np.broadcast_to(a0, theta.shape[:-1] + (4, 4)).copy()

    def da_eval(theta, direction, t):
        shape = np.broadcast_shapes(theta.shape[:-1], np.shape(t))
        return np.zeros(shape + (4, 4))

    return HamiltonianFamily(n=2, k=1, a_eval=a_eval, a_plus_eval=a_limit,
                             a_minus_eval=a_limit, da_eval=da_eval,
                             name="block-constant", decay_rate=1e-9)


@pytest.fixture(scope="session")
def block_family():
    return make_block_constant_family()

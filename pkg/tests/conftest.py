import numpy as np
import pytest

from mcbn.mathcore import rng_stream


@pytest.fixture
def rng():
    return rng_stream(1234, 0)


def std_cdf(x):
    from scipy.special import ndtr
    return ndtr(x)

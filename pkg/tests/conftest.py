import numpy as np
import pytest

from strfkit.gaborkit import GaborParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_params(rng, n=None, sigma_lo=0.5, sigma_hi=5.0):
    """GaborParams away from the clamp boundary so FD perturbation is safe.

    Returns one instance by default, a list when n is given.
    """
    out = [
        GaborParams(
            sigma_t=rng.uniform(sigma_lo, sigma_hi),
            sigma_f=rng.uniform(sigma_lo, min(sigma_hi, 3.0)),
            F=rng.uniform(0.01, 0.69),
            gamma=rng.uniform(-np.pi, np.pi),
        )
        for _ in range(n or 1)
    ]
    return out[0] if n is None else out

import numpy as np
import pytest

from tcprofile import _accel


@pytest.fixture(params=["numba", "numpy"])
def accel_path(request, monkeypatch):
    """Run a test once through the numba kernels and once through the numpy twins."""
    if request.param == "numba" and not _accel.NUMBA_OK:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_accel, "_DISABLED", request.param == "numpy")
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

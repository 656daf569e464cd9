import pytest

import geoseq.kernels as kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test under each available kernel backend."""
    with kernels.use(request.param):
        yield request.param

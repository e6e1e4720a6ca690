import warnings

import pytest

from kubolab.kubo_bloch import NearBandCrossing


@pytest.fixture(autouse=True)
def _quiet_crossings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearBandCrossing)
        yield

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rqamon._kernels import warm_up


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    # Pay the jit compilation cost once, up front, so individual tests
    # that time things are not skewed by it.
    warm_up()

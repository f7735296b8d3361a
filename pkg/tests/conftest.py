import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tumorlab import make_phantom


@pytest.fixture(scope="session")
def small_phantom():
    """48^3 liver phantom with smooth HU variation and no vessels."""
    return make_phantom((48, 48, 48), liver_margin=5)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

import os

# No audit file from test runs; set before any project module imports logger.
os.environ["LIBREDENSE_AUDIT_LOG"] = ""
os.environ.pop("LIBREDENSE_SEED", None)

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)

from __future__ import annotations

import sys
from pathlib import Path


# Ensure tests run against this repo's source tree (src-layout), not an unrelated
# globally installed `softqd` package.
_REPO_ROOT = Path(__file__).resolve().parent.parent
_SRC = _REPO_ROOT / "src"
if str(_SRC) not in sys.path:
    sys.path.insert(0, str(_SRC))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from softqd.domains.linear_projection import LinearProjectionProblem  # noqa: E402
from softqd.engine.population import make_rng  # noqa: E402


@pytest.fixture
def small_lp() -> LinearProjectionProblem:
    """LP problem small enough for finite-difference and end-to-end tests."""
    return LinearProjectionProblem(solution_dim=16, behavior_dim=4)


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(12345)

from __future__ import annotations

import pytest

from junctionlab.geometry import JunctionConfig, build_junction_mesh, build_limit_mesh
from junctionlab.problem_data import ProblemData

REFERENCE_DATA = dict(f="1", g="x2*(x2+1)", d="0.25*(x2+1)")


@pytest.fixture
def reference_data():
    return ProblemData.from_strings(**REFERENCE_DATA)


@pytest.fixture(scope="session")
def small_junction():
    return build_junction_mesh(JunctionConfig(a=1, l=1, h=0.5, N=2, nx_rod=4, ny_rod=8, ny_body=8))


@pytest.fixture(scope="session")
def small_limit():
    return build_limit_mesh(JunctionConfig(a=1, l=1, h=0.5, N=2, nx_rod=4, ny_rod=4, ny_body=4))

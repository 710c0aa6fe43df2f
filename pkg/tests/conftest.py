from __future__ import annotations

import pytest

from nonhyp.horseshoe import builtin_homoclinic_system
from nonhyp.maps import builtin_map


@pytest.fixture(scope="session")
def model():
    return builtin_map("model")


@pytest.fixture(scope="session")
def linear():
    return builtin_map("linear")


@pytest.fixture(scope="session")
def homoclinic():
    return builtin_homoclinic_system()

from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid64():
    from annulus_calabi.field import AnnulusGrid
    return AnnulusGrid(64, 64)


@pytest.fixture(scope="session")
def grid128():
    from annulus_calabi.field import AnnulusGrid
    return AnnulusGrid(128, 128)


@pytest.fixture(scope="session")
def grid256():
    from annulus_calabi.field import AnnulusGrid
    return AnnulusGrid(256, 256)

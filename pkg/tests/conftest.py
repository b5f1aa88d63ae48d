"""
Shared fixtures for the GeoNarrate test suite.
"""

import os
import random

import pytest
from hypothesis import HealthCheck, settings

from GeoNarrate.file_handler import FileHandler

from helpers import sample_path

# Slow CI runners trip the 'too_slow' health check on the closure-heavy properties.
settings.register_profile("ci", suppress_health_check=(HealthCheck.too_slow,), deadline=None)
if "CI" in os.environ:
    settings.load_profile("ci")

SEED = int(os.environ.get('GEONARRATE_SEED', '20240101'))


@pytest.fixture
def rng():
    """Seeded random generator; override the seed with GEONARRATE_SEED."""
    return random.Random(SEED)


@pytest.fixture
def four_sources():
    return FileHandler.read_blocks(sample_path('four_sources_network.txt'))[0].to_network()


@pytest.fixture
def dubai():
    return FileHandler.read_blocks(sample_path('dubai_network.txt'))[0].to_network()


@pytest.fixture
def park_duplicates():
    return FileHandler.read_blocks(sample_path('park_duplicates_network.txt'))[0].to_network()

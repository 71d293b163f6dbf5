from __future__ import annotations

import functools

import pytest

from hybroute.harness.instances import generate_instance
from hybroute.harness.pipeline import build_pipeline


@functools.lru_cache(maxsize=None)
def instance(seed: int, n: int):
    return generate_instance(seed, n)


@functools.lru_cache(maxsize=None)
def pipeline(seed: int, n: int, mode: str = "congest", transport: str = "direct"):
    return build_pipeline(instance(seed, n).udg(), mode=mode, transport=transport)


@pytest.fixture(scope="session")
def small():
    """A ~120-node accepted instance with its full pipeline."""
    return pipeline(7, 120)

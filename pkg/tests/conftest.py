from functools import lru_cache

import pytest
from hypothesis import settings

from toricsoliton import Schedule, builtin_surface, run

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@lru_cache(maxsize=None)
def converged(surface: str, N: int, tol: float = 1e-9):
    """Converged flow (linearly implicit scheme), cached for the whole session."""
    p = builtin_surface(surface)
    state, report = run(p, N, Schedule(tol=tol, max_steps=80, scheme="implicit"))
    assert report.converged
    return p, state, report


@pytest.fixture(scope="session")
def flows():
    return converged

"""Shared fixtures.

The full manifold build is expensive (roughly half a minute) and several
modules need it, so it is built once per session and its wall time kept
for the timing checks.
"""
import time

import pytest

from driftplan.vehicle import VehicleParams, TireParams
from driftplan.esm import (build_manifold, default_delta_values,
                           default_lambda_values, sweep_inputs, ManifoldPair)


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


@pytest.fixture(scope="session")
def tires():
    # gravel Magic Formula set
    return TireParams(b=1.5289, c=1.0901, d=0.6, e=-0.95084)


@pytest.fixture(scope="session")
def manifold_build(params, tires):
    """(manifold, sweep, wall_seconds) for the default gravel sweep."""
    t0 = time.perf_counter()
    sweep = sweep_inputs(default_delta_values(), default_lambda_values(),
                         params, tires)
    manifold = build_manifold(sweep.points, params, tires)
    wall = time.perf_counter() - t0
    return manifold, sweep, wall


@pytest.fixture(scope="session")
def manifold(manifold_build):
    return manifold_build[0]


@pytest.fixture(scope="session")
def pair(manifold):
    return ManifoldPair.from_ccw(manifold)

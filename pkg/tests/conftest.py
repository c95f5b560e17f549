"""
Pytest configuration and fixtures for witsopt tests.

This module provides the model constants used throughout the suite and a
deterministic sampler of strictly feasible correlation points.
"""

import math

import numpy as np
import pytest

from witsopt import CorrelationPoint, ModelParams, objective_terms


@pytest.fixture
def params() -> ModelParams:
    """Reference constants Q = 0.8, N = 0.1 (time-sharing window is nonempty)."""
    return ModelParams(Q=0.8, N=0.1)


@pytest.fixture
def narrow_params() -> ModelParams:
    """Constants with Q <= 4N, where the time-sharing window is empty."""
    return ModelParams(Q=0.4, N=0.15)


@pytest.fixture
def interior_point() -> CorrelationPoint:
    """Analytic optimum at P = 0.3 for (Q, N) = (0.8, 0.1)."""
    rho3 = -0.4 / math.sqrt(0.24)
    return CorrelationPoint(
        rho2=math.sqrt(0.5), rho3=rho3, rho4=0.0, rho5=math.sqrt(1.0 - rho3 * rho3)
    )


def sample_feasible_points(
    params: ModelParams, count: int, seed: int, margin: float = 0.95
) -> list[tuple[CorrelationPoint, float]]:
    """
    Draw (point, P) pairs strictly inside the Case-2 region.

    rho2^2 + rho4^2 and rho3^2 + rho5^2 stay below margin, so the encoder
    covariance is positive definite, and T2 < 0.
    """
    rng = np.random.default_rng(seed)
    samples: list[tuple[CorrelationPoint, float]] = []
    while len(samples) < count:
        rho2, rho3, rho4, rho5 = rng.uniform(-1.0, 1.0, size=4)
        P = float(rng.uniform(0.05, 2.0))
        if rho2**2 + rho4**2 > margin or rho3**2 + rho5**2 > margin:
            continue
        point = CorrelationPoint(float(rho2), float(rho3), float(rho4), float(rho5))
        if objective_terms(point, P, params).T2 >= -1e-6:
            continue
        samples.append((point, P))
    return samples


@pytest.fixture
def feasible_points(params) -> list[tuple[CorrelationPoint, float]]:
    """1000 strictly feasible (point, P) pairs for (Q, N) = (0.8, 0.1)."""
    return sample_feasible_points(params, count=1000, seed=20240601)


@pytest.fixture
def feasible_sampler():
    """The feasible-point sampler, for tests that need other constants or seeds."""
    return sample_feasible_points

"""Shared fixtures and parameter sets for the test suite."""

import dataclasses

import pytest

from mstrade.model import MarketParams

# Reference parameter set used throughout: moderate discount, strong risk
# aversion, unit cost, small impact, unit signal dynamics.
BASE = MarketParams(rho=0.2, gamma=5.0, cost_k=1.0, lam=0.1, beta=0.1, kappa=1.0, eta=1.0)

SIGMA_GRID = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)


def make_params(**overrides) -> MarketParams:
    return dataclasses.replace(BASE, **overrides)


@pytest.fixture
def params() -> MarketParams:
    return BASE

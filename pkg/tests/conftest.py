import numpy as np
import pytest

from mixfeed import DrConfig, OuterConfig, PeriodicGrid, period_guess, solve_mixed, van_der_pol
from mixfeed.oracle import extract_limit_cycle, integrate_vdp
from mixfeed.systems import default_lambda, initial_guess_ramp

VDP_KS = (0.0002, 1.5, 10.0)
_solutions = {}
_oracles = {}


def vdp_config(K, adapt=True, **kw):
    return OuterConfig(dr=DrConfig(lam=default_lambda(K)), period_adaptation=adapt, **kw)


def solve_vdp(K, adapt=True):
    key = (K, adapt)
    if key not in _solutions:
        grid = PeriodicGrid(period_guess(K), 5000)
        _solutions[key] = solve_mixed(van_der_pol(K), initial_guess_ramp(grid), vdp_config(K, adapt))
    return _solutions[key]


def oracle_cycle(K, step=1e-4):
    key = (K, step)
    if key not in _oracles:
        _oracles[key] = extract_limit_cycle(integrate_vdp(K, step=step))
    return _oracles[key]


@pytest.fixture(params=VDP_KS, ids=lambda k: f"K={k:g}")
def vdp_solution(request):
    return request.param, solve_vdp(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

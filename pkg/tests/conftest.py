import pytest

from infoputs.dominance import build_thresholds, constants_from_thresholds
from infoputs.game import canonical_game, discounted_mean
from infoputs.policy import PolicyParams, PutsPolicy, make_policy


@pytest.fixture(scope="session")
def g1():
    return canonical_game()


@pytest.fixture(scope="session")
def th(g1):
    return build_thresholds(g1, 200)


@pytest.fixture(scope="session")
def consts(th):
    """Default constants: safety factor 0.99 on C."""
    return constants_from_thresholds(th, 0.99)


@pytest.fixture(scope="session")
def exact_consts(th):
    """C = 2/3, delta_bar = 1: the hand-checkable numbers."""
    return constants_from_thresholds(th, 1.0)


@pytest.fixture(scope="session")
def params(consts):
    return PolicyParams(consts)


@pytest.fixture(scope="session")
def exact_params(exact_consts):
    return PolicyParams(exact_consts)


@pytest.fixture(scope="session")
def policy(params, th):
    return PutsPolicy(params, th)


@pytest.fixture(scope="session")
def exact_policy(exact_params, th):
    return PutsPolicy(exact_params, th)


@pytest.fixture(scope="session")
def alt(params, th):
    return lambda kind, **kw: make_policy(kind, params, th, **kw)


@pytest.fixture(scope="session")
def phi():
    return discounted_mean(1.0)

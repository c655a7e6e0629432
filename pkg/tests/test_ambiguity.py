import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddplan.ambiguity import (AmbiguityParams, Scenario, SupportCapExceeded, enumerate_support, hardening_weight,
                              mu_bar, support_size, worst_distribution_oracle, worst_expectation_dual)


@pytest.mark.parametrize("k, size", [(0, 1), (1, 4), (2, 7), (3, 8)])
def test_support_sizes(k, size):
    assert len(enumerate_support(3, k)) == size == support_size(3, k)


def test_support_order():
    s = enumerate_support(3, 2)
    assert [x.outages for x in s] == [(), (0,), (1,), (2,), (0, 1), (0, 2), (1, 2)]
    assert s[1].availability.tolist() == [0.0, 1.0, 1.0]
    assert s[4].outage_count == 2


def test_support_errors():
    with pytest.raises(SupportCapExceeded, match="lower K"):
        enumerate_support(30, 3, cap=100)
    with pytest.raises(ValueError):
        enumerate_support(3, 4)


def _params(beta, gamma=0.0012):
    beta = np.atleast_1d(np.asarray(beta, float))
    return AmbiguityParams(k=1, gamma=np.full(beta.size, gamma), beta={"d": beta})


def test_mu_bar_examples(toy6):
    p = _params(0.9 / 500.0)
    assert mu_bar(p, "d", [500.0])[0] == pytest.approx(0.9012)
    assert mu_bar(p, "d", [500.0], [0.0])[0] == pytest.approx(0.0012)
    assert mu_bar(_params(0.0), "d", [123.0]).tolist() == [0.0012, 0.0]
    # underground option on a toy6 line
    w = hardening_weight(toy6, {"L2": "underground", "L5": "coating"})
    assert w[toy6.line_index["L2"]] == 0.0
    assert w[toy6.line_index["L5"]] == pytest.approx(0.4)
    with pytest.raises(ValueError):
        hardening_weight(toy6, {"L1": "coating"})


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 500), st.floats(0, 500), st.floats(0, 1), st.floats(0, 1))
def test_mu_bar_monotone(f1, f2, e1, e2):
    p = _params(0.0018)
    lo, hi = sorted([f1, f2])
    assert mu_bar(p, "d", [lo])[0] <= mu_bar(p, "d", [hi])[0] + 1e-15
    weak, strong = sorted([e1, e2])
    assert mu_bar(p, "d", [hi], [1 - strong])[0] <= mu_bar(p, "d", [hi], [1 - weak])[0] + 1e-15


def _two_line():
    return enumerate_support(2, 1), [0.0, 100.0, 40.0]


def test_oracle_reference_instance():
    scen, h = _two_line()
    q, val = worst_distribution_oracle(h, [0.2, 0.5, 0, 0], scen)
    assert val == pytest.approx(40.0)
    np.testing.assert_allclose(q, [0.3, 0.2, 0.5], atol=1e-9)


def test_oracle_degenerate_bounds():
    scen, h = _two_line()
    assert worst_distribution_oracle(h, [1, 1, 0, 0], scen)[1] == pytest.approx(100.0)
    q, val = worst_distribution_oracle(h, [0, 0, 0, 0], scen)
    assert val == pytest.approx(0.0)
    assert q[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        worst_distribution_oracle(h, [-0.1, 0, 0, 0], scen)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_primal_dual_agree(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    scen = enumerate_support(n, int(rng.integers(0, 3)) % (n + 1))
    h = rng.uniform(0, 100, len(scen))
    mu = np.concatenate([rng.uniform(0, 1, n), np.zeros(n)])
    _, primal = worst_distribution_oracle(h, mu, scen)
    psi, phi, dual = worst_expectation_dual(h, mu, scen)
    assert dual == pytest.approx(primal, rel=1e-6, abs=1e-9)
    assert (psi >= -1e-12).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_oracle_monotone_in_mu(seed):
    rng = np.random.default_rng(seed)
    scen = enumerate_support(3, 2)
    h = rng.uniform(0, 10, len(scen))
    mu = np.concatenate([rng.uniform(0, 0.5, 3), np.zeros(3)])
    bump = mu.copy()
    bump[rng.integers(3)] += rng.uniform(0, 0.5)
    assert worst_distribution_oracle(h, mu, scen)[1] <= worst_distribution_oracle(h, bump, scen)[1] + 1e-9


def test_scenario_key():
    assert Scenario(3).key() == "-"
    assert Scenario(3, (0, 2)).key() == "0,2"

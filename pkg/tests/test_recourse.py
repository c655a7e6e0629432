import numpy as np
import pytest

from ddplan import recourse
from ddplan.ambiguity import Scenario, enumerate_support
from ddplan.recourse import (CutCertificateError, RecourseCache, build_cut, find_worst_scenario, psi_deviation,
                             solve_recourse)
from gridlib import grid, two_bus
from oracles import recourse_value

Z_DDU = np.array([1, 1, 0, 1, 1, 0, 0, 1.0])
Z_BASE = np.array([1, 1, 1, 1, 1, 0, 0, 0.0])


def test_no_failure_equals_normal_operation(toy6):
    res = solve_recourse(toy6, "normal", Z_BASE, Scenario(8))
    assert res.value == pytest.approx(recourse_value(toy6, "normal", Z_BASE, np.ones(8)), rel=1e-9)
    rd = toy6.day("normal")
    served = rd.demand.sum(axis=0).mean()
    assert res.value == pytest.approx(toy6.costs.energy * served, rel=1e-9)


def test_radial_outage_sheds_load():
    g = grid(two_bus(demand=100.0))
    res = solve_recourse(g, "d", [1.0], Scenario(1, (0,)))
    assert res.value == pytest.approx(g.costs.p_deficit * 100.0)
    assert res.dispatch[0, 1] == pytest.approx(100.0)


@pytest.mark.parametrize("z", [Z_BASE, Z_DDU])
def test_toy6_support_matches_oracle(toy6, z):
    for s in enumerate_support(8, 1):
        got = solve_recourse(toy6, "fire", z, s).value
        assert got == pytest.approx(recourse_value(toy6, "fire", z, s.availability), rel=1e-7, abs=1e-9)


def test_rejects_fractional_topology(toy6):
    with pytest.raises(ValueError):
        solve_recourse(toy6, "fire", np.full(8, 0.5), Scenario(8))


def test_cut_tight_at_construction(toy6):
    for s in enumerate_support(8, 1):
        res = solve_recourse(toy6, "fire", Z_DDU, s)
        cut = build_cut(res)
        assert cut.value(Z_DDU) == pytest.approx(res.value, rel=1e-6, abs=1e-6)


def test_cut_valid_elsewhere(toy6):
    rng = np.random.default_rng(11)
    for _ in range(15):
        s = Scenario(8, (int(rng.integers(8)),))
        z0, z1 = (rng.integers(0, 2, 8).astype(float) for _ in range(2))
        cut = build_cut(solve_recourse(toy6, "fire", z0, s))
        assert cut.value(z1) <= solve_recourse(toy6, "fire", z1, s).value + 1e-6


def test_beta_free_cut_reused_under_risk(toy6):
    s = Scenario(8, (1,))
    cut = build_cut(solve_recourse(toy6.without_ddu(), "fire", Z_BASE, s))
    assert cut.value(Z_DDU) <= solve_recourse(toy6.with_beta_scaled(3.0), "fire", Z_DDU, s).value + 1e-6


def test_tampered_certificate_rejected(toy6):
    res = solve_recourse(toy6, "fire", Z_BASE, Scenario(8, (0,)))
    res.alpha0 += 1.0
    with pytest.raises(CutCertificateError):
        build_cut(res)


def test_cache_retries_with_tight_tolerances(toy6, monkeypatch):
    calls = []
    real = recourse.solve_recourse

    def flaky(grid, day, z, scen, options):
        res = real(grid, day, z, scen, options)
        calls.append(options.feasibility_tol)
        if len(calls) == 1:
            res.alpha0 += 5.0
        return res

    monkeypatch.setattr(recourse, "solve_recourse", flaky)
    cache = RecourseCache(toy6)
    res = cache.get("fire", Z_BASE, Scenario(8, (2,)))
    assert len(calls) == 2 and calls[1] < calls[0]
    build_cut(res)
    cache.get("fire", Z_BASE, Scenario(8, (2,)))
    assert cache.solves == 1


def test_worst_scenario_without_penalty_is_argmax(toy6):
    support = enumerate_support(8, 1)
    s, res, score = find_worst_scenario(toy6, "fire", Z_BASE, np.zeros(16), k=1)
    values = [recourse_value(toy6, "fire", Z_BASE, x.availability) for x in support]
    assert score == pytest.approx(max(values), rel=1e-7)
    assert s == support[int(np.argmax(values))]


def test_worst_scenario_penalty_dominance(toy6):
    psi = np.zeros(16)
    psi[0] = 1e6
    s, _, _ = find_worst_scenario(toy6, "fire", Z_BASE, psi, k=1)
    assert 0 not in s.outages


def test_ties_keep_earliest(toy6):
    # opening L1 sheds everything below it, so every outage ties at the shed-all cost
    z = Z_BASE.copy()
    z[0] = 0.0
    z[4] = 0.0
    s, _, _ = find_worst_scenario(toy6, "fire", z, np.zeros(16), k=1)
    assert s.outages == ()


def test_parallel_search_same_answer(toy6):
    a = find_worst_scenario(toy6, "fire", Z_BASE, np.zeros(16), k=1)
    b = find_worst_scenario(toy6, "fire", Z_BASE, np.zeros(16), k=1, workers=4)
    assert a[0] == b[0] and a[2] == pytest.approx(b[2])


def test_psi_deviation():
    psi = np.arange(6, dtype=float)
    assert psi_deviation(psi, Scenario(3, (1,))) == pytest.approx(1.0 - 4.0)

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddplan.master import InvestmentPlan, TopologyDecision
from ddplan.simulate import MCConfig, cvar, evaluate_plan, failure_probabilities, reliability_indices, year_expansion
from gridlib import grid, two_bus


def test_cvar_examples():
    assert cvar([7.0] * 40) == 7.0
    assert cvar(range(1, 101), 0.95) == pytest.approx(98.0)
    with pytest.raises(ValueError):
        cvar([])


def test_cvar_two_point():
    rng = np.random.default_rng(5)
    x = np.where(rng.random(500) < 0.1, 10.0, 1.0)
    # the worst 25 draws all come from the 10.0 atom whenever at least 25 of them occur
    assert (x == 10.0).sum() >= 25
    assert cvar(x, 0.95) == 10.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200))
def test_cvar_not_below_mean(xs):
    assert cvar(xs) >= np.mean(xs) - 1e-9 * max(1.0, np.abs(xs).max())


def test_indices_constructed_trace():
    # two buses, weight 1 each, bus 2 unserved for three consecutive hours once a year
    trace = np.zeros((365, 24, 2), dtype=bool)
    trace[100, 5:8, 1] = True
    saidi, saifi = reliability_indices(trace, [1.0, 1.0])
    assert saidi == 1.5
    assert saifi == 0.5


def test_indices_split_events_and_period_length():
    trace = np.zeros((2, 4, 1), dtype=bool)
    trace[0, [0, 2, 3], 0] = True
    trace[1, 0, 0] = True
    saidi, saifi = reliability_indices(trace, [2.0], hours_per_period=6.0)
    assert saidi == 24.0
    assert saifi == 3.0


def _two_bus_plan(g):
    return InvestmentPlan(), TopologyDecision({"d": np.ones(g.n_lines)}, {"d": np.zeros(g.n_lines)})


def test_no_failures_no_deficit():
    g = grid(two_bus(horizon=24, hourly_gamma=0.0))
    plan, topo = _two_bus_plan(g)
    rep = evaluate_plan(g, plan, topo, MCConfig(n_scenarios=5))
    assert rep.mean["deficit_share"] == 0.0 and rep.mean["saidi"] == 0.0 and rep.mean["saifi"] == 0.0


def test_binomial_failed_hours():
    p, hours = 0.01, 8760
    g = grid(two_bus(horizon=24, hourly_gamma=p))
    plan, topo = _two_bus_plan(g)
    rep = evaluate_plan(g, plan, topo, MCConfig(n_scenarios=500, seed=1, persistence="per-hour"))
    sigma = math.sqrt(hours * p * (1 - p) / 500)
    assert abs(rep.mean["failed_line_hours"] - p * hours) <= 3 * sigma
    # every failed hour of the only line is an interrupted hour for the load bus
    assert rep.mean["saidi"] == pytest.approx(rep.mean["failed_line_hours"])


def test_rest_of_day_persistence_extends_outages():
    g = grid(two_bus(horizon=24, hourly_gamma=0.01))
    plan, topo = _two_bus_plan(g)
    a = evaluate_plan(g, plan, topo, MCConfig(n_scenarios=30, seed=2, persistence="per-hour"))
    b = evaluate_plan(g, plan, topo, MCConfig(n_scenarios=30, seed=2, persistence="rest-of-day"))
    assert b.mean["failed_line_hours"] > a.mean["failed_line_hours"]
    # persistence keeps one event per failure day
    assert b.mean["saifi"] <= a.mean["saifi"]


def test_reproducible_and_seed_sensitive():
    g = grid(two_bus(horizon=24, hourly_gamma=0.01))
    plan, topo = _two_bus_plan(g)
    cfg = MCConfig(n_scenarios=10, seed=3)
    r1 = evaluate_plan(g, plan, topo, cfg)
    r2 = evaluate_plan(g, plan, topo, MCConfig(n_scenarios=10, seed=3, workers=3))
    r3 = evaluate_plan(g, plan, topo, MCConfig(n_scenarios=10, seed=4))
    assert r1.records == r2.records
    assert r1.records != r3.records


def test_flow_dependent_probability(toy6, toy6_runs):
    res = toy6_runs["no-ddu"]
    p = failure_probabilities(toy6, res.plan, res.topology)
    fire, normal = p["fire"], p["normal"]
    l2 = toy6.line_index["L2"]
    assert fire[:, l2].max() > 0.5
    assert normal[:, l2].max() < 0.01
    # inactive lines never fail
    assert (fire[:, toy6.line_index["L6"]] == 0).all()


def test_report_invariants_and_files(toy6, toy6_runs, tmp_path):
    res = toy6_runs["ddu"]
    rep = evaluate_plan(toy6, res.plan, res.topology, MCConfig(n_scenarios=20, seed=9))
    for m in ("deficit_share", "saidi", "saifi", "deficit_cost"):
        assert rep.cvar95[m] >= rep.mean[m] - 1e-9
    assert all(0 <= r["deficit_share"] <= 100 for r in rep.records)
    assert rep.investment_cost == res.plan.cost(toy6)["total"]
    rep.save_json(tmp_path / "r.json", {"tag": "x"})
    rep.save_csv(tmp_path / "r.csv")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["tag"] == "x" and doc["n_scenarios"] == 20 and "records" not in doc
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == 20 and float(rows[0]["deficit_share"]) == pytest.approx(rep.records[0]["deficit_share"])


def test_year_expansion(toy6):
    assert year_expansion(toy6) == {"normal": 315, "fire": 50}


def test_config_validation(toy6):
    with pytest.raises(ValueError):
        MCConfig(n_scenarios=0)
    with pytest.raises(ValueError):
        MCConfig(persistence="forever")
    plan = InvestmentPlan()
    with pytest.raises(ValueError, match="lacks days"):
        evaluate_plan(toy6, plan, TopologyDecision({}, {}), MCConfig(n_scenarios=1))

"""Small hand-built grid documents for tests."""

from __future__ import annotations

import copy
import json

from ddplan.grid import bundled_fixture, grid_from_dict


def _sub(bid="1", **kw):
    d = {"id": bid, "is_substation": True, "v_min": 0.9, "v_max": 1.1, "v_ref": 1.0,
         "p_max": 5000.0, "q_min": -5000.0, "q_max": 5000.0, "power_factor": 1.0}
    d.update(kw)
    return d


def _bus(bid, **kw):
    d = {"id": bid, "v_min": 0.9, "v_max": 1.1, "power_factor": 0.95}
    d.update(kw)
    return d


def _line(lid, fr, to, category="existing-fixed", capacity=1000.0, **kw):
    d = {"id": lid, "from_bus": fr, "to_bus": to, "resistance": 0.01, "reactance": 0.02,
         "capacity": capacity, "category": category,
         "z_init": 0 if category.startswith("candidate") else 1, "gamma": 0.0}
    d.update(kw)
    return d


COSTS = {"energy": 0.3, "p_surplus": 1.0, "p_deficit": 2.0, "q_surplus": 0.05, "q_deficit": 0.05}


def two_bus(demand=100.0, horizon=1, weight=8760.0, **line_kw) -> dict:
    return {
        "schema_version": 1, "name": "two-bus", "k_max": 1, "costs": dict(COSTS),
        "buses": [_sub(), _bus("2", power_factor=1.0)],
        "lines": [_line("L1", "1", "2", **line_kw)],
        "days": [{"id": "d", "weight_hours": weight, "horizon": horizon,
                  "demand": {"2": [demand] * horizon}}],
    }


def triangle(candidate=False) -> dict:
    """Three buses in a loop; the closing line is a candidate if requested."""
    close = (_line("L3", "2", "3", "candidate-switchable", line_build_cost=1000.0, switch_action_cost=10.0)
             if candidate else _line("L3", "2", "3", "existing-switchable", z_init=0, switch_action_cost=10.0))
    return {
        "schema_version": 1, "name": "triangle", "k_max": 1, "costs": dict(COSTS),
        "buses": [_sub(), _bus("2"), _bus("3")],
        "lines": [_line("L1", "1", "2", "existing-switchable", gamma=0.001, switch_action_cost=10.0),
                  _line("L2", "1", "3", "existing-switchable", gamma=0.001, switch_action_cost=10.0), close],
        "days": [{"id": "d", "weight_hours": 8760.0, "horizon": 2,
                  "demand": {"2": [80.0, 120.0], "3": [60.0, 90.0]}}],
    }


def radial_tree() -> dict:
    doc = two_bus()
    doc["buses"].append(_bus("3"))
    doc["lines"].append(_line("L2", "2", "3"))
    doc["days"][0]["demand"]["3"] = [50.0]
    return doc


def toy6_doc() -> dict:
    return json.loads(bundled_fixture("toy6").read_text())


def grid(doc: dict):
    return grid_from_dict(copy.deepcopy(doc))

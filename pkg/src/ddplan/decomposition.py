"""Outer-approximation loop between the master and the per-day worst-scenario search."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ambiguity import AmbiguityParams, Scenario, enumerate_support, hardening_weight, mu_bar
from .grid import GridModel
from .master import InvestmentPlan, MasterModel, MasterOptions, TopologyDecision
from .recourse import OptimalityCut, RecourseCache, build_cut, find_worst_scenario

log = logging.getLogger(__name__)

ARCHIVE_VERSION = 1


class ArchiveMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RunOptions:
    tol: float = 1e-4
    max_iter: int = 200
    master: MasterOptions = MasterOptions()
    k: int | None = None
    workers: int = 1
    feas_tol: float = 1e-7
    support_cap: int = 100_000


@dataclass
class IterationRecord:
    index: int
    lower_bound: float
    upper_bound: float
    gap: float
    cuts_added: int
    wall_time_s: float


@dataclass
class PlanResult:
    plan: InvestmentPlan
    topology: TopologyDecision
    objective: float
    lower_bound: float
    upper_bound: float
    converged: bool
    certified: bool
    iterations: list[IterationRecord]
    cuts: list[OptimalityCut]
    costs: dict
    flows_tsp: dict[str, np.ndarray] = field(default_factory=dict)
    fingerprint: str = ""

    @property
    def gap(self) -> float:
        return relative_gap(self.upper_bound, self.lower_bound)


def relative_gap(ub: float, lb: float, eps: float = 1e-9) -> float:
    return (ub - lb) / max(abs(ub), eps)


def _initial_topology(grid: GridModel) -> np.ndarray:
    return np.array([float(ln.z_init) if ln.is_existing else 0.0 for ln in grid.lines])


def run(grid: GridModel, params: AmbiguityParams | None = None, options: RunOptions = RunOptions(),
        warm_cuts: Sequence[OptimalityCut] = ()) -> PlanResult:
    if not options.tol > 0:
        raise ValueError("tolerance must be positive")
    params = params or AmbiguityParams.from_grid(grid, options.k)
    k = params.k
    support = enumerate_support(grid.n_lines, k, cap=options.support_cap)
    cache = RecourseCache(grid)
    master = MasterModel(grid, params, options.master)
    t0 = time.perf_counter()

    for cut in warm_cuts:
        if cut.day in master.days:
            master.add_cut(cut)
    # seed the no-failure cut of every day at the starting topology
    z0 = _initial_topology(grid)
    for rd in grid.days:
        master.add_cut(build_cut(cache.get(rd.id, z0, support[0]), created_at=0))

    records: list[IterationRecord] = []
    lb, ub = -math.inf, math.inf
    best = None
    converged = False
    for it in range(1, options.max_iter + 1):
        sol = master.solve()
        lb = max(lb, sol.lower_bound)
        added = 0
        ub_cand = sol.investment_cost
        day_terms = {}
        pending = []
        w_beta = hardening_weight(grid, sol.plan.hardening)
        for rd in grid.days:
            z = sol.topology.status[rd.id]
            psi = sol.psi[rd.id]
            scen, res, score = find_worst_scenario(grid, rd.id, z, psi, scenarios=support, cache=cache,
                                                   workers=options.workers)
            dc = sol.day_costs[rd.id]
            # DDU term evaluated directly at the discretized flows the master committed to
            flows = np.where(np.isnan(sol.flows_disc[rd.id]), np.abs(sol.flows_tsp[rd.id]),
                             sol.flows_disc[rd.id])
            ddu_exact = float(psi @ mu_bar(params, rd.id, flows, w_beta))
            ddu_raw = float(psi @ mu_bar(params, rd.id, sol.flows_tsp[rd.id], w_beta))
            day_total = dc["switching"] + dc["imbalance"] + ddu_exact + score
            ub_cand += rd.weight_hours * day_total
            day_terms[rd.id] = {**dc, "ddu_term": ddu_exact, "ddu_term_raw_flow": ddu_raw,
                                "worst_score": score, "worst_scenario": list(scen.outages),
                                "worst_expected": ddu_exact + score}
            if score > sol.varphi[rd.id] + options.feas_tol * max(1.0, abs(score)):
                pending.append(build_cut(res, created_at=it))
        if ub_cand < ub:
            ub = ub_cand
            best = (sol, day_terms)
        for cut in pending:
            added += master.add_cut(cut)
        gap = relative_gap(ub, lb)
        records.append(IterationRecord(it, lb, ub, gap, added, time.perf_counter() - t0))
        log.info("iter %d  LB %.6g  UB %.6g  gap %.3g  cuts %d", it, lb, ub, gap, added)
        if gap <= options.tol:
            converged = True
            break
        if added == 0:
            log.warning("no violated cut but gap %.3g above tolerance", gap)
            break

    sol, day_terms = best
    costs = {
        "investment": sol.plan.cost(grid),
        "days": day_terms,
        "weights": {rd.id: rd.weight_hours for rd in grid.days},
    }
    return PlanResult(
        plan=sol.plan,
        topology=sol.topology,
        objective=ub,
        lower_bound=lb,
        upper_bound=ub,
        converged=converged,
        certified=sol.certified,
        iterations=records,
        cuts=list(master.cuts),
        costs=costs,
        flows_tsp=sol.flows_tsp,
        fingerprint=grid.fingerprint(),
    )


# -- cut archive ------------------------------------------------------------

def cuts_to_dict(cuts: Sequence[OptimalityCut], fingerprint: str) -> dict:
    return {
        "schema_version": ARCHIVE_VERSION,
        "fingerprint": fingerprint,
        "cuts": [
            {"day": c.day, "scenario": list(c.scenario.outages), "n_lines": c.scenario.n_lines,
             "alpha0": c.alpha0, "alpha_z": [float(a) for a in c.alpha_z], "created_at": c.created_at}
            for c in cuts
        ],
    }


def save_cuts(result: PlanResult | Sequence[OptimalityCut], path: str | Path, fingerprint: str | None = None) -> None:
    if isinstance(result, PlanResult):
        cuts, fingerprint = result.cuts, result.fingerprint
    else:
        cuts = list(result)
        if fingerprint is None:
            raise ValueError("fingerprint required when saving a bare cut list")
    Path(path).write_text(json.dumps(cuts_to_dict(cuts, fingerprint)))


def load_cuts(path: str | Path, grid: GridModel) -> list[OptimalityCut]:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != ARCHIVE_VERSION:
        raise ArchiveMismatch(f"unsupported archive version {doc.get('schema_version')!r}")
    if doc.get("fingerprint") != grid.fingerprint():
        raise ArchiveMismatch("cut archive was produced for a different line set")
    out = []
    for c in doc.get("cuts", []):
        alpha_z = np.array(c["alpha_z"], dtype=float)
        if len(alpha_z) != grid.n_lines:
            raise ArchiveMismatch("cut length does not match the grid")
        out.append(OptimalityCut(c["day"], Scenario(grid.n_lines, tuple(c["scenario"])),
                                 float(c["alpha0"]), alpha_z, int(c.get("created_at", 0))))
    return out

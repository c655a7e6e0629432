"""Multiperiod post-contingency operation and the optimality cuts it yields.

For fixed topology ``z`` and availability ``a`` the recourse cost ``H(z, a)``
is an LP whose right-hand side is affine in ``z`` (through the gated rows).
Any optimal dual therefore gives an affine minorant of ``H(., a)`` that is
exact at the topology it was computed for.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ambiguity import Scenario, enumerate_support
from .grid import GridModel
from .opf import build_block
from .solver import DEFAULT_OPTIONS, LinearModel, SolverError, SolverOptions

log = logging.getLogger(__name__)


class CutCertificateError(RuntimeError):
    pass


@dataclass
class RecourseResult:
    day: str
    scenario: Scenario
    z: np.ndarray
    value: float
    # affine certificate built from the LP duals: value = alpha0 + alpha_z . (z)
    alpha0: float
    alpha_z: np.ndarray
    row_duals: np.ndarray = field(repr=False)
    dispatch: np.ndarray | None = field(default=None, repr=False)

    @property
    def certified_value(self) -> float:
        return self.alpha0 + float(self.alpha_z @ self.z)


@dataclass
class OptimalityCut:
    """phi_r + psi_r . (S a_hat*) >= alpha0 + alpha_z . z_r"""

    day: str
    scenario: Scenario
    alpha0: float
    alpha_z: np.ndarray
    created_at: int = 0
    beta_independent: bool = True

    def value(self, z: Sequence[float]) -> float:
        return self.alpha0 + float(self.alpha_z @ np.asarray(z, dtype=float))

    def key(self) -> tuple:
        return (self.day, self.scenario.outages, round(self.alpha0, 9),
                tuple(np.round(self.alpha_z, 9)))


def build_recourse_model(grid: GridModel, day: str, z: Sequence[float], availability: Sequence[float]):
    rd = grid.day(day)
    model = LinearModel(f"recourse[{day}]")
    blocks = [build_block(model, grid, day, t, z_values=z, availability=availability)
              for t in range(rd.horizon)]
    scale = 1.0 / rd.horizon
    for blk in blocks:
        model.add_objective((v, scale * c) for v, c in blk.cost_terms(grid, energy=True))
    return model, blocks


def solve_recourse(grid: GridModel, day: str, topology: Sequence[float], scenario: Scenario,
                   options: SolverOptions = DEFAULT_OPTIONS) -> RecourseResult:
    """H(z, a): hourly-average cost of operating day ``day`` through outage ``scenario``."""
    z = np.asarray(topology, dtype=float)
    if not np.all((z == 0) | (z == 1)):
        raise ValueError("topology must be 0/1 constants")
    a = scenario.availability
    model, blocks = build_recourse_model(grid, day, z, a)
    sol = model.optimize(options)
    if not sol.ok:
        raise SolverError(sol.status, f"recourse {day} {scenario.key()}: {sol.message}")

    # rhs = base + slope * z_l on gated rows; everything else is constant
    rhs = np.array(model.rhs)
    const_rhs = rhs.copy()
    alpha_z = np.zeros(grid.n_lines)
    for blk in blocks:
        for row, li, base, slope in blk.gated:
            const_rhs[row] = base
            alpha_z[li] += sol.row_duals[row] * slope
    lb = np.array(model.lb)
    ub = np.array(model.ub)
    alpha0 = float(sol.row_duals @ const_rhs)
    fin = np.isfinite(lb)
    alpha0 += float(sol.lower_duals[fin] @ lb[fin])
    fin = np.isfinite(ub)
    alpha0 += float(sol.upper_duals[fin] @ ub[fin])
    shed = np.array([[sol.x[v] for v in blk.dp_minus] for blk in blocks])
    return RecourseResult(day, scenario, z, max(sol.objective, 0.0), alpha0, alpha_z,
                          sol.row_duals, dispatch=shed)


def build_cut(result: RecourseResult, created_at: int = 0, rel_tol: float = 1e-6) -> OptimalityCut:
    gap = abs(result.certified_value - result.value)
    if gap > rel_tol * max(1.0, abs(result.value)):
        raise CutCertificateError(
            f"dual certificate {result.certified_value:.10g} vs primal {result.value:.10g} "
            f"for day {result.day}, scenario {result.scenario.key()}")
    return OptimalityCut(result.day, result.scenario, result.alpha0, result.alpha_z.copy(), created_at)


def psi_deviation(psi: np.ndarray, scenario: Scenario) -> float:
    """psi . (S a_hat) with S = [I; -I]."""
    n = scenario.n_lines
    u = scenario.unavailability
    return float((psi[:n] - psi[n:]) @ u)


class RecourseCache:
    """Memo of H(z, a) per day; the LP value does not depend on risk parameters."""

    def __init__(self, grid: GridModel, options: SolverOptions = DEFAULT_OPTIONS):
        self.grid = grid
        self.options = options
        self._store: dict[tuple, RecourseResult] = {}
        self.solves = 0

    def get(self, day: str, z: np.ndarray, scenario: Scenario) -> RecourseResult:
        key = (day, z.astype(np.int8).tobytes(), scenario.outages)
        hit = self._store.get(key)
        if hit is None:
            try:
                hit = solve_recourse(self.grid, day, z, scenario, self.options)
                build_cut(hit)
            except CutCertificateError:
                log.info("retrying recourse %s/%s with tightened tolerances", day, scenario.key())
                hit = solve_recourse(self.grid, day, z, scenario, self.options.tightened())
            self._store[key] = hit
            self.solves += 1
        return hit


def find_worst_scenario(grid: GridModel, day: str, topology: Sequence[float], psi_hat: Sequence[float],
                        k: int | None = None, *, scenarios: Sequence[Scenario] | None = None,
                        cache: RecourseCache | None = None, workers: int = 1,
                        support_cap: int = 100_000):
    """Maximize H(z, a) - psi.(S a_hat) over the support by enumeration.

    Ties go to the fewest outages, then the lexicographically smallest outage
    set, which is the enumeration order.  Returns (scenario, result, score).
    """
    z = np.asarray(topology, dtype=float)
    psi = np.asarray(psi_hat, dtype=float)
    if scenarios is None:
        scenarios = enumerate_support(grid.n_lines, grid.k_max if k is None else k, cap=support_cap)
    cache = cache or RecourseCache(grid)

    def evaluate(s: Scenario) -> RecourseResult:
        return cache.get(day, z, s)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, scenarios))
    else:
        results = [evaluate(s) for s in scenarios]

    best = None
    for s, res in zip(scenarios, results):
        score = res.value - psi_deviation(psi, s)
        # strict comparison keeps the earliest scenario on ties
        if best is None or score > best[2] + 1e-12 * max(1.0, abs(best[2])):
            best = (s, res, score)
    return best

"""Out-of-sample Monte Carlo evaluation of a fixed plan.

Each scenario is one simulated year. Every representative day is replicated
``round(weight_hours / 24)`` times. Line failures are drawn per period from a
flow-dependent probability and then re-dispatched with the topology held
fixed. Identical seeds give identical uniform streams, so two plans evaluated
with the same seed are paired.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ambiguity import hardening_weight
from .grid import GridModel
from .master import InvestmentPlan, TopologyDecision
from .opf import build_block
from .solver import LinearModel, SolverError

DEFAULT_HOURLY_GAMMA = 0.00005
UNSERVED_THRESHOLD = 1e-6
PERSISTENCE_MODES = ("rest-of-day", "per-hour")
REPORT_VERSION = 1


@dataclass(frozen=True)
class MCConfig:
    n_scenarios: int = 500
    seed: int = 0
    # None: per-line value from the grid, falling back to DEFAULT_HOURLY_GAMMA
    hourly_gamma: float | Sequence[float] | None = None
    value_of_lost_load: float | None = None
    persistence: str = "rest-of-day"
    clamp: bool = True
    workers: int = 1
    cvar_level: float = 0.95

    def __post_init__(self):
        if self.n_scenarios < 1:
            raise ValueError("n_scenarios must be at least 1")
        if self.persistence not in PERSISTENCE_MODES:
            raise ValueError(f"persistence must be one of {PERSISTENCE_MODES}")


@dataclass
class MCReport:
    n_scenarios: int
    seed: int
    persistence: str
    mean: dict[str, float]
    cvar95: dict[str, float]
    investment_cost: float
    records: list[dict] = field(repr=False, default_factory=list)

    @property
    def mean_deficit_cost(self) -> float:
        return self.mean["deficit_cost"]

    def to_dict(self, with_records: bool = False) -> dict:
        d = asdict(self)
        d["schema_version"] = REPORT_VERSION
        if not with_records:
            d.pop("records")
        return d

    def save_json(self, path: str | Path, extra: dict | None = None) -> None:
        doc = self.to_dict()
        doc.update(extra or {})
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(METRICS_ALL))
            w.writeheader()
            for r in self.records:
                w.writerow({k: r[k] for k in METRICS_ALL})


METRICS = ("deficit_share", "saidi", "saifi", "deficit_cost")
METRICS_ALL = ("scenario", "deficit_kwh") + METRICS + ("failed_line_hours",)


def cvar(samples: Sequence[float], level: float = 0.95) -> float:
    """Mean of the worst ceil((1 - level) n) samples (upper tail)."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("cvar of an empty sample")
    if not 0.0 <= level < 1.0:
        raise ValueError("level must lie in [0, 1)")
    # round before ceil so 0.05 * 100 stays 5
    k = max(1, math.ceil(round((1.0 - level) * x.size, 9)))
    return float(x[-k:].mean())


def reliability_indices(interrupted: np.ndarray, weights: Sequence[float],
                        hours_per_period: float = 1.0) -> tuple[float, float]:
    """(SAIDI, SAIFI) from a (days, periods, buses) interruption trace.

    An event is a maximal run of interrupted periods within one day.
    """
    it = np.asarray(interrupted, dtype=bool)
    if it.ndim == 2:
        it = it[None]
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        return 0.0, 0.0
    hours = it.sum(axis=(0, 1)) * hours_per_period
    starts = it.copy()
    starts[:, 1:] &= ~it[:, :-1]
    events = starts.sum(axis=(0, 1))
    return float(w @ hours / total), float(w @ events / total)


def year_expansion(grid: GridModel) -> dict[str, int]:
    """Number of calendar days each representative day stands for."""
    return {rd.id: int(round(rd.weight_hours / 24.0)) for rd in grid.days}


class _Dispatcher:
    """Single-period dispatch LPs memoized on (day, period, outage mask)."""

    def __init__(self, grid: GridModel, topology: TopologyDecision):
        self.grid = grid
        self.topology = topology
        self._memo: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}

    def solve(self, day: str, period: int, down: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        key = (day, period, np.packbits(down).tobytes())
        hit = self._memo.get(key)
        if hit is None:
            g = self.grid
            m = LinearModel(f"dispatch[{day}:{period}]")
            blk = build_block(m, g, day, period, z_values=self.topology.status[day],
                              availability=1.0 - down.astype(float))
            m.set_objective(blk.cost_terms(g, energy=True))
            sol = m.optimize()
            if not sol.ok:
                raise SolverError(sol.status, f"dispatch {day}:{period}: {sol.message}")
            hit = (sol.x[blk.fp].copy(), np.clip(sol.x[blk.dp_minus], 0.0, None))
            self._memo[key] = hit
        return hit


def _hourly_gamma(grid: GridModel, cfg: MCConfig) -> np.ndarray:
    if cfg.hourly_gamma is None:
        return np.array([DEFAULT_HOURLY_GAMMA if ln.hourly_gamma is None else ln.hourly_gamma
                         for ln in grid.lines])
    return np.broadcast_to(np.asarray(cfg.hourly_gamma, dtype=float), (grid.n_lines,)).copy()


def failure_probabilities(grid: GridModel, plan: InvestmentPlan, topology: TopologyDecision,
                          config: MCConfig = MCConfig(), dispatcher: _Dispatcher | None = None
                          ) -> dict[str, np.ndarray]:
    """Per-period failure probability of each active line, shape (periods, lines) per day."""
    disp = dispatcher or _Dispatcher(grid, topology)
    hg = _hourly_gamma(grid, config)
    w_beta = hardening_weight(grid, plan.hardening)
    out = {}
    for rd in grid.days:
        hours = 24.0 / rd.horizon
        active = topology.status[rd.id] > 0.5
        beta = grid.beta(rd.id) * w_beta
        p = np.empty((rd.horizon, grid.n_lines))
        for t in range(rd.horizon):
            fp, _ = disp.solve(rd.id, t, np.zeros(grid.n_lines, dtype=bool))
            p[t] = hg + beta * np.abs(fp)
        if config.clamp:
            p = np.clip(p, 0.0, 1.0)
        # an hourly probability compounded over the period's hours
        p = 1.0 - (1.0 - p) ** hours if hours != 1.0 else p
        p[:, ~active] = 0.0
        out[rd.id] = p
    return out


def evaluate_plan(grid: GridModel, plan: InvestmentPlan, topology: TopologyDecision,
                  config: MCConfig = MCConfig()) -> MCReport:
    missing = [rd.id for rd in grid.days if rd.id not in topology.status]
    if missing:
        raise ValueError(f"topology lacks days {missing}")
    disp = _Dispatcher(grid, topology)
    probs = failure_probabilities(grid, plan, topology, config, disp)
    copies = year_expansion(grid)
    voll = grid.costs.p_deficit if config.value_of_lost_load is None else config.value_of_lost_load
    cw = grid.customer_weights
    annual_energy = sum(copies[rd.id] * rd.demand.sum() * 24.0 / rd.horizon for rd in grid.days)

    def one(s: int) -> dict:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed, spawn_key=(s,))))
        deficit = failed_hours = saidi = saifi = 0.0
        for rd in grid.days:
            n_days, T, hours = copies[rd.id], rd.horizon, 24.0 / rd.horizon
            # drawn for every representative day, even empty ones, to keep streams aligned
            u = rng.random((n_days, T, grid.n_lines))
            fail = u < probs[rd.id][None]
            if config.persistence == "rest-of-day":
                fail = np.logical_or.accumulate(fail, axis=1)
            failed_hours += fail.sum() * hours
            shed = np.zeros((n_days, T, grid.n_buses))
            for t in range(T):
                masks, inverse = np.unique(fail[:, t], axis=0, return_inverse=True)
                for k, mask in enumerate(masks):
                    _, sh = disp.solve(rd.id, t, mask)
                    shed[inverse.ravel() == k, t] = sh
            deficit += shed.sum() * hours
            demand = rd.demand.T[None]
            interrupted = (shed > UNSERVED_THRESHOLD * demand) & (demand > 0)
            a, b = reliability_indices(interrupted, cw, hours)
            saidi += a
            saifi += b
        share = 100.0 * deficit / annual_energy if annual_energy > 0 else 0.0
        return {"scenario": s, "deficit_kwh": deficit, "deficit_share": share, "saidi": saidi,
                "saifi": saifi, "deficit_cost": voll * deficit, "failed_line_hours": failed_hours}

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(one, range(config.n_scenarios)))
    else:
        records = [one(s) for s in range(config.n_scenarios)]

    mean = {m: float(np.mean([r[m] for r in records])) for m in METRICS}
    mean["failed_line_hours"] = float(np.mean([r["failed_line_hours"] for r in records]))
    tail = {m: cvar([r[m] for r in records], config.cvar_level) for m in METRICS}
    return MCReport(config.n_scenarios, config.seed, config.persistence, mean, tail,
                    plan.cost(grid)["total"], records)

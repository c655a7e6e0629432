"""Grid, cost, demand and wildfire-risk data.

A :class:`GridModel` is the single validated input object of the planner.
It is loaded from a JSON document (``schema_version`` 1); demand may be
embedded per day or supplied through a sibling CSV file with columns
``bus_id,day_id,period,demand_kw``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HOURS_PER_YEAR = 8760.0
WEIGHT_TOLERANCE_HOURS = 24.0

CATEGORIES = (
    "existing-switchable",
    "existing-candidate-switchable",
    "existing-fixed",
    "candidate-switchable",
    "candidate-upgradable-to-switchable",
    "candidate-fixed",
)
EXISTING = frozenset(CATEGORIES[:3])
CANDIDATE = frozenset(CATEGORIES[3:])
# lines that already carry (or come with) a switching device
SWITCHABLE_NOW = frozenset({"existing-switchable", "candidate-switchable"})
# lines that may receive a switching device investment
SWITCH_CANDIDATE = frozenset({"existing-candidate-switchable", "candidate-upgradable-to-switchable"})
SWITCHABLE = SWITCHABLE_NOW | SWITCH_CANDIDATE


class GridError(ValueError):
    """Invalid grid input; message names the offending entity and field."""

    def __init__(self, entity: str, field_name: str, message: str):
        self.entity = entity
        self.field = field_name
        super().__init__(f"{entity}.{field_name}: {message}")


class CycleCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Bus:
    id: str
    is_substation: bool = False
    v_min: float = 0.9
    v_max: float = 1.1
    v_ref: float | None = None
    p_max: float | None = None
    q_min: float | None = None
    q_max: float | None = None
    power_factor: float = 1.0
    customer_weight: float | None = None


@dataclass(frozen=True)
class HardeningOption:
    id: str
    annual_cost: float
    effectiveness: float


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    resistance: float
    reactance: float
    capacity: float
    category: str
    z_init: int = 1
    switch_action_cost: float = 0.0
    line_build_cost: float = 0.0
    switch_install_cost: float = 0.0
    hardening_options: tuple[HardeningOption, ...] = ()
    gamma: float = 0.0
    beta_by_day: dict[str, float] = field(default_factory=dict)
    hourly_gamma: float | None = None

    @property
    def is_existing(self) -> bool:
        return self.category in EXISTING

    @property
    def is_candidate(self) -> bool:
        return self.category in CANDIDATE

    @property
    def is_switchable(self) -> bool:
        return self.category in SWITCHABLE

    @property
    def can_get_switch(self) -> bool:
        return self.category in SWITCH_CANDIDATE


@dataclass(frozen=True)
class RepresentativeDay:
    id: str
    weight_hours: float
    demand: np.ndarray  # (n_buses, horizon) kW, bus order of the grid
    t_sp: int | str = "auto-peak"

    @property
    def horizon(self) -> int:
        return int(self.demand.shape[1])

    @property
    def peak_period(self) -> int:
        if isinstance(self.t_sp, int):
            return self.t_sp
        # argmax returns the lowest index on ties
        return int(np.argmax(self.demand.sum(axis=0)))


@dataclass(frozen=True)
class CostBook:
    energy: float
    p_surplus: float
    p_deficit: float
    q_surplus: float
    q_deficit: float


@dataclass(frozen=True, eq=False)
class GridModel:
    name: str
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    days: tuple[RepresentativeDay, ...]
    costs: CostBook
    base_kva: float = 1000.0
    k_max: int = 1

    # -- indexing -----------------------------------------------------------
    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def line_index(self) -> dict[str, int]:
        return {ln.id: i for i, ln in enumerate(self.lines)}

    @cached_property
    def day_index(self) -> dict[str, int]:
        return {d.id: i for i, d in enumerate(self.days)}

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def line_ids(self) -> list[str]:
        return [ln.id for ln in self.lines]

    @cached_property
    def from_idx(self) -> np.ndarray:
        return np.array([self.bus_index[ln.from_bus] for ln in self.lines], dtype=int)

    @cached_property
    def to_idx(self) -> np.ndarray:
        return np.array([self.bus_index[ln.to_bus] for ln in self.lines], dtype=int)

    @cached_property
    def capacity(self) -> np.ndarray:
        return np.array([ln.capacity for ln in self.lines], dtype=float)

    @cached_property
    def gamma(self) -> np.ndarray:
        return np.array([ln.gamma for ln in self.lines], dtype=float)

    @cached_property
    def substations(self) -> list[int]:
        return [i for i, b in enumerate(self.buses) if b.is_substation]

    @cached_property
    def reactive_ratio(self) -> np.ndarray:
        """tan(arccos(PF)) per bus."""
        return np.array([math.tan(math.acos(b.power_factor)) for b in self.buses])

    @cached_property
    def customer_weights(self) -> np.ndarray:
        w = []
        for i, b in enumerate(self.buses):
            if b.customer_weight is not None:
                w.append(b.customer_weight)
            else:
                has_load = any(d.demand[i].max() > 0 for d in self.days)
                w.append(1.0 if has_load else 0.0)
        return np.array(w, dtype=float)

    def beta(self, day: str) -> np.ndarray:
        return np.array([ln.beta_by_day.get(day, 0.0) for ln in self.lines], dtype=float)

    def day(self, day: str) -> RepresentativeDay:
        return self.days[self.day_index[day]]

    def big_m(self) -> np.ndarray:
        """Per-line constant deactivating the voltage-drop pair of an open line."""
        vmax2 = max(b.v_max for b in self.buses) ** 2
        vmin2 = min(b.v_min for b in self.buses) ** 2
        rx = np.array([ln.resistance + ln.reactance for ln in self.lines])
        return (vmax2 - vmin2) + 2.0 * rx * self.capacity / self.base_kva

    def fingerprint(self) -> str:
        h = hashlib.sha256(f"{self.n_lines}|{'|'.join(self.line_ids)}".encode())
        return h.hexdigest()[:16]

    # -- derived copies -----------------------------------------------------
    def with_beta_scaled(self, factor: float) -> GridModel:
        lines = tuple(
            _replace(ln, beta_by_day={d: b * factor for d, b in ln.beta_by_day.items()})
            for ln in self.lines
        )
        return _replace(self, lines=lines)

    def without_ddu(self) -> GridModel:
        return self.with_beta_scaled(0.0)

    def with_day_weights(self, weights: dict[str, float], drop_zero: bool = True) -> GridModel:
        days = []
        for d in self.days:
            w = weights.get(d.id, d.weight_hours)
            if drop_zero and w <= 0:
                continue
            days.append(_replace(d, weight_hours=float(w)))
        return _replace(self, days=tuple(days))

    def with_days(self, day_ids: Iterable[str], horizon: int | None = None) -> GridModel:
        keep = []
        for did in day_ids:
            d = self.day(did)
            if horizon is not None:
                d = _replace(d, demand=_frozen(d.demand[:, :horizon]),
                             t_sp=d.t_sp if isinstance(d.t_sp, str) else min(d.t_sp, horizon - 1))
            keep.append(d)
        return _replace(self, days=tuple(keep))


def _replace(obj, **changes):
    import dataclasses

    return dataclasses.replace(obj, **changes)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


# -- loading ----------------------------------------------------------------

def load_grid(path: str | Path) -> GridModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise GridError(str(path), "json", str(exc)) from exc
    return grid_from_dict(doc, base_dir=path.parent)


def grid_from_dict(doc: dict, base_dir: Path | None = None) -> GridModel:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise GridError("grid", "schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    name = doc.get("name", "grid")

    buses = tuple(_parse_bus(b) for b in _require(doc, "grid", "buses"))
    bus_ids = [b.id for b in buses]
    if len(set(bus_ids)) != len(bus_ids):
        raise GridError("grid", "buses", "duplicate bus id")
    bus_pos = {b: i for i, b in enumerate(bus_ids)}

    c = _require(doc, "grid", "costs")
    costs = CostBook(
        energy=float(_require(c, "costs", "energy")),
        p_surplus=float(c.get("p_surplus", 0.0)),
        p_deficit=float(_require(c, "costs", "p_deficit")),
        q_surplus=float(c.get("q_surplus", 0.0)),
        q_deficit=float(c.get("q_deficit", 0.0)),
    )

    raw_days = _require(doc, "grid", "days")
    csv_demand: dict[tuple[str, str], dict[int, float]] = {}
    if "demand_csv" in doc:
        csv_path = Path(doc["demand_csv"])
        if base_dir is not None and not csv_path.is_absolute():
            csv_path = base_dir / csv_path
        csv_demand = _read_demand_csv(csv_path)

    days = []
    for d in raw_days:
        did = str(_require(d, "day", "id"))
        horizon = int(d.get("horizon", 24))
        demand = np.zeros((len(buses), horizon))
        embedded = d.get("demand")
        if embedded is not None:
            for bid, series in embedded.items():
                if bid not in bus_pos:
                    raise GridError(f"day {did}", "demand", f"unknown bus {bid!r}")
                if len(series) != horizon:
                    raise GridError(f"day {did}", "demand", f"bus {bid!r} has {len(series)} periods, horizon is {horizon}")
                demand[bus_pos[bid]] = series
        for (bid, day_id), series in csv_demand.items():
            if day_id != did:
                continue
            if bid not in bus_pos:
                raise GridError(f"day {did}", "demand_csv", f"unknown bus {bid!r}")
            for t, v in series.items():
                if not 0 <= t < horizon:
                    raise GridError(f"day {did}", "demand_csv", f"period {t} outside horizon {horizon}")
                demand[bus_pos[bid], t] = v
        t_sp = d.get("t_sp", "auto-peak")
        if not (t_sp == "auto-peak" or isinstance(t_sp, int)):
            raise GridError(f"day {did}", "t_sp", "must be an integer or 'auto-peak'")
        days.append(RepresentativeDay(id=did, weight_hours=float(_require(d, f"day {did}", "weight_hours")),
                                      demand=_frozen(demand), t_sp=t_sp))
    if csv_demand:
        known = {d.id for d in days}
        for (_, day_id) in csv_demand:
            if day_id not in known:
                raise GridError("demand_csv", "day_id", f"unknown day {day_id!r}")

    lines = tuple(_parse_line(ln) for ln in _require(doc, "grid", "lines"))
    grid = GridModel(
        name=name,
        buses=buses,
        lines=lines,
        days=tuple(days),
        costs=costs,
        base_kva=float(doc.get("base_kva", 1000.0)),
        k_max=int(doc.get("k_max", 1)),
    )
    validate(grid)
    return grid


def _require(d: dict, entity: str, key: str, label: str | None = None):
    if key not in d:
        raise GridError(entity, label or key, "missing required field")
    return d[key]


def _parse_bus(b: dict) -> Bus:
    bid = str(_require(b, "bus", "id"))
    opt = lambda k: None if b.get(k) is None else float(b[k])  # noqa: E731
    return Bus(
        id=bid,
        is_substation=bool(b.get("is_substation", False)),
        v_min=float(b.get("v_min", 0.9)),
        v_max=float(b.get("v_max", 1.1)),
        v_ref=opt("v_ref"),
        p_max=opt("p_max"),
        q_min=opt("q_min"),
        q_max=opt("q_max"),
        power_factor=float(b.get("power_factor", 1.0)),
        customer_weight=opt("customer_weight"),
    )


def _parse_line(ln: dict) -> Line:
    lid = str(_require(ln, "line", "id"))
    ent = f"line {lid}"
    options = tuple(
        HardeningOption(id=str(_require(h, ent, "id", "hardening_options.id")),
                        annual_cost=float(h.get("annual_cost", 0.0)),
                        effectiveness=float(_require(h, ent, "effectiveness", "hardening_options.effectiveness")))
        for h in ln.get("hardening_options", [])
    )
    return Line(
        id=lid,
        from_bus=str(_require(ln, ent, "from_bus")),
        to_bus=str(_require(ln, ent, "to_bus")),
        resistance=float(_require(ln, ent, "resistance")),
        reactance=float(_require(ln, ent, "reactance")),
        capacity=float(_require(ln, ent, "capacity")),
        category=str(_require(ln, ent, "category")),
        z_init=int(ln.get("z_init", 0 if ln.get("category", "").startswith("candidate") else 1)),
        switch_action_cost=float(ln.get("switch_action_cost", 0.0)),
        line_build_cost=float(ln.get("line_build_cost", 0.0)),
        switch_install_cost=float(ln.get("switch_install_cost", 0.0)),
        hardening_options=options,
        gamma=float(ln.get("gamma", 0.0)),
        beta_by_day={str(k): float(v) for k, v in ln.get("beta_by_day", {}).items()},
        hourly_gamma=None if ln.get("hourly_gamma") is None else float(ln["hourly_gamma"]),
    )


def _read_demand_csv(path: Path) -> dict[tuple[str, str], dict[int, float]]:
    out: dict[tuple[str, str], dict[int, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"bus_id", "day_id", "period", "demand_kw"} - set(reader.fieldnames or ())
        if missing:
            raise GridError(str(path), "header", f"missing columns {sorted(missing)}")
        for row in reader:
            key = (row["bus_id"], row["day_id"])
            out.setdefault(key, {})[int(row["period"])] = float(row["demand_kw"])
    return out


def validate(grid: GridModel) -> None:
    """Raise :class:`GridError` on the first violated invariant."""
    if not grid.buses:
        raise GridError("grid", "buses", "no buses")
    if not grid.days:
        raise GridError("grid", "days", "no representative days")
    if not grid.substations:
        raise GridError("grid", "buses", "no substation bus")
    if grid.k_max < 0:
        raise GridError("grid", "k_max", "must be nonnegative")
    for name in ("energy", "p_surplus", "p_deficit", "q_surplus", "q_deficit"):
        if getattr(grid.costs, name) < 0:
            raise GridError("costs", name, "must be nonnegative")

    refs = set()
    for b in grid.buses:
        ent = f"bus {b.id}"
        if not b.v_min < b.v_max:
            raise GridError(ent, "v_min", "v_min must be below v_max")
        if not 0 < b.power_factor <= 1:
            raise GridError(ent, "power_factor", "must lie in (0, 1]")
        if b.customer_weight is not None and b.customer_weight < 0:
            raise GridError(ent, "customer_weight", "must be nonnegative")
        sub_fields = ("v_ref", "p_max", "q_min", "q_max")
        if b.is_substation:
            for f in sub_fields:
                if getattr(b, f) is None:
                    raise GridError(ent, f, "required on substations")
            if b.p_max < 0:
                raise GridError(ent, "p_max", "must be nonnegative")
            # zero injection must stay admissible so that shedding everything is feasible
            if not b.q_min <= 0 <= b.q_max:
                raise GridError(ent, "q_min", "reactive range must contain 0")
            refs.add(b.v_ref)
        else:
            for f in sub_fields:
                if getattr(b, f) is not None:
                    raise GridError(ent, f, "only substations carry this field")
    if len(refs) > 1:
        raise GridError("grid", "v_ref", "all substations must share one voltage reference")
    v_ref = refs.pop()
    for b in grid.buses:
        if not b.v_min <= v_ref <= b.v_max:
            raise GridError(f"bus {b.id}", "v_min", "substation reference voltage outside the bus bounds")

    line_ids = set()
    for ln in grid.lines:
        ent = f"line {ln.id}"
        if ln.id in line_ids:
            raise GridError(ent, "id", "duplicate line id")
        line_ids.add(ln.id)
        for f in ("from_bus", "to_bus"):
            if getattr(ln, f) not in grid.bus_index:
                raise GridError(ent, f, f"unknown bus {getattr(ln, f)!r}")
        if ln.from_bus == ln.to_bus:
            raise GridError(ent, "to_bus", "self-loop")
        for f in ("resistance", "reactance", "capacity"):
            if not getattr(ln, f) > 0:
                raise GridError(ent, f, "must be positive")
        if ln.category not in CATEGORIES:
            raise GridError(ent, "category", f"unknown category {ln.category!r}")
        if ln.z_init not in (0, 1):
            raise GridError(ent, "z_init", "must be 0 or 1")
        if ln.is_candidate and ln.z_init != 0:
            raise GridError(ent, "z_init", "unbuilt candidate lines start off")
        if ln.category == "existing-fixed" and ln.z_init != 1:
            raise GridError(ent, "z_init", "non-switchable existing lines are always on")
        if not 0 <= ln.gamma <= 1:
            raise GridError(ent, "gamma", "must lie in [0, 1]")
        if ln.hourly_gamma is not None and not 0 <= ln.hourly_gamma <= 1:
            raise GridError(ent, "hourly_gamma", "must lie in [0, 1]")
        for did, beta in ln.beta_by_day.items():
            if did not in grid.day_index:
                raise GridError(ent, "beta_by_day", f"unknown day {did!r}")
            if beta < 0:
                raise GridError(ent, "beta_by_day", "must be nonnegative")
        seen = set()
        for h in ln.hardening_options:
            if h.id in seen:
                raise GridError(ent, "hardening_options", f"duplicate option {h.id!r}")
            seen.add(h.id)
            if not 0 <= h.effectiveness <= 1:
                raise GridError(ent, "hardening_options", f"effectiveness of {h.id!r} outside [0, 1]")
            if h.annual_cost < 0:
                raise GridError(ent, "hardening_options", f"negative cost for {h.id!r}")
        for f in ("switch_action_cost", "line_build_cost", "switch_install_cost"):
            if getattr(ln, f) < 0:
                raise GridError(ent, f, "must be nonnegative")

    day_ids = set()
    for d in grid.days:
        ent = f"day {d.id}"
        if d.id in day_ids:
            raise GridError(ent, "id", "duplicate day id")
        day_ids.add(d.id)
        if d.horizon < 1:
            raise GridError(ent, "horizon", "must be at least 1")
        if d.weight_hours < 0:
            raise GridError(ent, "weight_hours", "must be nonnegative")
        if (d.demand < 0).any():
            raise GridError(ent, "demand", "negative demand")
        if isinstance(d.t_sp, int) and not 0 <= d.t_sp < d.horizon:
            raise GridError(ent, "t_sp", "outside horizon")
    total = sum(d.weight_hours for d in grid.days)
    if abs(total - HOURS_PER_YEAR) > WEIGHT_TOLERANCE_HOURS:
        log.warning("day weights sum to %.1f h, expected %.0f", total, HOURS_PER_YEAR)


# -- serialization ----------------------------------------------------------

def grid_to_dict(grid: GridModel) -> dict:
    def bus(b: Bus) -> dict:
        d = {"id": b.id, "is_substation": b.is_substation, "v_min": b.v_min, "v_max": b.v_max,
             "power_factor": b.power_factor}
        for k in ("v_ref", "p_max", "q_min", "q_max", "customer_weight"):
            if getattr(b, k) is not None:
                d[k] = getattr(b, k)
        return d

    def line(ln: Line) -> dict:
        d = {
            "id": ln.id, "from_bus": ln.from_bus, "to_bus": ln.to_bus,
            "resistance": ln.resistance, "reactance": ln.reactance, "capacity": ln.capacity,
            "category": ln.category, "z_init": ln.z_init,
            "switch_action_cost": ln.switch_action_cost, "line_build_cost": ln.line_build_cost,
            "switch_install_cost": ln.switch_install_cost, "gamma": ln.gamma,
            "beta_by_day": dict(ln.beta_by_day),
            "hardening_options": [
                {"id": h.id, "annual_cost": h.annual_cost, "effectiveness": h.effectiveness}
                for h in ln.hardening_options
            ],
        }
        if ln.hourly_gamma is not None:
            d["hourly_gamma"] = ln.hourly_gamma
        return d

    days = []
    for d in grid.days:
        days.append({
            "id": d.id, "weight_hours": d.weight_hours, "horizon": d.horizon, "t_sp": d.t_sp,
            "demand": {b.id: d.demand[i].tolist() for i, b in enumerate(grid.buses) if d.demand[i].any()},
        })
    c = grid.costs
    return {
        "schema_version": SCHEMA_VERSION,
        "name": grid.name,
        "base_kva": grid.base_kva,
        "k_max": grid.k_max,
        "costs": {"energy": c.energy, "p_surplus": c.p_surplus, "p_deficit": c.p_deficit,
                  "q_surplus": c.q_surplus, "q_deficit": c.q_deficit},
        "buses": [bus(b) for b in grid.buses],
        "lines": [line(ln) for ln in grid.lines],
        "days": days,
    }


def save_grid(grid: GridModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(grid_to_dict(grid), indent=2))


def bundled_fixture(name: str) -> Path:
    return Path(__file__).parent / "data" / f"{name}.json"


# -- radiality --------------------------------------------------------------

def enumerate_forbidden_patterns(grid: GridModel, cap: int = 100_000) -> list[frozenset[str]]:
    """All simple cycles of the line multigraph, each as the set of its line ids.

    Iterative DFS: every cycle is rooted at its smallest bus index and only
    extended through larger buses, so each edge set shows up twice (once per
    direction) and is deduplicated on its sorted form.
    """
    n = grid.n_buses
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for li, (u, v) in enumerate(zip(grid.from_idx, grid.to_idx)):
        adj[u].append((v, li))
        adj[v].append((u, li))

    found: set[tuple[int, ...]] = set()
    for start in range(n):
        # stack of (bus, edge iterator position, edge used to arrive)
        path_buses = [start]
        path_edges: list[int] = []
        on_path = {start}
        stack = [iter(adj[start])]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on_path.discard(path_buses.pop())
                if path_edges:
                    path_edges.pop()
                continue
            v, li = nxt
            if path_edges and li == path_edges[-1]:
                continue
            if v == start and path_edges:
                cycle = tuple(sorted(path_edges + [li]))
                if cycle not in found:
                    found.add(cycle)
                    if len(found) > cap:
                        raise CycleCapExceeded(
                            f"more than {cap} simple cycles; a different radiality formulation is needed")
                continue
            if v < start or v in on_path:
                continue
            path_buses.append(v)
            path_edges.append(li)
            on_path.add(v)
            stack.append(iter(adj[v]))

    ids = grid.line_ids
    return sorted((frozenset(ids[i] for i in c) for c in found), key=lambda s: (len(s), sorted(s)))


def has_cycle(n_buses: int, edges: Iterable[tuple[int, int]]) -> bool:
    """Union-find cycle test on an undirected edge list."""
    parent = list(range(n_buses))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru == rv:
            return True
        parent[ru] = rv
    return False


def active_has_cycle(grid: GridModel, status) -> bool:
    on = [i for i, s in enumerate(status) if s > 0.5]
    return has_cycle(grid.n_buses, ((int(grid.from_idx[i]), int(grid.to_idx[i])) for i in on))

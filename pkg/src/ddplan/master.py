"""Relaxed master problem: investments, per-day topology, peak-period dispatch,
the dual pair (psi, phi) of the worst-case expectation, and accumulated cuts.

The product ``psi_l * w_beta_l(y) * |f_l|`` in the objective is linearized by
expanding ``|f_l|`` onto a B-bit grid rounded upward (never below the true
flow), gating ``psi`` by the hardening binaries, and taking exact
binary-times-bounded-continuous envelopes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import AmbiguityParams
from .grid import GridModel, enumerate_forbidden_patterns
from .opf import OperationalBlock, build_block
from .recourse import OptimalityCut
from .solver import INF, LIMIT, LinearModel, SolverError, SolverOptions

log = logging.getLogger(__name__)

BINARY_TOL = 1e-6


@dataclass(frozen=True)
class MasterOptions:
    psi_max: float | None = None
    bits: int = 10
    mip_gap: float = 1e-6
    time_limit: float | None = None

    def solver_options(self) -> SolverOptions:
        return SolverOptions(mip_rel_gap=self.mip_gap, time_limit=self.time_limit)


@dataclass
class InvestmentPlan:
    build_line: list[str] = field(default_factory=list)
    install_switch: list[str] = field(default_factory=list)
    hardening: dict[str, str] = field(default_factory=dict)

    def cost(self, grid: GridModel) -> dict[str, float]:
        by_id = {ln.id: ln for ln in grid.lines}
        lines = sum(by_id[l].line_build_cost for l in self.build_line)
        switches = sum(by_id[l].switch_install_cost for l in self.install_switch)
        hard = 0.0
        for lid, hid in self.hardening.items():
            hard += next(h.annual_cost for h in by_id[lid].hardening_options if h.id == hid)
        return {"switches": switches, "lines": lines, "hardening": hard, "total": switches + lines + hard}

    def is_empty(self) -> bool:
        return not (self.build_line or self.install_switch or self.hardening)


@dataclass
class TopologyDecision:
    status: dict[str, np.ndarray]
    switch_action: dict[str, np.ndarray]


@dataclass
class MasterSolution:
    plan: InvestmentPlan
    topology: TopologyDecision
    flows_tsp: dict[str, np.ndarray]
    flows_disc: dict[str, np.ndarray]
    psi: dict[str, np.ndarray]
    varphi: dict[str, float]
    day_costs: dict[str, dict[str, float]]
    investment_cost: float
    objective: float
    lower_bound: float
    certified: bool = True
    status: str = "optimal"


def default_psi_max(grid: GridModel) -> float:
    """Upper bound on any hourly recourse cost, hence on optimal dual prices."""
    c = grid.costs
    per_kw = c.p_deficit + c.energy + c.q_deficit * grid.reactive_ratio
    return float(max((per_kw[:, None] * d.demand).sum(axis=0).max() for d in grid.days))


@dataclass
class LineDDU:
    line: int
    f_abs: int
    bits: list[int]
    delta: float
    omega: int
    s: list[int]


@dataclass
class DDUTerm:
    day: str
    lines: dict[int, LineDDU]
    objective: list[tuple[int, float]]

    def discretized_flow(self, x: np.ndarray, n_lines: int) -> np.ndarray:
        out = np.full(n_lines, np.nan)
        for li, aux in self.lines.items():
            steps = sum(round(x[u]) * 2 ** b for b, u in enumerate(aux.bits))
            out[li] = aux.delta * steps
        return out


def linearize_ddu_term(model: LinearModel, grid: GridModel, day: str, beta: np.ndarray,
                       fp_vars, psi_vars, hardening_vars: dict[int, list[tuple[int, float]]],
                       psi_max: float, bits: int) -> DDUTerm:
    """Emit auxiliaries whose objective terms equal sum_l beta_l psi_l w_beta_l f_disc_l.

    ``hardening_vars`` maps a line to its (binary var, effectiveness) pairs.
    """
    if bits < 1:
        raise ValueError("bit count must be at least 1")
    if not psi_max > 0:
        raise ValueError("psi_max must be positive")
    lines: dict[int, LineDDU] = {}
    objective: list[tuple[int, float]] = []
    for li, ln in enumerate(grid.lines):
        if beta[li] <= 0:
            continue
        tag = f"{ln.id},{day}"
        cap = ln.capacity
        delta = cap / (2 ** bits - 1)
        psi = int(psi_vars[li])
        f_abs = model.add_var(0.0, cap, name=f"fabs[{tag}]")
        model.add_constr([(f_abs, 1.0), (int(fp_vars[li]), -1.0)], ">=", 0.0, tag="ddu-abs")
        model.add_constr([(f_abs, 1.0), (int(fp_vars[li]), 1.0)], ">=", 0.0, tag="ddu-abs")
        u = [model.add_binary(name=f"u[{tag},{b}]") for b in range(bits)]
        grid_terms = [(ub, delta * 2 ** b) for b, ub in enumerate(u)]
        model.add_constr(grid_terms + [(f_abs, -1.0)], ">=", 0.0, tag="ddu-grid")
        model.add_constr(grid_terms + [(f_abs, -1.0)], "<=", delta, tag="ddu-grid")

        # omega = psi * (1 - sum_h eff_h y_h), with e_h = psi * y_h
        hv = hardening_vars.get(li, [])
        if hv:
            omega = model.add_var(0.0, psi_max, name=f"omega[{tag}]")
            terms = [(omega, 1.0), (psi, -1.0)]
            for y, eff in hv:
                e = _product(model, psi, y, psi_max, f"e[{tag},{y}]")
                terms.append((e, eff))
            model.add_constr(terms, "==", 0.0, tag="ddu-harden")
        else:
            omega = psi
        s = [_product(model, omega, ub, psi_max, f"s[{tag},{b}]") for b, ub in enumerate(u)]
        objective += [(sb, beta[li] * delta * 2 ** b) for b, sb in enumerate(s)]
        lines[li] = LineDDU(li, f_abs, u, delta, omega, s)
    return DDUTerm(day, lines, objective)


def _product(model: LinearModel, cont: int, binary: int, bound: float, name: str) -> int:
    """w = cont * binary for cont in [0, bound]."""
    w = model.add_var(0.0, bound, name=name)
    model.add_constr([(w, 1.0), (binary, -bound)], "<=", 0.0, tag="env")
    model.add_constr([(w, 1.0), (cont, -1.0)], "<=", 0.0, tag="env")
    model.add_constr([(w, 1.0), (cont, -1.0), (binary, -bound)], ">=", -bound, tag="env")
    return w


@dataclass
class DayVars:
    z: np.ndarray
    zsw: dict[int, int]
    block: OperationalBlock
    psi: np.ndarray
    phi: int
    ddu: DDUTerm


class MasterModel:
    """Handle on an assembled master MILP; cuts can be appended between solves."""

    def __init__(self, grid: GridModel, params: AmbiguityParams, options: MasterOptions,
                 patterns: list[frozenset[str]] | None = None):
        if not grid.substations:
            raise ValueError("grid has no substation")
        if not grid.days:
            raise ValueError("grid has no representative day")
        self.grid = grid
        self.params = params
        self.options = options
        self.psi_max = options.psi_max if options.psi_max is not None else default_psi_max(grid)
        self.patterns = enumerate_forbidden_patterns(grid) if patterns is None else patterns
        self.model = LinearModel("master")
        self.cuts: list[OptimalityCut] = []
        self._cut_keys: set = set()
        self._build()

    # -- assembly -----------------------------------------------------------
    def _build(self) -> None:
        g, m = self.grid, self.model
        self.y_line: dict[int, int] = {}
        self.y_sw: dict[int, int] = {}
        self.y_ha: dict[int, list[tuple[str, int, float]]] = {}
        inv: list[tuple[int, float]] = []
        for li, ln in enumerate(g.lines):
            if ln.is_candidate:
                self.y_line[li] = m.add_binary(f"yline[{ln.id}]")
                inv.append((self.y_line[li], ln.line_build_cost))
            if ln.can_get_switch:
                self.y_sw[li] = m.add_binary(f"ysw[{ln.id}]")
                inv.append((self.y_sw[li], ln.switch_install_cost))
                if ln.is_candidate:
                    m.add_constr([(self.y_sw[li], 1.0), (self.y_line[li], -1.0)], "<=", 0.0, tag="switch-needs-line")
            if ln.hardening_options:
                opts = []
                for h in ln.hardening_options:
                    v = m.add_binary(f"yha[{ln.id},{h.id}]")
                    opts.append((h.id, v, h.effectiveness))
                    inv.append((v, h.annual_cost))
                m.add_constr([(v, 1.0) for _, v, _ in opts], "<=", 1.0, tag="one-hardening")
                self.y_ha[li] = opts
        m.add_objective(inv)
        self._inv_terms = inv

        self.days: dict[str, DayVars] = {}
        k = self.params.k
        line_pos = g.line_index
        for rd in g.days:
            w = rd.weight_hours
            z = np.empty(g.n_lines, dtype=int)
            zsw: dict[int, int] = {}
            for li, ln in enumerate(g.lines):
                z[li] = m.add_binary(f"z[{ln.id},{rd.id}]")
                if ln.category == "existing-fixed":
                    m.fix(int(z[li]), 1.0)
                if ln.is_switchable:
                    zsw[li] = m.add_binary(f"zsw[{ln.id},{rd.id}]")
                    m.add_objective([(zsw[li], w * ln.switch_action_cost)])
                    if ln.can_get_switch:
                        m.add_constr([(zsw[li], 1.0), (self.y_sw[li], -1.0)], "<=", 0.0, tag="switch-needs-device")
                    if ln.is_existing:
                        m.add_constr([(zsw[li], 1.0), (int(z[li]), -1.0)], ">=", -ln.z_init, tag="switch-action")
                        m.add_constr([(zsw[li], 1.0), (int(z[li]), 1.0)], ">=", ln.z_init, tag="switch-action")
                if ln.is_candidate:
                    m.add_constr([(int(z[li]), 1.0), (self.y_line[li], -1.0)], "<=", 0.0, tag="built-only")
                    if ln.category != "candidate-switchable":
                        terms = [(self.y_line[li], 1.0), (int(z[li]), -1.0)]
                        if li in self.y_sw:
                            terms.append((self.y_sw[li], -1.0))
                        m.add_constr(terms, "<=", 0.0, tag="built-on-unless-switch")
            for pat in self.patterns:
                m.add_constr([(int(z[line_pos[lid]]), 1.0) for lid in pat], "<=", len(pat) - 1, tag="radiality")

            blk = build_block(m, g, rd.id, rd.peak_period, z_vars=z)
            m.add_objective((v, w * c) for v, c in blk.cost_terms(g, energy=False))

            psi = np.array([m.add_var(0.0, self.psi_max, name=f"psi[{j},{rd.id}]")
                            for j in range(2 * g.n_lines)], dtype=int)
            phi = m.add_var(-k * self.psi_max, INF, name=f"phi[{rd.id}]")
            m.add_objective([(phi, w)])
            m.add_objective((int(psi[li]), w * self.params.gamma[li]) for li in range(g.n_lines))
            hv = {li: [(v, eff) for _, v, eff in opts] for li, opts in self.y_ha.items()}
            ddu = linearize_ddu_term(m, g, rd.id, self.params.beta[rd.id], blk.fp, psi, hv,
                                     self.psi_max, self.options.bits)
            m.add_objective((v, w * c) for v, c in ddu.objective)
            self.days[rd.id] = DayVars(z, zsw, blk, psi, phi, ddu)

    def add_cut(self, cut: OptimalityCut) -> bool:
        """Append a cut; returns False if an identical one is already present."""
        if len(cut.alpha_z) != self.grid.n_lines:
            raise ValueError("cut does not match this grid's line count")
        if cut.day not in self.days:
            raise ValueError(f"cut for unknown day {cut.day!r}")
        key = cut.key()
        if key in self._cut_keys:
            return False
        dv = self.days[cut.day]
        n = self.grid.n_lines
        terms = [(dv.phi, 1.0)]
        for li in cut.scenario.outages:
            terms += [(int(dv.psi[li]), 1.0), (int(dv.psi[n + li]), -1.0)]
        terms += [(int(dv.z[li]), -a) for li, a in enumerate(cut.alpha_z) if a != 0.0]
        self.model.add_constr(terms, ">=", cut.alpha0, tag=f"cut[{cut.day}]")
        self.cuts.append(cut)
        self._cut_keys.add(key)
        return True

    # -- solve --------------------------------------------------------------
    def solve(self) -> MasterSolution:
        sol = self.model.optimize(self.options.solver_options())
        if sol.x is None:
            if sol.status == LIMIT:
                raise SolverError(sol.status, "master hit its limit without an incumbent")
            raise SolverError(sol.status, f"master: {sol.message}")
        if sol.status not in ("optimal", LIMIT):
            raise SolverError(sol.status, sol.message)
        return self._extract(sol.x, sol.objective, sol.dual_bound, sol.status)

    def _extract(self, x: np.ndarray, objective: float, bound: float, status: str) -> MasterSolution:
        g = self.grid
        rnd = lambda v: int(round(x[v]))  # noqa: E731
        for v in range(self.model.n_vars):
            if self.model.integer[v] and abs(x[v] - round(x[v])) > BINARY_TOL:
                log.warning("binary %s off integrality by %.2g", self.model.var_names[v], abs(x[v] - round(x[v])))
        plan = InvestmentPlan(
            build_line=[g.lines[li].id for li, v in self.y_line.items() if rnd(v)],
            install_switch=[g.lines[li].id for li, v in self.y_sw.items() if rnd(v)],
            hardening={g.lines[li].id: hid for li, opts in self.y_ha.items() for hid, v, _ in opts if rnd(v)},
        )
        status_by_day, sw_by_day, flows, disc, psi, phi, costs = {}, {}, {}, {}, {}, {}, {}
        certified = True
        c = g.costs
        for rd in g.days:
            dv = self.days[rd.id]
            z = np.array([rnd(v) for v in dv.z], dtype=float)
            sw = np.zeros(g.n_lines)
            for li, v in dv.zsw.items():
                sw[li] = rnd(v)
            status_by_day[rd.id] = z
            sw_by_day[rd.id] = sw
            flows[rd.id] = x[dv.block.fp].copy()
            disc[rd.id] = dv.ddu.discretized_flow(x, g.n_lines)
            psi[rd.id] = np.clip(x[dv.psi], 0.0, None)
            phi[rd.id] = float(x[dv.phi])
            blk = dv.block
            imbalance = float(sum(c.p_surplus * x[blk.dp_plus[b]] + c.p_deficit * x[blk.dp_minus[b]]
                                  + c.q_surplus * x[blk.dq_plus[b]] + c.q_deficit * x[blk.dq_minus[b]]
                                  for b in range(g.n_buses)))
            switching = float(sum(g.lines[li].switch_action_cost * sw[li] for li in range(g.n_lines)))
            ddu_lin = float(sum(coef * x[v] for v, coef in dv.ddu.objective))
            costs[rd.id] = {
                "switching": switching,
                "imbalance": imbalance,
                "psi_gamma": float(psi[rd.id][:g.n_lines] @ self.params.gamma),
                "psi_flow": ddu_lin,
                "varphi": phi[rd.id],
            }
            if (psi[rd.id] >= self.psi_max * (1 - 1e-6)).any():
                certified = False
                log.warning("psi reached its bound on day %s; result not certified", rd.id)
        inv = float(sum(coef * round(x[v]) for v, coef in self._inv_terms))
        return MasterSolution(
            plan=plan,
            topology=TopologyDecision(status_by_day, sw_by_day),
            flows_tsp=flows,
            flows_disc=disc,
            psi=psi,
            varphi=phi,
            day_costs=costs,
            investment_cost=inv,
            objective=objective,
            lower_bound=min(bound, objective),
            certified=certified,
            status=status,
        )


def assemble_master(grid: GridModel, params: AmbiguityParams, cuts=(), options: MasterOptions = MasterOptions(),
                    patterns=None) -> MasterModel:
    master = MasterModel(grid, params, options, patterns)
    for cut in cuts:
        master.add_cut(cut)
    return master


def solve_master(master: MasterModel) -> MasterSolution:
    return master.solve()

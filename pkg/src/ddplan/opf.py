"""Linearized branch-flow constraints for one (day, period).

The same generator serves the master's pre-contingency block, where line
status is a topology variable, and the post-contingency recourse problem,
where status and availability are constants and only their product matters.

Flows are in kW; resistance/reactance are per unit on ``grid.base_kva``;
voltages enter squared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import GridModel
from .solver import INF, LinearModel

_E = (1, 2, 3, 4)


def octagon_coefficients(e: int) -> tuple[float, float]:
    """(slope, offset) of the e-th upper half-plane ``fq <= offset*F - slope*fp``.

    Rearranged from ``fq - cot((1/2 - e) pi/4) (fp - cos(e pi/4) F) - sin(e pi/4) F <= 0``.
    """
    cot = 1.0 / math.tan((0.5 - e) * math.pi / 4)
    offset = math.sin(e * math.pi / 4) - cot * math.cos(e * math.pi / 4)
    return -cot, offset


def octagon_satisfied(fp: float, fq: float, cap: float, tol: float = 1e-9) -> list[bool]:
    """Evaluate the 8 half-planes at one point (both signs of fq, e = 1..4)."""
    out = []
    for sign in (1.0, -1.0):
        for e in _E:
            slope, offset = octagon_coefficients(e)
            out.append(sign * fq + slope * fp <= offset * cap + tol * max(1.0, cap))
    return out


@dataclass
class OperationalBlock:
    day: str
    period: int
    p: np.ndarray          # per bus; -1 where the bus is no substation
    q: np.ndarray
    v2: np.ndarray
    dp_plus: np.ndarray
    dp_minus: np.ndarray
    dq_plus: np.ndarray
    dq_minus: np.ndarray
    fp: np.ndarray         # per line
    fq: np.ndarray
    rows: dict[str, list[int]] = field(default_factory=dict)
    # (row, line, base_rhs, slope): row rhs equals base + slope * status_l
    gated: list[tuple[int, int, float, float]] = field(default_factory=list)

    def cost_terms(self, grid: GridModel, energy: bool) -> list[tuple[int, float]]:
        c = grid.costs
        terms = []
        for b in range(len(self.v2)):
            terms += [(int(self.dp_plus[b]), c.p_surplus), (int(self.dp_minus[b]), c.p_deficit),
                      (int(self.dq_plus[b]), c.q_surplus), (int(self.dq_minus[b]), c.q_deficit)]
            if energy and self.p[b] >= 0:
                terms.append((int(self.p[b]), c.energy))
        return terms


def build_block(
    model: LinearModel,
    grid: GridModel,
    day: str,
    period: int,
    *,
    z_vars: Sequence[int] | None = None,
    z_values: Sequence[float] | None = None,
    availability: Sequence[float] | None = None,
) -> OperationalBlock:
    """Append one period of operational constraints to ``model``.

    Exactly one of ``z_vars`` (topology-linked) or ``z_values``
    (availability-linked, constants) must be given.  In both cases the
    gating status of line l is ``z_l * a_l``.
    """
    if (z_vars is None) == (z_values is None):
        raise ValueError("pass exactly one of z_vars or z_values")
    n_l = grid.n_lines
    link = z_vars if z_vars is not None else z_values
    if len(link) != n_l:
        raise ValueError(f"line link has {len(link)} entries, grid has {n_l} lines")
    if z_vars is not None and any(v is None or not 0 <= v < model.n_vars for v in z_vars):
        raise ValueError("missing link variable")
    avail = np.ones(n_l) if availability is None else np.asarray(availability, dtype=float)
    if (grid.capacity <= 0).any():
        raise ValueError("nonpositive line capacity")
    rd = grid.day(day)
    if not 0 <= period < rd.horizon:
        raise ValueError(f"period {period} outside horizon {rd.horizon}")

    demand = rd.demand[:, period]
    qd = grid.reactive_ratio * demand
    tag = f"{day}:{period}"
    n_b = grid.n_buses

    p = np.full(n_b, -1)
    q = np.full(n_b, -1)
    v2 = np.empty(n_b, dtype=int)
    dpp = np.empty(n_b, dtype=int)
    dpm = np.empty(n_b, dtype=int)
    dqp = np.empty(n_b, dtype=int)
    dqm = np.empty(n_b, dtype=int)
    for i, b in enumerate(grid.buses):
        if b.is_substation:
            p[i] = model.add_var(0.0, b.p_max, name=f"p[{b.id},{tag}]")
            q[i] = model.add_var(b.q_min, b.q_max, name=f"q[{b.id},{tag}]")
            v2[i] = model.add_var(b.v_ref ** 2, b.v_ref ** 2, name=f"v2[{b.id},{tag}]")
        else:
            v2[i] = model.add_var(b.v_min ** 2, b.v_max ** 2, name=f"v2[{b.id},{tag}]")
        dpp[i] = model.add_var(0.0, demand[i], name=f"dpp[{b.id},{tag}]")
        dpm[i] = model.add_var(0.0, demand[i], name=f"dpm[{b.id},{tag}]")
        dqp[i] = model.add_var(0.0, qd[i], name=f"dqp[{b.id},{tag}]")
        dqm[i] = model.add_var(0.0, qd[i], name=f"dqm[{b.id},{tag}]")
    fp = np.array([model.add_var(-INF, INF, name=f"fp[{ln.id},{tag}]") for ln in grid.lines], dtype=int)
    fq = np.array([model.add_var(-INF, INF, name=f"fq[{ln.id},{tag}]") for ln in grid.lines], dtype=int)

    blk = OperationalBlock(day, period, p, q, v2, dpp, dpm, dqp, dqm, fp, fq)
    rows = blk.rows

    def put(name: str, terms, sense: str, rhs: float) -> int:
        r = model.add_constr(terms, sense, rhs, tag=f"{name}[{tag}]")
        rows.setdefault(name, []).append(r)
        return r

    # nodal balance
    inc_p: list[list[tuple[int, float]]] = [[] for _ in range(n_b)]
    inc_q: list[list[tuple[int, float]]] = [[] for _ in range(n_b)]
    for li in range(n_l):
        fr, to = grid.from_idx[li], grid.to_idx[li]
        inc_p[to].append((int(fp[li]), 1.0))
        inc_p[fr].append((int(fp[li]), -1.0))
        inc_q[to].append((int(fq[li]), 1.0))
        inc_q[fr].append((int(fq[li]), -1.0))
    for i in range(n_b):
        tp = inc_p[i] + [(int(dpp[i]), -1.0), (int(dpm[i]), 1.0)]
        tq = inc_q[i] + [(int(dqp[i]), -1.0), (int(dqm[i]), 1.0)]
        if p[i] >= 0:
            tp.append((int(p[i]), 1.0))
            tq.append((int(q[i]), 1.0))
        put("balance-p", tp, "==", float(demand[i]))
        put("balance-q", tq, "==", float(qd[i]))

    big_m = grid.big_m()
    for li, ln in enumerate(grid.lines):
        fr, to = int(grid.from_idx[li]), int(grid.to_idx[li])
        r2 = 2.0 * ln.resistance / grid.base_kva
        x2 = 2.0 * ln.reactance / grid.base_kva
        cap = ln.capacity

        def gate(name, terms, base, slope):
            # lhs <= base + slope * a_l * z_l
            if z_vars is not None:
                if avail[li] != 0.0:
                    terms = terms + [(int(z_vars[li]), -slope * avail[li])]
                r = put(name, terms, "<=", base)
            else:
                r = put(name, terms, "<=", base + slope * float(z_values[li]) * avail[li])
            blk.gated.append((r, li, base, slope * avail[li]))

        m = float(big_m[li])
        drop = [(int(v2[to]), 1.0), (int(v2[fr]), -1.0), (int(fp[li]), r2), (int(fq[li]), x2)]
        gate("voltage-drop", drop, m, -m)
        gate("voltage-drop", [(j, -c) for j, c in drop], m, -m)

        for sign in (1.0, -1.0):
            for e in _E:
                slope, offset = octagon_coefficients(e)
                put("octagon", [(int(fq[li]), sign), (int(fp[li]), slope)], "<=", offset * cap)

        for var in (fp[li], fq[li]):
            gate("flow-box", [(int(var), 1.0)], 0.0, cap)
            gate("flow-box", [(int(var), -1.0)], 0.0, cap)
    return blk

"""Decision-dependent ambiguity set over line-availability scenarios.

The support holds every availability vector with at most ``K`` outages.  The
moment bound on expected unavailability rises linearly with the absolute
scheduled flow at the selected period and is damped by hardening.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .grid import GridModel
from .solver import INF, LinearModel, SolverError


class SupportCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Scenario:
    n_lines: int
    outages: tuple[int, ...] = ()

    @cached_property
    def availability(self) -> np.ndarray:
        a = np.ones(self.n_lines)
        a[list(self.outages)] = 0.0
        a.setflags(write=False)
        return a

    @property
    def unavailability(self) -> np.ndarray:
        return 1.0 - self.availability

    @property
    def outage_count(self) -> int:
        return len(self.outages)

    def key(self) -> str:
        return ",".join(map(str, self.outages)) or "-"


def support_size(n_lines: int, k: int) -> int:
    return sum(math.comb(n_lines, j) for j in range(k + 1))


def enumerate_support(n_lines: int, k: int, cap: int = 100_000) -> list[Scenario]:
    """No-failure first, then by outage count, lexicographic within a count."""
    if not 0 <= k <= n_lines:
        raise ValueError(f"K={k} must lie in [0, {n_lines}]")
    size = support_size(n_lines, k)
    if size > cap:
        raise SupportCapExceeded(
            f"support of {size} scenarios exceeds cap {cap}; lower K or raise the cap")
    return [Scenario(n_lines, combo) for j in range(k + 1) for combo in combinations(range(n_lines), j)]


@dataclass(frozen=True)
class AmbiguityParams:
    k: int
    gamma: np.ndarray                 # (L,)
    beta: Mapping[str, np.ndarray]    # day -> (L,)

    @classmethod
    def from_grid(cls, grid: GridModel, k: int | None = None) -> AmbiguityParams:
        return cls(k=grid.k_max if k is None else k, gamma=grid.gamma.copy(),
                   beta={d.id: grid.beta(d.id) for d in grid.days})

    @property
    def n_lines(self) -> int:
        return len(self.gamma)


def hardening_weight(grid: GridModel, hardening: Mapping[str, str] | None) -> np.ndarray:
    """w_beta per line: 1 minus the effectiveness of the chosen option (1 if none)."""
    w = np.ones(grid.n_lines)
    for lid, hid in (hardening or {}).items():
        ln = grid.lines[grid.line_index[lid]]
        opts = {h.id: h for h in ln.hardening_options}
        if hid not in opts:
            raise ValueError(f"line {lid} has no hardening option {hid!r}")
        w[grid.line_index[lid]] = 1.0 - opts[hid].effectiveness
    return w


def mu_bar(params: AmbiguityParams, day: str, flows_tsp: Sequence[float],
           w_beta: Sequence[float] | None = None) -> np.ndarray:
    """Upper bound on E[S a_hat]; length 2L, the lower half is zero."""
    f = np.abs(np.asarray(flows_tsp, dtype=float))
    w = np.ones_like(f) if w_beta is None else np.asarray(w_beta, dtype=float)
    upper = params.gamma + params.beta[day] * w * f
    return np.concatenate([upper, np.zeros_like(upper)])


def _moment_rows(scenarios: Sequence[Scenario]) -> np.ndarray:
    """S a_hat for every scenario, shape (n_scen, 2L)."""
    u = np.array([s.unavailability for s in scenarios])
    return np.hstack([u, -u])


def worst_distribution_oracle(values: Sequence[float], mu: Sequence[float],
                              scenarios: Sequence[Scenario]) -> tuple[np.ndarray, float]:
    """Worst-case distribution over the support: max E_Q[H] s.t. E_Q[S a_hat] <= mu."""
    mu = np.asarray(mu, dtype=float)
    if (mu < 0).any():
        raise ValueError("moment bound must be nonnegative")
    values = np.asarray(values, dtype=float)
    rows = _moment_rows(scenarios)
    m = LinearModel("worst-distribution")
    qv = [m.add_var(0.0, INF, name=f"Q[{s.key()}]") for s in scenarios]
    for j in range(rows.shape[1]):
        terms = [(qv[i], rows[i, j]) for i in range(len(scenarios)) if rows[i, j] != 0]
        if terms:
            m.add_constr(terms, "<=", mu[j])
    m.add_constr([(v, 1.0) for v in qv], "==", 1.0)
    m.set_objective(zip(qv, values), maximize=True)
    sol = m.optimize()
    if not sol.ok:
        raise SolverError(sol.status, sol.message)
    return np.clip(sol.x, 0.0, None), sol.objective


def worst_expectation_dual(values: Sequence[float], mu: Sequence[float],
                           scenarios: Sequence[Scenario],
                           psi_max: float = INF) -> tuple[np.ndarray, float, float]:
    """min psi.mu + phi s.t. phi + psi.(S a_hat) >= H(a) for every scenario; returns (psi, phi, value)."""
    mu = np.asarray(mu, dtype=float)
    rows = _moment_rows(scenarios)
    m = LinearModel("worst-expectation-dual")
    psi = [m.add_var(0.0, psi_max, name=f"psi[{j}]") for j in range(rows.shape[1])]
    phi = m.add_var(-INF, INF, name="phi")
    for i, _ in enumerate(scenarios):
        m.add_constr([(phi, 1.0)] + [(psi[j], rows[i, j]) for j in range(rows.shape[1]) if rows[i, j]],
                     ">=", float(values[i]))
    m.set_objective([(psi[j], mu[j]) for j in range(len(psi))] + [(phi, 1.0)])
    sol = m.optimize()
    if not sol.ok:
        raise SolverError(sol.status, sol.message)
    return sol.x[psi], float(sol.x[phi]), sol.objective

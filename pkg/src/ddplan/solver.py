"""Thin linear / mixed-integer model builder over the HiGHS backend shipped with SciPy.

Only what the planner needs: continuous and binary variables, linear rows,
min/max objectives, and (for pure LPs) dual multipliers of rows and bounds.
Duals follow the sensitivity convention: ``d objective / d rhs``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

log = logging.getLogger(__name__)

INF = math.inf

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"
ERROR = "error"


class SolverError(RuntimeError):
    def __init__(self, status: str, message: str = ""):
        self.status = status
        super().__init__(f"solver returned {status}: {message}")


MIN_TOL = 1e-10


@dataclass(frozen=True)
class SolverOptions:
    mip_rel_gap: float = 1e-6
    time_limit: float | None = None
    feasibility_tol: float = 1e-9
    optimality_tol: float = 1e-9
    presolve: bool = True
    duality_check: float = 1e-6

    def tightened(self) -> SolverOptions:
        # HiGHS rejects tolerances below 1e-10
        return replace(self, feasibility_tol=max(self.feasibility_tol * 1e-2, MIN_TOL),
                       optimality_tol=max(self.optimality_tol * 1e-2, MIN_TOL), presolve=False)


DEFAULT_OPTIONS = SolverOptions()


@dataclass
class Solution:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    row_duals: np.ndarray | None = None
    lower_duals: np.ndarray | None = None
    upper_duals: np.ndarray | None = None
    dual_bound: float = math.nan
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, idx) -> float | np.ndarray:
        return self.x[idx]


Terms = Mapping[int, float] | Iterable[tuple[int, float]]


@dataclass
class LinearModel:
    name: str = "model"
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    integer: list[bool] = field(default_factory=list)
    var_names: list[str] = field(default_factory=list)
    _rows: list[int] = field(default_factory=list, repr=False)
    _cols: list[int] = field(default_factory=list, repr=False)
    _vals: list[float] = field(default_factory=list, repr=False)
    senses: list[str] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    tags: list[str | None] = field(default_factory=list)
    obj: dict[int, float] = field(default_factory=dict)
    obj_constant: float = 0.0
    maximize: bool = False

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    @property
    def is_mip(self) -> bool:
        return any(self.integer)

    def add_var(self, lb: float = 0.0, ub: float = INF, integer: bool = False, name: str | None = None) -> int:
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.integer.append(bool(integer))
        self.var_names.append(name or f"x{len(self.lb) - 1}")
        return len(self.lb) - 1

    def add_binary(self, name: str | None = None) -> int:
        return self.add_var(0.0, 1.0, integer=True, name=name)

    def set_bounds(self, var: int, lb: float | None = None, ub: float | None = None) -> None:
        if lb is not None:
            self.lb[var] = float(lb)
        if ub is not None:
            self.ub[var] = float(ub)

    def fix(self, var: int, value: float) -> None:
        self.lb[var] = self.ub[var] = float(value)

    def add_constr(self, terms: Terms, sense: str, rhs: float, tag: str | None = None) -> int:
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad sense {sense!r}")
        row = len(self.rhs)
        items = terms.items() if isinstance(terms, Mapping) else terms
        n = self.n_vars
        for var, coef in items:
            if not 0 <= var < n:
                raise IndexError(f"constraint references unknown variable {var}")
            if coef != 0.0:
                self._rows.append(row)
                self._cols.append(var)
                self._vals.append(float(coef))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.tags.append(tag)
        return row

    def set_objective(self, terms: Terms, maximize: bool = False, constant: float = 0.0) -> None:
        self.obj = {}
        self.add_objective(terms)
        self.maximize = maximize
        self.obj_constant = constant

    def add_objective(self, terms: Terms) -> None:
        items = terms.items() if isinstance(terms, Mapping) else terms
        for var, coef in items:
            self.obj[var] = self.obj.get(var, 0.0) + float(coef)

    def matrix(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self._vals, (self._rows, self._cols)), shape=(self.n_rows, self.n_vars))

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for var, coef in self.obj.items():
            c[var] += coef
        return c

    def optimize(self, options: SolverOptions = DEFAULT_OPTIONS) -> Solution:
        if self.is_mip:
            return _solve_mip(self, options)
        return _solve_lp(self, options)

    def write_lp(self, path: str | Path) -> None:
        """Export in CPLEX LP text format (debugging aid)."""
        names = self.var_names
        a = self.matrix()

        def expr(pairs) -> str:
            parts = [f"{'+' if c >= 0 else '-'} {abs(c):.12g} {names[j]}" for j, c in pairs]
            return " ".join(parts) if parts else "0 " + (names[0] if names else "")

        out = ["Maximize" if self.maximize else "Minimize",
               " obj: " + expr(sorted(self.obj.items())), "Subject To"]
        op = {"<=": "<=", ">=": ">=", "==": "="}
        for i in range(self.n_rows):
            lo, hi = a.indptr[i], a.indptr[i + 1]
            pairs = zip(a.indices[lo:hi], a.data[lo:hi])
            out.append(f" r{i}: {expr(pairs)} {op[self.senses[i]]} {self.rhs[i]:.12g}")
        out.append("Bounds")
        for j in range(self.n_vars):
            lo = "-inf" if self.lb[j] == -INF else f"{self.lb[j]:.12g}"
            hi = "+inf" if self.ub[j] == INF else f"{self.ub[j]:.12g}"
            out.append(f" {lo} <= {names[j]} <= {hi}")
        ints = [names[j] for j in range(self.n_vars) if self.integer[j]]
        if ints:
            out.append("General")
            out.append(" " + " ".join(ints))
        out.append("End")
        Path(path).write_text("\n".join(out) + "\n")


def _split_rows(model: LinearModel):
    a = model.matrix()
    senses = np.array(model.senses)
    rhs = np.array(model.rhs)
    ub_rows = np.flatnonzero(senses != "==")
    eq_rows = np.flatnonzero(senses == "==")
    sign = np.where(senses[ub_rows] == ">=", -1.0, 1.0)
    a_ub = sparse.diags(sign) @ a[ub_rows] if len(ub_rows) else None
    b_ub = sign * rhs[ub_rows] if len(ub_rows) else None
    a_eq = a[eq_rows] if len(eq_rows) else None
    b_eq = rhs[eq_rows] if len(eq_rows) else None
    return a_ub, b_ub, a_eq, b_eq, ub_rows, eq_rows, sign


def _solve_lp(model: LinearModel, options: SolverOptions) -> Solution:
    c = model.objective_vector()
    flip = -1.0 if model.maximize else 1.0
    a_ub, b_ub, a_eq, b_eq, ub_rows, eq_rows, sign = _split_rows(model)
    bounds = np.column_stack([model.lb, model.ub]) if model.n_vars else None
    opts = {
        "presolve": options.presolve,
        "primal_feasibility_tolerance": options.feasibility_tol,
        "dual_feasibility_tolerance": options.optimality_tol,
    }
    if options.time_limit is not None:
        opts["time_limit"] = options.time_limit
    try:
        res = linprog(flip * c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds,
                      method="highs", options=opts)
    except ValueError as exc:
        return Solution(ERROR, message=str(exc))
    status = {0: OPTIMAL, 1: LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, ERROR)
    if status != OPTIMAL:
        return Solution(status, message=res.message)
    row_duals = np.zeros(model.n_rows)
    if len(ub_rows):
        row_duals[ub_rows] = flip * sign * res.ineqlin.marginals
    if len(eq_rows):
        row_duals[eq_rows] = flip * res.eqlin.marginals
    lower = flip * res.lower.marginals
    upper = flip * res.upper.marginals
    objective = float(c @ res.x) + model.obj_constant
    sol = Solution(OPTIMAL, objective, np.asarray(res.x), row_duals, lower, upper,
                   dual_bound=objective, message=res.message)
    if options.duality_check:
        gap = abs(dual_objective(model, sol) - objective)
        if gap > options.duality_check * max(1.0, abs(objective)):
            log.warning("%s: LP duality gap %.3g", model.name, gap)
    return sol


def dual_objective(model: LinearModel, sol: Solution) -> float:
    """Objective value certified by the row and bound multipliers."""
    lb = np.array(model.lb)
    ub = np.array(model.ub)
    val = float(np.dot(sol.row_duals, model.rhs))
    fin = np.isfinite(lb)
    val += float(np.dot(sol.lower_duals[fin], lb[fin]))
    fin = np.isfinite(ub)
    val += float(np.dot(sol.upper_duals[fin], ub[fin]))
    return val + model.obj_constant


def _solve_mip(model: LinearModel, options: SolverOptions) -> Solution:
    c = model.objective_vector()
    flip = -1.0 if model.maximize else 1.0
    a = model.matrix()
    senses = np.array(model.senses)
    rhs = np.array(model.rhs)
    lo = np.where(senses == "<=", -np.inf, rhs)
    hi = np.where(senses == ">=", np.inf, rhs)
    constraints = [LinearConstraint(a, lo, hi)] if model.n_rows else []
    opts = {"mip_rel_gap": options.mip_rel_gap, "presolve": options.presolve}
    if options.time_limit is not None:
        opts["time_limit"] = options.time_limit
    res = milp(flip * c, integrality=np.array(model.integer, dtype=int),
               bounds=Bounds(np.array(model.lb), np.array(model.ub)),
               constraints=constraints, options=opts)
    if res.status == 0:
        status = OPTIMAL
    elif res.status == 1:
        status = LIMIT
    elif res.status == 2:
        status = INFEASIBLE
    elif res.status == 3:
        status = UNBOUNDED
    else:
        status = ERROR
    if res.x is None:
        return Solution(status, message=res.message)
    objective = float(c @ res.x) + model.obj_constant
    bound = getattr(res, "mip_dual_bound", None)
    bound = objective if bound is None or not np.isfinite(bound) else flip * float(bound) + model.obj_constant
    return Solution(status, objective, np.asarray(res.x), dual_bound=bound, message=res.message)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddplan.solver import INF, INFEASIBLE, UNBOUNDED, LinearModel, SolverOptions, dual_objective


def test_one_variable_lp_and_dual():
    m = LinearModel()
    x = m.add_var(-INF, INF)
    r = m.add_constr([(x, 1.0)], ">=", 3.0)
    m.set_objective([(x, 1.0)])
    sol = m.optimize()
    assert sol.ok
    assert sol.objective == pytest.approx(3.0)
    assert sol.row_duals[r] == pytest.approx(1.0)


def test_infeasible():
    m = LinearModel()
    x = m.add_var(0.0, INF)
    m.add_constr([(x, 1.0)], "<=", -1.0)
    m.set_objective([])
    assert m.optimize().status == INFEASIBLE


def test_unbounded():
    m = LinearModel()
    x = m.add_var(0.0, INF)
    m.set_objective([(x, -1.0)])
    assert m.optimize().status in (UNBOUNDED, INFEASIBLE)


def test_knapsack():
    m = LinearModel()
    x1, x2 = m.add_binary(), m.add_binary()
    m.add_constr([(x1, 1.0), (x2, 1.0)], "<=", 1.0)
    m.set_objective([(x1, 3.0), (x2, 2.0)], maximize=True)
    sol = m.optimize()
    assert sol.objective == pytest.approx(3.0)
    assert sol.x[x1] == pytest.approx(1.0)


def test_maximize_dual_is_objective_sensitivity():
    m = LinearModel()
    x = m.add_var(0.0, INF)
    r = m.add_constr([(x, 2.0)], "<=", 10.0)
    m.set_objective([(x, 3.0)], maximize=True)
    sol = m.optimize()
    assert sol.objective == pytest.approx(15.0)
    assert sol.row_duals[r] == pytest.approx(1.5)


def test_fix_and_bounds():
    m = LinearModel()
    x = m.add_var(0.0, 10.0)
    m.fix(x, 4.0)
    m.set_objective([(x, 1.0)])
    assert m.optimize().objective == pytest.approx(4.0)
    m.set_bounds(x, lb=1.0, ub=2.0)
    assert m.optimize().objective == pytest.approx(1.0)


def test_unknown_variable_rejected():
    m = LinearModel()
    with pytest.raises((IndexError, ValueError)):
        m.add_constr([(5, 1.0)], "<=", 1.0)


def test_write_lp(tmp_path):
    m = LinearModel()
    x = m.add_var(0.0, INF, name="x")
    y = m.add_binary(name="y")
    m.add_constr([(x, 1.0), (y, -2.0)], ">=", 1.0)
    m.set_objective([(x, 1.0)])
    path = tmp_path / "m.lp"
    m.write_lp(path)
    text = path.read_text()
    assert text.startswith("Minimize")
    assert "Subject To" in text and "General" in text and text.rstrip().endswith("End")


def test_tightened_options():
    t = SolverOptions().tightened()
    assert t.feasibility_tol < SolverOptions().feasibility_tol


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_strong_duality_random_lps(seed):
    rng = np.random.default_rng(seed)
    n, k = rng.integers(2, 6), rng.integers(1, 5)
    m = LinearModel()
    xs = [m.add_var(-rng.uniform(0, 5), rng.uniform(0, 5)) for _ in range(n)]
    for _ in range(k):
        sense = rng.choice(["<=", ">=", "=="])
        coefs = rng.normal(size=n)
        # rhs chosen at the origin, which lies inside the box, keeps the LP feasible
        m.add_constr(list(zip(xs, coefs)), str(sense), 0.0 if sense == "==" else
                     (abs(rng.normal()) if sense == "<=" else -abs(rng.normal())))
    m.set_objective(list(zip(xs, rng.normal(size=n))), maximize=bool(rng.integers(2)))
    sol = m.optimize()
    assert sol.ok
    assert dual_objective(m, sol) == pytest.approx(sol.objective, rel=1e-6, abs=1e-7)

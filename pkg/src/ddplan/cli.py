"""Command-line entry point: ``ddplan {validate,plan,evaluate,sweep,report}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .decomposition import ArchiveMismatch, PlanResult, RunOptions, load_cuts, run, save_cuts
from .ambiguity import SupportCapExceeded
from .grid import CycleCapExceeded, GridError, GridModel, enumerate_forbidden_patterns, load_grid
from .master import InvestmentPlan, MasterOptions, TopologyDecision
from .simulate import PERSISTENCE_MODES, MCConfig, evaluate_plan
from .solver import SolverError

log = logging.getLogger("ddplan")

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3
PLAN_VERSION = 1


class InputError(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- plan documents -----------------------------------------------------------

def plan_to_dict(grid: GridModel, result: PlanResult, input_hash: str, ddu: bool) -> dict:
    ids = grid.line_ids
    by_option: dict[str, list[str]] = {}
    for lid, hid in sorted(result.plan.hardening.items()):
        by_option.setdefault(hid, []).append(lid)
    actions = {d: [ids[i] for i in np.flatnonzero(sw > 0.5)] for d, sw in result.topology.switch_action.items()}
    inv = result.plan.cost(grid)
    return _jsonable({
        "schema_version": PLAN_VERSION,
        "input_hash": input_hash,
        "grid": grid.name,
        "ddu": ddu,
        "converged": result.converged,
        "certified": result.certified,
        "objective": result.objective,
        "lower_bound": result.lower_bound,
        "upper_bound": result.upper_bound,
        "gap": result.gap,
        "iterations": len(result.iterations),
        "investments": {
            "build_line": sorted(result.plan.build_line),
            "install_switch": sorted(result.plan.install_switch),
            "hardening": dict(sorted(result.plan.hardening.items())),
        },
        "table": {
            "new_lines": sorted(result.plan.build_line),
            "new_switchable_lines": sorted(result.plan.install_switch),
            "switching_actions": actions,
            "hardening_by_option": by_option,
            "annual_investment_cost": inv["total"],
        },
        "topology": {d: {ids[i]: int(round(v)) for i, v in enumerate(z)}
                     for d, z in result.topology.status.items()},
        "costs": result.costs,
    })


def plan_from_dict(grid: GridModel, doc: dict) -> tuple[InvestmentPlan, TopologyDecision]:
    try:
        inv = doc["investments"]
        plan = InvestmentPlan(list(inv.get("build_line", [])), list(inv.get("install_switch", [])),
                              dict(inv.get("hardening", {})))
        status = {d: np.array([float(z[lid]) for lid in grid.line_ids]) for d, z in doc["topology"].items()}
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed plan document: missing {exc}") from exc
    unknown = set(plan.build_line + plan.install_switch + list(plan.hardening)) - set(grid.line_ids)
    if unknown:
        raise InputError(f"plan references unknown lines {sorted(unknown)}")
    sw = {d: np.zeros(grid.n_lines) for d in status}
    return plan, TopologyDecision(status, sw)


def write_iterations(result: PlanResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "LB", "UB", "gap", "cuts_added", "time_s"])
        for r in result.iterations:
            w.writerow([r.index, repr(r.lower_bound), repr(r.upper_bound), repr(r.gap), r.cuts_added,
                        f"{r.wall_time_s:.3f}"])


# -- argument handling ----------------------------------------------------------

def _run_options(args) -> RunOptions:
    if args.tol <= 0:
        raise InputError("--tol must be positive")
    if args.max_iter < 1:
        raise InputError("--max-iter must be at least 1")
    if args.bits < 1:
        raise InputError("--bits must be at least 1")
    if args.psi_max is not None and args.psi_max <= 0:
        raise InputError("--psi-max must be positive")
    master = MasterOptions(psi_max=args.psi_max, bits=args.bits, mip_gap=args.mip_gap,
                           time_limit=args.time_limit)
    return RunOptions(tol=args.tol, max_iter=args.max_iter, master=master, k=args.k, workers=args.workers)


def _load(args) -> tuple[GridModel, str]:
    path = Path(args.grid)
    if not path.is_file():
        raise InputError(f"grid file not found: {path}")
    grid = load_grid(path)
    if getattr(args, "no_ddu", False):
        grid = grid.without_ddu()
    elif getattr(args, "beta_scale", None) is not None:
        if args.beta_scale < 0:
            raise InputError("--beta-scale must be nonnegative")
        grid = grid.with_beta_scaled(args.beta_scale)
    return grid, file_hash(path)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _plan_once(grid: GridModel, args, warm=()) -> PlanResult:
    return run(grid, options=_run_options(args), warm_cuts=warm)


def cmd_validate(args) -> int:
    grid, digest = _load(args)
    patterns = enumerate_forbidden_patterns(grid)
    summary = {
        "grid": grid.name, "input_hash": digest, "buses": grid.n_buses, "lines": grid.n_lines,
        "days": [d.id for d in grid.days], "weight_hours": sum(d.weight_hours for d in grid.days),
        "forbidden_patterns": len(patterns), "k_max": grid.k_max,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_plan(args) -> int:
    grid, digest = _load(args)
    out = _out_dir(args)
    warm = load_cuts(args.cuts_in, grid) if args.cuts_in else []
    result = _plan_once(grid, args, warm)
    doc = plan_to_dict(grid, result, digest, ddu=not args.no_ddu)
    (out / "plan.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    write_iterations(result, out / "iterations.csv")
    save_cuts(result, args.cuts_out or out / "cuts.json")
    print(json.dumps({"objective": result.objective, "gap": result.gap, "converged": result.converged,
                      "investment_cost": doc["table"]["annual_investment_cost"]}))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _mc_config(args) -> MCConfig:
    if args.scenarios < 1:
        raise InputError("--scenarios must be at least 1")
    return MCConfig(n_scenarios=args.scenarios, seed=args.seed, persistence=args.persistence,
                    value_of_lost_load=args.voll, workers=args.workers)


def cmd_evaluate(args) -> int:
    grid, digest = _load(args)
    out = _out_dir(args)
    plan_path = Path(args.plan)
    if not plan_path.is_file():
        raise InputError(f"plan file not found: {plan_path}")
    plan, topo = plan_from_dict(grid, json.loads(plan_path.read_text()))
    report = evaluate_plan(grid, plan, topo, _mc_config(args))
    report.save_json(out / "mc_report.json", {"input_hash": digest, "plan_hash": file_hash(plan_path)})
    report.save_csv(out / "mc_scenarios.csv")
    print(json.dumps({"mean": report.mean, "cvar95": report.cvar95}))
    return EXIT_OK


def parse_sweep(spec: str) -> tuple[str, list[float]]:
    """``day=10,20,30`` with values in days per year."""
    if "=" not in spec:
        raise InputError("--sweep expects DAY=v1,v2,...")
    day, values = spec.split("=", 1)
    try:
        pts = [float(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"bad sweep value: {exc}") from exc
    if not pts or any(v < 0 for v in pts):
        raise InputError("sweep needs at least one nonnegative value")
    return day.strip(), pts


def sweep_grid(grid: GridModel, day: str, days_per_year: float, absorb: str | None = None) -> GridModel:
    """Set ``day`` to the given number of days and let ``absorb`` take up the slack to keep 8760 h."""
    ids = [d.id for d in grid.days]
    if day not in ids:
        raise InputError(f"sweep day {day!r} not in grid")
    if absorb is None:
        others = [d for d in grid.days if d.id != day]
        if not others:
            raise InputError("sweep needs another day to absorb the weight change")
        absorb = max(others, key=lambda d: d.weight_hours).id
    if absorb not in ids or absorb == day:
        raise InputError(f"invalid absorbing day {absorb!r}")
    new_w = 24.0 * days_per_year
    delta = new_w - grid.day(day).weight_hours
    absorbed = grid.day(absorb).weight_hours - delta
    if absorbed < 0:
        raise InputError(f"day {absorb!r} cannot absorb {delta} h")
    return grid.with_day_weights({day: new_w, absorb: absorbed}, drop_zero=True)


def cmd_sweep(args) -> int:
    grid, digest = _load(args)
    out = _out_dir(args)
    day, points = parse_sweep(args.sweep)
    warm = load_cuts(args.cuts_in, grid) if args.cuts_in else []
    rows, code = [], EXIT_OK
    for v in points:
        t0 = time.perf_counter()
        try:
            g = sweep_grid(grid, day, v, args.sweep_absorb)
            result = _plan_once(g, args, warm)
        except (SolverError, InputError) as exc:
            log.error("sweep point %s=%g failed: %s", day, v, exc)
            code = max(code, EXIT_SOLVER if isinstance(exc, SolverError) else EXIT_INPUT)
            rows.append([v, "", "", "", f"{time.perf_counter() - t0:.3f}", "error"])
            continue
        # cuts carry no weights or risk parameters, so every point can reuse them
        warm = result.cuts
        tag = f"{day}_{v:g}"
        (out / f"plan_{tag}.json").write_text(
            json.dumps(plan_to_dict(g, result, digest, ddu=not args.no_ddu), indent=2, sort_keys=True))
        if not result.converged:
            code = max(code, EXIT_NOT_CONVERGED)
        rows.append([v, repr(result.plan.cost(g)["total"]), repr(result.objective), len(result.iterations),
                     f"{time.perf_counter() - t0:.3f}", "converged" if result.converged else "not-converged"])
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["weight", "invest_cost", "objective", "iterations", "time", "status"])
        w.writerows(rows)
    print((out / "sweep.csv").read_text(), end="")
    return code


def render_report(out: Path) -> str:
    plan_path = out / "plan.json"
    if not plan_path.is_file():
        raise InputError(f"no plan.json in {out}")
    doc = json.loads(plan_path.read_text())
    tab = doc["table"]
    lines = [
        f"grid {doc['grid']}  ddu={doc['ddu']}  converged={doc['converged']}  iterations={doc['iterations']}",
        f"objective {doc['objective']:.2f} $/yr  (LB {doc['lower_bound']:.2f}, gap {doc['gap']:.2e})",
        f"new lines: {', '.join(tab['new_lines']) or '-'}",
        f"new switches: {', '.join(tab['new_switchable_lines']) or '-'}",
    ]
    for d, acts in tab["switching_actions"].items():
        lines.append(f"switching actions [{d}]: {', '.join(acts) or '-'}")
    for opt, lids in tab["hardening_by_option"].items():
        lines.append(f"hardening {opt}: {', '.join(lids)}")
    lines.append(f"annual investment cost: {tab['annual_investment_cost']:.2f} $/yr")
    with open(out / "costs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "component", "value"])
        for d, comp in doc["costs"]["days"].items():
            for k, v in comp.items():
                if isinstance(v, (int, float)):
                    w.writerow([d, k, repr(v)])
        for k, v in doc["costs"]["investment"].items():
            w.writerow(["", f"investment_{k}", repr(v)])
    mc = out / "mc_report.json"
    if mc.is_file():
        rep = json.loads(mc.read_text())
        lines.append(f"monte carlo: {rep['n_scenarios']} scenario-years, persistence {rep['persistence']}")
        for m in ("deficit_share", "saidi", "saifi", "deficit_cost"):
            lines.append(f"  {m:<14} mean {rep['mean'][m]:.4g}  cvar95 {rep['cvar95'][m]:.4g}")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    return text


def cmd_report(args) -> int:
    print(render_report(Path(args.out)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddplan", description="Wildfire-aware distribution planning.")
    p.add_argument("--version", action="version", version=f"ddplan {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def grid_args(sp, beta=True):
        sp.add_argument("--grid", required=True)
        if beta:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--no-ddu", action="store_true", help="zero every flow sensitivity")
            g.add_argument("--beta-scale", type=float, help="multiply every flow sensitivity")

    def solve_args(sp):
        sp.add_argument("--out", required=True)
        sp.add_argument("--cuts-in")
        sp.add_argument("--cuts-out")
        sp.add_argument("--tol", type=float, default=1e-4)
        sp.add_argument("--max-iter", type=int, default=200)
        sp.add_argument("--psi-max", type=float)
        sp.add_argument("--bits", type=int, default=10)
        sp.add_argument("--k", type=int, help="max simultaneous outages (default from grid)")
        sp.add_argument("--mip-gap", type=float, default=1e-6)
        sp.add_argument("--time-limit", type=float)
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("validate", help="load and check a grid file")
    grid_args(sp, beta=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("plan", help="solve the planning model")
    grid_args(sp)
    solve_args(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("evaluate", help="Monte Carlo evaluation of a plan")
    grid_args(sp)
    sp.add_argument("--plan", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--scenarios", type=int, default=500)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--persistence", choices=PERSISTENCE_MODES, default="rest-of-day")
    sp.add_argument("--voll", type=float, help="value of lost load $/kWh (default: deficit cost)")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("sweep", help="re-plan over a range of day weights")
    grid_args(sp)
    solve_args(sp)
    sp.add_argument("--sweep", required=True, help="DAY=d1,d2,... in days per year")
    sp.add_argument("--sweep-absorb", help="day whose weight absorbs the change")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="summarize outputs of prior runs")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def _fail(code: int, kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code, **extra}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GridError as exc:
        return _fail(EXIT_INPUT, "grid", str(exc), entity=exc.entity, field=exc.field)
    except (InputError, ArchiveMismatch, CycleCapExceeded, SupportCapExceeded, OSError, json.JSONDecodeError, ValueError) as exc:
        return _fail(EXIT_INPUT, "input", str(exc))
    except SolverError as exc:
        return _fail(EXIT_SOLVER, "solver", str(exc), status=exc.status)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: run, sweep, certify, export, gen-scenario."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, dynamics, electrical, render, scenarios
from .errors import PhysanetError, ScenarioError, SolverError
from .model import Scenario, load_scenario, scenario_document

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _error_json(kind: str, message: str) -> None:
    print(json.dumps({"error": message, "kind": kind}), file=sys.stderr)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _add_dynamics_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dynamics", default="two-norm",
                        choices=[k.value for k in dynamics.DynamicsKind])
    parser.add_argument("--g", default=None,
                        help="g function for --dynamics generalized, e.g. "
                             "identity, reactive:0.5, power:2, saturating:1,2")
    parser.add_argument("--beta", type=float, default=None,
                        help="exponent for --dynamics beta, in (0, 2)")
    parser.add_argument("--h", type=float, default=0.01, help="Euler step size")
    parser.add_argument("--max-steps", type=int, default=200_000)
    parser.add_argument("--stop-tol", type=float, default=1e-7)
    parser.add_argument("--capacity-floor", type=float, default=1e-9)
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for sampled initial capacities")
    parser.add_argument("--record-every", type=int, default=100)
    parser.add_argument("--record-gap", action="store_true",
                        help="include the duality gap in trajectory records")
    parser.add_argument("--solver", default="auto",
                        choices=["auto", "dense", "splu", "cg"])
    parser.add_argument("--solve-tol", type=float, default=1e-10)


def _spec_from_args(args) -> dynamics.DynamicsSpec:
    kind = dynamics.DynamicsKind(args.dynamics)
    g = None
    if kind == dynamics.DynamicsKind.GENERALIZED:
        g = dynamics.GFunction.parse(args.g or "identity")
    elif args.g is not None:
        raise ScenarioError("--g is only valid with --dynamics generalized")
    return dynamics.DynamicsSpec(kind=kind, g=g, beta=args.beta, h=args.h,
                                 max_steps=args.max_steps,
                                 stop_tol=args.stop_tol,
                                 capacity_floor=args.capacity_floor)


def _spec_document(spec: dynamics.DynamicsSpec) -> dict:
    return {
        "kind": spec.kind.value,
        "g": spec.g.spec_string() if spec.g else None,
        "beta": spec.beta,
        "h": spec.h,
        "max_steps": spec.max_steps,
        "stop_tol": spec.stop_tol,
        "capacity_floor": spec.capacity_floor,
    }


def _run_to_outputs(scenario: Scenario, args, outdir: Path) -> int:
    spec = _spec_from_args(args)
    x0 = scenario.sample_x0(seed=args.seed)
    diag = dynamics.DiagnosticsConfig(record_every=args.record_every,
                                      record_gap=args.record_gap)
    traj = dynamics.run(scenario.instance, x0, spec, diag,
                        solver=args.solver, solve_tol=args.solve_tol)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "scenario.json", scenario_document(scenario))
    traj.write_csv(outdir / "trajectory.csv")
    final = traj.final
    _write_json(outdir / "final_state.json", {
        "x": [float(v) for v in final.x],
        "status": traj.status.value,
        "steps": traj.steps,
    })
    if traj.status == dynamics.TerminalStatus.SOLVER_FAILURE:
        _error_json("solver", traj.message or "linear solver failed")
        return EXIT_RUNTIME

    sol = electrical.solve_commodities(scenario.instance, final.x,
                                       solver=args.solver,
                                       solve_tol=args.solve_tol)
    cert = analysis.certificate(scenario.instance, final.x, sol)
    cost = electrical.network_cost(scenario.instance, final.x)
    energy = electrical.energy_dissipation(scenario.instance, final.x, sol)
    report = {
        "scenario": scenario.name,
        "dynamics": _spec_document(spec),
        "seed": args.seed,
        "status": traj.status.value,
        "steps": traj.steps,
        "final": {
            "cost": cost,
            "energy": energy,
            "lyapunov": 0.5 * (cost + energy),
            "residual": final.residual,
        },
        "certificate": {
            "primal": cert.primal,
            "dual": cert.dual,
            "lyapunov": cert.lyapunov,
            "gap": cert.gap,
            "scaling": cert.scaling,
        },
    }
    _write_json(outdir / "report.json", report)
    if args.dot:
        (outdir / "network.dot").write_text(
            render.to_dot(scenario.instance, final.x))
    if args.svg:
        (outdir / "network.svg").write_text(
            render.to_svg(scenario.instance, final.x, scenario.layout,
                          scenario.terminals))
    return EXIT_OK


def _cmd_run(args) -> int:
    scenario = load_scenario(Path(args.scenario))
    return _run_to_outputs(scenario, args, Path(args.out))


def _cmd_sweep(args) -> int:
    values = [float(v) for v in args.values.split(",") if v]
    if not values:
        raise ScenarioError("--values must list at least one L value")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for L in values:
        scenario = scenarios.bowtie_scenario(L)
        spec = _spec_from_args(args)
        x0 = scenario.sample_x0(seed=args.seed)
        try:
            traj = dynamics.run(scenario.instance, x0, spec,
                                dynamics.DiagnosticsConfig(
                                    record_every=args.record_every),
                                solver=args.solver, solve_tol=args.solve_tol)
            if traj.status == dynamics.TerminalStatus.SOLVER_FAILURE:
                raise SolverError(traj.message or "solver failure")
            x = traj.final_x
            sol = electrical.solve_commodities(scenario.instance, x,
                                               solver=args.solver)
            idx = scenarios.bowtie_edge_indices(scenario.instance)
            q_t = float(sol.Q[idx["top"], 0])
            q_b = float(sol.Q[idx["bottom"], 0])
            q_m = float(sol.Q[idx["middle"], 0]) if "middle" in idx else 0.0
            x_m = float(x[idx["middle"]]) if "middle" in idx else 0.0
            cert = analysis.certificate(scenario.instance, x, sol)
            cost = electrical.network_cost(scenario.instance, x)
            energy = electrical.energy_dissipation(scenario.instance, x, sol)
            rows.append((L, q_b, q_m, q_t, x_m, cost, energy, cert.gap))
        except PhysanetError as exc:
            _error_json("sweep-value", f"L={L:g}: {exc}")
            nan = float("nan")
            rows.append((L, nan, nan, nan, nan, nan, nan, nan))
    lines = ["L,q_b,q_m,q_t,x_m,cost,energy,gap"]
    for row in rows:
        lines.append(",".join(f"{v:.12g}" for v in row))
    (outdir / "sweep_summary.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_certify(args) -> int:
    if args.run_dir:
        run_dir = Path(args.run_dir)
        scenario = load_scenario(run_dir / "scenario.json")
        state = json.loads((run_dir / "final_state.json").read_text())
        x = np.array(state["x"], dtype=float)
    else:
        if not args.scenario:
            raise ScenarioError("certify needs --scenario or --run-dir")
        scenario = load_scenario(Path(args.scenario))
        spec = _spec_from_args(args)
        x0 = scenario.sample_x0(seed=args.seed)
        traj = dynamics.run(scenario.instance, x0, spec,
                            dynamics.DiagnosticsConfig(record_every=args.record_every),
                            solver=args.solver, solve_tol=args.solve_tol)
        if traj.status == dynamics.TerminalStatus.SOLVER_FAILURE:
            _error_json("solver", traj.message or "solver failure")
            return EXIT_RUNTIME
        x = traj.final_x
    sol = electrical.solve_commodities(scenario.instance, x, solver=args.solver)
    cert = analysis.certificate(scenario.instance, x, sol)
    payload = {
        "primal": cert.primal,
        "dual": cert.dual,
        "lyapunov": cert.lyapunov,
        "gap": cert.gap,
        "scaling": cert.scaling,
        "gap_tolerance": args.gap_tol,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK if cert.gap <= args.gap_tol else EXIT_RUNTIME


def _cmd_export(args) -> int:
    if args.format not in ("dot", "svg"):
        raise ScenarioError(f"unknown export format {args.format!r}")
    run_dir = Path(args.run_dir)
    scenario = load_scenario(run_dir / "scenario.json")
    state = json.loads((run_dir / "final_state.json").read_text())
    x = np.array(state["x"], dtype=float)
    if args.format == "dot":
        text = render.to_dot(scenario.instance, x)
        default_name = "network.dot"
    else:
        text = render.to_svg(scenario.instance, x, scenario.layout,
                             scenario.terminals)
        default_name = "network.svg"
    out = Path(args.out) if args.out else run_dir / default_name
    out.write_text(text)
    print(str(out))
    return EXIT_OK


def _cmd_gen_scenario(args) -> int:
    if args.kind == "ring":
        scenario = scenarios.ring_scenario()
    elif args.kind == "bowtie":
        L = math.inf if args.L.lower() in ("inf", "infinity") else float(args.L)
        scenario = scenarios.bowtie_scenario(L)
    elif args.kind == "grid":
        if args.polygon:
            poly = json.loads(Path(args.polygon).read_text())
        else:
            poly = scenarios.synthetic_region_polygon()
        grid, _ = scenarios.grid_region_scenario(poly, args.spacing, args.seed)
        terminals = scenarios.pick_terminals(grid, args.terminal_count,
                                             args.threshold_fraction)
        demands = scenarios.demands_by_threshold(grid, terminals)
        scenario = scenarios.grid_scenario(grid, demands, terminals,
                                           initial_capacity=args.initial_capacity,
                                           name="grid-synthetic")
    else:
        raise ScenarioError(f"unknown scenario kind {args.kind!r}")
    doc = scenario_document(scenario)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, doc)
    print(str(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="physanet",
        description="Simulate capacity dynamics on multi-commodity flow "
                    "networks and certify the designs they converge to.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one scenario and write reports")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--dot", action="store_true", help="also write network.dot")
    p_run.add_argument("--svg", action="store_true", help="also write network.svg")
    _add_dynamics_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep the bow-tie middle-edge cost L")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated L values, e.g. 8.0,8.5,9.0")
    p_sweep.add_argument("--out", required=True)
    _add_dynamics_flags(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cert = sub.add_parser("certify", help="print the optimality certificate")
    p_cert.add_argument("--scenario")
    p_cert.add_argument("--run-dir", help="reuse final_state.json of a run")
    p_cert.add_argument("--gap-tol", type=float, default=1e-3)
    _add_dynamics_flags(p_cert)
    p_cert.set_defaults(func=_cmd_certify)

    p_exp = sub.add_parser("export", help="render the final state of a run")
    p_exp.add_argument("--run-dir", required=True)
    p_exp.add_argument("--format", required=True)
    p_exp.add_argument("--out")
    p_exp.set_defaults(func=_cmd_export)

    p_gen = sub.add_parser("gen-scenario", help="write a built-in scenario file")
    p_gen.add_argument("--kind", required=True, choices=["ring", "bowtie", "grid"])
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--L", default="8", help="bow-tie middle cost (or 'inf')")
    p_gen.add_argument("--spacing", type=float, default=1.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--terminal-count", type=int, default=20)
    p_gen.add_argument("--threshold-fraction", type=float, default=0.5)
    p_gen.add_argument("--initial-capacity", type=float, default=0.5)
    p_gen.add_argument("--polygon", help="JSON file with [[x, y], ...] vertices")
    p_gen.set_defaults(func=_cmd_gen_scenario)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, json.JSONDecodeError) as exc:
        _error_json("config", str(exc))
        return EXIT_CONFIG
    except PhysanetError as exc:
        _error_json("runtime", str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

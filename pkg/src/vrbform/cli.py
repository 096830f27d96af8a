"""Headless entry point: run scenarios, build corridors, run verification suites.

Exit codes: 0 success, 1 scenario error, 2 simulation diverged,
3 verification failure.
"""
from __future__ import annotations

import argparse
import os
import sys

from .scenario import (DEFAULT_SEED, ScenarioInfeasibleError, ScenarioParseError,
                       corridor_scenario, load_scenario, save_scenario)
from .planner import PlannerConfig
from .sim import SimulationDivergedError, run_scenario
from .verify import verify_bound, verify_qp

EXIT_OK = 0
EXIT_SCENARIO_ERROR = 1
EXIT_DIVERGED = 2
EXIT_VERIFY_FAILED = 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vrbform",
        description="Formation planning simulator and verification suites")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("--scenario", required=True, help="scenario file path")
    p_run.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_run.add_argument("--ticks", type=int, default=None, help="override duration")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--serve", default=None, metavar="HOST:PORT",
                       help="serve the scenario live over websocket instead of running headless")

    p_cor = sub.add_parser("corridor", help="build and run the corridor scenario")
    p_cor.add_argument("--width", type=float, default=3.0)
    p_cor.add_argument("--robots", type=int, default=4)
    p_cor.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_cor.add_argument("--ticks", type=int, default=None)
    p_cor.add_argument("--out", default="out")

    p_vb = sub.add_parser("verify-bound", help="Monte-Carlo check of the probability bound chain")
    p_vb.add_argument("--pcoll", type=float, default=1.5e-3)
    p_vb.add_argument("--samples", type=float, default=1e5)
    p_vb.add_argument("--instances", type=int, default=200)
    p_vb.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p_vq = sub.add_parser("verify-qp", help="brute-force check of the projection solver")
    p_vq.add_argument("--problems", type=int, default=1000)
    p_vq.add_argument("--seed", type=int, default=DEFAULT_SEED)

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "corridor":
        return _cmd_corridor(args)
    if args.command == "verify-bound":
        return _cmd_verify_bound(args)
    if args.command == "verify-qp":
        return _cmd_verify_qp(args)
    parser.error(f"unknown command {args.command}")
    return EXIT_SCENARIO_ERROR


def _cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioParseError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    if args.seed is not None:
        scenario.seed = args.seed
    if args.ticks is not None:
        scenario.duration_ticks = args.ticks
    if args.serve is not None:
        from .teleop import default_ui_dir, serve_blocking
        host, _, port = args.serve.rpartition(":")
        serve_blocking(scenario, host or "127.0.0.1", int(port),
                       ui_dir=default_ui_dir())
        return EXIT_OK
    return _run_and_write(scenario, args.out)


def _cmd_corridor(args) -> int:
    # Stiff consensus and a gentle field keep inter-robot parameter
    # discrepancy small, so realized distances hug the bound tightly.
    cfg = PlannerConfig(lambda_stiffness=4.0, apf_strength=0.1)
    try:
        kwargs = {}
        if args.ticks is not None:
            kwargs["duration_ticks"] = args.ticks
        scenario = corridor_scenario(args.width, args.robots, cfg,
                                     seed=args.seed, **kwargs)
    except ScenarioInfeasibleError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    os.makedirs(args.out, exist_ok=True)
    save_scenario(scenario, os.path.join(args.out, "corridor.scn"))
    return _run_and_write(scenario, args.out)


def _run_and_write(scenario, out_dir: str) -> int:
    try:
        metrics = run_scenario(scenario)
    except SimulationDivergedError as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    os.makedirs(out_dir, exist_ok=True)
    for name, text in (("states.csv", metrics.states_csv()),
                       ("pairs.csv", metrics.pairs_csv()),
                       ("metrics.jsonl", metrics.jsonl())):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(text)
    summary = metrics.summary()
    print(f"scenario: {scenario.name}  seed: {scenario.seed}  ticks: {summary['ticks']}")
    if summary["min_pair_distance"] is not None:
        print(f"min pair distance: {summary['min_pair_distance']:.4f} m "
              f"(bound {summary['max_pair_bound']:.4f} m)")
    print(f"first constraint activation tick: {summary['first_activation_tick']}")
    print(f"ticks with inflated-boundary violations: {summary['apf_violation_ticks']}")
    print(f"final centroid: ({summary['final_centroid'][0]:.3f}, "
          f"{summary['final_centroid'][1]:.3f})")
    print(f"wrote states.csv, pairs.csv, metrics.jsonl to {out_dir}")
    return EXIT_OK


def _cmd_verify_bound(args) -> int:
    report = verify_bound(args.pcoll, samples=int(args.samples),
                          instances=args.instances, seed=args.seed)
    print(f"xi for p_coll={args.pcoll:g}: {report.xi:.4f}")
    print(f"instances: {report.instances}, samples per instance: {int(args.samples)}")
    print(f"max (MC - 3*stderr - hyperplane): {report.max_mc_minus_hyperplane:.3e} "
          "(<= 0 means the hyperplane upper bound held)")
    print(f"max MC collision probability at the distance bound: "
          f"{report.max_mc_at_bound:.3e} vs limit {report.threshold_at_bound:.3e}")
    print("verify-bound: " + ("PASS" if report.passed else "FAIL"))
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def _cmd_verify_qp(args) -> int:
    report = verify_qp(problems=args.problems, seed=args.seed)
    print(f"problems: {report.problems}")
    print(f"max objective gap vs enumeration: {report.max_objective_gap:.3e}")
    print(f"max constraint violation: {report.max_infeasibility:.3e}")
    print("verify-qp: " + ("PASS" if report.passed else "FAIL"))
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


if __name__ == "__main__":
    sys.exit(main())

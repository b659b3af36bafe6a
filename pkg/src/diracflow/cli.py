"""Command line entry point.

Exit codes: 0 success, 1 residual threshold exceeded, 2 configuration
error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .pipeline import (EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_THRESHOLD, ManifestError, RunDirectory,
                       enabled_stages, report, run_scenario, run_stage)

# subcommand -> pipeline stage
STAGE_COMMANDS = {
    "analyze": "currents",
    "phi": "hidden_phase",
    "trace": "trajectories",
    "zitter": "zitterbewegung",
    "pauli": "pauli",
    "pauli-compare": "pauli_compare",
    "classical": "classical",
}


def _read_config(path: str):
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text), text


def _print_report(directory) -> int:
    code, summary = report(directory)
    print(Path(directory, "report", "summary.txt").read_text(encoding="utf-8"), end="")
    return code


def cmd_run(args) -> int:
    spec, text = _read_config(args.config)
    rd = run_scenario(spec, args.out, text, force=args.force)
    failed = [s for s, v in rd.manifest["stages"].items() if v["status"] != "ok"]
    code = _print_report(rd.path)
    for s in failed:
        print(f"stage {s} failed: {rd.manifest['stages'][s]['error']}", file=sys.stderr)
    return EXIT_RUNTIME if failed else code


def cmd_evolve(args) -> int:
    spec, text = _read_config(args.config)
    rd = RunDirectory.create(args.out, spec, text, force=args.force)
    if not run_stage(rd, "evolve"):
        print(f"evolve failed: {rd.manifest['stages']['evolve']['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(rd.manifest['snapshots'])} snapshots to {rd.path}")
    return EXIT_OK


def cmd_stage(args) -> int:
    rd = RunDirectory(args.dir)
    stage = STAGE_COMMANDS[args.command]
    if stage not in enabled_stages(rd.spec) and not args.anyway:
        print(f"stage {stage} is not enabled in this scenario (pass --anyway to run it)", file=sys.stderr)
        return EXIT_CONFIG
    if not run_stage(rd, stage):
        print(f"{stage} failed: {rd.manifest['stages'][stage]['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{stage}: ok")
    return EXIT_OK


def cmd_report(args) -> int:
    return _print_report(args.dir)


def cmd_scenarios(args) -> int:
    from .scenarios import list_scenarios, run_all

    if args.action == "list":
        for s in list_scenarios():
            print(f"{s.name:<36} budget {s.budget:>6.0f}s  {s.description}")
        return EXIT_OK
    ok, outcomes = run_all(args.out, names=args.only or None, enforce_budget=not args.no_budget)
    for o in outcomes:
        extra = f"  worst: {o.worst_offender}" if o.worst_offender else ""
        print(f"{o.status.upper():<12} {o.name:<36} {o.seconds:7.1f}s{extra}")
    failed = [o for o in outcomes if not o.passed]
    if failed:
        print("failed: " + ", ".join(o.name for o in failed))
    if any(o.status == "error" for o in failed):
        return EXIT_RUNTIME
    return EXIT_OK if ok else EXIT_THRESHOLD


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diracflow", description="Dirac hydrodynamics runs and residual reports.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="all enabled stages of a scenario, then the report")
    r.add_argument("config")
    r.add_argument("out")
    r.add_argument("--force", action="store_true", help="replace a non-empty output directory")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evolve", help="create a run directory and evolve the Dirac state")
    e.add_argument("config")
    e.add_argument("out")
    e.add_argument("--force", action="store_true")
    e.set_defaults(func=cmd_evolve)

    for name, stage in STAGE_COMMANDS.items():
        s = sub.add_parser(name, help=f"run the {stage} stage on an existing run directory")
        s.add_argument("dir")
        s.add_argument("--anyway", action="store_true", help="run even if the scenario does not enable it")
        s.set_defaults(func=cmd_stage)

    rep = sub.add_parser("report", help="summarise residuals against thresholds")
    rep.add_argument("dir")
    rep.set_defaults(func=cmd_report)

    sc = sub.add_parser("scenarios", help="list or run the shipped scenarios")
    sc_sub = sc.add_subparsers(dest="action", required=True)
    sc_sub.add_parser("list")
    ra = sc_sub.add_parser("run-all")
    ra.add_argument("out")
    ra.add_argument("--only", nargs="*", help="scenario names")
    ra.add_argument("--no-budget", action="store_true", help="do not fail on runtime budget overruns")
    sc.set_defaults(func=cmd_scenarios)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (ManifestError, FileExistsError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime-failure exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command line front-end: ``validate``, ``run`` and ``replay``.

Environment overrides: ``HARVEST_BDI_HORIZON_MS`` and ``HARVEST_BDI_SEED``
replace the config's horizon and seed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .asl import AgentProgram, AslSyntaxError, SemanticError, parse_program
from .beliefs import INTERNAL_FUNCTORS
from .config import ConfigError, SimConfig, load_config
from .energy import HarvestTrace, SimulationHorizonExceeded
from .simulation import LOG_KINDS, LogParseError, Simulation, read_log

__all__ = ["main", "validate", "Diagnostic", "format_record"]


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # error | warning
    line: int
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"{self.severity}: {where}{self.message}"


def validate(program: AgentProgram, config: SimConfig) -> list[Diagnostic]:
    """Cross-check a parsed program against the simulation config."""
    out = []
    seen = set()
    for action in program.external_actions():
        if action.name not in config.costs.actions and action.name not in seen:
            out.append(Diagnostic("error", action.line,
                                  f"action '{action.name}' has no entry in the cost model"))
            seen.add(action.name)
    declared = {lit.functor for lit in program.initial_beliefs}
    for plan in program.plans:
        for item in plan.context:
            functor = getattr(item, "functor", None)
            if functor and functor.startswith("e_") and functor not in INTERNAL_FUNCTORS \
                    and functor not in declared:
                out.append(Diagnostic("warning", plan.line,
                                      f"guard uses estimate '{functor}' but no initial "
                                      f"belief declares it"))
    if not program.plans:
        out.append(Diagnostic("warning", 0, "program has no plans"))
    goal_triggers = {p.trigger.literal.functor for p in program.plans}
    for goal in config.boot_goals:
        if goal.split("(")[0] not in goal_triggers:
            out.append(Diagnostic("warning", 0, f"boot goal '{goal}' has no plan"))
    return out


def _load_program(path: str) -> AgentProgram:
    return parse_program(Path(path).read_text(encoding="utf-8"))


def _load_config(path: str) -> SimConfig:
    config = load_config(path)
    changes = {}
    if "HARVEST_BDI_HORIZON_MS" in os.environ:
        changes["horizon_ms"] = int(os.environ["HARVEST_BDI_HORIZON_MS"])
    if "HARVEST_BDI_SEED" in os.environ:
        changes["seed"] = int(os.environ["HARVEST_BDI_SEED"])
    return config.with_overrides(**changes) if changes else config


def _check(program_path: str, config_path: str, err) -> tuple[AgentProgram, SimConfig] | None:
    try:
        program = _load_program(program_path)
    except AslSyntaxError as exc:
        print(f"{program_path}:{exc.line}:{exc.column}: error: {exc.msg}", file=err)
        return None
    except SemanticError as exc:
        print(f"{program_path}:{exc.line}: error: {exc}", file=err)
        return None
    try:
        config = _load_config(config_path)
    except (ConfigError, OSError) as exc:
        print(f"{config_path}: error: {exc}", file=err)
        return None
    diagnostics = validate(program, config)
    for d in diagnostics:
        loc = f"{program_path}:{d.line}" if d.line else program_path
        print(f"{loc}: {d.severity}: {d.message}", file=err)
    if any(d.severity == "error" for d in diagnostics):
        return None
    return program, config


def cmd_validate(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    checked = _check(args.program, args.config, err)
    if checked is None:
        return 1
    program, _ = checked
    print(f"{args.program}: ok ({len(program.initial_beliefs)} beliefs, "
          f"{len(program.plans)} plans)", file=out)
    return 0


def cmd_run(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    checked = _check(args.program, args.config, err)
    if checked is None:
        return 1
    program, config = checked
    try:
        trace = HarvestTrace.from_csv(args.trace)
    except (OSError, ValueError) as exc:
        print(f"{args.trace}: error: {exc}", file=err)
        return 1
    sim = Simulation(program, config, trace)
    try:
        summary = sim.run()
    except SimulationHorizonExceeded as exc:
        print(f"error: {exc}", file=err)
        return 2
    sim.write_log(args.output)
    if args.images:
        sim.store.dump(args.images)
    print(f"wrote {len(sim.log.records) + 1} records to {args.output}: "
          f"{summary['measurements']} measurements, {summary['brown_outs']} brown-outs", file=out)
    return 0


_ENERGY_KINDS = ("action", "persist", "restore", "sleep", "wake", "brown_out", "clamp_loss")


def format_record(rec: dict) -> str:
    kind = rec["kind"]
    head = f"{rec.get('time_ms', 0):>10} ms  {kind:<15} {rec.get('level_uJ', 0.0):>11.3f} uJ"
    if kind == "action":
        args = ", ".join(f"{a:g}" if isinstance(a, float) else str(a) for a in rec.get("args", []))
        return f"{head}  {rec['name']}({args})  {rec['energy_uJ']:.3f} uJ"
    if kind == "summary":
        return "summary  " + "  ".join(f"{k}={v}" for k, v in rec.items() if k != "kind")
    skip = {"seq", "time_ms", "kind", "level_uJ", "energy"}
    detail = "  ".join(f"{k}={v}" for k, v in rec.items() if k not in skip)
    return f"{head}  {detail}".rstrip()


def cmd_replay(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    try:
        records = read_log(args.log)
    except LogParseError as exc:
        print(f"{args.log}: ParseError: {exc}", file=err)
        return 1
    except OSError as exc:
        print(f"{args.log}: error: {exc}", file=err)
        return 1
    wanted = set(args.filter or ())
    if "energy" in wanted:
        wanted.update(_ENERGY_KINDS)
    for rec in records:
        if wanted and rec["kind"] not in wanted:
            continue
        print(format_record(rec), file=out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harvest-bdi",
                                     description="Energy-aware BDI agents on a simulated "
                                                 "energy-harvesting device.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a program against a config")
    p.add_argument("program")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate and write a JSON-lines log")
    p.add_argument("program")
    p.add_argument("config")
    p.add_argument("trace", help="harvest trace CSV (time_ms,power_uW)")
    p.add_argument("-o", "--output", required=True, help="log file to write")
    p.add_argument("--images", metavar="DIR", help="also dump persisted images to DIR")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="pretty-print a log")
    p.add_argument("log")
    p.add_argument("--filter", action="append",
                   choices=sorted(set(LOG_KINDS) | {"summary", "energy"}),
                   help="record kind to show (repeatable; 'energy' selects energy events)")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands: run (execute a workflow on an engine), verify (check the
composition constraints), bench (execute benchmark suites), inspect-trace
(summarize an exported trace). Exit codes are a stable contract:
0 ok, 1 verdict failed, 2 usage or validation error, 3 engine error,
4 suite finished with scenario errors.

FAASFLOW_CONFIG names a default profile file used when --profile is absent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from .billing import PricingModel, compute_billing
from .dsl import compile_state_machine, parse_state_machine
from .engines import engine_class
from .errors import (
    ConfigError,
    EngineError,
    FaasflowError,
    FunctionFailed,
    InvalidCount,
    ParseError,
    UnsupportedState,
    ValidationError,
)
from .profiles import (
    CalibrationProfile,
    ENGINE_IDS,
    load_profile,
    parse_config_text,
    profile_for_engine,
)
from .runtime import FunctionDef, echo_behavior, scripted_behavior, sleep_behavior
from .trilemma import default_probe_spec, verify_trilemma
from .workflow import from_dict, function_names

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_USAGE = 2
EXIT_ENGINE = 3
EXIT_PARTIAL = 4

#: resource names every run understands without configuration
_BUILTIN_FUNCTIONS = {"sleepAction": "sleep:1000", "echo": "echo"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, InvalidCount, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (EngineError, FunctionFailed, UnsupportedState) as err:
        print(f"engine error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ENGINE
    except FaasflowError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ENGINE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faasflow",
        description="simulated FaaS platform with pluggable orchestration engines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a workflow on an engine")
    run_p.add_argument("--engine", required=True, choices=ENGINE_IDS)
    run_p.add_argument("--workflow", required=True, help="workflow file (state machine or tree JSON)")
    run_p.add_argument("--input", default=None, help="input payload as JSON text")
    run_p.add_argument("--profile", default=None, help="calibration profile file")
    run_p.add_argument("--out", default=None, help="output directory for the trace file")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--jitter", type=float, default=0.0)
    run_p.add_argument("--extended-sessions", action="store_true",
                       help="keep event-sourcing instances in memory (adf only)")
    run_p.set_defaults(func=cmd_run)

    verify_p = sub.add_parser("verify", help="verify the composition constraints")
    verify_p.add_argument("--engine", required=True, choices=ENGINE_IDS)
    verify_p.add_argument("--workflow", default=None)
    verify_p.add_argument("--profile", default=None)
    verify_p.set_defaults(func=cmd_verify)

    bench_p = sub.add_parser("bench", help="run a benchmark suite")
    bench_p.add_argument("--suite", default="default", help="'default' or a suite config file")
    bench_p.add_argument("--out", default="bench-out", help="output directory")
    bench_p.add_argument("--seed", type=int, default=None)
    bench_p.add_argument("--jitter", type=float, default=None)
    bench_p.set_defaults(func=cmd_bench)

    inspect_p = sub.add_parser("inspect-trace", help="summarize an exported trace file")
    inspect_p.add_argument("trace", help="trace file written by run")
    inspect_p.set_defaults(func=cmd_inspect)

    return parser


def _load_profile_arg(path: str | None, engine_id: str | None = None) -> CalibrationProfile:
    if path:
        return load_profile(path)
    env = os.environ.get("FAASFLOW_CONFIG")
    if env:
        return load_profile(env)
    if engine_id:
        return profile_for_engine(engine_id)
    return CalibrationProfile()


def _load_workflow(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ValidationError(f"cannot read workflow {path}: {err}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(err.msg, err.pos) from None
    if isinstance(doc, dict) and "kind" in doc:
        return from_dict(doc)
    return compile_state_machine(parse_state_machine(text))


def _behavior_from_string(text: str):
    kind, _, arg = text.partition(":")
    if kind == "sleep":
        return sleep_behavior(int(arg))
    if kind == "echo":
        return echo_behavior()
    if kind == "tag":
        return scripted_behavior([("tag", arg or "tag")])
    raise ConfigError(f"unknown function behavior {text!r} "
                      "(expected sleep:<ms>, echo, or tag:<label>)")


def _functions_for(spec, profile: CalibrationProfile) -> list[FunctionDef]:
    defs = []
    declared = dict(_BUILTIN_FUNCTIONS)
    declared.update(profile.functions)
    for name in sorted(function_names(spec)):
        if name in declared:
            defs.append(FunctionDef(name, _behavior_from_string(declared[name])))
        else:
            # resource names like sleep:500 define themselves
            defs.append(FunctionDef(name, _behavior_from_string(name)))
    return defs


def cmd_run(args) -> int:
    spec = _load_workflow(args.workflow)
    profile = _load_profile_arg(args.profile, args.engine)
    payload = json.loads(args.input) if args.input else None
    functions = _functions_for(spec, profile)

    overrides = {"seed": args.seed}
    if args.jitter:
        overrides["jitter"] = args.jitter
    if args.extended_sessions and args.engine == "adf":
        overrides["extended_sessions"] = True
    engine = engine_class(args.engine).from_profile(profile, **overrides)

    sim = engine.new_simulation()
    result = engine.run(spec, payload, functions=functions, sim=sim)
    report = compute_billing(result, PricingModel())

    print(f"engine:      {args.engine}")
    print(f"output:      {json.dumps(result.output, sort_keys=True)}")
    print(f"wall time:   {result.wall_time_ms} ms")
    print(f"overhead:    {bench_mod.overhead(result)} ms")
    print(f"transitions: {result.transitions}")
    if result.replay_count:
        print(f"replays:     {result.replay_count}")
    print(f"billing:     {report.total_usd} USD "
          f"(transitions {report.transition_charge_usd}, "
          f"duration {report.duration_charge_usd}, "
          f"storage {report.storage_charge_usd})")

    out_dir = Path(args.out) if args.out else Path.cwd()
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.ndjson"
    sim.export_trace(trace_path)
    print(f"trace:       {trace_path}")
    if result.history:
        history_path = out_dir / "history.ndjson"
        result.export_history(history_path)
        print(f"history:     {history_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    profile = _load_profile_arg(args.profile, args.engine)
    engine = engine_class(args.engine).from_profile(profile)
    if args.workflow:
        spec = _load_workflow(args.workflow)
        functions = _functions_for(spec, profile)
    else:
        spec, functions = default_probe_spec()
    verdict = verify_trilemma(engine, spec, functions)
    print(json.dumps(verdict.to_dict(), indent=2))
    return EXIT_OK if verdict.st_safe else EXIT_VERDICT


def cmd_bench(args) -> int:
    if args.suite == "default":
        config = bench_mod.SuiteConfig()
    else:
        sections = parse_config_text(Path(args.suite).read_text(encoding="utf-8"))
        config = bench_mod.suite_config_from_mapping(sections.get("suite", {}))
    if args.seed is not None:
        config.seed = args.seed
    if args.jitter is not None:
        config.jitter = args.jitter

    report = bench_mod.run_suite(config, args.out)

    print(f"{'engine':<10} {'scenario':<13} {'n':>4} {'payload':>8} {'mean ms':>12} {'stdev':>8}")
    for sample in report.samples:
        if sample.error:
            print(f"{sample.engine:<10} {sample.scenario:<13} {sample.n:>4} "
                  f"{sample.payload_bytes:>8} {'N/A':>12} {'N/A':>8}")
        else:
            print(f"{sample.engine:<10} {sample.scenario:<13} {sample.n:>4} "
                  f"{sample.payload_bytes:>8} {sample.mean_ms:>12.1f} {sample.stdev_ms:>8.1f}")
    for path in report.files:
        print(f"wrote {path}")
    for line in report.errors:
        print(f"scenario error: {line}", file=sys.stderr)
    return EXIT_PARTIAL if report.errors else EXIT_OK


def cmd_inspect(args) -> int:
    from .runtime import load_trace

    records = load_trace(args.trace)
    if not records:
        raise ValidationError("trace file holds no records")
    wall_start = min(r["submit_time"] for r in records)
    done = [r for r in records if r["end_time"] is not None]
    wall_end = max(r["end_time"] for r in done) if done else wall_start
    print(f"records:     {len(records)}")
    print(f"span:        {wall_start}..{wall_end} ms")
    print(f"overhead:    {bench_mod.overhead_from_trace(records)} ms")
    print(f"{'id':<10} {'function':<24} {'state':<10} {'billed ms':>10} {'orch':>5}")
    for r in records:
        billed = sum(b - a for a, b in r["billed_intervals"])
        print(f"{r['id']:<10} {r['function']:<24} {r['state']:<10} "
              f"{billed:>10} {'yes' if r['orchestrator'] else '':>5}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

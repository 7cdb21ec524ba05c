"""Command line: replay traces, check models, score logs, explain models.

``replay`` runs one network per trace file (one participant each), writes a
dispatch log and telemetry per participant, and aggregates the confusion
matrix, F-measure and delay tables over all of them.  ``check-models``
runs the bundled golden traces.  ``score`` re-scores previously written
dispatch logs offline.  ``explain`` renders a model's canonical text, its
plain-language sentence and, given a bindings dump from a replay, the last
matched bindings.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from . import dsl, golden, ingest, metrics, procedures
from .modelio import ConfigError


def _load_params(path: Optional[str]) -> Optional[dict[str, int]]:
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    return {str(k): int(v) for k, v in raw.items()}


def _rebase_truth(load: ingest.TraceLoad, base_ms: int) -> list[ingest.Interval]:
    return [
        ingest.Interval(i.activity, i.start_ms - base_ms, i.end_ms - base_ms)
        for i in load.intervals
    ]


def cmd_replay(args: argparse.Namespace) -> int:
    config_dir = Path(args.config) if args.config else None
    params = _load_params(args.params)
    scenario = procedures.load_scenario(config_dir=config_dir, params=params)
    out_dir = Path(args.out)
    truth = ingest.GroundTruth()
    recognitions: dict[str, list[tuple[int, int]]] = {}
    telemetry = metrics.Telemetry()
    total_events = 0
    warnings = 0

    for trace_path in args.trace:
        path = Path(trace_path)
        participant = path.stem
        load = ingest.load_trace(path, **scenario.load_trace_kwargs())
        if not load.events:
            print(f"{participant}: empty trace, skipped", file=sys.stderr)
            continue
        result = procedures.run_replay(
            load.events,
            participant=participant,
            scenario=scenario,
            speed=args.speed,
            pure_virtual=not args.wall,
        )
        recognitions[participant] = result.recognition_pairs()
        for interval in _rebase_truth(load, result.base_ms):
            truth.add(participant, interval)
        for node, points in result.telemetry.series.items():
            for point in points:
                telemetry.record(
                    f"{node}@{participant}", point.time_ms, point.axiom_count, point.eval_ns
                )
        participant_dir = out_dir / participant
        participant_dir.mkdir(parents=True, exist_ok=True)
        metrics.emit_report(
            participant_dir,
            telemetry=result.telemetry,
            dispatch_log=result.log_text,
            summary={
                "participant": participant,
                "events": result.events_replayed,
                "recognitions": len(result.recognitions),
                "base_ms": result.base_ms,
                "warnings": result.warnings,
            },
        )
        bindings_path = participant_dir / "bindings.json"
        with open(bindings_path, "w", encoding="utf-8", newline="\n") as handle:
            json.dump(
                {
                    str(activity): {var: value for var, value in binding}
                    for activity, binding in sorted(result.last_bindings.items())
                },
                handle,
                indent=2,
                sort_keys=True,
            )
            handle.write("\n")
        total_events += result.events_replayed
        warnings += len(result.warnings)
        print(
            f"{participant}: {result.events_replayed} events, "
            f"{len(result.recognitions)} recognitions"
        )

    matrix = metrics.score(recognitions, truth, grace_ms=args.grace)
    f1 = metrics.f_measure(matrix)
    delays = metrics.delay_stats(recognitions, truth, grace_ms=args.grace)
    metrics.emit_report(
        out_dir,
        matrix=matrix,
        f1=f1,
        delays=delays,
        telemetry=telemetry,
        params=scenario.params(),
        summary={
            "participants": sorted(recognitions),
            "events": total_events,
            "warnings": warnings,
            "grace_ms": args.grace,
            "speed": args.speed,
            "pure_virtual": not args.wall,
        },
    )
    print(f"report written to {out_dir}")
    return 0


def cmd_check_models(args: argparse.Namespace) -> int:
    config_dir = Path(args.config) if args.config else None
    scenario = procedures.load_scenario(config_dir=config_dir, params=_load_params(args.params))
    outcomes = golden.run_golden_suite(scenario)
    failures = 0
    for outcome in outcomes:
        status = "ok" if outcome.passed else "FAIL"
        print(f"[{status}] a{outcome.activity} {outcome.case}: {outcome.detail}")
        failures += 0 if outcome.passed else 1
    print(f"{len(outcomes) - failures}/{len(outcomes)} cases passed")
    return 0 if failures == 0 else 1


def cmd_score(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    scenario = procedures.load_scenario(config_dir=Path(args.config) if args.config else None)
    truth = ingest.GroundTruth()
    recognitions: dict[str, list[tuple[int, int]]] = {}
    for trace_path in args.trace:
        path = Path(trace_path)
        participant = path.stem
        load = ingest.load_trace(path, **scenario.load_trace_kwargs())
        if not load.events:
            continue
        base_ms = load.events[0].time_ms - procedures.REBASE_START_MS
        for interval in _rebase_truth(load, base_ms):
            truth.add(participant, interval)
        log_path = run_dir / participant / "dispatch.log"
        if not log_path.exists():
            print(f"{participant}: no dispatch log under {run_dir}", file=sys.stderr)
            recognitions[participant] = []
            continue
        recognitions[participant] = metrics.parse_dispatch_log(
            log_path.read_text(encoding="utf-8")
        )
    matrix = metrics.score(recognitions, truth, grace_ms=args.grace)
    metrics.emit_report(
        Path(args.out),
        matrix=matrix,
        f1=metrics.f_measure(matrix),
        delays=metrics.delay_stats(recognitions, truth, grace_ms=args.grace),
        summary={"participants": sorted(recognitions), "grace_ms": args.grace},
    )
    print(f"report written to {args.out}")
    return 0


def cmd_explain(args: argparse.Namespace) -> int:
    config_dir = Path(args.config) if args.config else None
    scenario = procedures.load_scenario(config_dir=config_dir, params=_load_params(args.params))
    wanted = args.model.upper()
    binding = next(
        (b for b in scenario.bindings.values() if b.ast.name.upper() == wanted),
        None,
    )
    if binding is None:
        print(f"unknown model {args.model!r}; shipped: "
              + ", ".join(scenario.bindings[i].ast.name for i in sorted(scenario.bindings)),
              file=sys.stderr)
        return 2
    print(dsl.format_model(binding.ast).rstrip("\n"))
    print()
    print(dsl.render_sentence(binding.ast))
    print()
    print(f"activity {binding.index}: {binding.label}")
    print(f"node {binding.node}; sensors {', '.join(binding.sensor_ids)}")
    for prepass in binding.compiled.prepasses:
        print(
            f"pre-pass: {prepass.derived_concept} when >= {prepass.min_count} "
            f"{prepass.source_concept} statements span >= {prepass.window_ms} ms"
        )
    for rule in binding.compiled.rules:
        print(f"rule {rule.name}: {len(rule.body)} atoms, head at {rule.head.time}")
    if args.bindings:
        with open(args.bindings, "r", encoding="utf-8") as handle:
            dump = json.load(handle)
        entry = dump.get(str(binding.index))
        if entry:
            print("last matched binding:")
            for var, value in sorted(entry.items()):
                print(f"  {var} = {value}")
        else:
            print("no recorded binding for this model in the dump")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluentnet",
        description="Replay sensor traces through the activity-recognition network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    replay = sub.add_parser("replay", help="replay trace files and emit reports")
    replay.add_argument("--config", help="scenario directory (default: bundled)")
    replay.add_argument("--trace", nargs="+", required=True, help="trace file(s), one per participant")
    replay.add_argument("--speed", type=float, default=1.0, help="wall-clock speed factor")
    replay.add_argument("--pure-virtual", action="store_true", default=True,
                        help="consume events as fast as possible (default)")
    replay.add_argument("--wall", action="store_true", help="pace replay against the wall clock")
    replay.add_argument("--params", help="JSON file overriding model parameters")
    replay.add_argument("--out", required=True, help="report directory")
    replay.add_argument("--grace", type=int, default=metrics.DEFAULT_GRACE_MS,
                        help="grace window (ms) when matching recognitions to truth")
    replay.set_defaults(func=cmd_replay)

    check = sub.add_parser("check-models", help="run the bundled golden traces")
    check.add_argument("--config", help="scenario directory (default: bundled)")
    check.add_argument("--params", help="JSON file overriding model parameters")
    check.set_defaults(func=cmd_check_models)

    scorer = sub.add_parser("score", help="score previously written dispatch logs")
    scorer.add_argument("--config", help="scenario directory (default: bundled)")
    scorer.add_argument("--run-dir", required=True, help="replay output directory")
    scorer.add_argument("--trace", nargs="+", required=True, help="the trace files replayed")
    scorer.add_argument("--grace", type=int, default=metrics.DEFAULT_GRACE_MS)
    scorer.add_argument("--out", required=True, help="report directory")
    scorer.set_defaults(func=cmd_score)

    explain = sub.add_parser("explain", help="describe a shipped model")
    explain.add_argument("--config", help="scenario directory (default: bundled)")
    explain.add_argument("--params", help="JSON file overriding model parameters")
    explain.add_argument("--model", required=True, help="model name, e.g. A3")
    explain.add_argument("--bindings", help="bindings.json written by replay")
    explain.set_defaults(func=cmd_explain)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, dsl.DslError, ingest.TraceParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

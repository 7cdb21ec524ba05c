"""The three procedure families: replayer, importers and model evaluators.

The replayer turns dataset readings into overwrite-mode assertions in the
spatial node, refreshing classification and the person's inferred context
after each one.  Each importer reacts to a spatial trigger and copies the
current values of its activity's sensors into the activity node
(append mode, suppressing unchanged values), then raises the sync
statement ``N`` so the paired evaluator runs in the same step.  The
evaluator resets ``N``, runs any windowed pre-passes, evaluates the
compiled model rules on a snapshot, and on success asserts the activity
statement, records the recognition and clears the node down to the result
and the sync statement.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from time import perf_counter_ns
from typing import Callable, Mapping, Optional, Sequence

from . import dsl
from .context import APPEND, OVERWRITE, ContextStore
from .ingest import TraceEvent
from .metrics import Telemetry
from .modelio import StoreModel, load_store_model
from .network import (
    NetworkModel,
    ProcedureImpl,
    RuntimeNetwork,
    VirtualClock,
    bootstrap,
    load_network,
)
from .rules import RuleEngine
from .statements import AGGREGATED, Statement

SPATIAL_NODE = "L"
SYNC_STATEMENT = "N"
SYNC_CONCEPT = "SYNC"
RESULT_KEEP = ("ACTIVITY", SYNC_CONCEPT)

SCENARIO_DIR = Path(__file__).parent / "scenario"
NETWORK_FILE = "network.cfg"

REBASE_START_MS = 1000
TRAILING_FLUSH_MS = 2000


class ScenarioError(ValueError):
    """The scenario configuration is inconsistent with itself."""


@dataclass(frozen=True)
class ActivityBinding:
    """Everything one activity needs: its node, sensors, trigger events,
    and the compiled fluent model."""

    index: int
    label: str
    node: str
    installed: str
    sensor_ids: tuple[str, ...]
    trigger_events: tuple[str, ...]
    ast: dsl.ModelAst
    compiled: dsl.CompiledModel
    clear_on_recognition: bool = True


@dataclass(frozen=True)
class RecognitionRecord:
    activity: int
    time_ms: int
    contributing: tuple[str, ...]


@dataclass
class Scenario:
    base_dir: Path
    model: NetworkModel
    spatial_model: StoreModel
    bindings: dict[int, ActivityBinding]
    sensor_rename: dict[str, str] = field(default_factory=dict)
    value_map: dict[str, bool] = field(default_factory=dict)

    def params(self) -> dict[str, int]:
        table: dict[str, int] = {}
        for binding in self.bindings.values():
            table.update(binding.ast.param_table())
        return table

    def load_trace_kwargs(self) -> dict:
        return {"rename": self.sensor_rename, "value_map": self.value_map}


SENSOR_MAP_FILE = "sensors.map"


def _load_sensor_map(path: Path) -> tuple[dict[str, str], dict[str, bool]]:
    """Optional per-scenario raw-token mapping (renames, extra state words)."""
    from .modelio import ConfigError, read_sections

    if not path.exists():
        return {}, {}
    sections = read_sections(path.read_text(encoding="utf-8"))
    rename: dict[str, str] = {}
    for line in sections.get("rename", []):
        if len(line.tokens) != 2:
            raise ConfigError(f"line {line.lineno}: rename line must read 'RAW CANONICAL'")
        rename[line.tokens[0]] = line.tokens[1]
    values: dict[str, bool] = {}
    for line in sections.get("values", []):
        if len(line.tokens) != 2 or line.tokens[1].lower() not in ("true", "false"):
            raise ConfigError(f"line {line.lineno}: value line must read 'WORD true|false'")
        values[line.tokens[0]] = line.tokens[1].lower() == "true"
    return rename, values


def load_scenario(
    config_dir: Optional[Path] = None, params: Optional[Mapping[str, int]] = None
) -> Scenario:
    """Load the network description and compile every activity model."""
    base_dir = Path(config_dir) if config_dir is not None else SCENARIO_DIR
    with open(base_dir / NETWORK_FILE, "r", encoding="utf-8") as handle:
        model = load_network(handle.read())
    spatial_decl = next((n for n in model.nodes if n.name == SPATIAL_NODE), None)
    if spatial_decl is None:
        raise ScenarioError(f"scenario declares no spatial node {SPATIAL_NODE!r}")
    spatial_model = load_store_model(base_dir / spatial_decl.represents)

    triggers: dict[int, tuple[str, ...]] = {}
    for proc in model.procedures:
        if proc.implements.startswith("importer:"):
            triggers[int(proc.implements.split(":", 1)[1])] = proc.requires

    bindings: dict[int, ActivityBinding] = {}
    for decl in model.activities:
        node_decl = next(n for n in model.nodes if n.name == decl.node)
        node_model = load_store_model(base_dir / node_decl.represents)
        with open(base_dir / decl.model_path, "r", encoding="utf-8") as handle:
            ast = dsl.parse_model(handle.read(), known_classes=node_model.graph.concepts)
        if params:
            ast = dsl.with_params(ast, dict(params))
        compiled = dsl.compile_model(ast)
        sensor_ids = tuple(
            sorted(
                sensor_id
                for sensor_id, sensor in spatial_model.installations.items()
                if decl.installed in sensor.concepts
            )
        )
        if not sensor_ids:
            raise ScenarioError(f"activity {decl.index}: no sensor installed as {decl.installed}")
        missing = [s for s in sensor_ids if s not in node_model.installations]
        if missing:
            raise ScenarioError(
                f"activity {decl.index}: node {decl.node} lacks labels for {missing}"
            )
        bindings[decl.index] = ActivityBinding(
            index=decl.index,
            label=decl.label,
            node=decl.node,
            installed=decl.installed,
            sensor_ids=sensor_ids,
            trigger_events=triggers.get(decl.index, ()),
            ast=ast,
            compiled=compiled,
            clear_on_recognition=decl.clear_on_recognition,
        )
    rename, value_map = _load_sensor_map(base_dir / SENSOR_MAP_FILE)
    return Scenario(
        base_dir=base_dir,
        model=model,
        spatial_model=spatial_model,
        bindings=bindings,
        sensor_rename=rename,
        value_map=value_map,
    )


def registry(params: Optional[Mapping[str, int]] = None) -> list[ActivityBinding]:
    """The shipped eight activity bindings, ordered by index."""
    scenario = load_scenario(params=params)
    return [scenario.bindings[i] for i in sorted(scenario.bindings)]


# --------------------------------------------------------------------------
# Session state shared by the procedures of one replay run

@dataclass
class ReplaySession:
    participant: str = ""
    recognitions: list[RecognitionRecord] = field(default_factory=list)
    telemetry: Telemetry = field(default_factory=Telemetry)
    warnings: list[str] = field(default_factory=list)
    events_replayed: int = 0
    last_bindings: dict[int, tuple] = field(default_factory=dict)


class Replayer:
    """Procedure D: feeds dataset readings into the spatial node."""

    def __init__(self, session: ReplaySession) -> None:
        self.session = session
        self.ready = False

    def __call__(self, net: RuntimeNetwork, now_ms: int) -> Optional[str]:
        self.ready = True
        return "ready"

    def replay_step(self, net: RuntimeNetwork, event: TraceEvent) -> bool:
        """Assert one reading (overwrite), then refresh the derived views.

        Readings for sensors the spatial model does not declare are skipped
        with a warning record; datasets contain stray ids.
        """
        spatial = net.stores[SPATIAL_NODE]
        if event.sensor not in spatial.installations:
            net.emit("warning", event.sensor, "unknown sensor; reading skipped")
            self.session.warnings.append(f"unknown sensor {event.sensor}")
            return False
        started = perf_counter_ns()
        spatial.assert_statement(
            Statement(event.sensor, event.value, event.time_ms), mode=OVERWRITE
        )
        spatial.classify()
        spatial.infer_person_context()
        elapsed = perf_counter_ns() - started
        self.session.events_replayed += 1
        self.session.telemetry.record(SPATIAL_NODE, net.clock.now, spatial.axiom_count(), elapsed)
        net.note_mutation(SPATIAL_NODE)
        return True


class Importer:
    """Procedure I_a: copy the activity's current spatial statements."""

    def __init__(self, binding: ActivityBinding, session: ReplaySession) -> None:
        self.binding = binding
        self.session = session
        self._last: dict[str, tuple[bool, int]] = {}

    def __call__(self, net: RuntimeNetwork, now_ms: int) -> Optional[str]:
        spatial = net.stores[SPATIAL_NODE]
        target = net.stores[self.binding.node]
        imported = 0
        for sensor_id in self.binding.sensor_ids:
            instance = spatial.instances.get(sensor_id)
            if instance is None:
                continue
            state = instance.single("hasState")
            time_ms = instance.single("hasTime")
            if not isinstance(state, bool) or not isinstance(time_ms, int):
                continue
            if self._last.get(sensor_id) == (state, time_ms):
                continue  # unchanged since the previous import
            target.assert_statement(Statement(sensor_id, state, time_ms), mode=APPEND)
            self._last[sensor_id] = (state, time_ms)
            imported += 1
        net.emit("import", f"I{self.binding.index}", f"count={imported}")
        target.assert_statement(
            Statement(SYNC_STATEMENT, True, now_ms),
            concepts=(SYNC_CONCEPT,),
            mode=OVERWRITE,
        )
        net.notify_sync(self.binding.node, SYNC_STATEMENT)
        return f"imported={imported}"


class Evaluator:
    """Procedure M_a: pre-passes, rule evaluation, recognition bookkeeping."""

    def __init__(self, binding: ActivityBinding, session: ReplaySession) -> None:
        self.binding = binding
        self.session = session
        self.engine = RuleEngine()
        self._reported: set[int] = set()
        for rule in binding.compiled.rules:
            self.engine.register_rule(rule)

    def __call__(self, net: RuntimeNetwork, now_ms: int) -> Optional[str]:
        store = net.stores[self.binding.node]
        record = self.evaluate_store(store, now_ms, net=net)
        return f"recognized at {record.time_ms}" if record else None

    def run_prepasses(self, store: ContextStore, now_ms: int) -> int:
        """Windowed counts: assert one derived statement per satisfied
        pre-pass (state true, stamped with the latest contributing time)."""
        asserted = 0
        for index, prepass in enumerate(self.binding.compiled.prepasses):
            members = store.query_instances(prepass.source_concept, state_filter=prepass.target_state)
            if not len(members):
                continue
            times = [m.time for m in members]
            earliest, latest = min(times), max(times)
            if len(times) >= prepass.min_count and earliest + prepass.window_ms <= latest:
                store.assert_statement(
                    Statement(
                        f"{prepass.derived_concept}_{index + 1}",
                        True,
                        latest,
                        kind=AGGREGATED,
                    ),
                    concepts=(prepass.derived_concept,),
                    mode=OVERWRITE,
                )
                asserted += 1
        return asserted

    def evaluate_store(
        self,
        store: ContextStore,
        now_ms: int,
        net: Optional[RuntimeNetwork] = None,
    ) -> Optional[RecognitionRecord]:
        started = perf_counter_ns()
        # complexity as imported, before any clearing this evaluation does
        self.session.telemetry.record(self.binding.node, now_ms, store.axiom_count(), 0)
        if SYNC_STATEMENT in store.instances:
            store.assert_statement(
                Statement(SYNC_STATEMENT, False, now_ms),
                concepts=(SYNC_CONCEPT,),
                mode=OVERWRITE,
            )
            if net is not None:
                # surface the falling edge at once, so the next raise of the
                # sync statement is a visible transition even within one step
                net.notify_sync(self.binding.node, SYNC_STATEMENT)
        self.run_prepasses(store, now_ms)
        derived = self.engine.evaluate(store.snapshot())
        # without clear-on-recognition a completion stays derivable on every
        # later update; only never-reported completion times count
        matches = [
            d
            for d in derived
            if d.instance_id == self.binding.compiled.result_id
            and d.time not in self._reported
        ]
        record: Optional[RecognitionRecord] = None
        if matches:
            best = min(matches, key=lambda d: d.time)
            self._reported.add(best.time)
            store.assert_statement(
                Statement(best.instance_id, True, best.time, kind=AGGREGATED),
                concepts=best.concepts,
                mode=OVERWRITE,
            )
            contributing = tuple(
                str(value)
                for _, value in best.binding
                if isinstance(value, str) and not value.startswith("?")
            )
            record = RecognitionRecord(
                activity=self.binding.index, time_ms=best.time, contributing=contributing
            )
            self.session.recognitions.append(record)
            self.session.last_bindings[self.binding.index] = best.binding
            if net is not None:
                net.emit(
                    "recognition",
                    best.instance_id,
                    f"at={best.time} activity={self.binding.index}",
                )
            if self.binding.clear_on_recognition:
                store.clear_statements(keep_concepts=RESULT_KEEP)
        elapsed = perf_counter_ns() - started
        self.session.telemetry.record(
            self.binding.node,
            now_ms,
            store.axiom_count(),
            elapsed,
        )
        return record


def build_implementations(
    scenario: Scenario, session: ReplaySession
) -> tuple[dict[str, ProcedureImpl], Replayer]:
    replayer = Replayer(session)
    implementations: dict[str, ProcedureImpl] = {"replayer": replayer}
    for index, binding in scenario.bindings.items():
        implementations[f"importer:{index}"] = Importer(binding, session)
        implementations[f"evaluator:{index}"] = Evaluator(binding, session)
    return implementations, replayer


@dataclass
class RunResult:
    participant: str
    recognitions: list[RecognitionRecord]
    log_text: str
    telemetry: Telemetry
    params: dict[str, int]
    warnings: list[str]
    events_replayed: int
    base_ms: int
    net: RuntimeNetwork
    last_bindings: dict[int, tuple] = field(default_factory=dict)

    def recognition_pairs(self) -> list[tuple[int, int]]:
        return [(r.activity, r.time_ms) for r in self.recognitions]


def run_replay(
    events: Sequence[TraceEvent],
    participant: str = "p01",
    config_dir: Optional[Path] = None,
    params: Optional[Mapping[str, int]] = None,
    speed: float = 1.0,
    pure_virtual: bool = True,
    sleeper: Optional[Callable[[float], None]] = None,
    scenario: Optional[Scenario] = None,
) -> RunResult:
    """Replay one participant's readings through a fresh network.

    Timestamps are rebased so the run starts shortly after bootstrap; the
    offset is returned so ground truth can be rebased identically.  In
    pure-virtual mode the speed factor plays no role: the scheduler
    consumes events as fast as computation allows while preserving
    timestamps, so runs at any factor are identical.
    """
    if scenario is None:
        scenario = load_scenario(config_dir=config_dir, params=params)
    session = ReplaySession(participant=participant)
    implementations, replayer = build_implementations(scenario, session)
    clock = VirtualClock()
    net = bootstrap(
        scenario.model,
        base_dir=scenario.base_dir,
        implementations=implementations,
        clock=clock,
    )

    base_ms = events[0].time_ms - REBASE_START_MS if events else 0
    previous: Optional[int] = None
    for event in events:
        shifted = event.time_ms - base_ms
        if not pure_virtual and previous is not None and shifted > previous:
            delay = (shifted - previous) / 1000.0 / max(speed, 1e-9)
            (sleeper or time.sleep)(delay)
        previous = shifted
        net.pending_until(shifted - 1)
        net.clock.advance_to(shifted)
        replayer.replay_step(
            net,
            TraceEvent(
                time_ms=shifted,
                sensor=event.sensor,
                value=event.value,
                activity=event.activity,
                marker=event.marker,
            ),
        )
    net.pending_until(net.clock.now + TRAILING_FLUSH_MS)

    return RunResult(
        participant=participant,
        recognitions=list(session.recognitions),
        log_text=net.render_log(),
        telemetry=session.telemetry,
        params=scenario.params(),
        warnings=list(session.warnings),
        events_replayed=session.events_replayed,
        base_ms=base_ms,
        net=net,
        last_bindings=dict(session.last_bindings),
    )

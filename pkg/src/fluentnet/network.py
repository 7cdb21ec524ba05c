"""Network description, bootstrap and the condition/event scheduling loop.

The network is declared in one plain-text document: nodes (each backed by a
store model file), procedures (with the key of the algorithm they run and
the events that trigger them), events (conjunctions of conditions) and
conditions (rate-sampled checks of one statement in one node).  The implicit
upper node ``U`` and scheduler procedure ``H`` are always part of the
runtime network.

Scheduling is edge-triggered: a condition sampled from false to true
re-arms and re-evaluates the events observing it; an event whose conditions
all hold fires once and stays consumed until one of its conditions rises
again.  A procedure fires when any of its required events fires.  The whole
loop runs on one logical thread of control against a virtual clock, so a
fixed configuration and trace always produce the same dispatch log.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from math import ceil
from pathlib import Path
from typing import Callable, Mapping, Optional, Union

from .context import ConceptGraph, ContextStore
from .modelio import ConfigError, build_store, load_store_model, read_sections, split_options
from .statements import Statement

logger = logging.getLogger(__name__)

UPPER_NODE = "U"
SCHEDULER_PROC = "H"
BOOT_STATEMENT = "BOOT"

DEFAULT_RATE_HZ = Fraction(50)


class NetworkError(ConfigError):
    """Network description failed validation."""


class BootstrapError(RuntimeError):
    """A node's model file could not be loaded."""


@dataclass(frozen=True)
class StatementCheck:
    statement_id: str


@dataclass(frozen=True)
class PatternCheck:
    """Defined statement pattern: some instance of ``concept`` carrying a
    ``prop`` target classified under ``target_concept``."""

    concept: str
    prop: str
    target_concept: str


@dataclass(frozen=True)
class ConditionDecl:
    name: str
    check: Union[StatementCheck, PatternCheck]
    node: str
    target: bool
    rate_hz: Fraction = DEFAULT_RATE_HZ


@dataclass(frozen=True)
class EventDecl:
    name: str
    observes: tuple[str, ...]


@dataclass(frozen=True)
class ProcDecl:
    name: str
    implements: str
    requires: tuple[str, ...]


@dataclass(frozen=True)
class NodeDecl:
    name: str
    represents: str
    mode: str


@dataclass(frozen=True)
class ActivityDecl:
    """Scenario binding for one activity: its node, the installed-sensor
    concept selecting imports, the model file, and the clear policy."""

    index: int
    label: str
    node: str
    installed: str
    model_path: str
    clear_on_recognition: bool = True


@dataclass(frozen=True)
class NetworkModel:
    nodes: tuple[NodeDecl, ...]
    procedures: tuple[ProcDecl, ...]
    events: tuple[EventDecl, ...]
    conditions: tuple[ConditionDecl, ...]
    activities: tuple[ActivityDecl, ...] = ()


def _parse_bool(value: str, lineno: int) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise NetworkError(f"line {lineno}: expected a boolean, found {value!r}")


def load_network(text: str) -> NetworkModel:
    """Parse and cross-check a network description."""
    sections = read_sections(text)

    nodes: list[NodeDecl] = []
    for line in sections.get("nodes", []):
        positional, options = split_options(line.tokens)
        if len(positional) != 1 or "represents" not in options:
            raise NetworkError(f"line {line.lineno}: node line must read 'NAME represents=FILE'")
        name = positional[0]
        if name in (UPPER_NODE,):
            raise NetworkError(f"line {line.lineno}: node name {name!r} is reserved")
        mode = options.get("mode", "overwrite")
        if mode not in ("overwrite", "append"):
            raise NetworkError(f"line {line.lineno}: unknown reasoner mode {mode!r}")
        nodes.append(NodeDecl(name=name, represents=options["represents"], mode=mode))

    conditions: list[ConditionDecl] = []
    node_names = {n.name for n in nodes} | {UPPER_NODE}
    for line in sections.get("conditions", []):
        positional, options = split_options(line.tokens)
        if len(positional) != 1:
            raise NetworkError(f"line {line.lineno}: condition line must start with its name")
        for required in ("checks", "in", "hasTarget"):
            if required not in options:
                raise NetworkError(f"line {line.lineno}: condition missing {required!r}")
        node = options["in"]
        if node not in node_names:
            raise NetworkError(f"line {line.lineno}: condition references unknown node {node!r}")
        checks = options["checks"]
        check: Union[StatementCheck, PatternCheck]
        if ":" in checks:
            parts = checks.split(":")
            if len(parts) != 3:
                raise NetworkError(
                    f"line {line.lineno}: pattern check must read CONCEPT:prop:TARGET"
                )
            check = PatternCheck(concept=parts[0], prop=parts[1], target_concept=parts[2])
        else:
            check = StatementCheck(statement_id=checks)
        rate = Fraction(options.get("rate", str(DEFAULT_RATE_HZ)))
        if rate <= 0:
            raise NetworkError(f"line {line.lineno}: rate must be positive")
        conditions.append(
            ConditionDecl(
                name=positional[0],
                check=check,
                node=node,
                target=_parse_bool(options["hasTarget"], line.lineno),
                rate_hz=rate,
            )
        )

    condition_names = {c.name for c in conditions}
    events: list[EventDecl] = []
    for line in sections.get("events", []):
        positional, options = split_options(line.tokens)
        if len(positional) != 1 or "observes" not in options:
            raise NetworkError(f"line {line.lineno}: event line must read 'NAME observes=C1[,C2]'")
        observed = tuple(options["observes"].split(","))
        if not observed or not all(observed):
            raise NetworkError(f"line {line.lineno}: event must observe at least one condition")
        for cond in observed:
            if cond not in condition_names:
                raise NetworkError(f"line {line.lineno}: unknown condition {cond!r}")
        events.append(EventDecl(name=positional[0], observes=observed))

    event_names = {e.name for e in events}
    procedures: list[ProcDecl] = []
    for line in sections.get("procedures", []):
        positional, options = split_options(line.tokens)
        if len(positional) != 1 or "implements" not in options:
            raise NetworkError(f"line {line.lineno}: procedure line must read 'NAME implements=KEY'")
        name = positional[0]
        if name == SCHEDULER_PROC:
            raise NetworkError(f"line {line.lineno}: procedure name {name!r} is reserved")
        required = tuple(options.get("requires", "").split(",")) if options.get("requires") else ()
        if not required:
            raise NetworkError(f"line {line.lineno}: procedure {name!r} requires no event")
        for event in required:
            if event not in event_names:
                raise NetworkError(f"line {line.lineno}: unknown event {event!r}")
        procedures.append(ProcDecl(name=name, implements=options["implements"], requires=required))

    activities: list[ActivityDecl] = []
    for line in sections.get("activities", []):
        positional, options = split_options(line.tokens)
        if len(positional) != 1:
            raise NetworkError(f"line {line.lineno}: activity line must start with its index")
        for required in ("label", "node", "installed", "model"):
            if required not in options:
                raise NetworkError(f"line {line.lineno}: activity missing {required!r}")
        if options["node"] not in node_names:
            raise NetworkError(f"line {line.lineno}: unknown node {options['node']!r}")
        activities.append(
            ActivityDecl(
                index=int(positional[0]),
                label=options["label"],
                node=options["node"],
                installed=options["installed"],
                model_path=options["model"],
                clear_on_recognition=_parse_bool(options.get("clear", "true"), line.lineno),
            )
        )

    for kind, declared in (
        ("node", [n.name for n in nodes]),
        ("procedure", [p.name for p in procedures]),
        ("event", [e.name for e in events]),
        ("condition", [c.name for c in conditions]),
    ):
        seen = set()
        for name in declared:
            if name in seen:
                raise NetworkError(f"duplicate {kind} name {name!r}")
            seen.add(name)

    return NetworkModel(
        nodes=tuple(nodes),
        procedures=tuple(procedures),
        events=tuple(events),
        conditions=tuple(conditions),
        activities=tuple(activities),
    )


# --------------------------------------------------------------------------
# Runtime

@dataclass
class VirtualClock:
    """Monotone virtual time in ms; ``speed`` only scales wall-clock replay."""

    now: int = 0
    speed: Fraction = Fraction(1)

    def advance_to(self, time_ms: int) -> None:
        if time_ms > self.now:
            self.now = time_ms


@dataclass
class ConditionState:
    decl: ConditionDecl
    outcome: bool = False
    last_tick: int = 0
    last_sample_ms: Optional[int] = None

    def due_at_or_after(self, time_ms: int) -> int:
        """Next scheduled sample time: the first unused k/rate tick >= now."""
        rate = self.decl.rate_hz
        k = max(self.last_tick + 1, ceil(Fraction(max(time_ms, 0)) * rate / 1000))
        k = max(k, 1)
        return ceil(Fraction(k * 1000) / rate)

    def take_tick(self, time_ms: int) -> None:
        rate = self.decl.rate_hz
        self.last_tick = int(Fraction(time_ms) * rate // 1000)


@dataclass
class EventState:
    decl: EventDecl
    consumed: bool = False


@dataclass(frozen=True)
class LogEntry:
    time_ms: int
    kind: str
    name: str
    detail: str = ""

    def render(self) -> str:
        return f"{self.time_ms}\t{self.kind}\t{self.name}\t{self.detail}"


ProcedureImpl = Callable[["RuntimeNetwork", int], Optional[str]]


def _noop(net: "RuntimeNetwork", now_ms: int) -> Optional[str]:
    return None


@dataclass
class ProcedureRuntime:
    decl: ProcDecl
    impl: ProcedureImpl


class RuntimeNetwork:
    """Bootstrapped network: stores, procedures and scheduler state."""

    def __init__(
        self,
        model: NetworkModel,
        stores: dict[str, ContextStore],
        procedures: dict[str, ProcedureRuntime],
        clock: Optional[VirtualClock] = None,
    ) -> None:
        self.model = model
        self.stores = stores
        self.procedures = procedures
        self.conditions: dict[str, ConditionState] = {
            c.name: ConditionState(decl=c) for c in model.conditions
        }
        self.events: dict[str, EventState] = {e.name: EventState(decl=e) for e in model.events}
        self.clock = clock or VirtualClock()
        self.log: list[LogEntry] = []
        self._observers: dict[str, list[str]] = {c.name: [] for c in model.conditions}
        for event in model.events:
            for cond in event.observes:
                self._observers[cond].append(event.name)
        self._requirers: dict[str, list[str]] = {e.name: [] for e in model.events}
        for proc in model.procedures:
            for event in proc.requires:
                self._requirers[event].append(proc.name)
        self._pending: dict[str, int] = {}

    # -- logging -----------------------------------------------------------

    def emit(self, kind: str, name: str, detail: str = "") -> LogEntry:
        entry = LogEntry(time_ms=self.clock.now, kind=kind, name=name, detail=detail)
        self.log.append(entry)
        return entry

    def render_log(self) -> str:
        return "\n".join(entry.render() for entry in self.log) + ("\n" if self.log else "")

    # -- condition evaluation ------------------------------------------------

    def evaluate_condition(self, decl: ConditionDecl) -> bool:
        store = self.stores[decl.node]
        check = decl.check
        if isinstance(check, StatementCheck):
            state = store.statement_state(check.statement_id)
            return state is not None and state is decl.target
        matched = self._pattern_holds(store, check)
        return matched is decl.target

    @staticmethod
    def _pattern_holds(store: ContextStore, check: PatternCheck) -> bool:
        if check.concept == "PERSON" and store.person_id is not None:
            return store.person_context_matches(check.prop, check.target_concept)
        classification = store.classify()
        for inst_id in sorted(store.instances):
            if check.concept not in classification.get(inst_id, frozenset()):
                continue
            for target in store.instances[inst_id].prop_values(check.prop):
                if isinstance(target, str) and check.target_concept in classification.get(
                    target, frozenset()
                ):
                    return True
        return False

    # -- sampling + dispatch cascade ------------------------------------------

    def _sample(self, name: str, schedule_tick: bool) -> Optional[bool]:
        """Sample one condition; returns the new outcome when it flipped."""
        state = self.conditions[name]
        if schedule_tick:
            state.take_tick(self.clock.now)
        state.last_sample_ms = self.clock.now
        outcome = self.evaluate_condition(state.decl)
        if outcome == state.outcome:
            return None
        state.outcome = outcome
        self.emit("condition", name, f"outcome={'true' if outcome else 'false'}")
        return outcome

    def _cascade(self, risen: list[str]) -> None:
        """Re-arm and fire events observing conditions that rose."""
        for cond in risen:
            for event_name in self._observers[cond]:
                self.events[event_name].consumed = False
        fired: list[str] = []
        seen: set[str] = set()
        for cond in risen:
            for event_name in self._observers[cond]:
                if event_name in seen:
                    continue
                seen.add(event_name)
                event = self.events[event_name]
                satisfied = all(
                    self.conditions[c].outcome for c in event.decl.observes
                )
                if satisfied and not event.consumed:
                    event.consumed = True
                    self.emit("event", event_name)
                    fired.append(event_name)
        for event_name in fired:
            for proc_name in self._requirers[event_name]:
                self.run_procedure(proc_name)

    def run_procedure(self, name: str) -> None:
        runtime = self.procedures[name]
        before = {k: s.mutation_seq for k, s in self.stores.items()}
        self.emit("procedure", name)
        try:
            runtime.impl(self, self.clock.now)
        except Exception as exc:  # procedure failure must not halt the loop
            logger.exception("procedure %s failed", name)
            self.emit("error", name, f"{type(exc).__name__}: {exc}")
        for store_name, seq in before.items():
            if self.stores[store_name].mutation_seq != seq:
                self.note_mutation(store_name)

    def sample_and_dispatch(self, names: list[str], schedule_tick: bool = True) -> None:
        risen: list[str] = []
        for name in sorted(names):
            flipped = self._sample(name, schedule_tick)
            if flipped is True:
                risen.append(name)
        if risen:
            self._cascade(risen)

    # -- the rate-driven loop ---------------------------------------------------

    def step(self, until: Optional[int] = None) -> list[LogEntry]:
        """Advance to the next due sample (bounded by ``until``) and run it.

        Returns the log entries appended during this step.  With no due
        condition before ``until`` the clock still advances and the log
        stays empty.
        """
        mark = len(self.log)
        due: list[tuple[int, str]] = [
            (state.due_at_or_after(self.clock.now + 1), name)
            for name, state in self.conditions.items()
        ]
        if not due:
            if until is not None:
                self.clock.advance_to(until)
            return []
        next_time = min(time for time, _ in due)
        if until is not None and next_time > until:
            self.clock.advance_to(until)
            return []
        self.clock.advance_to(next_time)
        self.sample_and_dispatch([name for time, name in due if time == next_time])
        return self.log[mark:]

    def run_until(self, until: int) -> list[LogEntry]:
        mark = len(self.log)
        while self.clock.now < until:
            before = self.clock.now
            self.step(until=until)
            if self.clock.now == before:
                break
        return self.log[mark:]

    # -- mutation-aware fast path -------------------------------------------

    def note_mutation(self, store_name: str) -> None:
        """Record that a store changed; its conditions get a pending sample."""
        for name, state in self.conditions.items():
            if state.decl.node != store_name:
                continue
            due = state.due_at_or_after(self.clock.now)
            current = self._pending.get(name)
            if current is None or due < current:
                self._pending[name] = due

    def pending_until(self, limit: int) -> list[LogEntry]:
        """Run pending (mutation-scheduled) samples due at or before ``limit``.

        Between mutations a condition's outcome cannot change, so skipped
        ticks are bookkept arithmetically and the observable flips match the
        tick-by-tick loop exactly.
        """
        mark = len(self.log)
        pending = self._pending
        while pending:
            due_time = min(pending.values())
            if due_time > limit:
                break
            batch = sorted(name for name, time in pending.items() if time == due_time)
            for name in batch:
                del pending[name]
            self.clock.advance_to(due_time)
            self.sample_and_dispatch(batch)
        return self.log[mark:]

    # -- targeted synchronisation ---------------------------------------------

    def notify_sync(self, node: str, statement_id: str) -> list[str]:
        """Immediately sample the conditions checking one statement on one
        node, bypassing the rate clock; returns names of events fired."""
        if node not in self.stores:
            raise NetworkError(f"unknown node {node!r}")
        names = [
            name
            for name, state in self.conditions.items()
            if state.decl.node == node
            and isinstance(state.decl.check, StatementCheck)
            and state.decl.check.statement_id == statement_id
        ]
        mark = len(self.log)
        self.sample_and_dispatch(names, schedule_tick=False)
        return [entry.name for entry in self.log[mark:] if entry.kind == "event"]


def _upper_store() -> ContextStore:
    graph = ConceptGraph()
    graph.add_concept("STATEMENT")
    store = ContextStore(name=UPPER_NODE, graph=graph)
    store.assert_statement(Statement(BOOT_STATEMENT, True, 0), concepts=("STATEMENT",))
    return store


def bootstrap(
    model: NetworkModel,
    base_dir=None,
    implementations: Optional[Mapping[str, ProcedureImpl]] = None,
    clock: Optional[VirtualClock] = None,
) -> RuntimeNetwork:
    """Build the three runtime maps from the network description.

    Stores are initialised from their model files (the upper node is always
    present and carries the boot statement), procedures are bound to their
    implementations, and every condition starts with a false outcome.
    """
    stores: dict[str, ContextStore] = {UPPER_NODE: _upper_store()}
    for node in model.nodes:
        path = Path(base_dir) / node.represents if base_dir is not None else Path(node.represents)
        try:
            store_model = load_store_model(path)
        except OSError as exc:
            raise BootstrapError(f"node {node.name}: cannot read model file {path}: {exc}") from exc
        except ConfigError as exc:
            raise BootstrapError(f"node {node.name}: {exc}") from exc
        stores[node.name] = build_store(node.name, store_model, mode=node.mode)

    implementations = dict(implementations or {})
    procedures: dict[str, ProcedureRuntime] = {
        SCHEDULER_PROC: ProcedureRuntime(
            decl=ProcDecl(name=SCHEDULER_PROC, implements="scheduler", requires=()),
            impl=_noop,
        )
    }
    for decl in model.procedures:
        impl = implementations.get(decl.implements, _noop)
        procedures[decl.name] = ProcedureRuntime(decl=decl, impl=impl)

    net = RuntimeNetwork(model=model, stores=stores, procedures=procedures, clock=clock)
    for store_name in stores:
        net.note_mutation(store_name)
    return net

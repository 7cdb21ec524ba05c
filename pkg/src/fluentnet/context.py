"""Lightweight knowledge contexts: concept graphs, instances, classification.

A :class:`ContextStore` is one node of the network.  It holds a concept
hierarchy with subsumption, disjointness and defined classes, plus a set of
instances carrying property assertions.  Classification is closed-world:
cardinality restrictions count only the targets actually asserted, which
keeps minima/maxima computable without escaping to a separate reasoner.

Complexity is tracked as an axiom count:

    |concepts| + |subclass edges| + |defined-class restrictions|
    + per instance (|asserted concepts| + |property assertions|)

The count is maintained incrementally and can be recomputed from scratch;
inferred knowledge (classification results, the person context) is not part
of the count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from .statements import RAW, Statement, StatementSet

STATE_PROP = "hasState"
TIME_PROP = "hasTime"

# Literal domains usable as restriction targets alongside concept names.
BOOLEAN_DOMAIN = "BOOLEAN"
NATURAL_DOMAIN = "NATURAL"
TRUE_LITERAL = "TRUE"
FALSE_LITERAL = "FALSE"
_LITERAL_TARGETS = {BOOLEAN_DOMAIN, NATURAL_DOMAIN, TRUE_LITERAL, FALSE_LITERAL}

PropValue = Union[str, bool, int]


class GraphError(ValueError):
    """Malformed concept graph: cycles, dangling references, duplicates."""


class ConsistencyError(Exception):
    """An assertion would place an instance in two disjoint concepts."""


class UnknownConceptError(ValueError):
    """A query or assertion referenced a concept the graph does not define."""


class StoreError(ValueError):
    """Store-level misuse (unknown sensor, missing person declaration)."""


@dataclass(frozen=True)
class Restriction:
    """One conjunct of a defined class: a cardinality bound on a property.

    ``target`` names either a concept or a literal domain (BOOLEAN/NATURAL)
    or a required literal value (TRUE/FALSE).  ``bound`` is one of
    ``>=``, ``<=``, ``==``.
    """

    prop: str
    target: str
    bound: str = ">="
    count: int = 1

    def __post_init__(self) -> None:
        if self.bound not in (">=", "<=", "=="):
            raise GraphError(f"unknown cardinality bound {self.bound!r}")
        if self.count < 0:
            raise GraphError("cardinality count must be >= 0")


@dataclass(frozen=True)
class DefinedClass:
    """A concept whose membership is inferred from bases plus restrictions."""

    name: str
    bases: tuple[str, ...] = ()
    restrictions: tuple[Restriction, ...] = ()


class ConceptGraph:
    """Concept hierarchy: named concepts, acyclic subclass edges, disjoint
    pairs and defined classes."""

    def __init__(self) -> None:
        self.concepts: set[str] = set()
        self.properties: set[str] = {STATE_PROP, TIME_PROP}
        self._parents: dict[str, set[str]] = {}
        self.subclass_edges: set[tuple[str, str]] = set()
        self.disjoint: set[frozenset[str]] = set()
        self.defined: dict[str, DefinedClass] = {}
        self._super_cache: dict[str, frozenset[str]] = {}

    def add_concept(self, name: str) -> None:
        if not name:
            raise GraphError("concept name must be non-empty")
        self.concepts.add(name)
        self._parents.setdefault(name, set())

    def add_property(self, name: str) -> None:
        if not name:
            raise GraphError("property name must be non-empty")
        self.properties.add(name)

    def add_subclass(self, child: str, parent: str) -> None:
        for name in (child, parent):
            if name not in self.concepts:
                raise UnknownConceptError(f"unknown concept {name!r}")
        # the subclass relation must stay a DAG
        if child in self._reachable(parent):
            raise GraphError(f"subclass edge {child} -> {parent} would create a cycle")
        self.subclass_edges.add((child, parent))
        self._parents[child].add(parent)
        self._super_cache.clear()

    def _reachable(self, start: str) -> set[str]:
        seen: set[str] = set()
        stack = [start]
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self._parents.get(node, ()))
        return seen

    def add_disjoint(self, a: str, b: str) -> None:
        for name in (a, b):
            if name not in self.concepts:
                raise UnknownConceptError(f"unknown concept {name!r}")
        if a == b:
            raise GraphError(f"concept {a!r} cannot be disjoint with itself")
        self.disjoint.add(frozenset((a, b)))

    def add_defined(self, defined: DefinedClass) -> None:
        if defined.name not in self.concepts:
            raise UnknownConceptError(f"unknown concept {defined.name!r}")
        for base in defined.bases:
            if base not in self.concepts:
                raise UnknownConceptError(f"unknown base concept {base!r}")
        for restriction in defined.restrictions:
            if restriction.prop not in self.properties:
                raise GraphError(f"unknown property {restriction.prop!r}")
            if restriction.target not in self.concepts and restriction.target not in _LITERAL_TARGETS:
                raise UnknownConceptError(f"unknown restriction target {restriction.target!r}")
        self.defined[defined.name] = defined

    def supers(self, concept: str) -> frozenset[str]:
        """Reflexive-transitive superclasses of a concept."""
        if concept not in self.concepts:
            raise UnknownConceptError(f"unknown concept {concept!r}")
        cached = self._super_cache.get(concept)
        if cached is None:
            cached = frozenset(self._reachable(concept))
            self._super_cache[concept] = cached
        return cached

    def violates_disjointness(self, memberships: frozenset[str]) -> Optional[tuple[str, str]]:
        for pair in self.disjoint:
            if pair <= memberships:
                a, b = sorted(pair)
                return a, b
        return None

    def axiom_terms(self) -> int:
        restrictions = sum(len(d.restrictions) for d in self.defined.values())
        return len(self.concepts) + len(self.subclass_edges) + restrictions


@dataclass(frozen=True)
class SensorDecl:
    """Prior knowledge about one installed sensor: the concepts it is
    asserted under and its fixed spatial properties."""

    sensor_id: str
    concepts: tuple[str, ...]
    properties: tuple[tuple[str, PropValue], ...] = ()


@dataclass
class StoreInstance:
    id: str
    asserted: frozenset[str]
    props: dict[str, tuple[PropValue, ...]] = field(default_factory=dict)
    kind: str = RAW

    def prop_values(self, prop: str) -> tuple[PropValue, ...]:
        return self.props.get(prop, ())

    def single(self, prop: str) -> Optional[PropValue]:
        values = self.props.get(prop, ())
        return values[0] if values else None

    def is_statement(self) -> bool:
        return STATE_PROP in self.props and TIME_PROP in self.props

    def axiom_weight(self) -> int:
        return len(self.asserted) + sum(len(v) for v in self.props.values())


@dataclass(frozen=True)
class AssertSummary:
    instance_id: str
    created: bool
    replaced: bool


OVERWRITE = "overwrite"
APPEND = "append"


class ContextStore:
    """One network node: a concept graph plus mutable instances.

    All mutation happens on a single logical thread; :meth:`snapshot` hands
    immutable views to concurrent readers.
    """

    def __init__(
        self,
        name: str,
        graph: ConceptGraph,
        installations: Mapping[str, SensorDecl] | None = None,
        person_id: Optional[str] = None,
        default_mode: str = OVERWRITE,
        presence_concept: str = "SENSOR",
    ) -> None:
        if default_mode not in (OVERWRITE, APPEND):
            raise StoreError(f"unknown reasoner mode {default_mode!r}")
        self.name = name
        self.graph = graph
        self.installations: dict[str, SensorDecl] = dict(installations or {})
        self.person_id = person_id
        self.default_mode = default_mode
        self.presence_concept = presence_concept
        self.instances: dict[str, StoreInstance] = {}
        self.person_context: tuple[tuple[str, str], ...] = ()
        self.mutation_seq = 0
        self._sequence: dict[str, int] = {}
        self._axioms = graph.axiom_terms()
        self._classification: Optional[dict[str, frozenset[str]]] = None

    # -- bookkeeping -------------------------------------------------------

    def _mutated(self) -> None:
        self.mutation_seq += 1
        self._classification = None

    def _closure(self, concepts: Iterable[str]) -> frozenset[str]:
        out: set[str] = set()
        for concept in concepts:
            out |= self.graph.supers(concept)
        return frozenset(out)

    # -- instance management ----------------------------------------------

    def add_instance(
        self,
        instance_id: str,
        concepts: Iterable[str],
        props: Mapping[str, Sequence[PropValue]] | None = None,
    ) -> StoreInstance:
        """Directly add a plain (non-statement) instance, e.g. a location."""
        asserted = frozenset(concepts)
        closure = self._closure(asserted)
        clash = self.graph.violates_disjointness(closure)
        if clash:
            raise ConsistencyError(
                f"instance {instance_id!r} cannot be both {clash[0]} and {clash[1]}"
            )
        instance = StoreInstance(
            id=instance_id,
            asserted=asserted,
            props={p: tuple(v) for p, v in (props or {}).items()},
        )
        previous = self.instances.get(instance_id)
        if previous is not None:
            self._axioms -= previous.axiom_weight()
        self.instances[instance_id] = instance
        self._axioms += instance.axiom_weight()
        self._mutated()
        return instance

    def assert_statement(
        self,
        statement: Statement,
        concepts: Iterable[str] | None = None,
        mode: Optional[str] = None,
        properties: Mapping[str, Sequence[PropValue]] | None = None,
    ) -> AssertSummary:
        """Ground a statement as a classified instance.

        Overwrite mode replaces any prior instance for the same sensor id,
        keeping the axiom count bounded; append mode adds a fresh instance
        with a monotone suffix.  Omitted concepts/properties fall back to
        the sensor installation table.
        """
        mode = mode or self.default_mode
        if mode not in (OVERWRITE, APPEND):
            raise StoreError(f"unknown reasoner mode {mode!r}")
        decl = self.installations.get(statement.id)
        if concepts is None:
            if decl is None:
                raise StoreError(f"unknown sensor {statement.id!r} in {self.name}")
            concepts = decl.concepts
        concepts = tuple(concepts)
        for concept in concepts:
            if concept not in self.graph.concepts:
                raise UnknownConceptError(f"unknown concept {concept!r}")
        closure = self._closure(concepts)
        clash = self.graph.violates_disjointness(closure)
        if clash:
            raise ConsistencyError(
                f"statement {statement.id!r} cannot be both {clash[0]} and {clash[1]}"
            )

        props: dict[str, tuple[PropValue, ...]] = {
            STATE_PROP: (statement.state,),
            TIME_PROP: (statement.time,),
        }
        if decl is not None:
            for prop, value in decl.properties:
                props.setdefault(prop, ())
                props[prop] = props[prop] + (value,)
        for prop, values in (properties or {}).items():
            props[prop] = tuple(values)
        for prop in props:
            if prop not in self.graph.properties:
                raise StoreError(f"unknown property {prop!r}")

        if mode == OVERWRITE:
            instance_id = statement.id
        else:
            seq = self._sequence.get(statement.id, 0) + 1
            self._sequence[statement.id] = seq
            instance_id = f"{statement.id}#{seq}"

        instance = StoreInstance(id=instance_id, asserted=frozenset(concepts), props=props, kind=statement.kind)
        previous = self.instances.get(instance_id)
        if previous is not None:
            self._axioms -= previous.axiom_weight()
        self.instances[instance_id] = instance
        self._axioms += instance.axiom_weight()
        self._mutated()
        return AssertSummary(instance_id=instance_id, created=previous is None, replaced=previous is not None)

    def remove_instance(self, instance_id: str) -> None:
        instance = self.instances.pop(instance_id, None)
        if instance is None:
            return
        self._axioms -= instance.axiom_weight()
        self._mutated()

    # -- classification -----------------------------------------------------

    def classify(self) -> dict[str, frozenset[str]]:
        """Transitive concept membership for every instance.

        Membership starts from the asserted concepts and their superclasses,
        then defined classes are applied to a fixpoint under closed-world
        counting.  A defined class is never applied where it would clash
        with a declared disjointness.
        """
        if self._classification is not None:
            return dict(self._classification)
        memberships: dict[str, set[str]] = {
            inst_id: set(self._closure(inst.asserted))
            for inst_id, inst in self.instances.items()
        }
        defined = [self.graph.defined[name] for name in sorted(self.graph.defined)]
        changed = True
        while changed:
            changed = False
            for dc in defined:
                candidate = self.graph.supers(dc.name)
                for inst_id in sorted(memberships):
                    current = memberships[inst_id]
                    if dc.name in current:
                        continue
                    if not all(base in current for base in dc.bases):
                        continue
                    if not self._satisfies(self.instances[inst_id], dc, memberships):
                        continue
                    merged = frozenset(current | candidate)
                    if self.graph.violates_disjointness(merged):
                        continue
                    memberships[inst_id] = set(merged)
                    changed = True
        result = {inst_id: frozenset(v) for inst_id, v in memberships.items()}
        self._classification = result
        return dict(result)

    def _satisfies(
        self,
        instance: StoreInstance,
        dc: DefinedClass,
        memberships: Mapping[str, set[str]],
    ) -> bool:
        for restriction in dc.restrictions:
            values = instance.prop_values(restriction.prop)
            count = 0
            for value in values:
                if restriction.target == BOOLEAN_DOMAIN:
                    ok = isinstance(value, bool)
                elif restriction.target == NATURAL_DOMAIN:
                    ok = isinstance(value, int) and not isinstance(value, bool) and value >= 0
                elif restriction.target == TRUE_LITERAL:
                    ok = value is True
                elif restriction.target == FALSE_LITERAL:
                    ok = value is False
                else:
                    ok = isinstance(value, str) and restriction.target in memberships.get(value, ())
                if ok:
                    count += 1
            if restriction.bound == ">=" and count < restriction.count:
                return False
            if restriction.bound == "<=" and count > restriction.count:
                return False
            if restriction.bound == "==" and count != restriction.count:
                return False
        return True

    def query_instances(self, concept: str, state_filter: Optional[bool] = None) -> StatementSet:
        """Statement instances classified under a concept, optionally
        filtered by state, in canonical order."""
        if concept not in self.graph.concepts:
            raise UnknownConceptError(f"unknown concept {concept!r}")
        classification = self.classify()
        out = []
        for inst_id in sorted(self.instances):
            instance = self.instances[inst_id]
            if not instance.is_statement():
                continue
            if concept not in classification[inst_id]:
                continue
            state = instance.single(STATE_PROP)
            if state_filter is not None and state is not state_filter:
                continue
            out.append(
                Statement(id=inst_id, state=bool(state), time=int(instance.single(TIME_PROP)), kind=instance.kind)
            )
        return StatementSet(out)

    def infer_person_context(
        self, presence_concept: Optional[str] = None
    ) -> tuple[tuple[str, str], ...]:
        """Propagate spatial targets of active sensors onto the person.

        Every sensor instance with a true state contributes its isIn and
        isNearTo targets; the union becomes the person's current context.
        ``presence_concept`` narrows which sensors count as presence
        evidence (a scenario typically uses its motion class, since
        latched door or item states would otherwise pin the person to one
        spot).  The pairs are derived knowledge and do not enter the axiom
        count.
        """
        if self.person_id is None:
            raise StoreError(f"store {self.name!r} declares no person instance")
        wanted = presence_concept or self.presence_concept
        classification = self.classify()
        pairs: set[tuple[str, str]] = set()
        for inst_id in sorted(self.instances):
            instance = self.instances[inst_id]
            if wanted not in classification.get(inst_id, frozenset()):
                continue
            if instance.single(STATE_PROP) is not True:
                continue
            for prop in ("isIn", "isNearTo"):
                for target in instance.prop_values(prop):
                    if isinstance(target, str):
                        pairs.add((prop, target))
        self.person_context = tuple(sorted(pairs))
        return self.person_context

    def person_context_matches(self, prop: str, target_concept: str) -> bool:
        """True when the person currently has a ``prop`` target classified
        under ``target_concept``."""
        classification = self.classify()
        for pair_prop, target in self.person_context:
            if pair_prop != prop:
                continue
            if target_concept in classification.get(target, frozenset()):
                return True
        return False

    # -- complexity ----------------------------------------------------------

    def axiom_count(self) -> int:
        return self._axioms

    def recount_axioms(self) -> int:
        """From-scratch recount; must always equal :meth:`axiom_count`."""
        return self.graph.axiom_terms() + sum(i.axiom_weight() for i in self.instances.values())

    def clear_statements(self, keep_concepts: Iterable[str] = ()) -> int:
        """Remove statement instances except those classified under any of
        ``keep_concepts``; returns the number removed."""
        keep = set(keep_concepts)
        classification = self.classify()
        removed = 0
        for inst_id in sorted(self.instances):
            instance = self.instances[inst_id]
            if not instance.is_statement():
                continue
            if keep & classification.get(inst_id, frozenset()):
                continue
            self._axioms -= instance.axiom_weight()
            del self.instances[inst_id]
            removed += 1
        if removed:
            self._mutated()
        return removed

    # -- read-only views -----------------------------------------------------

    def statement_state(self, instance_id: str) -> Optional[bool]:
        instance = self.instances.get(instance_id)
        if instance is None:
            return None
        value = instance.single(STATE_PROP)
        return value if isinstance(value, bool) else None

    def snapshot(self) -> "Snapshot":
        classification = self.classify()
        ordered: list[SnapshotInstance] = []
        for inst_id, instance in self.instances.items():
            time = instance.single(TIME_PROP)
            key = (0, int(time), inst_id) if isinstance(time, int) and not isinstance(time, bool) else (1, 0, inst_id)
            ordered.append(
                SnapshotInstance(
                    id=inst_id,
                    concepts=classification[inst_id],
                    props={p: tuple(v) for p, v in instance.props.items()},
                    order_key=key,
                )
            )
        ordered.sort(key=lambda s: s.order_key)
        return Snapshot(store=self.name, instances=tuple(ordered))


@dataclass(frozen=True)
class SnapshotInstance:
    id: str
    concepts: frozenset[str]
    props: Mapping[str, tuple[PropValue, ...]]
    order_key: tuple[int, int, str]


@dataclass(frozen=True)
class Snapshot:
    """Immutable classified view of a store, safe to share across readers."""

    store: str
    instances: tuple[SnapshotInstance, ...]

    def of_concept(self, concept: str) -> tuple[SnapshotInstance, ...]:
        return tuple(i for i in self.instances if concept in i.concepts)

    def get(self, instance_id: str) -> Optional[SnapshotInstance]:
        for instance in self.instances:
            if instance.id == instance_id:
                return instance
        return None

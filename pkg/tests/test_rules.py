"""Rule engine: registration checks, matching semantics, oracle equivalence."""

import random

import pytest

from fluentnet.context import APPEND, ConceptGraph, ContextStore
from fluentnet.rules import (
    Assign,
    ClassAtom,
    Compare,
    Head,
    PropertyAtom,
    Rule,
    RuleEngine,
    RuleValidationError,
    eval_builtin,
    format_bindings,
)
from fluentnet.statements import Statement

import oracles


def item_store(*readings):
    g = ConceptGraph()
    for c in ("STATEMENT", "SENSOR", "ITEM", "DOOR", "ACTIVITY"):
        g.add_concept(c)
    g.add_subclass("SENSOR", "STATEMENT")
    g.add_subclass("ITEM", "SENSOR")
    g.add_subclass("DOOR", "SENSOR")
    store = ContextStore("T", g, default_mode=APPEND)
    for ident, state, time in readings:
        cls = "DOOR" if ident.startswith("D") else "ITEM"
        store.assert_statement(Statement(ident, state, time), concepts=(cls,))
    return store


def dvd_rule(gap):
    """An item goes absent, then present at least ``gap`` ms later."""
    return Rule(
        name="A2",
        body=(
            ClassAtom("ITEM", "?taken"),
            PropertyAtom("hasState", "?taken", False),
            PropertyAtom("hasTime", "?taken", "?t_taken"),
            ClassAtom("ITEM", "?back"),
            PropertyAtom("hasState", "?back", True),
            PropertyAtom("hasTime", "?back", "?t_back"),
            Assign("?deadline", "?t_taken", gap),
            Compare("<=", "?deadline", "?t_back"),
        ),
        head=Head(instance_id="A2", concepts=("ACTIVITY",), state=True, time="?t_back"),
    )


class TestRegistration:
    def test_unbound_head_variable(self):
        rule = Rule(
            name="bad",
            body=(ClassAtom("ITEM", "?i"),),
            head=Head("A", ("ACTIVITY",), True, "?t"),
        )
        with pytest.raises(RuleValidationError, match=r"unbound \?t"):
            RuleEngine().register_rule(rule)

    def test_unbound_builtin_variable(self):
        rule = Rule(
            name="bad",
            body=(ClassAtom("ITEM", "?i"), Compare("<=", "?x", 5)),
            head=Head("A", ("ACTIVITY",), True, 0),
        )
        with pytest.raises(RuleValidationError, match=r"unbound \?x"):
            RuleEngine().register_rule(rule)

    def test_duplicate_name_rejected(self):
        engine = RuleEngine()
        engine.register_rule(dvd_rule(50))
        with pytest.raises(RuleValidationError):
            engine.register_rule(dvd_rule(60))

    def test_empty_body_rejected(self):
        with pytest.raises(RuleValidationError):
            RuleEngine().register_rule(Rule("e", (), Head("A", (), True, 0)))

    def test_activity_rule_registers(self):
        assert RuleEngine().register_rule(dvd_rule(50)) == "A2"


class TestEvaluation:
    def test_item_cycle_derives(self):
        engine = RuleEngine()
        engine.register_rule(dvd_rule(50))
        store = item_store(("I5", False, 10), ("I5", True, 100))
        derived = engine.evaluate(store.snapshot())
        assert [(d.instance_id, d.state, d.time) for d in derived] == [("A2", True, 100)]

    def test_gap_not_met(self):
        engine = RuleEngine()
        engine.register_rule(dvd_rule(200))
        store = item_store(("I5", False, 10), ("I5", True, 100))
        assert engine.evaluate(store.snapshot()) == []

    def test_inequality_needs_two_instances(self):
        rule = Rule(
            name="pair",
            body=(
                ClassAtom("ITEM", "?i"),
                ClassAtom("ITEM", "?j"),
                Compare("!=", "?i", "?j"),
            ),
            head=Head("PAIR", ("ACTIVITY",), True, 0),
        )
        engine = RuleEngine()
        engine.register_rule(rule)
        assert engine.evaluate(item_store(("I5", True, 10)).snapshot()) == []
        assert len(engine.evaluate(item_store(("I5", True, 10), ("I3", True, 11)).snapshot())) == 1

    def test_deduplicates_equal_heads(self):
        engine = RuleEngine()
        engine.register_rule(dvd_rule(10))
        # two absences both pair with one return: one derived head value
        store = item_store(("I5", False, 10), ("I3", False, 20), ("I5", True, 100))
        derived = engine.evaluate(store.snapshot())
        assert [(d.instance_id, d.time) for d in derived] == [("A2", 100)]

    def test_repeated_calls_identical(self):
        engine = RuleEngine()
        engine.register_rule(dvd_rule(50))
        snap = item_store(("I5", False, 10), ("I5", True, 100), ("I3", True, 90)).snapshot()
        assert engine.evaluate(snap) == engine.evaluate(snap)

    def test_format_bindings_dump(self):
        engine = RuleEngine()
        engine.register_rule(dvd_rule(50))
        derived = engine.evaluate(item_store(("I5", False, 10), ("I5", True, 100)).snapshot())
        text = format_bindings(derived)
        assert "A2" in text and "?t_back=100" in text


class TestBuiltins:
    def test_inclusive_comparison(self):
        assert eval_builtin("<=", 5, 5) is True

    def test_sum(self):
        assert eval_builtin("sum", 10, 50) == 60

    def test_identity_difference(self):
        assert eval_builtin("!=", "I5#1", "I5#1") is False
        assert eval_builtin("!=", "I5#1", "I5#2") is True


class TestOrderIndependence:
    def test_permuted_bodies_derive_the_same(self):
        rng = random.Random(5)
        base = dvd_rule(50)
        store = item_store(
            ("I5", False, 10), ("I3", False, 40), ("I5", True, 70), ("I3", True, 120)
        )
        snap = store.snapshot()
        reference = None
        for trial in range(12):
            body = list(base.body)
            rng.shuffle(body)
            engine = RuleEngine()
            engine.register_rule(Rule("A2", tuple(body), base.head))
            got = sorted((d.instance_id, d.state, d.time) for d in engine.evaluate(snap))
            if reference is None:
                reference = got
            assert got == reference


def random_snapshot(rng, max_instances=12):
    readings = []
    n = rng.randrange(1, max_instances + 1)
    for i in range(n):
        ident = rng.choice(["I5", "I3", "I8", "D7", "D8"])
        readings.append((ident, rng.random() < 0.5, rng.randrange(0, 300)))
    return item_store(*readings).snapshot()


def test_engine_matches_brute_force_on_random_rules():
    rng = random.Random(314)
    for _ in range(60):
        gap = rng.randrange(0, 150)
        rule = dvd_rule(gap)
        engine = RuleEngine()
        engine.register_rule(rule)
        snap = random_snapshot(rng)
        expected = oracles.brute_force_derivations(rule, snap)
        got = sorted(
            {(d.instance_id, d.state, d.time) for d in engine.evaluate(snap)},
            key=lambda k: (k[0], k[2]),
        )
        assert got == expected

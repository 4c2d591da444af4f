"""Sample graphs, skip conditions, schedule construction."""

import itertools
import random

import pytest

from treebn.dpn import integrate_evidence, make_schema, prev_name
from treebn.irrelevance import (DnfCondition, Literal, SampleGraph, VarRef,
                                build_sample_graph, build_schedule,
                                irrelevance_condition, irrelevance_conditions,
                                plan_schedule, relevant_variables, simplify,
                                slice_ordering)
from treebn.trees import Distribution, Leaf, Node, Variable

from conftest import all_contexts, random_schema
from helpers import tree_reads


def leaf(p):
    return Leaf(Distribution((p, 1.0 - p)))


X = Variable("X", ("t", "f"))
Y = Variable("Y", ("t", "f"))
Z = Variable("Z", ("t", "f"))


def lit(name, value, prev=False):
    return Literal(name, prev, value)


class TestDnf:
    def test_false_true(self):
        assert DnfCondition.false().is_false
        assert DnfCondition.true().is_true
        assert not DnfCondition.of([lit("X", "t")]).is_false

    def test_subsumption(self):
        d = DnfCondition.of([lit("X", "t")], [lit("X", "t"), lit("Y", "f")])
        assert d == DnfCondition.of([lit("X", "t")])

    def test_inconsistent_conjunction_dropped(self):
        a = DnfCondition.of([lit("X", "t")])
        b = DnfCondition.of([lit("X", "f")])
        assert a.conj(b).is_false

    def test_satisfied_requires_assigned(self):
        g = DnfCondition.of([lit("X", "t"), lit("Y", "f", prev=True)])
        assert g.satisfied({"X": "t"}, {"Y": "f"})
        assert not g.satisfied({"X": "t"}, {"Y": None})
        assert not g.satisfied({}, {"Y": "f"})

    def test_adjacent_merge(self):
        dom = {"X": ("t", "f"), "Y": ("t", "f")}
        g = DnfCondition.of([lit("X", "t"), lit("Y", "t")],
                            [lit("X", "t"), lit("Y", "f")])
        assert simplify(g, dom) == DnfCondition.of([lit("X", "t")])

    def test_string_form(self):
        g = DnfCondition.of([lit("E", "t")], [lit("D", "f"), lit("C", "t", prev=True)])
        assert str(g) == "E=t | D=f & prev:C=t"
        assert str(DnfCondition.false()) == "never"
        assert str(DnfCondition.true()) == "always"


class TestSampleGraph:
    def test_single_leaf_is_sink(self):
        g = build_sample_graph(leaf(0.4))
        assert g.is_sink(g.root)

    def test_distinct_leaves_still_collapse(self):
        # Values are ignored: both branches reach the sink, so the test
        # contributes nothing to reading order and disappears.
        t = Node(X, (leaf(0.2), leaf(0.9)))
        g = build_sample_graph(t)
        assert g.is_sink(g.root)

    def test_value_aware_keeps_value_selecting_test(self):
        t = Node(X, (leaf(0.2), leaf(0.9)))
        g = build_sample_graph(t, ignore_leaf_values=False)
        assert not g.is_sink(g.root)

    def test_common_subtrees_joined(self):
        sub = Node(Y, (leaf(0.1), leaf(0.8)))
        t = Node(X, (sub, Node(Y, (leaf(0.3), leaf(0.6)))))
        g = build_sample_graph(t)
        # Both Y-subtrees have the same read structure, so X collapses too.
        assert g.is_sink(g.root)

    def test_reads_subset_of_tree_reads(self):
        rng = random.Random(41)
        from conftest import random_tree
        child = Variable("C", ("t", "f"))
        parents = [X, Y, Z]
        for _ in range(30):
            t = random_tree(rng, parents, child)
            g = build_sample_graph(t)
            for combo in itertools.product("tf", repeat=3):
                ctx = dict(zip("XYZ", combo))
                got = {ref.name for ref in g.reads(ctx, {})}
                assert got <= tree_reads(t, ctx)

    def test_f2_o_graph_gates_f_on_e(self, f2_schema):
        integrated, _ = integrate_evidence(f2_schema)
        g = build_sample_graph(integrated.transition.cpts["O"],
                               ignore_leaf_values=False)
        reads_by_e = {}
        prev_vars = ["A", "B", "C", "D", "E", "F"]
        for combo in itertools.product("tf", repeat=6):
            prev = dict(zip(prev_vars, combo))
            reads = {r.name for r in g.reads({}, prev)}
            reads_by_e.setdefault(prev["E"], set()).update(reads)
        assert "F" not in reads_by_e["t"]
        assert "F" in reads_by_e["f"]


class TestRelevance:
    def test_self_loop_only(self):
        Xp = Variable(prev_name("X"), ("t", "f"))
        schema = make_schema(
            (X, Y), state=("X", "Y"), sensors=(),
            prior_cpts={"X": ((), leaf(0.5)), "Y": ((), leaf(0.5))},
            transition_cpts={"X": ((prev_name("X"),),
                                   Node(Xp, (leaf(0.8), leaf(0.3)))),
                             "Y": ((), leaf(0.5))})
        assert relevant_variables(schema, {"X"}) == {"X"}

    def test_f2_all_state_relevant(self, f2_schema):
        assert relevant_variables(f2_schema, {"A"}) == {"A", "B", "C", "D", "E", "F"}

    def test_excluded_variable_agrees_with_unrolled_reachability(self):
        rng = random.Random(47)
        from treebn.dpn import unroll
        for _ in range(10):
            schema = random_schema(rng, rng.randint(2, 4), with_sensor=False)
            interest = {rng.choice(schema.state_vars)}
            rel = relevant_variables(schema, interest)
            horizon = len(schema.state_vars) + 1
            net = unroll(schema, horizon)
            # Ancestors of any time instance of the interest variable.
            target = {f"{n}@{t}" for n in interest for t in range(1, horizon + 1)}
            anc = set(target)
            changed = True
            while changed:
                changed = False
                for child, ps in net.parents.items():
                    if child in anc:
                        for p in ps:
                            if p not in anc:
                                anc.add(p)
                                changed = True
            reachable = {name.split("@")[0] for name in anc}
            assert rel == reachable

    def test_interest_must_be_state(self, f2_schema):
        with pytest.raises(ValueError):
            relevant_variables(f2_schema, {"O"})


class TestSliceOrdering:
    def test_no_arcs_declaration_order(self):
        schema = make_schema(
            (X, Y), state=("X", "Y"), sensors=(),
            prior_cpts={"X": ((), leaf(0.5)), "Y": ((), leaf(0.5))},
            transition_cpts={"X": ((), leaf(0.5)), "Y": ((), leaf(0.5))})
        assert slice_ordering(schema) == ["X", "Y"]

    def test_f2_integrated_puts_sensor_first(self, f2_schema):
        integrated, _ = integrate_evidence(f2_schema)
        order = slice_ordering(integrated)
        assert order[0] == "O"
        pos = {n: i for i, n in enumerate(order)}
        for child in integrated.slice_names():
            for p in integrated.in_slice_parents(child):
                assert pos[p] < pos[child]


class TestConditions:
    def test_unread_variable_always_skippable(self):
        Xp = Variable(prev_name("X"), ("t", "f"))
        schema = make_schema(
            (X, Y), state=("X", "Y"), sensors=(),
            prior_cpts={"X": ((), leaf(0.5)), "Y": ((), leaf(0.5))},
            transition_cpts={"X": ((prev_name("X"),),
                                   Node(Xp, (leaf(0.8), leaf(0.3)))),
                             "Y": ((), leaf(0.5))})
        cond = irrelevance_condition(schema, "Y", consumers={"X"})
        assert cond.is_true

    def test_root_read_never_skippable(self):
        Xp = Variable(prev_name("X"), ("t", "f"))
        schema = make_schema(
            (X,), state=("X",), sensors=(),
            prior_cpts={"X": ((), leaf(0.5))},
            transition_cpts={"X": ((prev_name("X"),),
                                   Node(Xp, (leaf(0.8), leaf(0.3))))})
        cond = irrelevance_condition(schema, "X", consumers={"X"})
        assert cond.is_false

    def test_f2_per_graph_conditions(self, f2_schema):
        # The sensor's and D's bypass conditions are the single literal on
        # E; semantic equality checked by enumeration.
        from treebn.irrelevance import _consumer_graph, _pergraph
        integrated, _ = integrate_evidence(f2_schema)
        order = slice_ordering(integrated)
        domains = {v.name: v.domain for v in integrated.variables}
        per = {}
        for w in order:
            per[w] = _pergraph(_consumer_graph(integrated, w), "F",
                               v_is_cur=False, sub=per, domains=domains)
        target = DnfCondition.of([lit("E", "t")])

        def satset(dnf):
            return {combo for combo in itertools.product("tf", repeat=7)
                    if dnf.satisfied(dict(zip("OABCDEF", combo)), {})}

        assert satset(per["O"]) == satset(target)
        assert satset(per["D"]) == satset(target)
        assert satset(per["B"]) == satset(target)  # via substitution at D
        # E reads F only below e-false, d-false, c-false.
        assert per["E"] == DnfCondition.of(
            [lit("E", "t")],
            [lit("E", "f"), lit("D", "t")],
            [lit("E", "f"), lit("D", "f"), lit("C", "t")])

    def test_f2_final_condition(self, f2_schema):
        integrated, _ = integrate_evidence(f2_schema)
        conds = irrelevance_conditions(integrated, {"A"})
        assert conds["F"] == DnfCondition.of([lit("E", "t")])
        for name in "OABCDE":
            assert conds[name].is_false

    def test_interest_never_skipped(self, f2_schema):
        integrated, _ = integrate_evidence(f2_schema)
        conds = irrelevance_conditions(integrated, {"A", "F"})
        assert conds["F"].is_false


class TestSchedule:
    def test_all_false_guards_plain_order(self, f2_schema):
        integrated, _ = integrate_evidence(f2_schema)
        conds = {n: DnfCondition.false() for n in integrated.slice_names()}
        sched = build_schedule(integrated, conds)
        assert sched.order() == slice_ordering(integrated)
        assert all(g.is_false for _n, g in sched.entries)

    def test_f2_guard_vars_precede(self, f2_schema):
        integrated, _ = integrate_evidence(f2_schema)
        sched = plan_schedule(integrated, {"A"})
        pos = {n: i for i, n in enumerate(sched.order())}
        guard = sched.guard("F")
        assert not guard.is_false
        for name, prev in guard.mentions():
            if not prev:
                assert pos[name] < pos["F"]

    def test_mutual_guard_conflict_resolved(self):
        # X guards Y and Y guards X: the later-declared variable keeps its
        # guard, the earlier-declared one loses the conflicting disjuncts.
        Xp = Variable(prev_name("X"), ("t", "f"))
        Yp = Variable(prev_name("Y"), ("t", "f"))
        schema = make_schema(
            (X, Y), state=("X", "Y"), sensors=(),
            prior_cpts={"X": ((), leaf(0.5)), "Y": ((), leaf(0.5))},
            transition_cpts={"X": ((prev_name("X"),),
                                   Node(Xp, (leaf(0.8), leaf(0.3)))),
                             "Y": ((prev_name("Y"),),
                                   Node(Yp, (leaf(0.7), leaf(0.4))))})
        conds = {"X": DnfCondition.of([lit("Y", "t")]),
                 "Y": DnfCondition.of([lit("X", "f")])}
        sched = build_schedule(schema, conds)
        assert sched.guard("X").is_false
        assert sched.guard("Y") == DnfCondition.of([lit("X", "f")])
        assert sched.notes
        pos = {n: i for i, n in enumerate(sched.order())}
        assert pos["X"] < pos["Y"]

    def test_unplaceable_literals_dropped(self):
        # A guard naming a hard descendant cannot be honored; it is dropped.
        Xp = Variable(prev_name("X"), ("t", "f"))
        schema = make_schema(
            (X, Y), state=("X", "Y"), sensors=(),
            prior_cpts={"X": ((), leaf(0.5)),
                        "Y": (("X",), Node(X, (leaf(0.3), leaf(0.8))))},
            transition_cpts={"X": ((prev_name("X"),),
                                   Node(Xp, (leaf(0.8), leaf(0.3)))),
                             "Y": (("X",), Node(X, (leaf(0.3), leaf(0.8))))})
        conds = {"X": DnfCondition.of([lit("Y", "t")]),
                 "Y": DnfCondition.false()}
        sched = build_schedule(schema, conds)
        assert sched.guard("X").is_false
        assert sched.order() == ["X", "Y"]

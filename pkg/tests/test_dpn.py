"""Two-slice schemas: unrolling, evidence integration, stationarity."""

import random

import pytest

from treebn.dpn import (DpnSchema, Evidence, integrate_evidence, make_schema,
                        prev_name, unroll)
from treebn.errors import SchemaError, ValidationError
from treebn.exact import compare_joints, joint_table
from treebn.network import validate
from treebn.reversal import reverse_arc_tree
from treebn.trees import ATOL, Distribution, Leaf, Node, Variable

from conftest import all_contexts, random_schema


def leaf(p):
    return Leaf(Distribution((p, 1.0 - p)))


def chain_schema() -> DpnSchema:
    """One state variable with a self-arc and one sensor reading it."""
    X = Variable("X", ("t", "f"))
    S = Variable("S", ("t", "f"))
    return make_schema(
        (X, S), state=("X",), sensors=("S",),
        prior_cpts={"X": ((), leaf(0.7)),
                    "S": (("X",), Node(X, (leaf(0.9), leaf(0.2))))},
        transition_cpts={"X": ((prev_name("X"),),
                               Node(Variable(prev_name("X"), ("t", "f")),
                                    (leaf(0.8), leaf(0.3)))),
                         "S": (("X",), Node(X, (leaf(0.9), leaf(0.2))))})


class TestUnroll:
    def test_horizon_one_is_prior(self, f2_schema):
        net = unroll(f2_schema, 1)
        assert [v.name for v in net.variables] == [
            f"{n}@1" for n in f2_schema.slice_names()]
        assert validate(net) == []

    def test_two_slice_chain(self):
        schema = chain_schema()
        net = unroll(schema, 2)
        assert net.parents["X@2"] == ("X@1",)
        assert net.parents["S@2"] == ("X@2",)
        assert validate(net) == []

    def test_joint_sums_to_one(self):
        rng = random.Random(14)
        for _ in range(5):
            schema = random_schema(rng, rng.randint(2, 3))
            net = unroll(schema, rng.randint(1, 3))
            assert validate(net) == []
            total = joint_table(net).probs.sum()
            assert abs(total - 1.0) < ATOL


class TestIntegrate:
    def test_already_integrated_unchanged(self):
        X = Variable("X", ("t", "f"))
        S = Variable("S", ("t", "f"))
        schema = make_schema(
            (X, S), state=("X",), sensors=("S",),
            prior_cpts={"X": ((), leaf(0.7)), "S": ((), leaf(0.5))},
            transition_cpts={
                "X": ((prev_name("X"),),
                      Node(Variable(prev_name("X"), ("t", "f")),
                           (leaf(0.8), leaf(0.3)))),
                "S": ((prev_name("X"),),
                      Node(Variable(prev_name("X"), ("t", "f")),
                           (leaf(0.9), leaf(0.2))))})
        out, stats = integrate_evidence(schema)
        assert stats == []
        assert out.transition.parents == schema.transition.parents

    def test_single_parent_matches_plain_reversal(self):
        schema = chain_schema()
        out, stats = integrate_evidence(schema)
        # Prior reversal S@1 plus transition reversal S.
        arcs = [s.arc for s in stats]
        assert arcs == [("X", "S"), ("X", "S")]
        direct, direct_stats = reverse_arc_tree(schema.transition, "X", "S")
        assert direct_stats.o_leaves == stats[1].o_leaves
        assert compare_joints(direct, out.transition).ok
        assert out.in_slice_parents("S") == ()
        assert out.prior.parents["S"] == ()

    def test_f2_four_reversals(self, f2_schema):
        out, stats = integrate_evidence(f2_schema)
        assert len(stats) == 4
        assert all(arc[1] == "O" for arc in (s.arc for s in stats))
        assert out.in_slice_parents("O") == ()
        assert compare_joints(f2_schema.transition, out.transition).ok
        explicit = sum(s.eq1_evals + s.eq2_evals for s in stats)
        tabular = 0
        for s in stats:
            tabular += 2 ** len(out.transition.parents[s.arc[1]])
        # Far fewer explicit computations than dense tables would need.
        assert explicit < tabular

    def test_joint_preserved_random(self):
        rng = random.Random(23)
        for _ in range(8):
            schema = random_schema(rng, rng.randint(2, 4))
            out, _stats = integrate_evidence(schema)
            assert compare_joints(schema.transition, out.transition).ok
            assert compare_joints(schema.prior, out.prior).ok
            for s in schema.sensor_vars:
                assert out.in_slice_parents(s) == ()

    def test_unroll_commutes_with_integration(self):
        # Integrating the schema then unrolling leaves the joint unchanged.
        rng = random.Random(29)
        for _ in range(5):
            schema = random_schema(rng, rng.randint(2, 3))
            out, _ = integrate_evidence(schema)
            for horizon in (1, 2, 3):
                assert compare_joints(unroll(schema, horizon),
                                      unroll(out, horizon)).ok

    def test_stationarity(self):
        # One generic-slice reversal applied per slice equals reversing
        # inside each unrolled slice independently.
        schema = chain_schema()
        out, _ = integrate_evidence(schema)
        integrated_unrolled = unroll(out, 3)
        flat = unroll(schema, 3)
        for t in (1, 2, 3):
            flat, _ = reverse_arc_tree(flat, f"X@{t}", f"S@{t}")
        assert compare_joints(integrated_unrolled, flat).ok
        for t in (1, 2, 3):
            assert flat.parents[f"S@{t}"] == integrated_unrolled.parents[f"S@{t}"]

    def test_sensor_reading_sensor_rejected(self):
        X = Variable("X", ("t", "f"))
        S1 = Variable("S1", ("t", "f"))
        S2 = Variable("S2", ("t", "f"))
        schema = make_schema(
            (X, S1, S2), state=("X",), sensors=("S1", "S2"),
            prior_cpts={"X": ((), leaf(0.5)),
                        "S1": (("X",), Node(X, (leaf(0.9), leaf(0.1)))),
                        "S2": (("S1",), Node(S1, (leaf(0.8), leaf(0.3))))},
            transition_cpts={
                "X": ((prev_name("X"),),
                      Node(Variable(prev_name("X"), ("t", "f")),
                           (leaf(0.8), leaf(0.3)))),
                "S1": (("X",), Node(X, (leaf(0.9), leaf(0.1)))),
                "S2": (("S1",), Node(S1, (leaf(0.8), leaf(0.3))))})
        with pytest.raises(SchemaError):
            integrate_evidence(schema)


class TestEvidence:
    def test_validates_roles_and_values(self, f2_schema):
        good = Evidence({(1, "O"): "t"})
        assert good.validate_against(f2_schema) == []
        bad = Evidence({(0, "O"): "t", (1, "A"): "t", (2, "O"): "x"})
        problems = bad.validate_against(f2_schema)
        assert len(problems) == 3

    def test_as_context(self):
        ev = Evidence({(1, "O"): "t", (3, "O"): "f"})
        assert ev.as_context() == {"O@1": "t", "O@3": "f"}
        assert ev.max_time() == 3

    def test_schema_validation_errors(self):
        X = Variable("X", ("t", "f"))
        with pytest.raises(ValidationError):
            make_schema((X,), state=("X",), sensors=("nope",),
                        prior_cpts={"X": ((), leaf(0.5))},
                        transition_cpts={"X": ((), leaf(0.5))})

"""Enumeration oracles used only by tests."""

import itertools

from treebn.dpn import DpnSchema, Evidence, base_name, is_prev
from treebn.irrelevance import SampleSchedule
from treebn.network import _topo_sort
from treebn.trees import Leaf, Node, eval_tree


def transition_conditional(schema: DpnSchema, w: str,
                           prev_ctx: dict[str, str]) -> list[float]:
    """P(w at slice t+1 | full slice-t context), marginalizing slice t+1.

    Brute force over every full next-slice assignment.
    """
    names = schema.slice_names()
    var = schema.var(w)
    masses = [0.0] * len(var.domain)
    domains = [schema.var(n).domain for n in names]
    prev = {f"{n}@prev": v for n, v in prev_ctx.items()}
    for combo in itertools.product(*domains):
        cur = dict(zip(names, combo))
        ctx = {**prev, **cur}
        p = 1.0
        for n in names:
            p *= eval_tree(schema.transition.cpts[n], ctx)[
                schema.var(n).index(cur[n])]
            if p == 0.0:
                break
        masses[var.index(cur[w])] += p
    return masses


def tree_reads(tree, ctx: dict[str, str]) -> set[str]:
    """Variables tested on the path ``ctx`` selects."""
    out = set()
    node = tree
    while isinstance(node, Node):
        out.add(node.test.name)
        node = node.children[node.test.index(ctx[node.test.name])]
    return out


class ProcessEnumerator:
    """Exact enumeration of the *sampling process* of an integrated schema.

    Observed sensors are clamped (no reweighting: this is the proposal the
    trials draw from), guards skip exactly as run_trial does, and skipped
    variables carry None.  Yields per-slice skip probabilities per
    variable.  Reading a None during a CPT evaluation raises, which makes
    the enumerator double as a soundness check.
    """

    def __init__(self, schema: DpnSchema, schedule: SampleSchedule,
                 evidence: Evidence, horizon: int):
        self.schema = schema
        self.schedule = schedule
        self.evidence = evidence
        self.horizon = horizon
        self.names = schema.slice_names()
        prior_order = _topo_sort(self.names, schema.prior.parents)
        assert prior_order is not None
        self.prior_order = prior_order

    def _eval(self, tree, cur, prev):
        node = tree
        while isinstance(node, Node):
            name = node.test.name
            if is_prev(name):
                got = prev[base_name(name)]
            else:
                got = cur[name]
            if got is None:
                raise AssertionError(
                    f"process enumeration read a skipped variable {name!r}")
            node = node.children[node.test.index(got)]
        return node.dist

    def _expand_slice(self, t: int, prev_state: tuple | None):
        """All (next_state, prob, skipped_vars) triples for slice t."""
        prev = (dict(zip(self.names, prev_state)) if prev_state is not None
                else None)
        steps = (self.prior_order if t == 1 else self.schedule.order())
        results = [({}, 1.0, frozenset())]
        for name in steps:
            var = self.schema.var(name)
            net = self.schema.prior if t == 1 else self.schema.transition
            tree = net.cpts[name]
            obs = self.evidence.at(t, name) if name in self.schema.sensor_vars else None
            guard = (self.schedule.guard(name)
                     if t > 1 and name not in self.schema.sensor_vars else None)
            new = []
            for cur, p, skipped in results:
                if obs is not None:
                    new.append(({**cur, name: obs}, p, skipped))
                    continue
                if guard is not None and not guard.is_false and prev is not None \
                        and guard.satisfied(cur, prev):
                    new.append(({**cur, name: None}, p, skipped | {name}))
                    continue
                dist = self._eval(tree, cur, prev or {})
                for i, label in enumerate(var.domain):
                    q = dist[i]
                    if q > 0.0:
                        new.append(({**cur, name: label}, p * q, skipped))
            results = new
        return [(tuple(cur[n] for n in self.names), p, skipped)
                for cur, p, skipped in results]

    def skip_probabilities(self) -> dict[str, list[float]]:
        """Per variable, the probability of being skipped at each slice."""
        out = {n: [0.0] * self.horizon for n in self.names}
        dist: dict[tuple | None, float] = {None: 1.0}
        for t in range(1, self.horizon + 1):
            nxt: dict[tuple, float] = {}
            cache: dict[tuple | None, list] = {}
            for prev_state, p in dist.items():
                if prev_state not in cache:
                    cache[prev_state] = self._expand_slice(t, prev_state)
                for state, q, skipped in cache[prev_state]:
                    nxt[state] = nxt.get(state, 0.0) + p * q
                    for n in skipped:
                        out[n][t - 1] += p * q
            dist = nxt
        return out
